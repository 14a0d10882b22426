#include "bubblespectra/mesh.hpp"

#include "bubblespectra/errors.hpp"

#include <json.hpp>
#include <unsupported/Eigen/FFT>

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace bubblespectra {

namespace {

SurfaceMesh icosahedron() {
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    SurfaceMesh m;
    const double raw[12][3] = {{-1, phi, 0}, {1, phi, 0},  {-1, -phi, 0}, {1, -phi, 0},
                               {0, -1, phi}, {0, 1, phi},  {0, -1, -phi}, {0, 1, -phi},
                               {phi, 0, -1}, {phi, 0, 1},  {-phi, 0, -1}, {-phi, 0, 1}};
    for (const auto& r : raw) m.vertices.push_back(Eigen::Vector3d(r[0], r[1], r[2]).normalized());
    m.triangles = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                   {11, 10, 2}, {10, 7, 6}, {7, 1, 8},   {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                   {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
    return m;
}

void subdivide(SurfaceMesh& m) {
    std::map<std::pair<int, int>, int> mid;
    auto midpoint = [&](int a, int b) {
        const auto key = std::minmax(a, b);
        auto it = mid.find(key);
        if (it != mid.end()) return it->second;
        const int idx = m.vertex_count();
        m.vertices.push_back((m.vertices[a] + m.vertices[b]).normalized());
        mid.emplace(key, idx);
        return idx;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(m.triangles.size() * 4);
    for (const auto& t : m.triangles) {
        const int a = midpoint(t[0], t[1]);
        const int b = midpoint(t[1], t[2]);
        const int c = midpoint(t[2], t[0]);
        next.push_back({t[0], a, c});
        next.push_back({t[1], b, a});
        next.push_back({t[2], c, b});
        next.push_back({a, b, c});
    }
    m.triangles = std::move(next);
}

Eigen::Vector3d apply_grading(const Eigen::Vector3d& x, const MeshGrading& g, const Eigen::Quaterniond& q) {
    const Eigen::Vector3d y = q * x;  // centre sits at the south pole
    if (y.z() >= 1.0 - 1e-15) return x;
    const double den = 1.0 - y.z();
    const std::complex<double> z(y.x() / den, y.y() / den);
    const double rho2 = std::norm(z);
    const double scale = g.factor + (1.0 - g.factor) * rho2 / (rho2 + g.transition * g.transition);
    const std::complex<double> w = z * scale;
    const double w2 = std::norm(w);
    const Eigen::Vector3d out(2.0 * w.real() / (w2 + 1.0), 2.0 * w.imag() / (w2 + 1.0), (w2 - 1.0) / (w2 + 1.0));
    return (q.inverse() * out).normalized();
}

}  // namespace

int SurfaceMesh::edge_count() const {
    std::set<std::pair<int, int>> edges;
    for (const auto& t : triangles)
        for (int k = 0; k < 3; ++k) edges.insert(std::minmax(t[k], t[(k + 1) % 3]));
    return static_cast<int>(edges.size());
}

double SurfaceMesh::total_area() const {
    double s = 0.0;
    for (double a : areas) s += a;
    return s;
}

double SurfaceMesh::local_mesh_size(const Eigen::Vector3d& x, double radius) const {
    double hmax = 0.0;
    for (const auto& t : triangles) {
        bool near = false;
        for (int k = 0; k < 3; ++k) near = near || (vertices[t[k]] - x).norm() <= radius;
        if (!near) continue;
        for (int k = 0; k < 3; ++k) hmax = std::max(hmax, (vertices[t[k]] - vertices[t[(k + 1) % 3]]).norm());
    }
    return hmax;
}

void SurfaceMesh::finalize() {
    areas.resize(triangles.size());
    grads.resize(triangles.size());
    normals.resize(triangles.size());
    h = 0.0;
    for (std::size_t f = 0; f < triangles.size(); ++f) {
        auto& t = triangles[f];
        for (int k = 0; k < 3; ++k)
            if (t[k] < 0 || t[k] >= vertex_count()) throw Error("triangle references a missing vertex");
        Eigen::Vector3d cr = (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]);
        if (cr.dot(vertices[t[0]] + vertices[t[1]] + vertices[t[2]]) < 0.0) {
            std::swap(t[1], t[2]);
            cr = -cr;
        }
        const double a2 = cr.norm();
        if (!(a2 > 0.0)) throw Error("degenerate triangle in mesh");
        const Eigen::Vector3d n = cr / a2;
        areas[f] = 0.5 * a2;
        normals[f] = n;
        for (int k = 0; k < 3; ++k) {
            const Eigen::Vector3d& b = vertices[t[(k + 1) % 3]];
            const Eigen::Vector3d& c = vertices[t[(k + 2) % 3]];
            grads[f][k] = n.cross(c - b) / a2;
            h = std::max(h, (c - b).norm());
        }
    }
}

SurfaceMesh icosphere(int level) {
    if (level < 0) throw ConfigError("mesh level must be non-negative");
    SurfaceMesh m = icosahedron();
    for (int l = 0; l < level; ++l) subdivide(m);
    m.level = level;
    m.finalize();
    return m;
}

SurfaceMesh icosphere(int level, const MeshGrading& grading) {
    if (!(grading.factor > 0.0 && grading.factor <= 1.0)) throw ConfigError("grading factor must lie in (0, 1]");
    if (!(grading.transition > 0.0)) throw ConfigError("grading transition must be positive");
    SurfaceMesh m = icosphere(level);
    const Eigen::Vector3d c = grading.center.normalized();
    const Eigen::Quaterniond q = Eigen::Quaterniond::FromTwoVectors(c, Eigen::Vector3d(0, 0, -1));
    for (auto& v : m.vertices) v = apply_grading(v, grading, q);
    if (grading.antipodal) {
        const Eigen::Quaterniond qa = Eigen::Quaterniond::FromTwoVectors(-c, Eigen::Vector3d(0, 0, -1));
        for (auto& v : m.vertices) v = apply_grading(v, grading, qa);
    }
    m.grading = grading;
    m.grading->center = c;
    m.finalize();
    return m;
}

void save_mesh_json(const SurfaceMesh& mesh, const std::string& path) {
    nlohmann::json j;
    j["kind"] = "icosphere";
    j["level"] = mesh.level;
    if (mesh.grading) {
        const auto& g = *mesh.grading;
        j["grading"] = {{"center", {g.center.x(), g.center.y(), g.center.z()}},
                        {"factor", g.factor},
                        {"transition", g.transition},
                        {"antipodal", g.antipodal}};
    }
    auto& vs = j["vertices"] = nlohmann::json::array();
    for (const auto& v : mesh.vertices) vs.push_back({v.x(), v.y(), v.z()});
    auto& ts = j["triangles"] = nlohmann::json::array();
    for (const auto& t : mesh.triangles) ts.push_back({t[0], t[1], t[2]});
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw Error("cannot write mesh file " + path);
        out << std::setprecision(17) << j.dump();
    }
    std::filesystem::rename(tmp, path);
}

SurfaceMesh load_mesh_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read mesh file " + path);
    nlohmann::json j;
    in >> j;
    SurfaceMesh m;
    m.level = j.at("level").get<int>();
    for (const auto& v : j.at("vertices"))
        m.vertices.emplace_back(v.at(0).get<double>(), v.at(1).get<double>(), v.at(2).get<double>());
    for (const auto& t : j.at("triangles")) m.triangles.push_back({t.at(0).get<int>(), t.at(1).get<int>(), t.at(2).get<int>()});
    if (j.contains("grading")) {
        MeshGrading g;
        const auto& c = j["grading"].at("center");
        g.center = Eigen::Vector3d(c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>());
        g.factor = j["grading"].at("factor").get<double>();
        g.transition = j["grading"].at("transition").get<double>();
        g.antipodal = j["grading"].value("antipodal", false);
        m.grading = g;
    }
    m.finalize();
    return m;
}

SurfaceMesh cached_icosphere(int level, const std::optional<MeshGrading>& grading, const std::string& cache_dir) {
    auto build = [&] { return grading ? icosphere(level, *grading) : icosphere(level); };
    if (cache_dir.empty()) return build();
    std::ostringstream name;
    name << "icosphere_L" << level;
    if (grading) {
        name << std::setprecision(17) << "_g" << grading->factor << "_s" << grading->transition << "_c"
             << grading->center.x() << "," << grading->center.y() << "," << grading->center.z() << (grading->antipodal ? "_a" : "");
    }
    name << ".json";
    const std::filesystem::path p = std::filesystem::path(cache_dir) / name.str();
    if (std::filesystem::exists(p)) return load_mesh_json(p.string());
    std::filesystem::create_directories(cache_dir);
    SurfaceMesh m = build();
    save_mesh_json(m, p.string());
    return m;
}

double integrate(const SurfaceMesh& mesh, const Eigen::VectorXd& f) {
    if (f.size() != mesh.vertex_count()) throw DimensionMismatch("field size does not match vertex count");
    double s = 0.0;
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        const auto& tri = mesh.triangles[t];
        s += mesh.areas[t] * (f[tri[0]] + f[tri[1]] + f[tri[2]]) / 3.0;
    }
    return s;
}

std::vector<Eigen::Vector3d> gradient(const SurfaceMesh& mesh, const Eigen::VectorXd& f) {
    if (f.size() != mesh.vertex_count()) throw DimensionMismatch("field size does not match vertex count");
    std::vector<Eigen::Vector3d> g(mesh.triangle_count());
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        const auto& tri = mesh.triangles[t];
        g[t] = f[tri[0]] * mesh.grads[t][0] + f[tri[1]] * mesh.grads[t][1] + f[tri[2]] * mesh.grads[t][2];
    }
    return g;
}

SpMat stiffness_matrix(const SurfaceMesh& mesh) {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(9 * mesh.triangles.size());
    for (int t = 0; t < mesh.triangle_count(); ++t)
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                trip.emplace_back(mesh.triangles[t][a], mesh.triangles[t][b],
                                  mesh.areas[t] * mesh.grads[t][a].dot(mesh.grads[t][b]));
    SpMat k(mesh.vertex_count(), mesh.vertex_count());
    k.setFromTriplets(trip.begin(), trip.end());
    return k;
}

SpMat mass_matrix(const SurfaceMesh& mesh) {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(9 * mesh.triangles.size());
    for (int t = 0; t < mesh.triangle_count(); ++t)
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                trip.emplace_back(mesh.triangles[t][a], mesh.triangles[t][b],
                                  mesh.areas[t] / 12.0 * (a == b ? 2.0 : 1.0));
    SpMat m(mesh.vertex_count(), mesh.vertex_count());
    m.setFromTriplets(trip.begin(), trip.end());
    return m;
}

Eigen::VectorXd lumped_mass(const SurfaceMesh& mesh) {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(mesh.vertex_count());
    for (int t = 0; t < mesh.triangle_count(); ++t)
        for (int a = 0; a < 3; ++a) m[mesh.triangles[t][a]] += mesh.areas[t] / 3.0;
    return m;
}

// ------------------------------------------------------------------ cylinder

CylinderGrid::CylinderGrid(double half_length, int n_t, int n_theta)
    : L_(half_length), n_t_(n_t), n_theta_(n_theta) {
    if (!(half_length > 0.0)) throw ConfigError("cylinder half length must be positive");
    if (n_t < 16) throw ResolutionError("cylinder needs at least 16 axial samples");
    if (n_theta < 8 || n_theta % 2 != 0) throw ResolutionError("cylinder needs an even number >= 8 of angular samples");
    dt_ = 2.0 * L_ / (n_t_ - 1);
}

CylinderGrid cylinder(double half_length, int n_t, int n_theta) { return CylinderGrid(half_length, n_t, n_theta); }

int CylinderGrid::nearest_index(double t0) const {
    const long i = std::lround((t0 + L_) / dt_);
    return static_cast<int>(std::clamp<long>(i, 0, n_t_ - 1));
}

Eigen::MatrixXd CylinderGrid::sample(const std::function<double(double, double)>& f) const {
    Eigen::MatrixXd out(n_t_, n_theta_);
    for (int i = 0; i < n_t_; ++i)
        for (int j = 0; j < n_theta_; ++j) out(i, j) = f(t(i), theta(j));
    return out;
}

double CylinderGrid::slice_integral(const Eigen::MatrixXd& f, int i) const {
    return f.row(i).sum() * dtheta();
}

double CylinderGrid::integrate_range(const Eigen::MatrixXd& f, int i0, int i1) const {
    if (f.rows() != n_t_ || f.cols() != n_theta_) throw DimensionMismatch("field does not match cylinder grid");
    if (i0 > i1) std::swap(i0, i1);
    double s = 0.0;
    for (int i = i0; i <= i1; ++i) {
        const double w = (i == i0 || i == i1) ? 0.5 : 1.0;
        s += w * slice_integral(f, i);
    }
    return i0 == i1 ? 0.0 : s * dt_;
}

double CylinderGrid::integrate(const Eigen::MatrixXd& f) const { return integrate_range(f, 0, n_t_ - 1); }

Eigen::VectorXcd CylinderGrid::fourier_row(const Eigen::MatrixXd& f, int i) const {
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> in(n_theta_), out;
    for (int j = 0; j < n_theta_; ++j) in[j] = f(i, j);
    fft.fwd(out, in);
    Eigen::VectorXcd c(n_theta_);
    for (int j = 0; j < n_theta_; ++j) c[j] = out[j];
    return c;
}

Eigen::VectorXd CylinderGrid::inverse_fourier_row(const Eigen::VectorXcd& c) const {
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> in(c.data(), c.data() + c.size()), out;
    fft.inv(out, in);
    Eigen::VectorXd r(n_theta_);
    for (int j = 0; j < n_theta_; ++j) r[j] = out[j].real();
    return r;
}

Eigen::MatrixXd CylinderGrid::d_theta(const Eigen::MatrixXd& f) const {
    Eigen::MatrixXd out(n_t_, n_theta_);
    for (int i = 0; i < n_t_; ++i) {
        Eigen::VectorXcd c = fourier_row(f, i);
        for (int j = 0; j < n_theta_; ++j) {
            const int k = wavenumber(j);
            c[j] *= (2 * j == n_theta_) ? std::complex<double>(0.0) : std::complex<double>(0.0, k);
        }
        out.row(i) = inverse_fourier_row(c).transpose();
    }
    return out;
}

Eigen::MatrixXd CylinderGrid::d_theta2(const Eigen::MatrixXd& f) const {
    Eigen::MatrixXd out(n_t_, n_theta_);
    for (int i = 0; i < n_t_; ++i) {
        Eigen::VectorXcd c = fourier_row(f, i);
        for (int j = 0; j < n_theta_; ++j) {
            const double k = wavenumber(j);
            c[j] *= -k * k;
        }
        out.row(i) = inverse_fourier_row(c).transpose();
    }
    return out;
}

Eigen::MatrixXd CylinderGrid::d_t(const Eigen::MatrixXd& f) const {
    Eigen::MatrixXd out(n_t_, n_theta_);
    const int n = n_t_;
    out.row(0) = (-3.0 * f.row(0) + 4.0 * f.row(1) - f.row(2)) / (2.0 * dt_);
    out.row(n - 1) = (3.0 * f.row(n - 1) - 4.0 * f.row(n - 2) + f.row(n - 3)) / (2.0 * dt_);
    for (int i = 1; i < n - 1; ++i) out.row(i) = (f.row(i + 1) - f.row(i - 1)) / (2.0 * dt_);
    return out;
}

Eigen::MatrixXd CylinderGrid::d_t2(const Eigen::MatrixXd& f) const {
    Eigen::MatrixXd out(n_t_, n_theta_);
    const int n = n_t_;
    const double h2 = dt_ * dt_;
    out.row(0) = (2.0 * f.row(0) - 5.0 * f.row(1) + 4.0 * f.row(2) - f.row(3)) / h2;
    out.row(n - 1) = (2.0 * f.row(n - 1) - 5.0 * f.row(n - 2) + 4.0 * f.row(n - 3) - f.row(n - 4)) / h2;
    for (int i = 1; i < n - 1; ++i) out.row(i) = (f.row(i + 1) - 2.0 * f.row(i) + f.row(i - 1)) / h2;
    return out;
}

}  // namespace bubblespectra
