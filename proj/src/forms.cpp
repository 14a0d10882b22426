#include "bubblespectra/forms.hpp"

#include "bubblespectra/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace bubblespectra {

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

Mat corner_values(const Mat& values, const std::array<int, 3>& tri) {
    Mat u(values.rows(), 3);
    for (int i = 0; i < 3; ++i) u.col(i) = values.col(tri[i]);
    return u;
}

double stiffness_entry(const SurfaceMesh& mesh, int t, int i, int j) {
    return mesh.areas[t] * mesh.grads[t][i].dot(mesh.grads[t][j]);
}

void add_block(Triplets& out, int n, int row_vertex, int col_vertex, const Mat& block) {
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            if (block(a, b) != 0.0) out.emplace_back(n * row_vertex + a, n * col_vertex + b, block(a, b));
}

SpMat from_triplets(int dof, const Triplets& t) {
    SpMat a(dof, dof);
    a.setFromTriplets(t.begin(), t.end());
    a.makeCompressed();
    return a;
}

/// Orthonormal pair spanning the plane of triangle t.
std::pair<Eigen::Vector3d, Eigen::Vector3d> triangle_plane(const SurfaceMesh& mesh, int t) {
    const auto& tri = mesh.triangles[t];
    const Eigen::Vector3d e = (mesh.vertices[tri[1]] - mesh.vertices[tri[0]]).normalized();
    return {e, mesh.normals[t].cross(e)};
}

/// Ambient Jacobian (m x 3) of the P1 interpolant of `values` on triangle t.
Mat p1_jacobian(const SurfaceMesh& mesh, int t, const Mat& values) {
    const auto& tri = mesh.triangles[t];
    Mat g = Mat::Zero(values.rows(), 3);
    for (int i = 0; i < 3; ++i) g += values.col(tri[i]) * mesh.grads[t][i].transpose();
    return g;
}

std::vector<std::vector<int>> vertex_stars(const SurfaceMesh& mesh) {
    std::vector<std::vector<int>> star(mesh.vertex_count());
    for (int t = 0; t < mesh.triangle_count(); ++t)
        for (int v : mesh.triangles[t]) star[v].push_back(t);
    return star;
}

/// Perturbation π(u_v + tX_v) - u_v at the listed vertices; zero elsewhere.
struct Perturbation {
    std::vector<int> vertices;
    std::vector<Vec> directions;
};

double second_difference(const LocalFunctional& f, const MapField& u, const Perturbation& x,
                         const std::vector<int>& triangles, double t) {
    const SurfaceMesh& mesh = *u.mesh;
    const TargetManifold& target = *u.target;
    const int m = static_cast<int>(u.values.rows());
    double sum = 0.0;
    for (double s : {t, -t}) {
        std::vector<std::pair<int, Vec>> moved;
        moved.reserve(x.vertices.size());
        for (std::size_t k = 0; k < x.vertices.size(); ++k) {
            const Vec p = u.values.col(x.vertices[k]);
            moved.emplace_back(x.vertices[k], target.closest_point(p + s * x.directions[k]) - p);
        }
        for (int tri : triangles) {
            const auto& corners = mesh.triangles[tri];
            Mat d = Mat::Zero(m, 3);
            for (int i = 0; i < 3; ++i)
                for (const auto& [v, dv] : moved)
                    if (v == corners[i]) d.col(i) = dv;
            sum += f.element_difference(mesh, tri, corner_values(u.values, corners), d);
        }
    }
    return sum / (t * t);
}

FdResult local_second_variation(const LocalFunctional& f, const MapField& u, const Perturbation& x,
                                const std::vector<int>& triangles, double h) {
    double longest = 0.0;
    for (const Vec& d : x.directions) longest = std::max(longest, d.norm());
    if (h * longest > 0.5 * u.target->reach())
        throw ResolutionError("finite-difference step leaves the tubular neighbourhood: h*|X| = " +
                              std::to_string(h * longest) + ", reach = " + std::to_string(u.target->reach()));
    FdResult r;
    if (longest == 0.0) return r;
    r.coarse = second_difference(f, u, x, triangles, h);
    r.fine = second_difference(f, u, x, triangles, 0.5 * h);
    r.value = (4.0 * r.fine - r.coarse) / 3.0;
    return r;
}

}  // namespace

// ------------------------------------------------------------------ frames

Mat TangentFrameBasis::to_ambient(const Vec& coeffs) const {
    if (coeffs.size() != dof()) throw DimensionMismatch("section has " + std::to_string(coeffs.size()) +
                                                        " coefficients, basis has " + std::to_string(dof()));
    Mat x(m, vertex_count());
    for (int v = 0; v < vertex_count(); ++v) x.col(v) = frames[v] * coeffs.segment(n * v, n);
    return x;
}

Vec TangentFrameBasis::from_ambient(const Mat& x) const {
    if (x.rows() != m || x.cols() != vertex_count()) throw DimensionMismatch("ambient field has the wrong shape");
    Vec c(dof());
    for (int v = 0; v < vertex_count(); ++v) c.segment(n * v, n) = frames[v].transpose() * x.col(v);
    return c;
}

TangentFrameBasis build_frames(const MapField& u) {
    u.validate();
    TangentFrameBasis b;
    b.n = u.target->intrinsic_dim();
    b.m = u.target->ambient_dim();
    b.frames.reserve(u.vertex_count());
    for (int v = 0; v < u.vertex_count(); ++v) b.frames.push_back(u.target->tangent_frame(u.values.col(v)));
    return b;
}

// ------------------------------------------------------------------ assembly

AssembledForms assemble(const MapField& u, CurvatureRule rule) {
    const SurfaceMesh& mesh = *u.mesh;
    const TargetManifold& target = *u.target;
    auto basis = std::make_shared<const TangentFrameBasis>(build_frames(u));
    const int n = basis->n;
    const int dof = basis->dof();

    Triplets tk, tm, tc;
    tk.reserve(static_cast<std::size_t>(mesh.triangle_count()) * 9 * n * n);
    tm.reserve(tk.capacity());
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        const auto& tri = mesh.triangles[t];
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                const Mat overlap = basis->frames[tri[i]].transpose() * basis->frames[tri[j]];
                add_block(tk, n, tri[i], tri[j], stiffness_entry(mesh, t, i, j) * overlap);
                add_block(tm, n, tri[i], tri[j], mesh.areas[t] / 12.0 * (i == j ? 2.0 : 1.0) * overlap);
            }
    }

    if (rule == CurvatureRule::nodal) {
        // (K U)_v is the weak Laplacian with the sign of -Δ; its normal part
        // is the discrete tension that pairs with A(X, X).
        const Mat ku = u.values * stiffness_matrix(mesh);
        for (int v = 0; v < u.vertex_count(); ++v) {
            const Mat& e = basis->frames[v];
            Mat block = -(e.transpose() * target.shape_operator_at(u.values.col(v), ku.col(v)) * e);
            block = 0.5 * (block + block.transpose()).eval();
            add_block(tc, n, v, v, block);
        }
    } else {
        std::vector<Mat> blocks(u.vertex_count(), Mat::Zero(n, n));
        for (int t = 0; t < mesh.triangle_count(); ++t) {
            const Mat g = p1_jacobian(mesh, t, u.values);
            const auto [t1, t2] = triangle_plane(mesh, t);
            for (int v : mesh.triangles[t]) {
                const Vec p = u.values.col(v);
                const Mat proj = target.projector_at(p);
                const Vec grads[2] = {proj * g * t1, proj * g * t2};
                const Mat s = curvature_term_matrix_at(target, p, grads);
                blocks[v] += mesh.areas[t] / 3.0 * (basis->frames[v].transpose() * s * basis->frames[v]);
            }
        }
        for (int v = 0; v < u.vertex_count(); ++v)
            add_block(tc, n, v, v, 0.5 * (blocks[v] + blocks[v].transpose()));
    }

    AssembledForms f;
    f.K = from_triplets(dof, tk);
    f.M0 = from_triplets(dof, tm);
    f.C = from_triplets(dof, tc);
    f.basis = basis;
    f.rule = rule;
    for (const SpMat* a : {&f.K, &f.M0, &f.C})
        for (int k = 0; k < a->outerSize(); ++k)
            for (SpMat::InnerIterator it(*a, k); it; ++it)
                if (!std::isfinite(it.value()))
                    throw PointOffManifold("non-finite entry in assembled forms; the map is not on the target");
    return f;
}

SpMat form_matrix(const AssembledForms& f, FormKind which) {
    switch (which) {
        case FormKind::index: return f.index_form();
        case FormKind::scalar: return f.scalar_product();
        case FormKind::curvature: return f.C;
        case FormKind::stiffness: return f.K;
        case FormKind::mass: return f.M0;
    }
    throw ConfigError("unknown form kind");
}

double cross_form(const AssembledForms& f, const Vec& x, const Vec& y, FormKind which) {
    if (x.size() != f.dof() || y.size() != f.dof()) throw DimensionMismatch("section size differs from form size");
    return x.dot(form_matrix(f, which) * y);
}

double w12_norm_sq(const AssembledForms& f, const Vec& x) {
    return x.dot(f.K * x) + x.dot(f.M0 * x);
}

Vec random_section(const TangentFrameBasis& basis, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    Vec c(basis.dof());
    for (int i = 0; i < c.size(); ++i) c[i] = g(rng);
    return c;
}

// ------------------------------------------------------------------ functionals

double LocalFunctional::element_difference(const SurfaceMesh& mesh, int tri, const Mat& u, const Mat& d) const {
    return element_value(mesh, tri, u + d) - element_value(mesh, tri, u);
}

double LocalFunctional::value(const SurfaceMesh& mesh, const Mat& values) const {
    double sum = 0.0;
    for (int t = 0; t < mesh.triangle_count(); ++t) sum += element_value(mesh, t, corner_values(values, mesh.triangles[t]));
    return sum;
}

double DirichletFunctional::element_value(const SurfaceMesh& mesh, int tri, const Mat& u) const {
    double e = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) e += stiffness_entry(mesh, tri, i, j) * u.col(i).dot(u.col(j));
    return 0.5 * e;
}

double DirichletFunctional::element_difference(const SurfaceMesh& mesh, int tri, const Mat& u, const Mat& d) const {
    // Rows of the element stiffness sum to zero, so u may be shifted by u_0.
    double e = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            const double k = stiffness_entry(mesh, tri, i, j);
            e += k * (d.col(i).dot(u.col(j) - u.col(0)) + 0.5 * d.col(i).dot(d.col(j)));
        }
    return e;
}

TwoForm volume_calibration_form(double H, int ambient_dim) {
    if (ambient_dim < 3) throw DimensionMismatch("x1 dx2^dx3 needs at least three ambient coordinates");
    return [H, ambient_dim](const Vec& x) {
        Mat w = Mat::Zero(ambient_dim, ambient_dim);
        w(1, 2) = H * x[0];
        w(2, 1) = -H * x[0];
        return w;
    };
}

double TwoFormFunctional::pullback_integral(const Mat& u) const {
    const Vec e1 = u.col(1) - u.col(0);
    const Vec e2 = u.col(2) - u.col(0);
    double s = 0.0;
    for (int k = 0; k < 3; ++k) {
        const Vec mid = 0.5 * (u.col(k) + u.col((k + 1) % 3));
        s += e1.dot(omega_(mid) * e2);
    }
    return s / 6.0;
}

double TwoFormFunctional::element_value(const SurfaceMesh& mesh, int tri, const Mat& u) const {
    return DirichletFunctional::element_value(mesh, tri, u) + pullback_integral(u);
}

double TwoFormFunctional::element_difference(const SurfaceMesh& mesh, int tri, const Mat& u, const Mat& d) const {
    const Vec e1 = u.col(1) - u.col(0), e2 = u.col(2) - u.col(0);
    const Vec f1 = e1 + d.col(1) - d.col(0), f2 = e2 + d.col(2) - d.col(0);
    double s = 0.0;
    for (int k = 0; k < 3; ++k) {
        const int l = (k + 1) % 3;
        const Vec mid = 0.5 * (u.col(k) + u.col(l));
        const Vec moved = mid + 0.5 * (d.col(k) + d.col(l));
        const Mat w0 = omega_(mid);
        s += f1.dot((omega_(moved) - w0) * f2) + (f1 - e1).dot(w0 * f2) + e1.dot(w0 * (f2 - e2));
    }
    return DirichletFunctional::element_difference(mesh, tri, u, d) + s / 6.0;
}

// ------------------------------------------------------------------ oracle

FdResult fd_second_variation(const LocalFunctional& functional, const MapField& u, const Mat& x, double h) {
    if (x.rows() != u.values.rows() || x.cols() != u.values.cols())
        throw DimensionMismatch("section must be an ambient m x V field");
    if (!(h > 0.0)) throw ConfigError("finite-difference step must be positive");
    Perturbation p;
    std::set<int> triangles;
    const auto star = vertex_stars(*u.mesh);
    for (int v = 0; v < x.cols(); ++v) {
        if (x.col(v).squaredNorm() == 0.0) continue;
        u.target->require_tangent(u.values.col(v), x.col(v));
        p.vertices.push_back(v);
        p.directions.push_back(x.col(v));
        triangles.insert(star[v].begin(), star[v].end());
    }
    return local_second_variation(functional, u, p, {triangles.begin(), triangles.end()}, h);
}

GeneralForms assemble_general(const MapField& u, const LocalFunctional& functional, double h) {
    const SurfaceMesh& mesh = *u.mesh;
    if (mesh.vertex_count() > 2000)
        throw ResourceLimit("dense polarization is limited to 2000 vertices, mesh has " +
                            std::to_string(mesh.vertex_count()));
    GeneralForms g;
    g.dirichlet = assemble(u);
    const TangentFrameBasis& b = *g.dirichlet.basis;
    const int n = b.n;
    const auto star = vertex_stars(mesh);

    std::vector<std::set<int>> neighbours(mesh.vertex_count());
    for (const auto& tri : mesh.triangles)
        for (int a : tri)
            for (int c : tri) neighbours[a].insert(c);

    auto union_star = [&](int v, int w) {
        std::vector<int> t = star[v];
        if (w != v) {
            t.insert(t.end(), star[w].begin(), star[w].end());
            std::sort(t.begin(), t.end());
            t.erase(std::unique(t.begin(), t.end()), t.end());
        }
        return t;
    };

    g.index = Mat::Zero(b.dof(), b.dof());
    Vec diag(b.dof());
    for (int v = 0; v < mesh.vertex_count(); ++v)
        for (int a = 0; a < n; ++a) {
            Perturbation p{{v}, {b.frames[v].col(a)}};
            diag[n * v + a] = local_second_variation(functional, u, p, star[v], h).value;
        }
    for (int v = 0; v < mesh.vertex_count(); ++v)
        for (int w : neighbours[v]) {
            if (w < v) continue;
            const auto tris = union_star(v, w);
            for (int a = 0; a < n; ++a)
                for (int c = (w == v ? a : 0); c < n; ++c) {
                    const int i = n * v + a, j = n * w + c;
                    if (i == j) {
                        g.index(i, i) = diag[i];
                        continue;
                    }
                    Perturbation p;
                    if (w == v) {
                        p = {{v}, {b.frames[v].col(a) + b.frames[v].col(c)}};
                    } else {
                        p = {{v, w}, {b.frames[v].col(a), b.frames[w].col(c)}};
                    }
                    const double q = local_second_variation(functional, u, p, tris, h).value;
                    const double bij = 0.5 * (q - diag[i] - diag[j]);
                    g.index(i, j) = bij;
                    g.index(j, i) = bij;
                }
        }
    return g;
}

DeviationBound deviation_bound(const GeneralForms& g, const MapField& u, int samples, std::uint64_t seed) {
    const SurfaceMesh& mesh = *u.mesh;
    const TangentFrameBasis& b = *g.dirichlet.basis;
    const Mat d = g.deviation();
    std::mt19937_64 rng(seed);
    DeviationBound out;
    out.samples = samples;
    for (int s = 0; s < samples; ++s) {
        const Vec c = random_section(b, rng);
        const Mat x = b.to_ambient(c);
        double weight = 0.0;
        for (int t = 0; t < mesh.triangle_count(); ++t) {
            const double du = p1_jacobian(mesh, t, u.values).norm();
            const double dx = p1_jacobian(mesh, t, x).norm();
            double xs = 0.0;
            for (int v : mesh.triangles[t]) xs += x.col(v).squaredNorm() / 3.0;
            weight += mesh.areas[t] * (du * std::sqrt(xs) * dx + du * du * xs);
        }
        const double dev = std::abs(c.dot(d * c));
        out.max_abs_deviation = std::max(out.max_abs_deviation, dev / w12_norm_sq(g.dirichlet, c));
        if (weight > 0.0) out.max_ratio = std::max(out.max_ratio, dev / weight);
    }
    return out;
}

void write_triplets(const SpMat& a, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot write " + path);
    f.precision(17);
    f << "# " << a.rows() << ' ' << a.cols() << ' ' << a.nonZeros() << '\n';
    for (int k = 0; k < a.outerSize(); ++k)
        for (SpMat::InnerIterator it(a, k); it; ++it) f << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
}

}  // namespace bubblespectra
