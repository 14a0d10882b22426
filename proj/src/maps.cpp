#include "bubblespectra/maps.hpp"

#include "bubblespectra/errors.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <sstream>

namespace bubblespectra {

namespace {

std::vector<cplx> trimmed(std::vector<cplx> c) {
    while (!c.empty() && std::abs(c.back()) == 0.0) c.pop_back();
    return c;
}

int poly_degree(const std::vector<cplx>& c) { return static_cast<int>(c.size()) - 1; }

// Σ c_k Z^k W^(d-k) and its two partial derivatives.
void eval_homogeneous(const std::vector<cplx>& c, int d, cplx z, cplx w, cplx& val, cplx* dz, cplx* dw) {
    std::vector<cplx> zp(d + 1), wp(d + 1);
    zp[0] = wp[0] = 1.0;
    for (int k = 1; k <= d; ++k) {
        zp[k] = zp[k - 1] * z;
        wp[k] = wp[k - 1] * w;
    }
    val = 0.0;
    cplx gz = 0.0, gw = 0.0;
    for (int k = 0; k < static_cast<int>(c.size()); ++k) {
        val += c[k] * zp[k] * wp[d - k];
        if (k > 0) gz += static_cast<double>(k) * c[k] * zp[k - 1] * wp[d - k];
        if (d - k > 0) gw += static_cast<double>(d - k) * c[k] * zp[k] * wp[d - k - 1];
    }
    if (dz) *dz = gz;
    if (dw) *dw = gw;
}

cplx eval_poly(const std::vector<cplx>& c, cplx z) {
    cplx s = 0.0;
    for (int k = static_cast<int>(c.size()) - 1; k >= 0; --k) s = s * z + c[k];
    return s;
}

std::string complex_text(cplx c) {
    std::ostringstream os;
    os.precision(17);
    if (c.imag() == 0.0) {
        os << c.real();
    } else {
        os << c.real() << (c.imag() < 0 ? "-" : "+") << std::abs(c.imag()) << "i";
    }
    return os.str();
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_top_level(const std::string& s, char sep) {
    std::vector<std::string> out;
    int depth = 0;
    std::string cur;
    for (char ch : s) {
        if (ch == '(' || ch == '[') ++depth;
        if (ch == ')' || ch == ']') --depth;
        if (ch == sep && depth == 0) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(trim(cur));
    return out;
}

std::vector<cplx> parse_coeff_list(const std::string& text) {
    const std::string t = trim(text);
    if (t.size() < 2 || t.front() != '[' || t.back() != ']')
        throw ConfigError("coefficient list must be bracketed: '" + text + "'");
    std::vector<cplx> out;
    const std::string inner = t.substr(1, t.size() - 2);
    if (trim(inner).empty()) throw ConfigError("empty coefficient list");
    for (const auto& tok : split_top_level(inner, ',')) out.push_back(parse_complex(tok));
    return out;
}

double parse_real(const std::string& text) {
    const std::string t = trim(text);
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(t, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != t.size()) throw ConfigError("expected a number, got '" + text + "'");
    return v;
}

Vec lift_base_point(const ManifoldPtr& target, const Vec& x) {
    if (auto aug = std::dynamic_pointer_cast<const AugmentedEmbedding>(target)) return aug->embed(x);
    return x;
}

// Point location by radial projection onto triangle planes.
bool locate(const SurfaceMesh& mesh, const Eigen::Vector3d& x, int& tri, Eigen::Vector3d& bary) {
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        const auto& ix = mesh.triangles[t];
        const Eigen::Vector3d& a = mesh.vertices[ix[0]];
        const Eigen::Vector3d& n = mesh.normals[t];
        const double nx = n.dot(x);
        if (nx <= 0.5 * x.norm()) continue;
        const Eigen::Vector3d q = x * (n.dot(a) / nx);
        const double area2 = 2.0 * mesh.areas[t];
        Eigen::Vector3d b;
        for (int k = 0; k < 3; ++k) {
            const Eigen::Vector3d& p1 = mesh.vertices[ix[(k + 1) % 3]];
            const Eigen::Vector3d& p2 = mesh.vertices[ix[(k + 2) % 3]];
            b[k] = n.dot((p1 - q).cross(p2 - q)) / area2;
        }
        if (b.minCoeff() >= -1e-12) {
            tri = t;
            bary = b / b.sum();
            return true;
        }
    }
    return false;
}

}  // namespace

// ------------------------------------------------------------- stereography

Eigen::Vector2cd sphere_to_homogeneous(const Eigen::Vector3d& y) {
    Eigen::Vector2cd zw;
    if (y.z() <= 0.0)
        zw << cplx(y.x(), y.y()), cplx(1.0 - y.z(), 0.0);
    else
        zw << cplx(1.0 + y.z(), 0.0), cplx(y.x(), -y.y());
    return zw;
}

Eigen::Vector3d homogeneous_to_sphere(const Eigen::Vector2cd& zw) {
    const double s = std::max(std::abs(zw[0]), std::abs(zw[1]));
    if (s == 0.0) throw Error("degenerate homogeneous point");
    const cplx p = zw[0] / s, q = zw[1] / s;
    const double n = std::norm(p) + std::norm(q);
    const cplx pq = p * std::conj(q);
    return Eigen::Vector3d(2.0 * pq.real(), 2.0 * pq.imag(), std::norm(p) - std::norm(q)) / n;
}

Eigen::Vector3d inverse_stereographic(cplx z) {
    Eigen::Vector2cd zw(z, 1.0);
    return homogeneous_to_sphere(zw);
}

// ------------------------------------------------------------------ charts

ConformalChart ConformalChart::mobius(cplx a, cplx b, cplx c, cplx d) {
    if (std::abs(a * d - b * c) == 0.0) throw ConfigError("Möbius matrix is singular");
    ConformalChart ch;
    ch.kind_ = Kind::mobius;
    ch.m_ << a, b, c, d;
    return ch;
}

ConformalChart ConformalChart::dilation(cplx p, double r) {
    if (!(r > 0.0)) throw ConfigError("dilation scale must be positive");
    ConformalChart ch;
    ch.kind_ = Kind::dilation;
    ch.p_ = p;
    ch.r_ = r;
    ch.m_ << r, p, 0.0, 1.0;
    return ch;
}

ConformalChart ConformalChart::neck(cplx p, double rho) {
    if (!(rho > 0.0)) throw ConfigError("neck radius must be positive");
    ConformalChart ch;
    ch.kind_ = Kind::neck;
    ch.p_ = p;
    ch.r_ = rho;
    return ch;
}

cplx ConformalChart::forward(cplx z) const {
    if (kind_ == Kind::neck) return p_ + r_ * std::exp(-z);
    return (m_(0, 0) * z + m_(0, 1)) / (m_(1, 0) * z + m_(1, 1));
}

cplx ConformalChart::inverse(cplx z) const {
    if (kind_ == Kind::neck) return -std::log((z - p_) / r_);
    return (m_(1, 1) * z - m_(0, 1)) / (-m_(1, 0) * z + m_(0, 0));
}

cplx ConformalChart::derivative(cplx z) const {
    if (kind_ == Kind::neck) return -r_ * std::exp(-z);
    const cplx den = m_(1, 0) * z + m_(1, 1);
    return (m_(0, 0) * m_(1, 1) - m_(0, 1) * m_(1, 0)) / (den * den);
}

Mobius ConformalChart::matrix() const {
    if (kind_ == Kind::neck) throw Error("neck chart is not a Möbius transformation");
    return m_;
}

Eigen::Vector3d ConformalChart::act_on_sphere(const Eigen::Vector3d& y) const {
    return homogeneous_to_sphere(matrix() * sphere_to_homogeneous(y));
}

std::string ConformalChart::describe() const {
    switch (kind_) {
        case Kind::dilation:
            return "dilation:" + complex_text(p_) + "," + complex_text(r_);
        case Kind::neck:
            return "neck:" + complex_text(p_) + "," + complex_text(r_);
        default:
            return "mobius:" + complex_text(m_(0, 0)) + "," + complex_text(m_(0, 1)) + "," + complex_text(m_(1, 0)) +
                   "," + complex_text(m_(1, 1));
    }
}

// -------------------------------------------------------------- sphere maps

SphereMap::SphereMap(std::vector<cplx> numerator, std::vector<cplx> denominator, Mobius pre)
    : p_(trimmed(std::move(numerator))), q_(trimmed(std::move(denominator))), pre_(std::move(pre)) {
    if (p_.empty() && q_.empty()) throw ConfigError("rational map with zero numerator and denominator");
    if (q_.empty()) throw ConfigError("rational map with zero denominator");
    if (std::abs(pre_.determinant()) == 0.0) throw ConfigError("singular Möbius pre-composition");
    degree_ = std::max(poly_degree(p_), poly_degree(q_));
    // proportional coefficient vectors give a constant map
    constant_ = true;
    const std::size_t n = std::max(p_.size(), q_.size());
    auto at = [](const std::vector<cplx>& c, std::size_t k) { return k < c.size() ? c[k] : cplx(0.0); };
    double scale = 0.0;
    for (std::size_t k = 0; k < n; ++k) scale = std::max({scale, std::abs(at(p_, k)), std::abs(at(q_, k))});
    for (std::size_t i = 0; i < n && constant_; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (std::abs(at(p_, i) * at(q_, j) - at(p_, j) * at(q_, i)) > 1e-14 * scale * scale) {
                constant_ = false;
                break;
            }
    if (constant_) {
        degree_ = 0;
        return;
    }
    if (poly_degree(q_) >= 1 && poly_degree(p_) >= 1) {
        const int dq = poly_degree(q_);
        Eigen::MatrixXcd comp = Eigen::MatrixXcd::Zero(dq, dq);
        for (int i = 1; i < dq; ++i) comp(i, i - 1) = 1.0;
        for (int i = 0; i < dq; ++i) comp(i, dq - 1) = -q_[i] / q_[dq];
        Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(comp);
        for (int i = 0; i < dq; ++i) {
            const cplx r = es.eigenvalues()[i];
            double mag = 0.0;
            for (std::size_t k = 0; k < p_.size(); ++k) mag += std::abs(p_[k]) * std::pow(std::abs(r), double(k));
            if (std::abs(eval_poly(p_, r)) <= 1e-10 * mag)
                throw ConfigError("numerator and denominator share the root " + complex_text(r));
        }
    }
}

Eigen::Vector2cd SphereMap::image_homogeneous(const Eigen::Vector2cd& zw) const {
    Eigen::Vector2cd m = pre_ * zw;
    m /= m.norm();
    cplx pv, qv;
    eval_homogeneous(p_, degree_, m[0], m[1], pv, nullptr, nullptr);
    eval_homogeneous(q_, degree_, m[0], m[1], qv, nullptr, nullptr);
    return Eigen::Vector2cd(pv, qv);
}

Eigen::Vector3d SphereMap::operator()(const Eigen::Vector3d& y) const {
    if (constant_) {
        std::size_t k = 0;
        for (std::size_t j = 1; j < q_.size(); ++j)
            if (std::abs(q_[j]) > std::abs(q_[k])) k = j;
        return homogeneous_to_sphere(Eigen::Vector2cd(k < p_.size() ? p_[k] : cplx(0.0), q_[k]));
    }
    return homogeneous_to_sphere(image_homogeneous(sphere_to_homogeneous(y)));
}

Eigen::Vector3d SphereMap::at_coordinate(cplx zeta, Eigen::Vector3d* dx, Eigen::Vector3d* dy) const {
    if (constant_) {
        if (dx) dx->setZero();
        if (dy) dy->setZero();
        return (*this)(inverse_stereographic(zeta));
    }
    const cplx z = pre_(0, 0) * zeta + pre_(0, 1);
    const cplx w = pre_(1, 0) * zeta + pre_(1, 1);
    const double s = std::max(std::abs(z), std::abs(w));
    const cplx zs = z / s, ws = w / s;
    const cplx dz = pre_(0, 0) / s, dw = pre_(1, 0) / s;
    cplx P, Pz, Pw, Q, Qz, Qw;
    eval_homogeneous(p_, degree_, zs, ws, P, &Pz, &Pw);
    eval_homogeneous(q_, degree_, zs, ws, Q, &Qz, &Qw);
    const cplx dP = Pz * dz + Pw * dw;
    const cplx dQ = Qz * dz + Qw * dw;
    const double S = std::norm(P) + std::norm(Q);
    const cplx PQ = P * std::conj(Q);
    const Eigen::Vector3d N(2.0 * PQ.real(), 2.0 * PQ.imag(), std::norm(P) - std::norm(Q));
    const Eigen::Vector3d u = N / S;
    auto directional = [&](cplx delta) {
        const cplx a = dP * delta, b = dQ * delta;
        const cplx dPQ = a * std::conj(Q) + P * std::conj(b);
        const Eigen::Vector3d dN(2.0 * dPQ.real(), 2.0 * dPQ.imag(),
                                 2.0 * (std::conj(P) * a).real() - 2.0 * (std::conj(Q) * b).real());
        const double dS = 2.0 * (std::conj(P) * a + std::conj(Q) * b).real();
        return Eigen::Vector3d(dN / S - N * dS / (S * S));
    };
    if (dx) *dx = directional(1.0);
    if (dy) *dy = directional(cplx(0.0, 1.0));
    return u;
}

SphereMap SphereMap::compose(const ConformalChart& chart) const {
    return SphereMap(p_, q_, pre_ * chart.matrix());
}

std::string SphereMap::describe() const {
    auto list = [](const std::vector<cplx>& c) {
        std::string s = "[";
        for (std::size_t k = 0; k < c.size(); ++k) s += (k ? "," : "") + complex_text(c[k]);
        return s + "]";
    };
    std::string s = "rational:" + list(p_) + "/" + list(q_);
    if (!pre_.isIdentity(0.0))
        s = "compose(" + s + ", mobius:" + complex_text(pre_(0, 0)) + "," + complex_text(pre_(0, 1)) + "," +
            complex_text(pre_(1, 0)) + "," + complex_text(pre_(1, 1)) + ")";
    return s;
}

// --------------------------------------------------------------- map fields

void MapField::validate() const {
    if (!mesh || !target) throw Error("map field without mesh or target");
    if (values.rows() != target->ambient_dim() || values.cols() != mesh->vertex_count())
        throw DimensionMismatch("map field has shape " + std::to_string(values.rows()) + "x" +
                                std::to_string(values.cols()));
    for (int v = 0; v < vertex_count(); ++v) target->require_on_manifold(values.col(v));
}

MapField map_from_function(const std::function<Vec(const Eigen::Vector3d&)>& f, std::shared_ptr<const SurfaceMesh> mesh,
                           ManifoldPtr target, std::string provenance) {
    MapField u;
    u.mesh = std::move(mesh);
    u.target = std::move(target);
    u.provenance = std::move(provenance);
    u.values.resize(u.target->ambient_dim(), u.mesh->vertex_count());
    for (int v = 0; v < u.mesh->vertex_count(); ++v) u.values.col(v) = f(u.mesh->vertices[v]);
    u.validate();
    return u;
}

MapField sample_map(const SphereMap& family, std::shared_ptr<const SurfaceMesh> mesh, ManifoldPtr target) {
    const TargetManifold* t = target.get();
    MapField u = map_from_function([&](const Eigen::Vector3d& y) { return t->lift_sphere_point(family(y)); },
                                   std::move(mesh), std::move(target), family.describe());
    u.family = family;
    return u;
}

MapField rational_map(const std::vector<cplx>& numerator, const std::vector<cplx>& denominator,
                      std::shared_ptr<const SurfaceMesh> mesh, ManifoldPtr target) {
    return sample_map(SphereMap(numerator, denominator), std::move(mesh), std::move(target));
}

MapField constant_map(const Vec& point, std::shared_ptr<const SurfaceMesh> mesh, ManifoldPtr target) {
    const Vec p = lift_base_point(target, point);
    std::ostringstream os;
    os << "constant:";
    for (int i = 0; i < point.size(); ++i) os << (i ? "," : "") << point[i];
    return map_from_function([&](const Eigen::Vector3d&) { return p; }, std::move(mesh), std::move(target), os.str());
}

MapField torus_map(double a, double b, std::shared_ptr<const SurfaceMesh> mesh, ManifoldPtr target) {
    std::ostringstream os;
    os << "torus:" << a << "," << b;
    ManifoldPtr t = target;
    return map_from_function(
        [&](const Eigen::Vector3d& y) { return lift_base_point(t, CliffordTorus::point(a * y.z(), b * y.x() + y.y())); },
        std::move(mesh), std::move(target), os.str());
}

MapField compose(const MapField& u, const ConformalChart& chart) {
    if (chart.kind() == ConformalChart::Kind::neck)
        throw Error("neck charts map onto cylinders; use pull_to_neck");
    if (u.family) {
        MapField out = sample_map(u.family->compose(chart), u.mesh, u.target);
        return out;
    }
    MapField out = u;
    out.provenance = "compose(" + u.provenance + ", " + chart.describe() + ")";
    out.interpolated = true;
    out.family.reset();
    const SurfaceMesh& mesh = *u.mesh;
    for (int v = 0; v < mesh.vertex_count(); ++v) {
        const Eigen::Vector3d y = chart.act_on_sphere(mesh.vertices[v]);
        int tri = -1;
        Eigen::Vector3d bary;
        if (!locate(mesh, y, tri, bary)) throw Error("point location failed during interpolation");
        Vec val = Vec::Zero(u.values.rows());
        for (int k = 0; k < 3; ++k) val += bary[k] * u.values.col(mesh.triangles[tri][k]);
        out.values.col(v) = u.target->closest_point(val);
    }
    return out;
}

// ------------------------------------------------------------------ parsing

cplx parse_complex(const std::string& text) {
    std::string t;
    for (char ch : text)
        if (!std::isspace(static_cast<unsigned char>(ch))) t += ch;
    if (t.empty()) throw ConfigError("empty complex number");
    if (t.back() != 'i') return parse_real(t);
    t.pop_back();
    std::size_t split = std::string::npos;
    for (std::size_t k = t.size(); k-- > 1;)
        if ((t[k] == '+' || t[k] == '-') && t[k - 1] != 'e' && t[k - 1] != 'E') {
            split = k;
            break;
        }
    std::string re = split == std::string::npos ? "" : t.substr(0, split);
    std::string im = split == std::string::npos ? t : t.substr(split);
    double imv;
    if (im.empty() || im == "+")
        imv = 1.0;
    else if (im == "-")
        imv = -1.0;
    else
        imv = parse_real(im);
    return {re.empty() ? 0.0 : parse_real(re), imv};
}

ConformalChart parse_chart_spec(const std::string& spec) {
    const std::string s = trim(spec);
    if (s == "identity") return ConformalChart::identity();
    const auto colon = s.find(':');
    if (colon == std::string::npos) throw ConfigError("chart spec needs a kind: '" + spec + "'");
    const std::string kind = s.substr(0, colon);
    const auto args = split_top_level(s.substr(colon + 1), ',');
    if (kind == "mobius") {
        if (args.size() != 4) throw ConfigError("mobius chart needs a,b,c,d");
        return ConformalChart::mobius(parse_complex(args[0]), parse_complex(args[1]), parse_complex(args[2]),
                                      parse_complex(args[3]));
    }
    if (kind == "dilation") {
        if (args.size() != 2) throw ConfigError("dilation chart needs p,r");
        return ConformalChart::dilation(parse_complex(args[0]), parse_real(args[1]));
    }
    if (kind == "neck") {
        if (args.size() != 2) throw ConfigError("neck chart needs p,rho");
        return ConformalChart::neck(parse_complex(args[0]), parse_real(args[1]));
    }
    throw ConfigError("unknown chart kind '" + kind + "'");
}

MapField parse_map_spec(const std::string& spec, std::shared_ptr<const SurfaceMesh> mesh, ManifoldPtr target) {
    const std::string s = trim(spec);
    if (s.rfind("compose(", 0) == 0) {
        if (s.back() != ')') throw ConfigError("unbalanced compose(...) in '" + spec + "'");
        const auto parts = split_top_level(s.substr(8, s.size() - 9), ',');
        // the chart arguments are themselves comma separated
        if (parts.size() < 2) throw ConfigError("compose needs a map and a chart");
        std::string chart = parts[1];
        for (std::size_t k = 2; k < parts.size(); ++k) chart += "," + parts[k];
        return compose(parse_map_spec(parts[0], mesh, target), parse_chart_spec(chart));
    }
    const auto colon = s.find(':');
    if (colon == std::string::npos) throw ConfigError("map spec needs a family: '" + spec + "'");
    const std::string kind = s.substr(0, colon);
    const std::string rest = s.substr(colon + 1);
    if (kind == "rational") {
        const auto slash = split_top_level(rest, '/');
        if (slash.size() != 2) throw ConfigError("rational spec must be [num]/[den]");
        return rational_map(parse_coeff_list(slash[0]), parse_coeff_list(slash[1]), std::move(mesh), std::move(target));
    }
    if (kind == "constant") {
        const auto args = split_top_level(rest, ',');
        Vec p(args.size());
        for (std::size_t k = 0; k < args.size(); ++k) p[k] = parse_real(args[k]);
        return constant_map(p, std::move(mesh), std::move(target));
    }
    if (kind == "torus") {
        const auto args = split_top_level(rest, ',');
        if (args.size() != 2) throw ConfigError("torus spec needs a,b");
        return torus_map(parse_real(args[0]), parse_real(args[1]), std::move(mesh), std::move(target));
    }
    throw ConfigError("unknown map family '" + kind + "'");
}

// --------------------------------------------------------- energy/residual

Mat intrinsic_values(const MapField& u) {
    if (auto aug = std::dynamic_pointer_cast<const AugmentedEmbedding>(u.target)) {
        Mat b(aug->base().ambient_dim(), u.vertex_count());
        for (int v = 0; v < u.vertex_count(); ++v) b.col(v) = aug->base_point(u.values.col(v));
        return b;
    }
    return u.values;
}

Eigen::VectorXd energy_per_triangle(const MapField& u) {
    const SurfaceMesh& mesh = *u.mesh;
    const Mat values = intrinsic_values(u);
    Eigen::VectorXd e(mesh.triangle_count());
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        const auto& ix = mesh.triangles[t];
        double s = 0.0;
        for (int c = 0; c < values.rows(); ++c) {
            const Eigen::Vector3d g = values(c, ix[0]) * mesh.grads[t][0] + values(c, ix[1]) * mesh.grads[t][1] +
                                      values(c, ix[2]) * mesh.grads[t][2];
            s += g.squaredNorm();
        }
        e[t] = 0.5 * mesh.areas[t] * s;
    }
    return e;
}

double dirichlet_energy(const MapField& u) { return energy_per_triangle(u).sum(); }

double harmonic_residual(const MapField& u) {
    const SpMat k = stiffness_matrix(*u.mesh);
    const Eigen::VectorXd m = lumped_mass(*u.mesh);
    const Mat ku = (k * u.values.transpose()).transpose();  // m x V
    double s = 0.0;
    for (int v = 0; v < u.vertex_count(); ++v) {
        const Vec r = u.target->projector_at(u.values.col(v)) * ku.col(v) / m[v];
        s += m[v] * r.squaredNorm();
    }
    return std::sqrt(s);
}

// ---------------------------------------------------------------- cylinders

Eigen::MatrixXd CylinderField::dt_sq() const {
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(grid->n_t(), grid->n_theta());
    for (const auto& d : d_t) s += d.cwiseProduct(d);
    return s;
}

Eigen::MatrixXd CylinderField::dtheta_sq() const {
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(grid->n_t(), grid->n_theta());
    for (const auto& d : d_theta) s += d.cwiseProduct(d);
    return s;
}

Eigen::MatrixXd CylinderField::cross() const {
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(grid->n_t(), grid->n_theta());
    for (int c = 0; c < components(); ++c) s += d_t[c].cwiseProduct(d_theta[c]);
    return s;
}

CylinderField pull_to_neck(const SphereMap& u, const ConformalChart& neck, const CylinderGrid& grid) {
    if (neck.kind() != ConformalChart::Kind::neck) throw ConfigError("pull_to_neck needs a neck chart");
    CylinderField f;
    f.grid = &grid;
    f.analytic_derivatives = true;
    for (int c = 0; c < 3; ++c) {
        f.value.emplace_back(grid.n_t(), grid.n_theta());
        f.d_t.emplace_back(grid.n_t(), grid.n_theta());
        f.d_theta.emplace_back(grid.n_t(), grid.n_theta());
    }
    for (int i = 0; i < grid.n_t(); ++i)
        for (int j = 0; j < grid.n_theta(); ++j) {
            const cplx s(grid.t(i), grid.theta(j));
            const cplx dn = neck.derivative(s);
            Eigen::Vector3d ux, uy;
            const Eigen::Vector3d val = u.at_coordinate(neck.forward(s), &ux, &uy);
            const Eigen::Vector3d dt = dn.real() * ux + dn.imag() * uy;
            const cplx dth = cplx(0.0, 1.0) * dn;
            const Eigen::Vector3d dtheta = dth.real() * ux + dth.imag() * uy;
            for (int c = 0; c < 3; ++c) {
                f.value[c](i, j) = val[c];
                f.d_t[c](i, j) = dt[c];
                f.d_theta[c](i, j) = dtheta[c];
            }
        }
    return f;
}

CylinderField cylinder_field(const CylinderGrid& grid, const std::function<Eigen::Vector3d(double, double)>& fn) {
    CylinderField f;
    f.grid = &grid;
    for (int c = 0; c < 3; ++c) {
        f.value.push_back(grid.sample([&](double t, double th) { return fn(t, th)[c]; }));
        f.d_t.push_back(grid.d_t(f.value.back()));
        f.d_theta.push_back(grid.d_theta(f.value.back()));
    }
    return f;
}

HopfReport hopf_differential(const CylinderField& v) {
    const CylinderGrid& g = *v.grid;
    HopfReport r;
    const Eigen::MatrixXd a = v.dt_sq();
    const Eigen::MatrixXd b = v.dtheta_sq();
    const Eigen::MatrixXd c = v.cross();
    r.phi.resize(g.n_t(), g.n_theta());
    for (int i = 0; i < g.n_t(); ++i)
        for (int j = 0; j < g.n_theta(); ++j) r.phi(i, j) = 0.25 * cplx(a(i, j) - b(i, j), -2.0 * c(i, j));
    const double gmax = (a + b).maxCoeff();
    r.max_phi_ratio = gmax > 0.0 ? r.phi.cwiseAbs().maxCoeff() / gmax : 0.0;
    r.slice_dt.resize(g.n_t());
    r.slice_dtheta.resize(g.n_t());
    r.slice_balance.resize(g.n_t());
    for (int i = 0; i < g.n_t(); ++i) {
        r.slice_dt[i] = g.slice_integral(a, i);
        r.slice_dtheta[i] = g.slice_integral(b, i);
        r.slice_balance[i] = r.slice_dt[i] - r.slice_dtheta[i];
        const double tot = r.slice_dt[i] + r.slice_dtheta[i];
        if (tot > 0.0) r.max_relative_imbalance = std::max(r.max_relative_imbalance, std::abs(r.slice_balance[i]) / tot);
    }
    return r;
}

}  // namespace bubblespectra
