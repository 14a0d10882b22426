#include "bubblespectra/manifold.hpp"

#include "bubblespectra/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace bubblespectra {

namespace {

std::string format_number(double x) {
    std::ostringstream os;
    os << x;
    return os.str();
}

Vec gaussian_vector(int m, std::mt19937_64& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Vec v(m);
    for (int i = 0; i < m; ++i) v[i] = nd(rng);
    return v;
}

}  // namespace

// ---------------------------------------------------------------- base class

Vec TargetManifold::lift_sphere_point(const Eigen::Vector3d&) const {
    throw Error("target '" + key() + "' has no natural map from S^2");
}

Vec TargetManifold::sff_at(const Vec& p, const Vec& v, const Vec& w) const {
    return sff_finite_difference(p, v, w);
}

Mat TargetManifold::shape_operator_at(const Vec& p, const Vec& nu) const {
    const Mat e = tangent_frame(p);
    const int n = static_cast<int>(e.cols());
    Mat s(n, n);
    for (int a = 0; a < n; ++a)
        for (int b = a; b < n; ++b) {
            s(a, b) = nu.dot(sff_at(p, e.col(a), e.col(b)));
            s(b, a) = s(a, b);
        }
    return e * s * e.transpose();
}

Vec TargetManifold::sff_finite_difference(const Vec& p, const Vec& v, const Vec& w) const {
    constexpr double h = 1e-4;
    auto accel = [&](const Vec& d) -> Vec {
        const double len = d.norm();
        if (len == 0.0) return Vec::Zero(p.size());
        const Vec u = d / len;
        const Vec a = (closest_point(p + h * u) - 2.0 * p + closest_point(p - h * u)) / (h * h);
        return a * (len * len);
    };
    Vec a = 0.25 * (accel(v + w) - accel(v - w));
    return a - projector_at(p) * a;
}

double TargetManifold::distance_to_manifold(const Vec& x) const {
    return (closest_point(x) - x).norm();
}

void TargetManifold::require_on_manifold(const Vec& p) const {
    if (p.size() != ambient_dim())
        throw DimensionMismatch("point has dimension " + std::to_string(p.size()) + ", target '" + key() +
                                "' lives in R^" + std::to_string(ambient_dim()));
    if (!p.allFinite()) throw PointOffManifold("non-finite point");
    const double d = distance_to_manifold(p);
    if (d > kTolerance * std::max(1.0, p.norm()))
        throw PointOffManifold("point is " + format_number(d) + " away from '" + key() + "'");
}

void TargetManifold::require_tangent(const Vec& p, const Vec& v) const {
    if (v.size() != ambient_dim()) throw DimensionMismatch("tangent vector has wrong dimension");
    const double off = (v - projector_at(p) * v).norm();
    if (off > kTolerance * std::max(1.0, v.norm()))
        throw NonTangentInput("vector has normal component " + format_number(off));
}

Mat TargetManifold::tangent_projection(const Vec& p) const {
    require_on_manifold(p);
    return projector_at(p);
}

Vec TargetManifold::second_fundamental_form(const Vec& p, const Vec& v, const Vec& w) const {
    require_on_manifold(p);
    require_tangent(p, v);
    require_tangent(p, w);
    return sff_at(p, v, w);
}

Mat TargetManifold::shape_operator(const Vec& p, const Vec& nu) const {
    require_on_manifold(p);
    if (nu.size() != ambient_dim()) throw DimensionMismatch("normal vector has wrong dimension");
    return shape_operator_at(p, nu);
}

Mat TargetManifold::tangent_frame(const Vec& p) const {
    const Mat proj = projector_at(p);
    const int m = ambient_dim();
    const int n = intrinsic_dim();
    std::vector<int> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return proj.col(a).norm() > proj.col(b).norm(); });
    Mat e(m, n);
    int found = 0;
    for (int idx : order) {
        if (found == n) break;
        Vec c = proj.col(idx);
        for (int k = 0; k < found; ++k) c -= e.col(k).dot(c) * e.col(k);
        // second pass keeps orthogonality at round-off level
        for (int k = 0; k < found; ++k) c -= e.col(k).dot(c) * e.col(k);
        const double len = c.norm();
        if (len < 1e-8) continue;
        e.col(found++) = c / len;
    }
    if (found < n) throw Error("degenerate tangent projection at a point of '" + key() + "'");
    return e;
}

Vec TargetManifold::random_tangent(const Vec& p, std::mt19937_64& rng) const {
    return projector_at(p) * gaussian_vector(ambient_dim(), rng);
}

// ------------------------------------------------------------------- sphere

Vec Sphere2::closest_point(const Vec& x) const {
    const double r = x.norm();
    if (r == 0.0) throw PointOffManifold("origin has no closest point on S^2");
    return x / r;
}

Vec Sphere2::sample_point(std::mt19937_64& rng) const {
    return gaussian_vector(3, rng).normalized();
}

Vec Sphere2::lift_sphere_point(const Eigen::Vector3d& y) const { return y; }

Mat Sphere2::projector_at(const Vec& p) const {
    return Mat::Identity(3, 3) - p * p.transpose();
}

Vec Sphere2::sff_at(const Vec& p, const Vec& v, const Vec& w) const {
    return -v.dot(w) * p;
}

Mat Sphere2::shape_operator_at(const Vec& p, const Vec& nu) const {
    return -nu.dot(p) * projector_at(p);
}

// ---------------------------------------------------------- clifford torus

Vec CliffordTorus::point(double alpha, double beta) {
    Vec p(4);
    p << kRadius * std::cos(alpha), kRadius * std::sin(alpha), kRadius * std::cos(beta),
        kRadius * std::sin(beta);
    return p;
}

Vec CliffordTorus::closest_point(const Vec& x) const {
    const double a = std::hypot(x[0], x[1]);
    const double b = std::hypot(x[2], x[3]);
    if (a == 0.0 || b == 0.0) throw PointOffManifold("point on a circle axis has no closest point on the torus");
    Vec p(4);
    p << kRadius * x[0] / a, kRadius * x[1] / a, kRadius * x[2] / b, kRadius * x[3] / b;
    return p;
}

Vec CliffordTorus::sample_point(std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> ud(0.0, 2.0 * M_PI);
    const double a = ud(rng);
    const double b = ud(rng);
    return point(a, b);
}

std::pair<Vec, Vec> CliffordTorus::circle_tangents(const Vec& p) {
    Vec t1 = Vec::Zero(4), t2 = Vec::Zero(4);
    t1[0] = -p[1] / kRadius;
    t1[1] = p[0] / kRadius;
    t2[2] = -p[3] / kRadius;
    t2[3] = p[2] / kRadius;
    return {t1, t2};
}

Mat CliffordTorus::projector_at(const Vec& p) const {
    auto [t1, t2] = circle_tangents(p);
    return t1 * t1.transpose() + t2 * t2.transpose();
}

Vec CliffordTorus::sff_at(const Vec& p, const Vec& v, const Vec& w) const {
    auto [t1, t2] = circle_tangents(p);
    Vec n1 = Vec::Zero(4), n2 = Vec::Zero(4);
    n1.head(2) = p.head(2) / kRadius;
    n2.tail(2) = p.tail(2) / kRadius;
    return -(t1.dot(v) * t1.dot(w) / kRadius) * n1 - (t2.dot(v) * t2.dot(w) / kRadius) * n2;
}

Mat CliffordTorus::shape_operator_at(const Vec& p, const Vec& nu) const {
    auto [t1, t2] = circle_tangents(p);
    const double c1 = nu.head(2).dot(p.head(2)) / kRadius;
    const double c2 = nu.tail(2).dot(p.tail(2)) / kRadius;
    return -(c1 / kRadius) * t1 * t1.transpose() - (c2 / kRadius) * t2 * t2.transpose();
}

// ---------------------------------------------------- augmented embedding

AugmentedEmbedding::AugmentedEmbedding(ManifoldPtr base, double lambda, AugmentFrame frame)
    : base_(std::move(base)), lambda_(lambda), frame_(frame) {
    if (!base_) throw ConfigError("augmentation needs a base manifold");
    if (!(lambda_ > 0.0)) throw ConfigError("augmentation parameter must be positive");
    const int m = base_->ambient_dim();
    if (frame_ == AugmentFrame::coordinate) {
        for (int i = 0; i < m; ++i) {
            directions_.push_back(Vec::Unit(m, i));
            weights_.push_back(1.0);
        }
        return;
    }
    const double beta = m >= 4 ? 1.0 / (m - 1) : 2.0 / (m + 2);
    const double alpha = m >= 4 ? 0.0 : (4.0 - m) / (m + 2);
    if (alpha > 0.0)
        for (int i = 0; i < m; ++i) {
            directions_.push_back(Vec::Unit(m, i));
            weights_.push_back(alpha);
        }
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) {
            directions_.push_back((Vec::Unit(m, i) + Vec::Unit(m, j)) / std::sqrt(2.0));
            weights_.push_back(beta);
            directions_.push_back((Vec::Unit(m, i) - Vec::Unit(m, j)) / std::sqrt(2.0));
            weights_.push_back(beta);
        }
}

std::string AugmentedEmbedding::key() const {
    return base_->key() + "+aug:" + format_number(lambda_) + (frame_ == AugmentFrame::isotropic ? ":iso" : "");
}

int AugmentedEmbedding::ambient_dim() const {
    return base_->ambient_dim() + 2 * direction_count();
}

Vec AugmentedEmbedding::embed(const Vec& x) const {
    const int m = base_->ambient_dim();
    Vec y(ambient_dim());
    y.head(m) = x;
    for (int k = 0; k < direction_count(); ++k) {
        const double a = std::sqrt(weights_[k]) / lambda_;
        const double s = lambda_ * directions_[k].dot(x);
        y[m + 2 * k] = a * std::cos(s);
        y[m + 2 * k + 1] = a * std::sin(s);
    }
    return y / std::sqrt(2.0);
}

Vec AugmentedEmbedding::base_point(const Vec& y) const {
    return std::sqrt(2.0) * y.head(base_->ambient_dim());
}

Vec AugmentedEmbedding::pushforward(const Vec& x, const Vec& v) const {
    const int m = base_->ambient_dim();
    Vec y(ambient_dim());
    y.head(m) = v;
    for (int k = 0; k < direction_count(); ++k) {
        const double a = std::sqrt(weights_[k]);
        const double s = lambda_ * directions_[k].dot(x);
        const double d = directions_[k].dot(v);
        y[m + 2 * k] = -a * std::sin(s) * d;
        y[m + 2 * k + 1] = a * std::cos(s) * d;
    }
    return y / std::sqrt(2.0);
}

Vec AugmentedEmbedding::pullback_tangent(const Vec& v_image) const {
    return std::sqrt(2.0) * v_image.head(base_->ambient_dim());
}

Vec AugmentedEmbedding::closest_point(const Vec& y) const {
    if (y.size() != ambient_dim()) throw DimensionMismatch("point has wrong dimension for augmented target");
    Vec x = base_->closest_point(base_point(y));
    // Gauss-Newton on |i(x) - y|²; the Jacobian columns di(e_a) are orthonormal.
    for (int it = 0; it < 100; ++it) {
        const Mat e = base_->tangent_frame(x);
        const Vec r = embed(x) - y;
        Vec step(e.cols());
        for (int a = 0; a < e.cols(); ++a) step[a] = -pushforward(x, e.col(a)).dot(r);
        x = base_->closest_point(x + e * step);
        if (step.norm() < 1e-15 * std::max(1.0, x.norm())) break;
    }
    return embed(x);
}

double AugmentedEmbedding::reach() const {
    const double kappa = 1.0 / base_->reach();
    return std::min(1.0 / std::sqrt(kappa * kappa + 0.5 * lambda_ * lambda_), base_->reach() / std::sqrt(2.0));
}

Vec AugmentedEmbedding::sample_point(std::mt19937_64& rng) const {
    return embed(base_->sample_point(rng));
}

Vec AugmentedEmbedding::lift_sphere_point(const Eigen::Vector3d& y) const {
    return embed(base_->lift_sphere_point(y));
}

Mat AugmentedEmbedding::projector_at(const Vec& p) const {
    const Vec x = base_point(p);
    const Mat e = base_->tangent_frame(x);
    Mat d(ambient_dim(), e.cols());
    for (int a = 0; a < e.cols(); ++a) d.col(a) = pushforward(x, e.col(a));
    return d * d.transpose();
}

Vec AugmentedEmbedding::sff_at(const Vec& p, const Vec& v, const Vec& w) const {
    const int m = base_->ambient_dim();
    const Vec x = base_point(p);
    const Vec bv = pullback_tangent(v);
    const Vec bw = pullback_tangent(w);
    const Vec aj = base_->sff_at(x, bv, bw);
    Vec out(ambient_dim());
    out.head(m) = aj;
    for (int k = 0; k < direction_count(); ++k) {
        const double a = std::sqrt(weights_[k]);
        const double s = lambda_ * directions_[k].dot(x);
        const double second = -lambda_ * a * directions_[k].dot(bv) * directions_[k].dot(bw);
        const double first = a * directions_[k].dot(aj);
        out[m + 2 * k] = second * std::cos(s) - first * std::sin(s);
        out[m + 2 * k + 1] = second * std::sin(s) + first * std::cos(s);
    }
    return out / std::sqrt(2.0);
}

// --------------------------------------------------------------- positivity

double positivity_ratio(const TargetManifold& n, const Vec& p, const Vec& v, const Vec& w) {
    const double den = v.squaredNorm() * w.squaredNorm();
    if (den == 0.0) return 0.0;
    return n.sff_at(p, v, v).dot(n.sff_at(p, w, w)) / den;
}

PositivitySample measure_positivity(const TargetManifold& n, int samples, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    PositivitySample out;
    out.min_ratio = std::numeric_limits<double>::infinity();
    for (int s = 0; s < samples; ++s) {
        const Vec p = n.sample_point(rng);
        const Vec v = n.random_tangent(p, rng);
        const Vec w = n.random_tangent(p, rng);
        const double r = positivity_ratio(n, p, v, w);
        out.max_abs_ratio = std::max(out.max_abs_ratio, std::abs(r));
        if (r < out.min_ratio) {
            out.min_ratio = r;
            out.argmin_point = p;
            out.argmin_v = v;
            out.argmin_w = w;
        }
    }
    out.samples = samples;
    return out;
}

std::shared_ptr<AugmentedEmbedding> augment(ManifoldPtr base, double lambda, AugmentFrame frame, int samples,
                                            std::uint64_t seed) {
    if (!(lambda >= 1.0)) throw ConfigError("augmentation requires lambda >= 1, got " + format_number(lambda));
    auto emb = std::make_shared<AugmentedEmbedding>(std::move(base), lambda, frame);
    const PositivitySample ps = measure_positivity(*emb, samples, seed);
    if (!(ps.min_ratio > 0.0))
        throw Error("lambda = " + format_number(lambda) + " does not dominate the base curvature: measured c = " +
                    format_number(ps.min_ratio) + " (deficit " + format_number(-ps.min_ratio) + ")");
    emb->set_positivity_constant(ps.min_ratio);
    return emb;
}

// ----------------------------------------------------------- curvature term

Mat curvature_term_matrix_at(const TargetManifold& n, const Vec& p, std::span<const Vec> grad_u) {
    Vec nu = Vec::Zero(n.ambient_dim());
    for (const Vec& g : grad_u) nu += n.sff_at(p, g, g);
    return n.shape_operator_at(p, nu);
}

Vec curvature_term(const TargetManifold& n, const Vec& p, std::span<const Vec> grad_u, const Vec& x) {
    n.require_on_manifold(p);
    for (const Vec& g : grad_u) n.require_tangent(p, g);
    n.require_tangent(p, x);
    return curvature_term_matrix_at(n, p, grad_u) * x;
}

// ------------------------------------------------------------------ factory

ManifoldPtr make_manifold(const std::string& key) {
    const auto plus = key.find('+');
    const std::string base_key = key.substr(0, plus);
    ManifoldPtr base;
    if (base_key == "sphere2")
        base = std::make_shared<Sphere2>();
    else if (base_key == "clifford")
        base = std::make_shared<CliffordTorus>();
    else
        throw ConfigError("unknown manifold '" + base_key + "'");
    if (plus == std::string::npos) return base;

    std::string rest = key.substr(plus + 1);
    if (rest.rfind("aug", 0) != 0) throw ConfigError("unknown manifold modifier '" + rest + "'");
    rest = rest.substr(3);
    double lambda = kDefaultAugmentLambda;
    AugmentFrame frame = AugmentFrame::coordinate;
    std::vector<std::string> parts;
    std::stringstream ss(rest);
    std::string tok;
    while (std::getline(ss, tok, ':'))
        if (!tok.empty()) parts.push_back(tok);
    for (const auto& part : parts) {
        if (part == "iso")
            frame = AugmentFrame::isotropic;
        else if (part == "coordinate")
            frame = AugmentFrame::coordinate;
        else {
            std::size_t used = 0;
            try {
                lambda = std::stod(part, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != part.size()) throw ConfigError("bad augmentation parameter '" + part + "' in '" + key + "'");
        }
    }
    return augment(base, lambda, frame);
}

}  // namespace bubblespectra
