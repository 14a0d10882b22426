#pragma once

#include <Eigen/Dense>

#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace bubblespectra {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// A closed submanifold N of R^m, described through its nearest-point
/// projection and the extrinsic quantities built on top of it.
///
/// The `*_at` members assume `p` already lies on N and skip validation; they
/// are what the assembly loops call. The unsuffixed members validate their
/// inputs and throw PointOffManifold / NonTangentInput.
///
/// Sign convention: A_p(v,v) is the (normal) acceleration of a curve in N
/// through p with velocity v, so harmonic maps satisfy Δu = A(u)(∇u,∇u).
/// Every quantity used downstream is quadratic in A, so the opposite
/// convention gives identical forms.
class TargetManifold {
public:
    static constexpr double kTolerance = 1e-10;

    virtual ~TargetManifold() = default;

    virtual std::string key() const = 0;
    virtual int ambient_dim() const = 0;
    virtual int intrinsic_dim() const = 0;
    virtual Vec closest_point(const Vec& x) const = 0;
    /// Radius of a tubular neighbourhood on which closest_point is smooth.
    virtual double reach() const = 0;
    virtual Vec sample_point(std::mt19937_64& rng) const = 0;

    /// Image of a point of the round S^2 under the natural map S^2 -> N used
    /// by the sphere-valued map families. Throws for targets without one.
    virtual Vec lift_sphere_point(const Eigen::Vector3d& y) const;

    virtual Mat projector_at(const Vec& p) const = 0;
    virtual Vec sff_at(const Vec& p, const Vec& v, const Vec& w) const;
    /// Matrix S with v^T S w = <nu, A_p(v,w)> for tangent v, w; S = P S P.
    virtual Mat shape_operator_at(const Vec& p, const Vec& nu) const;

    Mat tangent_projection(const Vec& p) const;
    Vec second_fundamental_form(const Vec& p, const Vec& v, const Vec& w) const;
    Mat shape_operator(const Vec& p, const Vec& nu) const;

    /// Orthonormal basis of T_pN (m x n). Canonical basis vectors are
    /// projected, the n longest are kept (ties broken by index) and
    /// Gram-Schmidt is applied in that order.
    Mat tangent_frame(const Vec& p) const;

    double distance_to_manifold(const Vec& x) const;
    void require_on_manifold(const Vec& p) const;
    void require_tangent(const Vec& p, const Vec& v) const;
    Vec random_tangent(const Vec& p, std::mt19937_64& rng) const;

protected:
    /// Geodesic-acceleration fallback: A(v,v) = d²/dt² closest_point(p + t v)
    /// by central differences (step 1e-4), polarized for A(v,w).
    Vec sff_finite_difference(const Vec& p, const Vec& v, const Vec& w) const;
};

using ManifoldPtr = std::shared_ptr<const TargetManifold>;

/// Round unit sphere S^2 in R^3; A_p(v,w) = -<v,w> p.
class Sphere2 final : public TargetManifold {
public:
    std::string key() const override { return "sphere2"; }
    int ambient_dim() const override { return 3; }
    int intrinsic_dim() const override { return 2; }
    Vec closest_point(const Vec& x) const override;
    double reach() const override { return 1.0; }
    Vec sample_point(std::mt19937_64& rng) const override;
    Vec lift_sphere_point(const Eigen::Vector3d& y) const override;
    Mat projector_at(const Vec& p) const override;
    Vec sff_at(const Vec& p, const Vec& v, const Vec& w) const override;
    Mat shape_operator_at(const Vec& p, const Vec& nu) const override;
};

/// Clifford torus S^1(r) x S^1(r) in R^4 with r = 1/sqrt(2).
class CliffordTorus final : public TargetManifold {
public:
    static constexpr double kRadius = 0.70710678118654752440;

    std::string key() const override { return "clifford"; }
    int ambient_dim() const override { return 4; }
    int intrinsic_dim() const override { return 2; }
    Vec closest_point(const Vec& x) const override;
    double reach() const override { return kRadius; }
    Vec sample_point(std::mt19937_64& rng) const override;
    Mat projector_at(const Vec& p) const override;
    Vec sff_at(const Vec& p, const Vec& v, const Vec& w) const override;
    Mat shape_operator_at(const Vec& p, const Vec& nu) const override;

    static Vec point(double alpha, double beta);
    /// Unit tangents along the first and second circle at p.
    static std::pair<Vec, Vec> circle_tangents(const Vec& p);
};

enum class AugmentFrame {
    coordinate,  ///< one circle per ambient coordinate
    isotropic,   ///< circles along e_i and (e_i ± e_j)/sqrt(2), weighted
};

/// i = (1/sqrt2)(j, G∘j) with G a flat product of circles of radius 1/λ,
/// laid out as (base | cos,sin interleaved per direction).
class AugmentedEmbedding final : public TargetManifold {
public:
    AugmentedEmbedding(ManifoldPtr base, double lambda, AugmentFrame frame);

    std::string key() const override;
    int ambient_dim() const override;
    int intrinsic_dim() const override { return base_->intrinsic_dim(); }
    Vec closest_point(const Vec& y) const override;
    double reach() const override;
    Vec sample_point(std::mt19937_64& rng) const override;
    Vec lift_sphere_point(const Eigen::Vector3d& y) const override;
    Mat projector_at(const Vec& p) const override;
    Vec sff_at(const Vec& p, const Vec& v, const Vec& w) const override;

    const TargetManifold& base() const { return *base_; }
    const ManifoldPtr& base_ptr() const { return base_; }
    double lambda() const { return lambda_; }
    AugmentFrame frame() const { return frame_; }
    int direction_count() const { return static_cast<int>(weights_.size()); }

    Vec embed(const Vec& x) const;
    Vec base_point(const Vec& y) const;
    /// di_x(v) for v in T_xN (base coordinates).
    Vec pushforward(const Vec& x, const Vec& v) const;
    /// Inverse of pushforward on tangent vectors of the image.
    Vec pullback_tangent(const Vec& v_image) const;

    /// Positivity constant measured by sampling when the embedding was made.
    double positivity_constant() const { return positivity_; }
    void set_positivity_constant(double c) { positivity_ = c; }

private:
    ManifoldPtr base_;
    double lambda_;
    AugmentFrame frame_;
    std::vector<Vec> directions_;
    std::vector<double> weights_;
    double positivity_ = 0.0;
};

struct PositivitySample {
    double min_ratio = 0.0;   ///< min <A(v,v),A(w,w)> / (|v|²|w|²)
    double max_abs_ratio = 0.0;
    Vec argmin_point, argmin_v, argmin_w;
    int samples = 0;
};

/// <A_p(v,v), A_p(w,w)> / (|v|²|w|²) for tangent v, w at p.
double positivity_ratio(const TargetManifold& n, const Vec& p, const Vec& v, const Vec& w);

/// Samples random points and tangent pairs; deterministic for a given seed.
PositivitySample measure_positivity(const TargetManifold& n, int samples, std::uint64_t seed);

/// Builds the augmented embedding and measures its positivity constant on
/// `samples` random tangent pairs. Throws if λ < 1 or the measured constant
/// is not positive.
std::shared_ptr<AugmentedEmbedding> augment(ManifoldPtr base, double lambda,
                                            AugmentFrame frame = AugmentFrame::coordinate,
                                            int samples = 10000, std::uint64_t seed = 0);

/// A²(X) with <A²(X),Y> = Σ_i <A(∂_i u, ∂_i u), A(X,Y)>, all vectors tangent at p.
Vec curvature_term(const TargetManifold& n, const Vec& p, std::span<const Vec> grad_u, const Vec& x);

/// Matrix of Y ↦ A²(Y) at p (tangent block, m x m).
Mat curvature_term_matrix_at(const TargetManifold& n, const Vec& p, std::span<const Vec> grad_u);

/// "sphere2", "clifford", "<base>+aug:<λ>" or "<base>+aug:<λ>:iso".
ManifoldPtr make_manifold(const std::string& key);

constexpr double kDefaultAugmentLambda = 4.0;

}  // namespace bubblespectra
