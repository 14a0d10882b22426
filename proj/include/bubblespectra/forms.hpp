#pragma once

#include "bubblespectra/maps.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace bubblespectra {

/// Orthonormal frame of T_{u(v)}N at every vertex; dof (v, a) has index n·v + a.
struct TangentFrameBasis {
    int n = 0;  ///< intrinsic dimension
    int m = 0;  ///< ambient dimension
    std::vector<Mat> frames;  ///< m x n per vertex

    int vertex_count() const { return static_cast<int>(frames.size()); }
    int dof() const { return n * vertex_count(); }
    /// m x V ambient vectors of the section with the given coefficients.
    Mat to_ambient(const Vec& coeffs) const;
    /// Coefficients of the tangential part of an ambient m x V field.
    Vec from_ambient(const Mat& x) const;
};

TangentFrameBasis build_frames(const MapField& u);

/// Vector field along u, stored in frame coordinates.
struct Section {
    std::shared_ptr<const TangentFrameBasis> basis;
    Vec coeffs;

    Mat ambient() const { return basis->to_ambient(coeffs); }
};

enum class CurvatureRule {
    nodal,       ///< C_v = -E_vᵀ S((K u)_v) E_v, the exact Hessian term of the discrete energy
    quadrature,  ///< vertex quadrature of <A(∇u,∇u), A(X,Y)> with P1 gradients
};

struct AssembledForms {
    SpMat K;   ///< ∫<∇X,∇Y>
    SpMat M0;  ///< ∫<X,Y>
    SpMat C;   ///< ∫<A²_u(X),Y>
    std::shared_ptr<const TangentFrameBasis> basis;
    CurvatureRule rule = CurvatureRule::nodal;

    int dof() const { return static_cast<int>(K.rows()); }
    SpMat index_form() const { return K - C; }
    SpMat scalar_product() const { return M0 + C; }
    Section section(const Vec& coeffs) const { return {basis, coeffs}; }
};

AssembledForms assemble(const MapField& u, CurvatureRule rule = CurvatureRule::nodal);

enum class FormKind { index, scalar, curvature, stiffness, mass };
SpMat form_matrix(const AssembledForms& f, FormKind which);
double cross_form(const AssembledForms& f, const Vec& x, const Vec& y, FormKind which);
/// xᵀ(K + M0)x.
double w12_norm_sq(const AssembledForms& f, const Vec& x);

/// Energy functional that is a sum of per-triangle terms of the vertex values.
class LocalFunctional {
public:
    virtual ~LocalFunctional() = default;
    /// Triangle term for corner values u (m x 3, columns in triangle order).
    virtual double element_value(const SurfaceMesh& mesh, int tri, const Mat& u) const = 0;
    /// element_value(u + d) - element_value(u), evaluated without cancellation where possible.
    virtual double element_difference(const SurfaceMesh& mesh, int tri, const Mat& u, const Mat& d) const;
    double value(const SurfaceMesh& mesh, const Mat& values) const;
};

/// ½∫|∇u|² with P1 elements in the ambient coordinates of the target.
class DirichletFunctional : public LocalFunctional {
public:
    double element_value(const SurfaceMesh& mesh, int tri, const Mat& u) const override;
    double element_difference(const SurfaceMesh& mesh, int tri, const Mat& u, const Mat& d) const override;
};

/// Ambient two-form ϖ = Σ_{a<b} ω_ab(x) dx^a ∧ dx^b, given through the
/// antisymmetric coefficient matrix ω(x).
using TwoForm = std::function<Mat(const Vec&)>;

/// H·x¹ dx² ∧ dx³ (coordinates counted from 1).
TwoForm volume_calibration_form(double H, int ambient_dim);

/// ½∫|∇u|² + ∫u*ϖ; the pullback is integrated with the edge-midpoint rule on
/// each oriented triangle.
class TwoFormFunctional : public DirichletFunctional {
public:
    explicit TwoFormFunctional(TwoForm omega) : omega_(std::move(omega)) {}
    double element_value(const SurfaceMesh& mesh, int tri, const Mat& u) const override;
    double element_difference(const SurfaceMesh& mesh, int tri, const Mat& u, const Mat& d) const override;
    double pullback_integral(const Mat& u) const;

private:
    TwoForm omega_;
};

struct FdResult {
    double value = 0.0;     ///< Richardson-extrapolated second derivative
    double coarse = 0.0;    ///< step h
    double fine = 0.0;      ///< step h/2
};

/// d²/dt² F(π(u + tX)) at t = 0 by central differences with the nearest-point
/// retraction π, steps h and h/2 combined by Richardson extrapolation.
/// X is an ambient m x V field (tangent at every vertex).
FdResult fd_second_variation(const LocalFunctional& functional, const MapField& u, const Mat& x, double h = 1e-3);

/// Index form of a local functional by polarizing fd_second_variation over
/// pairs of basis sections that share a triangle. Dense; at most 2000 vertices.
struct GeneralForms {
    AssembledForms dirichlet;  ///< K, M0, C of the Dirichlet part
    Mat index;                 ///< dense second variation of the full functional
    Mat deviation() const { return index - Mat(dirichlet.index_form()); }
};

GeneralForms assemble_general(const MapField& u, const LocalFunctional& functional, double h = 1e-3);

/// Smallest C with |xᵀ D x| ≤ C ∫(|∇u||X||∇X| + |∇u|²|X|²) over the samples.
struct DeviationBound {
    double max_ratio = 0.0;
    double max_abs_deviation = 0.0;  ///< max |xᵀ D x| / ‖x‖²_{W^{1,2}}
    int samples = 0;
};
DeviationBound deviation_bound(const GeneralForms& g, const MapField& u, int samples, std::uint64_t seed);

/// Random section with Gaussian coefficients, deterministic for a seed.
Vec random_section(const TangentFrameBasis& basis, std::mt19937_64& rng);

/// "i j value" per line, 0-based, one header line "# rows cols nnz".
void write_triplets(const SpMat& a, const std::string& path);

}  // namespace bubblespectra
