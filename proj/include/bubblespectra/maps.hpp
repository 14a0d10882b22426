#pragma once

#include "bubblespectra/manifold.hpp"
#include "bubblespectra/mesh.hpp"

#include <complex>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace bubblespectra {

using cplx = std::complex<double>;
using Mobius = Eigen::Matrix2cd;  ///< [[a, b], [c, d]] acting as z ↦ (az+b)/(cz+d)

/// Stereographic coordinate from the north pole: z = (y1 + i y2)/(1 - y3).
/// Returned in homogeneous form [Z : W] with |Z|² + |W|² bounded away from 0.
Eigen::Vector2cd sphere_to_homogeneous(const Eigen::Vector3d& y);
Eigen::Vector3d homogeneous_to_sphere(const Eigen::Vector2cd& zw);
Eigen::Vector3d inverse_stereographic(cplx z);

/// Domain chart of the plane (identified with S^2 minus the north pole).
class ConformalChart {
public:
    enum class Kind { mobius, dilation, neck };

    static ConformalChart mobius(cplx a, cplx b, cplx c, cplx d);
    static ConformalChart dilation(cplx p, double r);
    static ConformalChart neck(cplx p, double rho);
    static ConformalChart identity() { return mobius(1.0, 0.0, 0.0, 1.0); }

    Kind kind() const { return kind_; }
    cplx forward(cplx z) const;
    cplx inverse(cplx z) const;
    /// dm/dz at z (for the neck chart z = t + iθ).
    cplx derivative(cplx z) const;
    /// |∇m|² = 2|m'(z)|².
    double conformal_factor(cplx z) const { return 2.0 * std::norm(derivative(z)); }
    /// Matrix of the chart for mobius and dilation kinds.
    Mobius matrix() const;
    Eigen::Vector3d act_on_sphere(const Eigen::Vector3d& y) const;
    std::string describe() const;

    cplx center() const { return p_; }
    double scale() const { return r_; }

private:
    Kind kind_ = Kind::mobius;
    Mobius m_ = Mobius::Identity();
    cplx p_ = 0.0;
    double r_ = 1.0;
};

/// u = R ∘ A with R = P/Q a rational map of the Riemann sphere and A a Möbius
/// transformation, followed by the natural map S^2 -> N of the target.
/// Coefficients are in ascending powers of z.
class SphereMap {
public:
    SphereMap(std::vector<cplx> numerator, std::vector<cplx> denominator, Mobius pre = Mobius::Identity());

    int degree() const { return degree_; }
    bool is_constant() const { return constant_; }
    const std::vector<cplx>& numerator() const { return p_; }
    const std::vector<cplx>& denominator() const { return q_; }
    const Mobius& pre() const { return pre_; }

    Eigen::Vector3d operator()(const Eigen::Vector3d& y) const;
    /// Value at a finite stereographic coordinate together with the derivative
    /// of ζ ↦ u(ζ) in the real direction (∂_x u) and imaginary direction (∂_y u).
    Eigen::Vector3d at_coordinate(cplx zeta, Eigen::Vector3d* dx = nullptr, Eigen::Vector3d* dy = nullptr) const;

    SphereMap compose(const ConformalChart& chart) const;
    std::string describe() const;

private:
    Eigen::Vector2cd image_homogeneous(const Eigen::Vector2cd& zw) const;
    std::vector<cplx> p_, q_;
    Mobius pre_;
    int degree_ = 0;
    bool constant_ = false;
};

/// Vertex-sampled map into N together with where it came from.
struct MapField {
    std::shared_ptr<const SurfaceMesh> mesh;
    ManifoldPtr target;
    Mat values;  ///< m x V
    std::string provenance;
    std::optional<SphereMap> family;
    bool interpolated = false;

    int vertex_count() const { return static_cast<int>(values.cols()); }
    Vec value(int v) const { return values.col(v); }
    /// Throws PointOffManifold if some vertex value is off N by more than 1e-10.
    void validate() const;
};

MapField sample_map(const SphereMap& family, std::shared_ptr<const SurfaceMesh> mesh, ManifoldPtr target);
MapField rational_map(const std::vector<cplx>& numerator, const std::vector<cplx>& denominator,
                      std::shared_ptr<const SurfaceMesh> mesh, ManifoldPtr target);
MapField constant_map(const Vec& point, std::shared_ptr<const SurfaceMesh> mesh, ManifoldPtr target);
/// Smooth non-harmonic test map into the Clifford torus (or its augmentation):
/// u(y) = T(a·y3, b·y1 + y2) with T the torus parametrisation.
MapField torus_map(double a, double b, std::shared_ptr<const SurfaceMesh> mesh, ManifoldPtr target);
MapField map_from_function(const std::function<Vec(const Eigen::Vector3d&)>& f, std::shared_ptr<const SurfaceMesh> mesh,
                           ManifoldPtr target, std::string provenance);

/// u ∘ m. Analytic when u carries a SphereMap family, otherwise P1
/// interpolation at the moved vertices followed by projection to N
/// (flagged through `interpolated`).
MapField compose(const MapField& u, const ConformalChart& chart);

/// "rational:[c0,c1,...]/[d0,...]", "constant:x,y,z", "torus:a,b",
/// "compose(<spec>, mobius:a,b,c,d)", "compose(<spec>, dilation:p,r)".
/// Complex numbers are written as 1.5, 2i, or 1-0.5i.
MapField parse_map_spec(const std::string& spec, std::shared_ptr<const SurfaceMesh> mesh, ManifoldPtr target);
ConformalChart parse_chart_spec(const std::string& spec);
cplx parse_complex(const std::string& text);

/// Vertex values in the coordinates of the base embedding (the values
/// themselves unless the target is augmented).
Mat intrinsic_values(const MapField& u);

/// P1 energy of the map, measured through the base embedding so that it does
/// not depend on the augmentation.
double dirichlet_energy(const MapField& u);
/// Per-triangle energy density ½|∇u|² times area.
Eigen::VectorXd energy_per_triangle(const MapField& u);
/// L² norm of the tangential part of the weak Laplacian, lumped mass.
double harmonic_residual(const MapField& u);

/// Map sampled on a cylinder grid with its t and θ derivatives.
struct CylinderField {
    const CylinderGrid* grid = nullptr;
    std::vector<Eigen::MatrixXd> value, d_t, d_theta;  ///< one matrix per ambient component
    bool analytic_derivatives = false;

    int components() const { return static_cast<int>(value.size()); }
    /// |∂_t u|², |∂_θ u|² and ⟨∂_t u, ∂_θ u⟩ as grid fields.
    Eigen::MatrixXd dt_sq() const;
    Eigen::MatrixXd dtheta_sq() const;
    Eigen::MatrixXd cross() const;
    Eigen::MatrixXd grad_sq() const { return dt_sq() + dtheta_sq(); }
};

/// v(t,θ) = u(n(t + iθ)) with derivatives from the analytic family.
CylinderField pull_to_neck(const SphereMap& u, const ConformalChart& neck, const CylinderGrid& grid);
/// Samples f and differentiates it on the grid (spectral in θ, second order in t).
CylinderField cylinder_field(const CylinderGrid& grid, const std::function<Eigen::Vector3d(double, double)>& f);

struct HopfReport {
    Eigen::MatrixXcd phi;               ///< ⟨∂_z u, ∂_z u⟩ with ∂_z = ½(∂_t - i∂_θ)
    Eigen::VectorXd slice_dt, slice_dtheta, slice_balance;
    double max_phi_ratio = 0.0;         ///< max |φ| / max |∇u|²
    double max_relative_imbalance = 0.0;
};

HopfReport hopf_differential(const CylinderField& v);

}  // namespace bubblespectra
