#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace bubblespectra {

using SpMat = Eigen::SparseMatrix<double>;

/// Radial refinement about a point of S^2. In stereographic coordinates
/// centred at `center` a point at radius ρ moves to ρ·(g + (1-g)ρ²/(ρ²+s²)),
/// so the mesh near the centre is finer by roughly 1/g and the far side is
/// left almost untouched.
struct MeshGrading {
    Eigen::Vector3d center{0.0, 0.0, -1.0};
    double factor = 1.0;     ///< g in (0, 1]
    double transition = 0.5; ///< s, stereographic radius of the transition
    bool antipodal = false;  ///< refine about -center as well
};

/// Triangulated unit sphere with P1 geometry per triangle.
struct SurfaceMesh {
    std::vector<Eigen::Vector3d> vertices;
    std::vector<std::array<int, 3>> triangles;
    int level = 0;
    std::optional<MeshGrading> grading;

    // filled by finalize()
    std::vector<double> areas;
    std::vector<std::array<Eigen::Vector3d, 3>> grads;  ///< ∇φ of the three corners
    std::vector<Eigen::Vector3d> normals;
    double h = 0.0;

    int vertex_count() const { return static_cast<int>(vertices.size()); }
    int triangle_count() const { return static_cast<int>(triangles.size()); }
    int edge_count() const;
    int euler_characteristic() const { return vertex_count() - edge_count() + triangle_count(); }
    double total_area() const;
    /// Longest edge among triangles touching the ball of (chordal) radius `radius` about x.
    double local_mesh_size(const Eigen::Vector3d& x, double radius) const;

    /// Computes areas, gradients, normals and h; orients triangles outward.
    void finalize();
};

SurfaceMesh icosphere(int level);
SurfaceMesh icosphere(int level, const MeshGrading& grading);

/// Loads the mesh from `cache_dir` when present, otherwise builds and stores it.
SurfaceMesh cached_icosphere(int level, const std::optional<MeshGrading>& grading, const std::string& cache_dir);

void save_mesh_json(const SurfaceMesh& mesh, const std::string& path);
SurfaceMesh load_mesh_json(const std::string& path);

double integrate(const SurfaceMesh& mesh, const Eigen::VectorXd& f);
/// Per-triangle gradient of the P1 interpolant (tangent to the triangle plane).
std::vector<Eigen::Vector3d> gradient(const SurfaceMesh& mesh, const Eigen::VectorXd& f);

SpMat stiffness_matrix(const SurfaceMesh& mesh);
SpMat mass_matrix(const SurfaceMesh& mesh);
Eigen::VectorXd lumped_mass(const SurfaceMesh& mesh);

/// Flat cylinder [-L, L] x T^1 sampled on n_t uniform axial nodes (endpoints
/// included) and n_θ equispaced angles. Fields are n_t x n_θ matrices.
class CylinderGrid {
public:
    CylinderGrid(double half_length, int n_t, int n_theta);

    double half_length() const { return L_; }
    int n_t() const { return n_t_; }
    int n_theta() const { return n_theta_; }
    double dt() const { return dt_; }
    double dtheta() const { return 2.0 * M_PI / n_theta_; }
    double t(int i) const { return -L_ + i * dt_; }
    double theta(int j) const { return j * dtheta(); }
    int nearest_index(double t0) const;

    Eigen::MatrixXd sample(const std::function<double(double, double)>& f) const;

    double integrate(const Eigen::MatrixXd& f) const;
    /// Trapezoid integral over the rows i0..i1.
    double integrate_range(const Eigen::MatrixXd& f, int i0, int i1) const;
    double slice_integral(const Eigen::MatrixXd& f, int i) const;

    Eigen::MatrixXd d_theta(const Eigen::MatrixXd& f) const;
    Eigen::MatrixXd d_theta2(const Eigen::MatrixXd& f) const;
    Eigen::MatrixXd d_t(const Eigen::MatrixXd& f) const;
    Eigen::MatrixXd d_t2(const Eigen::MatrixXd& f) const;

    /// Row i of the field as complex Fourier coefficients (unnormalised FFT).
    Eigen::VectorXcd fourier_row(const Eigen::MatrixXd& f, int i) const;
    Eigen::VectorXd inverse_fourier_row(const Eigen::VectorXcd& c) const;
    /// Signed integer wavenumber of FFT bin j.
    int wavenumber(int j) const { return j <= n_theta_ / 2 ? j : j - n_theta_; }

private:
    double L_;
    int n_t_, n_theta_;
    double dt_;
};

CylinderGrid cylinder(double half_length, int n_t, int n_theta);

}  // namespace bubblespectra
