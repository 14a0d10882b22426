#pragma once

#include "bubblespectra/mesh.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace bubblespectra {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class SolverPath { automatic, dense, iterative };

struct SolveOptions {
    SolverPath path = SolverPath::automatic;
    int dense_limit = 3000;     ///< automatic picks the dense solver up to this many dof
    double tolerance = 1e-10;   ///< iterative: residual relative to ‖B‖
    int max_iterations = 2000;
    double shift = -1.1;        ///< below the lower bound -1, so A - shift·B is SPD
    std::uint64_t seed = 0;
};

struct PairDiagnostics {
    double residual = 0.0;       ///< ‖Ax - λBx‖
    double normalization = 0.0;  ///< xᵀBx
    double w12 = 0.0;            ///< xᵀ(A + B)x = xᵀ(K + M0)x
    bool lower_bound_ok = true;  ///< λ ≥ -1 - 1e-8
    bool upper_bound_ok = true;  ///< w12 ≤ 1 + |λ| + 1e-8
};

struct Classification {
    double tau = 0.0;
    int index = 0;
    int nullity = 0;
    int index_tenth = 0, nullity_tenth = 0;  ///< at τ/10
    int index_ten = 0, nullity_ten = 0;      ///< at 10τ
    bool ambiguous = false;                  ///< some |λ| within 1e-3·τ of τ
    std::vector<int> ambiguous_pairs;
    /// False when every computed eigenvalue is ≤ τ, so the counts may be truncated.
    bool complete = true;
    bool stable() const { return index == index_tenth && index == index_ten && nullity == nullity_tenth &&
                                 nullity == nullity_ten; }
};

struct SpectrumReport {
    Vec eigenvalues;   ///< ascending
    Mat eigenvectors;  ///< dof x k, B-orthonormal, first nonzero entry positive
    std::vector<PairDiagnostics> pairs;
    std::string solver;  ///< "dense" or "shift-invert"
    int dof = 0;
    int iterations = 0;
    double b_norm = 0.0;  ///< ∞-norm of B
    double max_residual = 0.0;
    double max_orthonormality_error = 0.0;
    Classification classification;
};

/// Lowest k eigenpairs of A x = λ B x. Throws NotPositiveDefinite if B is not
/// SPD, ConvergenceFailure if the iterative path does not converge.
SpectrumReport solve(const SpMat& a, const SpMat& b, int k, const SolveOptions& options = {});

/// Every eigenvalue of the dense pencil, ascending.
Vec dense_eigenvalues(const SpMat& a, const SpMat& b);

/// max(1e-8, c_h·h).
double pde_threshold(double h, double c_h = 0.5);
constexpr double kAlgebraicThreshold = 1e-8;

Classification classify(const Vec& eigenvalues, double tau);
/// Classifies and stores the result in the report.
const Classification& classify(SpectrumReport& report, double tau);

struct AprioriReport {
    double worst_lower_margin = 0.0;  ///< min over pairs of λ + 1
    double worst_upper_margin = 0.0;  ///< min over pairs of (1 + |λ|)·xᵀBx - xᵀ(K+M0)x
    double identity_residual = 0.0;   ///< max |xᵀ(K+M0)x - (1+λ)xᵀBx|
    bool consistent = true;           ///< no violation beyond 1e-6
};

AprioriReport apriori_check(const SpectrumReport& report);
/// λ ≥ -1 - tol, xᵀ(K+M0)x ≤ (1+|λ|)(1 + tol) and |xᵀ(K+M0)x - (1+λ)xᵀBx| ≤ tol·(1+|λ|)·xᵀBx for every pair.
bool apriori_holds(const SpectrumReport& report, double tol = 1e-8);

struct InertiaReport {
    Classification first, second;
    bool agree = false;
};

/// Index and nullity of A against two inner products. Dense problems use the
/// full spectrum; larger ones the lowest k pairs, which must be complete.
InertiaReport inertia_invariance(const SpMat& a, const SpMat& b1, const SpMat& b2, double tau, int k = 40,
                                 const SolveOptions& options = {});

nlohmann::json to_json(const Classification& c);
nlohmann::json to_json(const SpectrumReport& r);
nlohmann::json to_json(const AprioriReport& r);
/// Columns k, lambda, residual, normalization, w12_norm, class.
void write_eigen_csv(const SpectrumReport& r, const std::string& path);

}  // namespace bubblespectra
