#pragma once

#include "bubblespectra/maps.hpp"
#include "bubblespectra/mesh.hpp"

#include <string>
#include <vector>

namespace bubblespectra {

/// Solves -Δφ = f on [-L, L] x T¹ with φ(±L, ·) prescribed. Exact in θ (per
/// Fourier mode), second-order central differences in t.
Eigen::MatrixXd poisson_solve(const CylinderGrid& grid, const Eigen::MatrixXd& f, const Eigen::VectorXd& left,
                              const Eigen::VectorXd& right);

/// max |-Δφ - f| over interior rows, with the solver's discrete Laplacian.
double poisson_residual(const CylinderGrid& grid, const Eigen::MatrixXd& phi, const Eigen::MatrixXd& f);

/// Least-squares slopes of log g(t) on the two halves of the middle third of
/// the neck. exponent = min(|slope_left|, |slope_right|); rows with g = 0 are
/// skipped and `trivial` is set if nothing is left to fit.
struct DecayFit {
    double slope_left = 0.0;
    double slope_right = 0.0;
    double exponent = 0.0;
    bool trivial = false;
};

DecayFit fit_decay(const CylinderGrid& grid, const Eigen::VectorXd& g);

struct TangentialReport {
    std::vector<double> t0;
    std::vector<double> slice_energy;  ///< e(t0) = ∫_{t0} |∂_θ φ|²
    std::vector<double> lhs;           ///< e(t0) + ∫_{[t0-1, t0+1]} |∇∂_θ φ|²
    std::vector<double> energy_term;   ///< e^{-(L-|t0|)/9} ∫|∇φ|²
    std::vector<double> f_term;        ///< ∫ min{e^{(1-|t-t0|)/9}, 1} |f|²
    std::vector<double> sup_grad_sq;   ///< max over the slice of |∇φ|²
    double total_energy = 0.0;         ///< ∫|∇φ|²
    double admissible_constant = 0.0;  ///< max lhs / (energy_term + f_term)
    DecayFit decay;                    ///< of e(t0)

    double rhs(std::size_t k) const { return energy_term[k] + f_term[k]; }
};

/// Sweeps every grid slice with |t0| ≤ L - 1.
TangentialReport tangential_estimate_check(const CylinderGrid& grid, const Eigen::MatrixXd& phi,
                                           const Eigen::MatrixXd& f);

struct LinftyReport {
    std::vector<double> t0;
    std::vector<double> sup_abs_phi;   ///< max over the slice of |φ|
    std::vector<double> sqrt_i;        ///< I(t0)^{1/2}
    double boundary_mean = 0.0;        ///< max of |⨍φ| over the two boundary circles
    double f_weight = 0.0;             ///< ∫(L - |t|)|f|
    double admissible_constant = 0.0;  ///< smallest c with sup|φ| ≤ boundary_mean + f_weight + c·I^{1/2}
    bool holds_without_constant = true;
};

/// Sweeps every slice with |t0| < L - 1.
LinftyReport linfty_check(const CylinderGrid& grid, const Eigen::MatrixXd& phi, const Eigen::MatrixXd& f);

struct NoNeckReport {
    std::vector<double> t;
    std::vector<double> sup_grad_sq;    ///< max over the slice of |∇v|²
    std::vector<double> slice_tangential;  ///< ∫_{t}|∂_θ v|²
    std::vector<double> bound_rhs;      ///< e^{(|t|-L)/10} ∫|∇v|²
    double total_energy = 0.0;
    double max_window_energy = 0.0;     ///< max over t of ∫_{[t-1,t+1]}|∇v|² (bounds every unit ball)
    double epsilon0 = 0.0;
    bool applicable = true;             ///< max_window_energy ≤ epsilon0
    double admissible_constant = 0.0;   ///< max sup_grad_sq / bound_rhs over |t| < L - 2
    double mid_oscillation = 0.0;       ///< diameter of the image of the middle third
    DecayFit decay;                     ///< of sup_grad_sq
};

NoNeckReport no_neck_decay_check(const CylinderField& v, double epsilon0 = 1.0);

struct SliceBalanceReport {
    Eigen::VectorXd balance;  ///< ∫_t|∂_t v|² - ∫_t|∂_θ v|²
    double max_relative_imbalance = 0.0;
    bool pass = false;
};

/// Slices carrying less than 1e-12 of the largest slice energy are skipped.
SliceBalanceReport slice_balance_check(const CylinderField& v, double tolerance = 0.01);

/// Columns t0, e, sup_grad_sq, bound_rhs.
void write_profile_csv(const TangentialReport& r, const std::string& path);
void write_profile_csv(const NoNeckReport& r, const std::string& path);

}  // namespace bubblespectra
