#include "bubblespectra/neck.hpp"

#include "bubblespectra/errors.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <limits>

namespace bubblespectra {

namespace {

void require_shape(const CylinderGrid& g, const Eigen::MatrixXd& m, const char* what) {
    if (m.rows() != g.n_t() || m.cols() != g.n_theta())
        throw DimensionMismatch(std::string(what) + " does not match the cylinder grid");
}

/// Thomas algorithm for -x_{i-1} + d x_i - x_{i+1} = b_i with x_0, x_{n-1} given.
void solve_mode(double d, std::vector<std::complex<double>>& x, const std::vector<std::complex<double>>& b) {
    const int n = static_cast<int>(x.size());
    const int m = n - 2;
    if (m <= 0) return;
    std::vector<double> c(m);
    std::vector<std::complex<double>> r(m);
    for (int k = 0; k < m; ++k) r[k] = b[k + 1];
    r[0] += x[0];
    r[m - 1] += x[n - 1];
    // forward sweep with sub- and super-diagonal -1
    c[0] = -1.0 / d;
    r[0] /= d;
    for (int k = 1; k < m; ++k) {
        const double denom = d + c[k - 1];
        c[k] = -1.0 / denom;
        r[k] = (r[k] + r[k - 1]) / denom;
    }
    x[m] = r[m - 1];
    for (int k = m - 2; k >= 0; --k) x[k + 1] = r[k] - c[k] * x[k + 2];
}

double slope(const std::vector<double>& t, const std::vector<double>& y) {
    const double n = static_cast<double>(t.size());
    double st = 0, sy = 0, stt = 0, sty = 0;
    for (std::size_t k = 0; k < t.size(); ++k) {
        st += t[k];
        sy += y[k];
        stt += t[k] * t[k];
        sty += t[k] * y[k];
    }
    return (n * sty - st * sy) / (n * stt - st * st);
}

Eigen::VectorXd window_integrals(const CylinderGrid& g, const Eigen::MatrixXd& density) {
    Eigen::VectorXd w(g.n_t());
    for (int i = 0; i < g.n_t(); ++i)
        w[i] = g.integrate_range(density, g.nearest_index(g.t(i) - 1.0), g.nearest_index(g.t(i) + 1.0));
    return w;
}

Eigen::VectorXd slice_integrals(const CylinderGrid& g, const Eigen::MatrixXd& density) {
    Eigen::VectorXd s(g.n_t());
    for (int i = 0; i < g.n_t(); ++i) s[i] = g.slice_integral(density, i);
    return s;
}

DecayFit fit_with_floor(const CylinderGrid& g, const Eigen::VectorXd& values, double floor) {
    const double L = g.half_length();
    std::vector<double> tl, yl, tr, yr;
    for (int i = 0; i < g.n_t(); ++i) {
        const double t = g.t(i);
        if (std::abs(t) > L / 3.0 + 1e-12 || !(values[i] > floor)) continue;
        if (t <= 1e-12) {
            tl.push_back(t);
            yl.push_back(std::log(values[i]));
        }
        if (t >= -1e-12) {
            tr.push_back(t);
            yr.push_back(std::log(values[i]));
        }
    }
    DecayFit d;
    d.exponent = std::numeric_limits<double>::infinity();
    bool any = false;
    if (tl.size() >= 2) {
        d.slope_left = slope(tl, yl);
        d.exponent = std::min(d.exponent, std::abs(d.slope_left));
        any = true;
    }
    if (tr.size() >= 2) {
        d.slope_right = slope(tr, yr);
        d.exponent = std::min(d.exponent, std::abs(d.slope_right));
        any = true;
    }
    d.trivial = !any;
    return d;
}

void write_rows(const std::string& path, const std::vector<double>& t, const std::vector<double>& e,
                const std::vector<double>& sup, const std::vector<double>& bound) {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot write " + path);
    f.precision(17);
    f << "t0,e,sup_grad_sq,bound_rhs\n";
    for (std::size_t k = 0; k < t.size(); ++k) f << t[k] << ',' << e[k] << ',' << sup[k] << ',' << bound[k] << '\n';
}

}  // namespace

Eigen::MatrixXd poisson_solve(const CylinderGrid& grid, const Eigen::MatrixXd& f, const Eigen::VectorXd& left,
                              const Eigen::VectorXd& right) {
    require_shape(grid, f, "right-hand side");
    const int nt = grid.n_t(), nth = grid.n_theta();
    if (left.size() != nth || right.size() != nth) throw DimensionMismatch("boundary data must have n_theta entries");

    Eigen::MatrixXd bl(nt, nth);
    bl.setZero();
    bl.row(0) = left.transpose();
    bl.row(nt - 1) = right.transpose();
    std::vector<Eigen::VectorXcd> fh(nt);
    for (int i = 0; i < nt; ++i) fh[i] = grid.fourier_row(f, i);
    const Eigen::VectorXcd lh = grid.fourier_row(bl, 0);
    const Eigen::VectorXcd rh = grid.fourier_row(bl, nt - 1);

    const double dt2 = grid.dt() * grid.dt();
    Eigen::MatrixXcd coeff(nt, nth);
    std::vector<std::complex<double>> x(nt), b(nt);
    for (int j = 0; j < nth; ++j) {
        const double k = grid.wavenumber(j);
        x.assign(nt, 0.0);
        x[0] = lh[j];
        x[nt - 1] = rh[j];
        for (int i = 0; i < nt; ++i) b[i] = dt2 * fh[i][j];
        solve_mode(2.0 + k * k * dt2, x, b);
        for (int i = 0; i < nt; ++i) coeff(i, j) = x[i];
    }
    Eigen::MatrixXd phi(nt, nth);
    for (int i = 0; i < nt; ++i) phi.row(i) = grid.inverse_fourier_row(coeff.row(i).transpose()).transpose();
    return phi;
}

double poisson_residual(const CylinderGrid& grid, const Eigen::MatrixXd& phi, const Eigen::MatrixXd& f) {
    require_shape(grid, phi, "solution");
    require_shape(grid, f, "right-hand side");
    const Eigen::MatrixXd lap = grid.d_t2(phi) + grid.d_theta2(phi);
    double worst = 0.0;
    for (int i = 1; i < grid.n_t() - 1; ++i) worst = std::max(worst, (-lap.row(i) - f.row(i)).cwiseAbs().maxCoeff());
    return worst;
}

DecayFit fit_decay(const CylinderGrid& grid, const Eigen::VectorXd& g) {
    if (g.size() != grid.n_t()) throw DimensionMismatch("profile must have one value per slice");
    return fit_with_floor(grid, g, 0.0);
}

TangentialReport tangential_estimate_check(const CylinderGrid& grid, const Eigen::MatrixXd& phi,
                                           const Eigen::MatrixXd& f) {
    require_shape(grid, phi, "solution");
    require_shape(grid, f, "right-hand side");
    const double L = grid.half_length();
    const Eigen::MatrixXd pth = grid.d_theta(phi);
    const Eigen::MatrixXd pt = grid.d_t(phi);
    const Eigen::MatrixXd grad_sq = pt.cwiseProduct(pt) + pth.cwiseProduct(pth);
    const Eigen::MatrixXd a = grid.d_t(pth), b = grid.d_theta(pth);
    const Eigen::MatrixXd hess_sq = a.cwiseProduct(a) + b.cwiseProduct(b);
    const Eigen::MatrixXd f_sq = f.cwiseProduct(f);
    const Eigen::VectorXd f_slices = slice_integrals(grid, f_sq);
    const Eigen::VectorXd e_all = slice_integrals(grid, pth.cwiseProduct(pth));

    TangentialReport r;
    r.total_energy = grid.integrate(grad_sq);
    Eigen::VectorXd e_profile = Eigen::VectorXd::Zero(grid.n_t());
    for (int i = 0; i < grid.n_t(); ++i) {
        const double t0 = grid.t(i);
        if (std::abs(t0) > L - 1.0 + 1e-12) continue;
        double ft = 0.0;
        for (int s = 0; s < grid.n_t(); ++s) {
            const double w = std::min(std::exp((1.0 - std::abs(grid.t(s) - t0)) / 9.0), 1.0);
            const double tw = (s == 0 || s == grid.n_t() - 1) ? 0.5 : 1.0;
            ft += tw * w * f_slices[s];
        }
        ft *= grid.dt();
        const double lhs = e_all[i] + grid.integrate_range(hess_sq, grid.nearest_index(t0 - 1.0),
                                                           grid.nearest_index(t0 + 1.0));
        r.t0.push_back(t0);
        r.slice_energy.push_back(e_all[i]);
        r.lhs.push_back(lhs);
        r.energy_term.push_back(std::exp(-(L - std::abs(t0)) / 9.0) * r.total_energy);
        r.f_term.push_back(ft);
        r.sup_grad_sq.push_back(grad_sq.row(i).maxCoeff());
        e_profile[i] = e_all[i];
        const double rhs = r.rhs(r.t0.size() - 1);
        if (rhs > 0.0)
            r.admissible_constant = std::max(r.admissible_constant, lhs / rhs);
        else if (lhs > 0.0)
            r.admissible_constant = std::numeric_limits<double>::infinity();
    }
    r.decay = fit_with_floor(grid, e_profile, 1e-14 * std::max(r.total_energy, 1e-300));
    return r;
}

LinftyReport linfty_check(const CylinderGrid& grid, const Eigen::MatrixXd& phi, const Eigen::MatrixXd& f) {
    const double L = grid.half_length();
    const TangentialReport tan = tangential_estimate_check(grid, phi, f);
    LinftyReport r;
    const double m0 = phi.row(0).mean(), m1 = phi.row(grid.n_t() - 1).mean();
    r.boundary_mean = std::max(std::abs(m0), std::abs(m1));
    const Eigen::MatrixXd weighted = grid.sample([L](double t, double) { return L - std::abs(t); })
                                         .cwiseProduct(f.cwiseAbs());
    r.f_weight = grid.integrate(weighted);
    const double base = r.boundary_mean + r.f_weight;
    for (std::size_t k = 0; k < tan.t0.size(); ++k) {
        const double t0 = tan.t0[k];
        if (std::abs(t0) >= L - 1.0 - 1e-12) continue;
        const int i = grid.nearest_index(t0);
        const double sup = phi.row(i).cwiseAbs().maxCoeff();
        const double si = std::sqrt(tan.rhs(k));
        r.t0.push_back(t0);
        r.sup_abs_phi.push_back(sup);
        r.sqrt_i.push_back(si);
        const double excess = sup - base;
        if (excess > 1e-12 * std::max(1.0, base)) {
            r.holds_without_constant = false;
            r.admissible_constant = si > 0.0 ? std::max(r.admissible_constant, excess / si)
                                             : std::numeric_limits<double>::infinity();
        }
    }
    return r;
}

NoNeckReport no_neck_decay_check(const CylinderField& v, double epsilon0) {
    const CylinderGrid& g = *v.grid;
    const double L = g.half_length();
    const Eigen::MatrixXd grad_sq = v.grad_sq();
    const Eigen::MatrixXd tang = v.dtheta_sq();
    NoNeckReport r;
    r.epsilon0 = epsilon0;
    r.total_energy = g.integrate(grad_sq);
    const Eigen::VectorXd windows = window_integrals(g, grad_sq);
    r.max_window_energy = windows.maxCoeff();
    r.applicable = r.max_window_energy <= epsilon0;

    Eigen::VectorXd sup(g.n_t());
    for (int i = 0; i < g.n_t(); ++i) {
        sup[i] = grad_sq.row(i).maxCoeff();
        const double t = g.t(i);
        const double bound = std::exp((std::abs(t) - L) / 10.0) * r.total_energy;
        r.t.push_back(t);
        r.sup_grad_sq.push_back(sup[i]);
        r.slice_tangential.push_back(g.slice_integral(tang, i));
        r.bound_rhs.push_back(bound);
        if (std::abs(t) < L - 2.0 && sup[i] > 0.0)
            r.admissible_constant = std::max(r.admissible_constant, bound > 0.0 ? sup[i] / bound
                                                                                : std::numeric_limits<double>::infinity());
    }
    r.decay = fit_with_floor(g, sup, 1e-14 * std::max(r.total_energy, 1e-300));

    Eigen::VectorXd lo = Eigen::VectorXd::Constant(v.components(), std::numeric_limits<double>::infinity());
    Eigen::VectorXd hi = -lo;
    for (int i = 0; i < g.n_t(); ++i) {
        if (std::abs(g.t(i)) > L / 3.0 + 1e-12) continue;
        for (int c = 0; c < v.components(); ++c) {
            lo[c] = std::min(lo[c], v.value[c].row(i).minCoeff());
            hi[c] = std::max(hi[c], v.value[c].row(i).maxCoeff());
        }
    }
    r.mid_oscillation = (hi - lo).norm();
    return r;
}

SliceBalanceReport slice_balance_check(const CylinderField& v, double tolerance) {
    const CylinderGrid& g = *v.grid;
    const Eigen::VectorXd st = slice_integrals(g, v.dt_sq());
    const Eigen::VectorXd sth = slice_integrals(g, v.dtheta_sq());
    SliceBalanceReport r;
    r.balance = st - sth;
    const double top = (st + sth).maxCoeff();
    for (int i = 0; i < g.n_t(); ++i) {
        const double tot = st[i] + sth[i];
        if (tot <= 1e-12 * top || tot == 0.0) continue;
        r.max_relative_imbalance = std::max(r.max_relative_imbalance, std::abs(r.balance[i]) / tot);
    }
    r.pass = r.max_relative_imbalance <= tolerance;
    return r;
}

void write_profile_csv(const TangentialReport& r, const std::string& path) {
    std::vector<double> rhs(r.t0.size());
    for (std::size_t k = 0; k < rhs.size(); ++k) rhs[k] = r.rhs(k);
    write_rows(path, r.t0, r.slice_energy, r.sup_grad_sq, rhs);
}

void write_profile_csv(const NoNeckReport& r, const std::string& path) {
    write_rows(path, r.t, r.slice_tangential, r.sup_grad_sq, r.bound_rhs);
}

}  // namespace bubblespectra
