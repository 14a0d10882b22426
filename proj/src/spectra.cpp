#include "bubblespectra/spectra.hpp"

#include "bubblespectra/errors.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

namespace bubblespectra {

namespace {

double inf_norm(const SpMat& a) {
    Vec rows = Vec::Zero(a.rows());
    for (int k = 0; k < a.outerSize(); ++k)
        for (SpMat::InnerIterator it(a, k); it; ++it) rows[it.row()] += std::abs(it.value());
    return rows.size() ? rows.maxCoeff() : 0.0;
}

/// Smallest eigenvalue of a symmetric matrix, for error reports.
double smallest_eigenvalue(const SpMat& b) {
    if (b.rows() <= 3000) {
        Eigen::SelfAdjointEigenSolver<Mat> es(Mat(b), Eigen::EigenvaluesOnly);
        return es.eigenvalues()[0];
    }
    // power iteration on σI - B
    const double sigma = inf_norm(b);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g;
    Vec x(b.rows());
    for (int i = 0; i < x.size(); ++i) x[i] = g(rng);
    x.normalize();
    double mu = 0.0;
    for (int it = 0; it < 2000; ++it) {
        Vec y = sigma * x - b * x;
        mu = x.dot(y);
        x = y.normalized();
    }
    return sigma - mu;
}

void check_square(const SpMat& a, const SpMat& b) {
    if (a.rows() != a.cols() || b.rows() != b.cols() || a.rows() != b.rows())
        throw DimensionMismatch("A and B must be square matrices of equal size");
}

void fix_signs(Mat& v) {
    for (int j = 0; j < v.cols(); ++j) {
        const double big = v.col(j).cwiseAbs().maxCoeff();
        for (int i = 0; i < v.rows(); ++i)
            if (std::abs(v(i, j)) > 1e-10 * big) {
                if (v(i, j) < 0.0) v.col(j) *= -1.0;
                break;
            }
    }
}

void fill_diagnostics(SpectrumReport& r, const SpMat& a, const SpMat& b) {
    r.b_norm = inf_norm(b);
    const Mat av = a * r.eigenvectors;
    const Mat bv = b * r.eigenvectors;
    const Mat gram = r.eigenvectors.transpose() * bv;
    r.max_orthonormality_error = (gram - Mat::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
    r.pairs.resize(r.eigenvalues.size());
    r.max_residual = 0.0;
    for (int j = 0; j < r.eigenvalues.size(); ++j) {
        const double lambda = r.eigenvalues[j];
        PairDiagnostics& p = r.pairs[j];
        p.residual = (av.col(j) - lambda * bv.col(j)).norm();
        p.normalization = gram(j, j);
        p.w12 = r.eigenvectors.col(j).dot(av.col(j) + bv.col(j));
        p.lower_bound_ok = lambda >= -1.0 - 1e-8;
        p.upper_bound_ok = p.w12 <= 1.0 + std::abs(lambda) + 1e-8;
        r.max_residual = std::max(r.max_residual, p.residual);
    }
}

[[noreturn]] void throw_not_spd(const SpMat& b) {
    const double s = smallest_eigenvalue(b);
    throw NotPositiveDefinite("inner-product matrix is not positive definite (smallest eigenvalue " +
                                  std::to_string(s) + "); is the target augmented?",
                              s);
}

/// Cholesky reduction of B followed by a dense symmetric eigensolve.
Eigen::GeneralizedSelfAdjointEigenSolver<Mat> dense_pencil(const SpMat& a, const SpMat& b, int options) {
    const Mat bd(b);
    if (bd.llt().info() != Eigen::Success) throw_not_spd(b);
    Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(Mat(a), bd, options | Eigen::Ax_lBx);
    if (es.info() != Eigen::Success) throw ConvergenceFailure("dense generalized eigensolver did not converge");
    return es;
}

SpectrumReport solve_dense(const SpMat& a, const SpMat& b, int k) {
    const auto es = dense_pencil(a, b, Eigen::ComputeEigenvectors);
    SpectrumReport r;
    r.solver = "dense";
    r.eigenvalues = es.eigenvalues().head(k);
    r.eigenvectors = es.eigenvectors().leftCols(k);
    return r;
}

SpectrumReport solve_shift_invert(const SpMat& a, const SpMat& b, int k, const SolveOptions& o) {
    const int n = static_cast<int>(a.rows());
    {
        Eigen::SimplicialLLT<SpMat> bf(b);
        if (bf.info() != Eigen::Success) throw_not_spd(b);
    }
    const SpMat shifted = a - o.shift * b;
    Eigen::SimplicialLLT<SpMat> factor(shifted);
    if (factor.info() != Eigen::Success)
        throw ConvergenceFailure("A - shift*B is not positive definite; an eigenvalue lies below the shift");

    const int p = std::min(n, std::max(2 * k, k + 16));
    std::mt19937_64 rng(o.seed);
    std::normal_distribution<double> g;
    Mat x(n, p);
    for (int j = 0; j < p; ++j)
        for (int i = 0; i < n; ++i) x(i, j) = g(rng);

    const double bn = inf_norm(b);
    SpectrumReport r;
    r.solver = "shift-invert";
    for (int it = 1; it <= o.max_iterations; ++it) {
        const Mat y = factor.solve(b * x);
        Mat ar = y.transpose() * (a * y);
        Mat br = y.transpose() * (b * y);
        ar = 0.5 * (ar + ar.transpose()).eval();
        br = 0.5 * (br + br.transpose()).eval();
        Eigen::GeneralizedSelfAdjointEigenSolver<Mat> rr(ar, br);
        if (rr.info() != Eigen::Success) throw ConvergenceFailure("Rayleigh-Ritz step lost rank");
        x = y * rr.eigenvectors();
        const Vec lambda = rr.eigenvalues();
        const Mat head = x.leftCols(k);
        const Mat res = a * head - (b * head) * lambda.head(k).asDiagonal();
        double worst = 0.0;
        for (int j = 0; j < k; ++j) worst = std::max(worst, res.col(j).norm());
        if (worst <= o.tolerance * bn) {
            r.eigenvalues = lambda.head(k);
            r.eigenvectors = head;
            r.iterations = it;
            return r;
        }
    }
    throw ConvergenceFailure("shift-invert subspace iteration did not converge in " +
                             std::to_string(o.max_iterations) + " iterations");
}

int count_below(const Vec& ev, double t) {
    return static_cast<int>((ev.array() < t).count());
}

int count_within(const Vec& ev, double t) {
    return static_cast<int>((ev.array().abs() <= t).count());
}

}  // namespace

SpectrumReport solve(const SpMat& a, const SpMat& b, int k, const SolveOptions& options) {
    check_square(a, b);
    const int n = static_cast<int>(a.rows());
    if (k < 1 || k > n) throw ConfigError("requested " + std::to_string(k) + " eigenpairs of a problem with " +
                                          std::to_string(n) + " dof");
    const bool dense = options.path == SolverPath::dense ||
                       (options.path == SolverPath::automatic && n <= options.dense_limit);
    SpectrumReport r = dense ? solve_dense(a, b, k) : solve_shift_invert(a, b, k, options);
    r.dof = n;
    fix_signs(r.eigenvectors);
    fill_diagnostics(r, a, b);
    return r;
}

Vec dense_eigenvalues(const SpMat& a, const SpMat& b) {
    check_square(a, b);
    return dense_pencil(a, b, Eigen::EigenvaluesOnly).eigenvalues();
}

double pde_threshold(double h, double c_h) { return std::max(1e-8, c_h * h); }

Classification classify(const Vec& ev, double tau) {
    if (!(tau > 0.0)) throw ConfigError("classification threshold must be positive");
    Classification c;
    c.tau = tau;
    c.index = count_below(ev, -tau);
    c.nullity = count_within(ev, tau);
    c.index_tenth = count_below(ev, -0.1 * tau);
    c.nullity_tenth = count_within(ev, 0.1 * tau);
    c.index_ten = count_below(ev, -10.0 * tau);
    c.nullity_ten = count_within(ev, 10.0 * tau);
    for (int i = 0; i < ev.size(); ++i)
        if (std::abs(std::abs(ev[i]) - tau) <= 1e-3 * tau) {
            c.ambiguous = true;
            c.ambiguous_pairs.push_back(i);
        }
    c.complete = ev.size() > 0 && ev.maxCoeff() > tau;
    return c;
}

const Classification& classify(SpectrumReport& report, double tau) {
    report.classification = classify(report.eigenvalues, tau);
    if (report.eigenvalues.size() == report.dof) report.classification.complete = true;
    return report.classification;
}

AprioriReport apriori_check(const SpectrumReport& report) {
    AprioriReport a;
    a.worst_lower_margin = std::numeric_limits<double>::infinity();
    a.worst_upper_margin = std::numeric_limits<double>::infinity();
    for (int j = 0; j < report.eigenvalues.size(); ++j) {
        const double lambda = report.eigenvalues[j];
        const PairDiagnostics& p = report.pairs[j];
        a.worst_lower_margin = std::min(a.worst_lower_margin, lambda + 1.0);
        a.worst_upper_margin = std::min(a.worst_upper_margin, (1.0 + std::abs(lambda)) * p.normalization - p.w12);
        a.identity_residual = std::max(a.identity_residual, std::abs(p.w12 - (1.0 + lambda) * p.normalization));
    }
    a.consistent = a.worst_lower_margin >= -1e-6 && a.worst_upper_margin >= -1e-6 && a.identity_residual <= 1e-6;
    return a;
}

bool apriori_holds(const SpectrumReport& report, double tol) {
    for (int j = 0; j < report.eigenvalues.size(); ++j) {
        const double lambda = report.eigenvalues[j];
        const PairDiagnostics& p = report.pairs[j];
        const double scale = (1.0 + std::abs(lambda)) * p.normalization;
        if (lambda < -1.0 - tol) return false;
        if (p.w12 > scale * (1.0 + tol)) return false;
        if (std::abs(p.w12 - (1.0 + lambda) * p.normalization) > tol * scale) return false;
    }
    return true;
}

InertiaReport inertia_invariance(const SpMat& a, const SpMat& b1, const SpMat& b2, double tau, int k,
                                 const SolveOptions& options) {
    check_square(a, b1);
    check_square(a, b2);
    InertiaReport r;
    const int n = static_cast<int>(a.rows());
    if (n <= options.dense_limit) {
        r.first = classify(dense_eigenvalues(a, b1), tau);
        r.second = classify(dense_eigenvalues(a, b2), tau);
        r.first.complete = r.second.complete = true;
    } else {
        SpectrumReport s1 = solve(a, b1, std::min(k, n), options);
        SpectrumReport s2 = solve(a, b2, std::min(k, n), options);
        r.first = classify(s1, tau);
        r.second = classify(s2, tau);
    }
    r.agree = r.first.complete && r.second.complete && r.first.index == r.second.index &&
              r.first.nullity == r.second.nullity;
    return r;
}

nlohmann::json to_json(const Classification& c) {
    return {{"tau", c.tau},
            {"index", c.index},
            {"nullity", c.nullity},
            {"at_tau_over_10", {{"index", c.index_tenth}, {"nullity", c.nullity_tenth}}},
            {"at_10_tau", {{"index", c.index_ten}, {"nullity", c.nullity_ten}}},
            {"stable", c.stable()},
            {"ambiguous", c.ambiguous},
            {"ambiguous_pairs", c.ambiguous_pairs},
            {"complete", c.complete}};
}

nlohmann::json to_json(const SpectrumReport& r) {
    nlohmann::json pairs = nlohmann::json::array();
    for (int j = 0; j < r.eigenvalues.size(); ++j) {
        const PairDiagnostics& p = r.pairs[j];
        pairs.push_back({{"k", j},
                         {"lambda", r.eigenvalues[j]},
                         {"residual", p.residual},
                         {"normalization", p.normalization},
                         {"w12_norm", p.w12},
                         {"lower_bound_ok", p.lower_bound_ok},
                         {"upper_bound_ok", p.upper_bound_ok}});
    }
    return {{"solver", r.solver},
            {"dof", r.dof},
            {"iterations", r.iterations},
            {"b_norm", r.b_norm},
            {"max_residual", r.max_residual},
            {"max_orthonormality_error", r.max_orthonormality_error},
            {"eigenvalues", std::vector<double>(r.eigenvalues.data(), r.eigenvalues.data() + r.eigenvalues.size())},
            {"classification", to_json(r.classification)},
            {"pairs", pairs}};
}

nlohmann::json to_json(const AprioriReport& r) {
    return {{"worst_lower_margin", r.worst_lower_margin},
            {"worst_upper_margin", r.worst_upper_margin},
            {"identity_residual", r.identity_residual},
            {"consistent", r.consistent}};
}

void write_eigen_csv(const SpectrumReport& r, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot write " + path);
    f.precision(17);
    f << "k,lambda,residual,normalization,w12_norm,class\n";
    const double tau = r.classification.tau;
    for (int j = 0; j < r.eigenvalues.size(); ++j) {
        const double l = r.eigenvalues[j];
        const char* cls = l < -tau ? "negative" : (std::abs(l) <= tau ? "null" : "positive");
        const PairDiagnostics& p = r.pairs[j];
        f << j << ',' << l << ',' << p.residual << ',' << p.normalization << ',' << p.w12 << ',' << cls << '\n';
    }
}

}  // namespace bubblespectra
