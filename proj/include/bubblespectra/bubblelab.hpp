#pragma once

#include "bubblespectra/forms.hpp"
#include "bubblespectra/maps.hpp"
#include "bubblespectra/neck.hpp"
#include "bubblespectra/spectra.hpp"

#include <json.hpp>

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace bubblespectra {

/// r_k = base^{-k} for k = k_first..k_last.
std::vector<double> geometric_schedule(double base, int k_first, int k_last);

/// A bubble ω_i attached at the stereographic point p_i through m(ζ) = p_i + r ζ.
struct BubbleSite {
    SphereMap omega;
    cplx center;

    Eigen::Vector3d point() const { return inverse_stereographic(center); }
    /// Chordal diameter of the image of |ζ| ≤ 2 on the domain sphere.
    double diameter(double r) const { return 8.0 * r / (1.0 + std::norm(center)); }
};

struct SequenceEntry {
    int k = 0;
    double scale = 0.0;
    std::optional<SphereMap> map;
    double energy = 0.0;  ///< E(u_k) on the sequence mesh
    double cells = 0.0;   ///< smallest bubble diameter in local mesh cells
    bool resolved = false;
};

/// u_k realized analytically from the family for each scale, sampled on one mesh.
struct BubbleSequence {
    std::string family;
    std::vector<BubbleSite> bubbles;
    Eigen::Vector3d limit_value = Eigen::Vector3d::Zero();
    std::function<SphereMap(double)> realize;
    std::shared_ptr<const SurfaceMesh> mesh;
    ManifoldPtr target;
    std::vector<SequenceEntry> entries;
    std::vector<std::string> warnings;

    /// Σ E(ω_i) = 4π Σ |deg ω_i|.
    double bubble_energy() const;
    /// Index of the last resolved entry, or -1.
    int last_resolved() const;
    std::vector<int> resolved_entries() const;
    MapField sampled(int entry) const;
    MapField limit() const;

    /// Neck chart about site i with ρ = √(s r), s = √r; t ∈ [-L, L] covers
    /// R r ≤ |z - p| ≤ s/R with log R = margin.
    ConformalChart neck_chart(int site, double r) const;
    static double neck_half_length(double r, double margin = 3.0) {
        return std::max(0.0, 0.25 * std::log(1.0 / r) - margin);
    }
};

/// Smallest bubble diameter of the sequence at scale r, in local cells of `mesh`.
double bubble_cells(const BubbleSequence& seq, double r, const SurfaceMesh& mesh);

/// u_k = ω∘m_k⁻¹; the weak limit is the constant ω(∞). The sequence mesh must be
/// fine enough that the bubble spans `min_cells` local cells, otherwise the entry
/// is kept but marked unresolved and a warning is recorded.
BubbleSequence make_sequence(const SphereMap& omega, const std::vector<double>& scales, cplx center,
                             std::shared_ptr<const SurfaceMesh> mesh, ManifoldPtr target, double min_cells = 6.0);

/// u_k(z) = r/(z - p1) + r/(z - p2): two degree-one bubbles 1/ζ at p1 and p2 over
/// the constant limit at the south pole.
BubbleSequence make_two_bubble_sequence(cplx p1, cplx p2, const std::vector<double>& scales,
                                        std::shared_ptr<const SurfaceMesh> mesh, ManifoldPtr target,
                                        double min_cells = 6.0);

/// 1 where |x - c| ≥ δ, 0 where |x - c| ≤ δ², log(|x - c|/δ²)/log(1/δ) between
/// (chordal distance on the unit sphere).
double cutoff_value(const Eigen::Vector3d& x, const Eigen::Vector3d& center, double delta);
/// Vertex values of the cutoff. Throws ResolutionError if the annulus is narrower
/// than the local mesh size.
Vec log_cutoff(const SurfaceMesh& mesh, const Eigen::Vector3d& center, double delta);
/// ∫|∇η|² of the P1 interpolant.
double cutoff_energy(const SurfaceMesh& mesh, const Vec& eta);
/// 2π/|log δ|, the energy of the planar log cutoff.
double cutoff_energy_bound(double delta);

/// Vector field along a bubble in its stereographic coordinate ζ.
using BubbleField = std::function<Eigen::Vector3d(cplx)>;

/// d/dε ω(ζ + ε c(ζ)) with c(ζ) = c0 + c1 ζ + c2 ζ², a Jacobi field of ω.
BubbleField jacobi_field(const SphereMap& omega, cplx c0, cplx c1, cplx c2);

struct TransferPlan {
    double delta = 0.5;
    Mat base;                         ///< X₀ as a 3 x V field on the sequence mesh; empty means 0
    std::vector<BubbleField> bubble;  ///< Z_i per site; empty function means 0
};

struct TransferredSection {
    Mat ambient;  ///< tangent along u_k
    bool disjoint = true;
    int overlap_vertices = 0;
};

/// X_k = P(u_k)(η X₀) + Σ_i P(u_k)(η_∞ Z_i)∘m_k⁻¹ with η cutting off every
/// concentration point and η_∞ cutting off ζ = ∞ in each bubble sphere.
TransferredSection transfer(const BubbleSequence& seq, int entry, const TransferPlan& plan);

/// D²E(u₀)(η X₀) on the sequence mesh.
double limit_form(const BubbleSequence& seq, const TransferPlan& plan);
/// D²E(ω)(η_∞ Z) on the given mesh of the bubble sphere.
double bubble_form(const SphereMap& omega, const BubbleField& z, double delta,
                   std::shared_ptr<const SurfaceMesh> bubble_mesh, ManifoldPtr target);
/// Z scaled so that η_∞ Z has unit ⟨⟨·,·⟩⟩_ω norm on the bubble mesh.
BubbleField normalize_bubble_field(const SphereMap& omega, BubbleField z, double delta,
                                   std::shared_ptr<const SurfaceMesh> bubble_mesh, ManifoldPtr target);

struct LowerBoundRow {
    int k = 0;
    double scale = 0.0;
    double lhs = 0.0;
    double gap = 0.0;  ///< |lhs - rhs| / (1 + |rhs|)
    bool disjoint = true;
    int index = -1;                 ///< Ind(u_k), -1 if not computed
    int transferred_negative = 0;   ///< negative directions spanned by the transferred negative plans
};

struct LowerBoundReport {
    double rhs_limit = 0.0;
    std::vector<double> rhs_bubbles;
    double rhs = 0.0;
    std::vector<LowerBoundRow> rows;  ///< resolved entries only
    double final_gap = 0.0;           ///< at the largest resolved k with disjoint supports
    bool monotone = true;             ///< gaps non-increasing (up to the slack) from the second row on
    bool index_inequality = true;     ///< transferred_negative ≤ index wherever both are known
    bool pass = false;
};

struct LowerBoundOptions {
    std::shared_ptr<const SurfaceMesh> bubble_mesh;
    double tolerance = 0.05;
    /// Absolute increase of the gap still counted as non-increasing; sections
    /// whose gap sits at the discretization floor fluctuate by about 1e-3.
    double monotone_slack = 0.0;
    bool compute_index = true;
    int eigenpairs = 8;
    SolveOptions solve;
    double c_h = 0.5;
    std::vector<TransferPlan> negative_plans;  ///< transferred negative eigen-sections
};

LowerBoundReport verify_lower_bound(const BubbleSequence& seq, const TransferPlan& plan,
                                    const LowerBoundOptions& opts);

struct InertiaCount {
    int index = 0;
    int nullity = 0;
    bool ambiguous = false;
    double lowest = 0.0;    ///< smallest computed eigenvalue
    bool bounds_ok = true;  ///< every pair meets λ ≥ -1 and the W^{1,2} bound, identity to 1e-8 relative
    int total() const { return index + nullity; }
};

/// Thresholded (Ind, Nul) from the smallest `eigenpairs` eigenvalues; ambiguous
/// if the classification is sensitive at τ or the computed window is all null.
InertiaCount count_inertia(const MapField& u, int eigenpairs, const SolveOptions& solve, double c_h = 0.5);

struct UpperBoundRow {
    int k = 0;
    double scale = 0.0;
    InertiaCount coarse;  ///< on the sequence mesh
    std::optional<InertiaCount> comparison;
    bool compared = false;  ///< the comparison mesh resolves this entry
    bool converged = true;  ///< both classifications agree
    bool included = true;   ///< compared (when a comparison mesh is given), converged and not ambiguous
    int lhs = 0;
    bool holds = true;
    bool matches_bubble = true;  ///< single-bubble cross-check Ind/Nul(u_k) = Ind/Nul(ω)
};

struct UpperBoundReport {
    InertiaCount limit;
    std::vector<InertiaCount> bubbles;
    int rhs = 0;
    std::vector<UpperBoundRow> rows;
    bool cross_check = true;
    bool pass = false;
};

struct UpperBoundOptions {
    std::shared_ptr<const SurfaceMesh> bubble_mesh;
    /// Optional mesh of another refinement level; entries it does not resolve are excluded.
    std::shared_ptr<const SurfaceMesh> comparison_mesh;
    double min_cells = 6.0;
    int eigenpairs = 24;
    SolveOptions solve;
    double c_h = 0.5;
};

UpperBoundReport verify_upper_bound(const BubbleSequence& seq, const UpperBoundOptions& opts);

struct RegionShares {
    double base = 0.0;
    double bubble = 0.0;
    double neck = 0.0;
    double total = 0.0;
    std::vector<double> per_bubble;

    double partition_error() const { return std::abs(base + bubble + neck - total); }
};

struct AccountingReport {
    int k = 0;
    double scale = 0.0;
    double radius = 0.0;
    RegionShares energy;
    std::vector<double> section_eigenvalues;
    std::vector<RegionShares> sections;  ///< index form of the lowest eigen-sections
    double neck_share = 0.0;             ///< energy.neck / energy.total
    double bubble_deviation = 0.0;       ///< |energy.bubble - Σ E(ω_i)| / Σ E(ω_i)
    bool overlap = false;                ///< base and bubble regions intersect
};

/// Base = {dist(x, p_i) > r for all i}, bubble i = {ζ_i(x) farther than r from ∞
/// in the bubble sphere}, neck = the rest; triangles are assigned by centroid.
AccountingReport energy_accounting(const BubbleSequence& seq, int entry, double radius, int eigen_sections = 0,
                                   const SolveOptions& solve = {});

/// No-neck check of u_k in the neck chart of site i.
/// Throws ConfigError when the neck is shorter than L = 2.
NoNeckReport neck_profile(const BubbleSequence& seq, int entry, int site, double margin = 3.0,
                          int nodes_per_unit = 16, int n_theta = 32);

nlohmann::json to_json(const BubbleSequence& seq);
nlohmann::json to_json(const LowerBoundReport& r);
nlohmann::json to_json(const UpperBoundReport& r);
nlohmann::json to_json(const AccountingReport& r);

void write_sequence_csv(const BubbleSequence& seq, const std::string& path);
void write_lower_bound_csv(const LowerBoundReport& r, const std::string& path);
void write_upper_bound_csv(const UpperBoundReport& r, const std::string& path);
void write_accounting_csv(const std::vector<AccountingReport>& rows, const std::string& path);

}  // namespace bubblespectra
