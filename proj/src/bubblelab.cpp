#include "bubblespectra/bubblelab.hpp"

#include "bubblespectra/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace bubblespectra {

namespace {

const Eigen::Vector3d kNorth(0.0, 0.0, 1.0);

/// Stereographic coordinate of a point of S², nullopt at the north pole.
std::optional<cplx> coordinate_of(const Eigen::Vector3d& x) {
    if (x.z() > 1.0 - 1e-14) return std::nullopt;
    const Eigen::Vector2cd zw = sphere_to_homogeneous(x);
    if (std::abs(zw[1]) == 0.0) return std::nullopt;
    return zw[0] / zw[1];
}

/// Bubble-sphere point of ζ_i(x) = (z(x) - p_i)/r; the north pole when z(x) = ∞.
Eigen::Vector3d bubble_point(const std::optional<cplx>& z, const BubbleSite& site, double r) {
    if (!z) return kNorth;
    return inverse_stereographic((*z - site.center) / r);
}

void require_sphere_target(const ManifoldPtr& target) {
    if (!target || target->ambient_dim() != 3 || target->intrinsic_dim() != 2)
        throw ConfigError("bubble sequences need the round sphere target (sphere2), got " +
                          (target ? target->key() : std::string("none")));
}

void resolve_entries(BubbleSequence& seq, const std::vector<double>& scales, double min_cells) {
    if (scales.empty()) throw ConfigError("scale schedule is empty");
    for (std::size_t i = 0; i < scales.size(); ++i) {
        if (!(scales[i] > 0.0)) throw ConfigError("scales must be positive");
        if (i > 0 && scales[i] > scales[i - 1]) throw ConfigError("scales must be non-increasing");
    }
    if (scales.size() > 1 && scales.front() == scales.back())
        seq.warnings.push_back("constant scale schedule: the sequence is degenerate");
    for (std::size_t i = 0; i < scales.size(); ++i) {
        SequenceEntry e;
        e.k = static_cast<int>(i) + 1;
        e.scale = scales[i];
        e.map = seq.realize(e.scale);
        e.cells = bubble_cells(seq, e.scale, *seq.mesh);
        e.resolved = e.cells >= min_cells;
        e.energy = dirichlet_energy(sample_map(*e.map, seq.mesh, seq.target));
        if (!e.resolved) {
            std::ostringstream w;
            w << "scale r = " << e.scale << " spans " << e.cells << " cells (< " << min_cells
              << "); entry excluded as unresolved";
            seq.warnings.push_back(w.str());
        }
        seq.entries.push_back(std::move(e));
    }
}

double index_form_value(const AssembledForms& f, const Vec& x) { return x.dot(f.index_form() * x); }

}  // namespace

double bubble_cells(const BubbleSequence& seq, double r, const SurfaceMesh& mesh) {
    double cells = std::numeric_limits<double>::infinity();
    for (const BubbleSite& s : seq.bubbles) {
        const double d = s.diameter(r);
        const double h = mesh.local_mesh_size(s.point(), 0.5 * d);
        cells = std::min(cells, h > 0.0 ? d / h : 0.0);
    }
    return cells;
}

std::vector<double> geometric_schedule(double base, int k_first, int k_last) {
    if (!(base > 1.0)) throw ConfigError("schedule base must exceed 1");
    if (k_last < k_first) throw ConfigError("schedule is empty");
    std::vector<double> r;
    for (int k = k_first; k <= k_last; ++k) r.push_back(std::pow(base, -k));
    return r;
}

double BubbleSequence::bubble_energy() const {
    double e = 0.0;
    for (const auto& s : bubbles) e += 4.0 * M_PI * std::abs(s.omega.degree());
    return e;
}

int BubbleSequence::last_resolved() const {
    for (int i = static_cast<int>(entries.size()) - 1; i >= 0; --i)
        if (entries[i].resolved) return i;
    return -1;
}

std::vector<int> BubbleSequence::resolved_entries() const {
    std::vector<int> out;
    for (int i = 0; i < static_cast<int>(entries.size()); ++i)
        if (entries[i].resolved) out.push_back(i);
    return out;
}

MapField BubbleSequence::sampled(int entry) const {
    return sample_map(*entries.at(entry).map, mesh, target);
}

MapField BubbleSequence::limit() const { return constant_map(limit_value, mesh, target); }

ConformalChart BubbleSequence::neck_chart(int site, double r) const {
    return ConformalChart::neck(bubbles.at(site).center, std::pow(r, 0.75));
}

BubbleSequence make_sequence(const SphereMap& omega, const std::vector<double>& scales, cplx center,
                             std::shared_ptr<const SurfaceMesh> mesh, ManifoldPtr target, double min_cells) {
    require_sphere_target(target);
    if (omega.is_constant()) throw ConfigError("the bubble must be non-constant");
    BubbleSequence seq;
    seq.family = "single:" + omega.describe();
    seq.bubbles.push_back({omega, center});
    seq.limit_value = omega(kNorth);
    seq.realize = [omega, center](double r) { return omega.compose(ConformalChart::dilation(-center / r, 1.0 / r)); };
    seq.mesh = std::move(mesh);
    seq.target = std::move(target);
    resolve_entries(seq, scales, min_cells);
    return seq;
}

BubbleSequence make_two_bubble_sequence(cplx p1, cplx p2, const std::vector<double>& scales,
                                        std::shared_ptr<const SurfaceMesh> mesh, ManifoldPtr target,
                                        double min_cells) {
    require_sphere_target(target);
    if (std::abs(p1 - p2) == 0.0) throw ConfigError("bubble centres must differ");
    const SphereMap inv({1.0}, {0.0, 1.0});
    BubbleSequence seq;
    seq.family = "two-bubble";
    seq.bubbles.push_back({inv, p1});
    seq.bubbles.push_back({inv, p2});
    seq.limit_value = Eigen::Vector3d(0.0, 0.0, -1.0);
    seq.realize = [p1, p2](double r) {
        return SphereMap({-r * (p1 + p2), 2.0 * r}, {p1 * p2, -(p1 + p2), 1.0});
    };
    seq.mesh = std::move(mesh);
    seq.target = std::move(target);
    const double sep = std::abs(p1 - p2) / scales.back();
    resolve_entries(seq, scales, min_cells);
    if (sep < 100.0) seq.warnings.push_back("bubble separation |p1 - p2|/r is only " + std::to_string(sep));
    return seq;
}

// ------------------------------------------------------------------ cutoffs

double cutoff_value(const Eigen::Vector3d& x, const Eigen::Vector3d& center, double delta) {
    const double d = (x - center).norm();
    const double inner = delta * delta;
    if (d <= inner) return 0.0;
    if (d >= delta) return 1.0;
    return std::log(d / inner) / std::log(1.0 / delta);
}

Vec log_cutoff(const SurfaceMesh& mesh, const Eigen::Vector3d& center, double delta) {
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("cutoff radius must lie in (0, 1)");
    const double h = mesh.local_mesh_size(center, delta);
    if (h > delta - delta * delta) {
        std::ostringstream m;
        m << "cutoff annulus [" << delta * delta << ", " << delta << "] is narrower than the local mesh size " << h;
        throw ResolutionError(m.str());
    }
    Vec eta(mesh.vertex_count());
    for (int v = 0; v < mesh.vertex_count(); ++v) eta[v] = cutoff_value(mesh.vertices[v], center, delta);
    return eta;
}

double cutoff_energy(const SurfaceMesh& mesh, const Vec& eta) { return eta.dot(stiffness_matrix(mesh) * eta); }

double cutoff_energy_bound(double delta) { return 2.0 * M_PI / std::abs(std::log(delta)); }

BubbleField jacobi_field(const SphereMap& omega, cplx c0, cplx c1, cplx c2) {
    return [omega, c0, c1, c2](cplx zeta) {
        Eigen::Vector3d dx, dy;
        omega.at_coordinate(zeta, &dx, &dy);
        const cplx c = c0 + zeta * (c1 + zeta * c2);
        return Eigen::Vector3d(c.real() * dx + c.imag() * dy);
    };
}

// ------------------------------------------------------------------ transfer

TransferredSection transfer(const BubbleSequence& seq, int entry, const TransferPlan& plan) {
    const SurfaceMesh& mesh = *seq.mesh;
    const double r = seq.entries.at(entry).scale;
    const MapField u = seq.sampled(entry);
    const int nv = mesh.vertex_count();
    const bool has_base = plan.base.size() > 0;
    if (has_base && (plan.base.rows() != 3 || plan.base.cols() != nv))
        throw DimensionMismatch("base section must be 3 x V on the sequence mesh");
    if (plan.bubble.size() > seq.bubbles.size()) throw DimensionMismatch("more bubble sections than bubbles");

    Vec eta_base = Vec::Ones(nv);
    if (has_base)
        for (const auto& s : seq.bubbles) eta_base = eta_base.cwiseProduct(log_cutoff(mesh, s.point(), plan.delta));

    TransferredSection out;
    out.ambient = Mat::Zero(3, nv);
    for (int v = 0; v < nv; ++v) {
        const Eigen::Vector3d& x = mesh.vertices[v];
        const std::optional<cplx> z = coordinate_of(x);
        Eigen::Vector3d sum = Eigen::Vector3d::Zero();
        int parts = 0;
        if (has_base && eta_base[v] > 0.0 && plan.base.col(v).squaredNorm() > 0.0) {
            sum += eta_base[v] * plan.base.col(v);
            ++parts;
        }
        for (std::size_t i = 0; i < plan.bubble.size(); ++i) {
            if (!plan.bubble[i] || !z) continue;
            const double eta = cutoff_value(bubble_point(z, seq.bubbles[i], r), kNorth, plan.delta);
            if (eta <= 0.0) continue;
            sum += eta * plan.bubble[i]((*z - seq.bubbles[i].center) / r);
            ++parts;
        }
        if (parts > 1) {
            out.disjoint = false;
            ++out.overlap_vertices;
        }
        out.ambient.col(v) = seq.target->projector_at(u.values.col(v)) * sum;
    }
    return out;
}

double limit_form(const BubbleSequence& seq, const TransferPlan& plan) {
    if (plan.base.size() == 0) return 0.0;
    const MapField u0 = seq.limit();
    const AssembledForms f = assemble(u0);
    Vec eta = Vec::Ones(seq.mesh->vertex_count());
    for (const auto& s : seq.bubbles) eta = eta.cwiseProduct(log_cutoff(*seq.mesh, s.point(), plan.delta));
    Mat x = plan.base;
    for (int v = 0; v < x.cols(); ++v) x.col(v) *= eta[v];
    return index_form_value(f, f.basis->from_ambient(x));
}

namespace {

/// Frame coefficients of η_∞ Z along ω sampled on the bubble mesh.
Vec bubble_coefficients(const AssembledForms& f, const MapField& w, const BubbleField& z, double delta) {
    const SurfaceMesh& mesh = *w.mesh;
    log_cutoff(mesh, kNorth, delta);  // resolution check only
    Mat x = Mat::Zero(3, mesh.vertex_count());
    for (int v = 0; v < mesh.vertex_count(); ++v) {
        const std::optional<cplx> zeta = coordinate_of(mesh.vertices[v]);
        if (!zeta) continue;
        const double eta = cutoff_value(mesh.vertices[v], kNorth, delta);
        if (eta > 0.0) x.col(v) = eta * (w.target->projector_at(w.values.col(v)) * z(*zeta));
    }
    return f.basis->from_ambient(x);
}

}  // namespace

double bubble_form(const SphereMap& omega, const BubbleField& z, double delta,
                   std::shared_ptr<const SurfaceMesh> bubble_mesh, ManifoldPtr target) {
    if (!z) return 0.0;
    const MapField w = sample_map(omega, bubble_mesh, target);
    const AssembledForms f = assemble(w);
    return index_form_value(f, bubble_coefficients(f, w, z, delta));
}

BubbleField normalize_bubble_field(const SphereMap& omega, BubbleField z, double delta,
                                   std::shared_ptr<const SurfaceMesh> bubble_mesh, ManifoldPtr target) {
    const MapField w = sample_map(omega, bubble_mesh, target);
    const AssembledForms f = assemble(w);
    const Vec x = bubble_coefficients(f, w, z, delta);
    const double n2 = x.dot(f.scalar_product() * x);
    if (!(n2 > 0.0)) throw ConfigError("bubble section vanishes after the cutoff");
    const double s = 1.0 / std::sqrt(n2);
    return [z = std::move(z), s](cplx zeta) { return Eigen::Vector3d(s * z(zeta)); };
}

// ------------------------------------------------------------------ verification

LowerBoundReport verify_lower_bound(const BubbleSequence& seq, const TransferPlan& plan,
                                    const LowerBoundOptions& opts) {
    if (!opts.bubble_mesh) throw ConfigError("lower-bound verification needs a bubble mesh");
    LowerBoundReport rep;
    rep.rhs_limit = limit_form(seq, plan);
    rep.rhs = rep.rhs_limit;
    for (std::size_t i = 0; i < plan.bubble.size(); ++i) {
        rep.rhs_bubbles.push_back(
            bubble_form(seq.bubbles[i].omega, plan.bubble[i], plan.delta, opts.bubble_mesh, seq.target));
        rep.rhs += rep.rhs_bubbles.back();
    }

    for (int e : seq.resolved_entries()) {
        const MapField u = seq.sampled(e);
        const AssembledForms f = assemble(u);
        const TransferredSection xk = transfer(seq, e, plan);
        LowerBoundRow row;
        row.k = seq.entries[e].k;
        row.scale = seq.entries[e].scale;
        row.lhs = index_form_value(f, f.basis->from_ambient(xk.ambient));
        row.gap = std::abs(row.lhs - rep.rhs) / (1.0 + std::abs(rep.rhs));
        row.disjoint = xk.disjoint;
        const double tau = pde_threshold(seq.mesh->h, opts.c_h);
        if (opts.compute_index) {
            SpectrumReport s = solve(f.index_form(), f.scalar_product(), std::min(opts.eigenpairs, f.dof()), opts.solve);
            row.index = classify(s, tau).index;
        }
        if (!opts.negative_plans.empty()) {
            const int p = static_cast<int>(opts.negative_plans.size());
            Mat x(f.dof(), p);
            for (int j = 0; j < p; ++j)
                x.col(j) = f.basis->from_ambient(transfer(seq, e, opts.negative_plans[j]).ambient);
            const Mat q = x.transpose() * (f.index_form() * x);
            const Mat g = x.transpose() * (f.scalar_product() * x);
            Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(q, g);
            for (int j = 0; j < p; ++j)
                if (es.eigenvalues()[j] < -tau) ++row.transferred_negative;
            if (row.index >= 0 && row.transferred_negative > row.index) rep.index_inequality = false;
        }
        rep.rows.push_back(row);
    }

    int last = -1;
    for (int i = 0; i < static_cast<int>(rep.rows.size()); ++i)
        if (rep.rows[i].disjoint) last = i;
    for (std::size_t i = 2; i < rep.rows.size(); ++i)
        if (rep.rows[i].gap > rep.rows[i - 1].gap + opts.monotone_slack) rep.monotone = false;
    rep.final_gap = last >= 0 ? rep.rows[last].gap : std::numeric_limits<double>::infinity();
    rep.pass = last >= 0 && rep.final_gap <= opts.tolerance && rep.index_inequality;
    return rep;
}

InertiaCount count_inertia(const MapField& u, int eigenpairs, const SolveOptions& solve_opts, double c_h) {
    const AssembledForms f = assemble(u);
    SpectrumReport s = solve(f.index_form(), f.scalar_product(), std::min(eigenpairs, f.dof()), solve_opts);
    const Classification& c = classify(s, pde_threshold(u.mesh->h, c_h));
    InertiaCount out;
    out.index = c.index;
    out.nullity = c.nullity;
    out.ambiguous = c.ambiguous || !c.complete;
    out.lowest = s.eigenvalues.size() > 0 ? s.eigenvalues.minCoeff() : 0.0;
    out.bounds_ok = apriori_holds(s);
    return out;
}

UpperBoundReport verify_upper_bound(const BubbleSequence& seq, const UpperBoundOptions& opts) {
    if (!opts.bubble_mesh) throw ConfigError("upper-bound verification needs a bubble mesh");
    UpperBoundReport rep;
    rep.limit = count_inertia(seq.limit(), opts.eigenpairs, opts.solve, opts.c_h);
    rep.rhs = rep.limit.total();
    for (const auto& s : seq.bubbles) {
        rep.bubbles.push_back(count_inertia(sample_map(s.omega, opts.bubble_mesh, seq.target), opts.eigenpairs,
                                            opts.solve, opts.c_h));
        rep.rhs += rep.bubbles.back().total();
    }
    bool any = false;
    for (int e : seq.resolved_entries()) {
        UpperBoundRow row;
        row.k = seq.entries[e].k;
        row.scale = seq.entries[e].scale;
        row.coarse = count_inertia(seq.sampled(e), opts.eigenpairs, opts.solve, opts.c_h);
        if (opts.comparison_mesh && bubble_cells(seq, row.scale, *opts.comparison_mesh) >= opts.min_cells) {
            row.compared = true;
            row.comparison = count_inertia(sample_map(*seq.entries[e].map, opts.comparison_mesh, seq.target),
                                           opts.eigenpairs, opts.solve, opts.c_h);
            row.converged =
                row.comparison->index == row.coarse.index && row.comparison->nullity == row.coarse.nullity;
        }
        const InertiaCount& best = row.coarse;
        row.included = (row.compared || !opts.comparison_mesh) && row.converged && !row.coarse.ambiguous &&
                       !(row.comparison && row.comparison->ambiguous);
        row.lhs = best.total();
        row.holds = row.lhs <= rep.rhs;
        if (seq.bubbles.size() == 1)
            row.matches_bubble =
                best.index == rep.bubbles[0].index && best.nullity == rep.bubbles[0].nullity;
        if (row.included) {
            any = true;
            if (!row.matches_bubble) rep.cross_check = false;
        }
        rep.rows.push_back(row);
    }
    rep.pass = any && !rep.limit.ambiguous;
    for (const auto& b : rep.bubbles) rep.pass = rep.pass && !b.ambiguous;
    for (const auto& row : rep.rows)
        if (row.included && !row.holds) rep.pass = false;
    return rep;
}

// ------------------------------------------------------------------ accounting

AccountingReport energy_accounting(const BubbleSequence& seq, int entry, double radius, int eigen_sections,
                                   const SolveOptions& solve_opts) {
    if (!(radius > 0.0 && radius < 2.0)) throw ConfigError("accounting radius must lie in (0, 2)");
    const SurfaceMesh& mesh = *seq.mesh;
    const double r = seq.entries.at(entry).scale;
    const int nb = static_cast<int>(seq.bubbles.size());

    AccountingReport rep;
    rep.k = seq.entries[entry].k;
    rep.scale = r;
    rep.radius = radius;

    // region per point: -1 base, -2 neck, i ≥ 0 bubble i
    auto region = [&](const Eigen::Vector3d& x, bool& overlap) {
        bool base = true;
        int bubble = -1;
        const std::optional<cplx> z = coordinate_of(x);
        for (int i = 0; i < nb; ++i) {
            if ((x - seq.bubbles[i].point()).norm() <= radius) base = false;
            if ((bubble_point(z, seq.bubbles[i], r) - kNorth).norm() > radius) bubble = i;
        }
        if (base && bubble >= 0) overlap = true;
        if (bubble >= 0) return bubble;
        return base ? -1 : -2;
    };
    auto add = [nb](RegionShares& s, int where, double value) {
        if (s.per_bubble.empty()) s.per_bubble.assign(nb, 0.0);
        if (where == -1)
            s.base += value;
        else if (where == -2)
            s.neck += value;
        else {
            s.bubble += value;
            s.per_bubble[where] += value;
        }
        s.total += value;
    };

    std::vector<int> tri_region(mesh.triangle_count()), vert_region(mesh.vertex_count());
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        const auto& tri = mesh.triangles[t];
        const Eigen::Vector3d c =
            (mesh.vertices[tri[0]] + mesh.vertices[tri[1]] + mesh.vertices[tri[2]]).normalized();
        tri_region[t] = region(c, rep.overlap);
    }
    for (int v = 0; v < mesh.vertex_count(); ++v) vert_region[v] = region(mesh.vertices[v], rep.overlap);

    const MapField u = seq.sampled(entry);
    const Eigen::VectorXd e = energy_per_triangle(u);
    rep.energy.per_bubble.assign(nb, 0.0);
    for (int t = 0; t < mesh.triangle_count(); ++t) add(rep.energy, tri_region[t], e[t]);
    rep.neck_share = rep.energy.total > 0.0 ? rep.energy.neck / rep.energy.total : 0.0;
    const double eb = seq.bubble_energy();
    rep.bubble_deviation = std::abs(rep.energy.bubble - eb) / eb;

    if (eigen_sections > 0) {
        const AssembledForms f = assemble(u);
        SpectrumReport s = solve(f.index_form(), f.scalar_product(), std::min(eigen_sections, f.dof()), solve_opts);
        const int n = f.basis->n;
        for (int j = 0; j < s.eigenvalues.size(); ++j) {
            const Vec x = s.eigenvectors.col(j);
            const Mat amb = f.basis->to_ambient(x);
            const Vec cx = f.C * x;
            RegionShares q;
            q.per_bubble.assign(nb, 0.0);
            for (int t = 0; t < mesh.triangle_count(); ++t) {
                const auto& tri = mesh.triangles[t];
                Eigen::Vector3d g[3];
                for (int a = 0; a < 3; ++a) g[a] = mesh.grads[t][a];
                double kt = 0.0;
                for (int a = 0; a < 3; ++a)
                    for (int b = 0; b < 3; ++b)
                        kt += mesh.areas[t] * g[a].dot(g[b]) * amb.col(tri[a]).dot(amb.col(tri[b]));
                add(q, tri_region[t], kt);
            }
            for (int v = 0; v < mesh.vertex_count(); ++v)
                add(q, vert_region[v], -x.segment(n * v, n).dot(cx.segment(n * v, n)));
            rep.section_eigenvalues.push_back(s.eigenvalues[j]);
            rep.sections.push_back(q);
        }
    }
    return rep;
}

NoNeckReport neck_profile(const BubbleSequence& seq, int entry, int site, double margin, int nodes_per_unit,
                          int n_theta) {
    const double r = seq.entries.at(entry).scale;
    const double L = BubbleSequence::neck_half_length(r, margin);
    if (L < 2.0) {
        std::ostringstream msg;
        msg << "neck at scale " << r << " has half-length " << L << ", shorter than 2";
        throw ConfigError(msg.str());
    }
    const CylinderGrid grid = cylinder(L, std::max(9, static_cast<int>(2.0 * L * nodes_per_unit) + 1), n_theta);
    const CylinderField v = pull_to_neck(*seq.entries[entry].map, seq.neck_chart(site, r), grid);
    return no_neck_decay_check(v);
}

// ------------------------------------------------------------------ output

namespace {

nlohmann::json shares_json(const RegionShares& s) {
    return {{"base", s.base}, {"bubble", s.bubble}, {"neck", s.neck}, {"total", s.total}, {"per_bubble", s.per_bubble}};
}

nlohmann::json inertia_json(const InertiaCount& c) {
    return {{"index", c.index},
            {"nullity", c.nullity},
            {"ambiguous", c.ambiguous},
            {"lowest", c.lowest},
            {"bounds_ok", c.bounds_ok}};
}

std::ofstream open_csv(const std::string& path, const std::string& header) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out.precision(12);
    out << header << "\n";
    return out;
}

}  // namespace

nlohmann::json to_json(const BubbleSequence& seq) {
    nlohmann::json j;
    j["family"] = seq.family;
    j["limit_value"] = {seq.limit_value.x(), seq.limit_value.y(), seq.limit_value.z()};
    j["bubble_energy"] = seq.bubble_energy();
    j["bubbles"] = nlohmann::json::array();
    for (const auto& b : seq.bubbles)
        j["bubbles"].push_back({{"omega", b.omega.describe()}, {"center", {b.center.real(), b.center.imag()}}});
    j["entries"] = nlohmann::json::array();
    for (const auto& e : seq.entries)
        j["entries"].push_back(
            {{"k", e.k}, {"scale", e.scale}, {"energy", e.energy}, {"cells", e.cells}, {"resolved", e.resolved}});
    j["warnings"] = seq.warnings;
    return j;
}

nlohmann::json to_json(const LowerBoundReport& r) {
    nlohmann::json j;
    j["rhs"] = r.rhs;
    j["rhs_limit"] = r.rhs_limit;
    j["rhs_bubbles"] = r.rhs_bubbles;
    j["final_gap"] = r.final_gap;
    j["monotone"] = r.monotone;
    j["index_inequality"] = r.index_inequality;
    j["pass"] = r.pass;
    j["rows"] = nlohmann::json::array();
    for (const auto& row : r.rows)
        j["rows"].push_back({{"k", row.k},
                             {"scale", row.scale},
                             {"lhs", row.lhs},
                             {"gap", row.gap},
                             {"disjoint", row.disjoint},
                             {"index", row.index},
                             {"transferred_negative", row.transferred_negative}});
    return j;
}

nlohmann::json to_json(const UpperBoundReport& r) {
    nlohmann::json j;
    j["limit"] = inertia_json(r.limit);
    j["bubbles"] = nlohmann::json::array();
    for (const auto& b : r.bubbles) j["bubbles"].push_back(inertia_json(b));
    j["rhs"] = r.rhs;
    j["cross_check"] = r.cross_check;
    j["pass"] = r.pass;
    j["rows"] = nlohmann::json::array();
    for (const auto& row : r.rows) {
        nlohmann::json x = {{"k", row.k},
                            {"scale", row.scale},
                            {"inertia", inertia_json(row.coarse)},
                            {"compared", row.compared},
                            {"converged", row.converged},
                            {"included", row.included},
                            {"lhs", row.lhs},
                            {"holds", row.holds},
                            {"matches_bubble", row.matches_bubble}};
        if (row.comparison) x["comparison"] = inertia_json(*row.comparison);
        j["rows"].push_back(x);
    }
    return j;
}

nlohmann::json to_json(const AccountingReport& r) {
    nlohmann::json j = {{"k", r.k},
                        {"scale", r.scale},
                        {"radius", r.radius},
                        {"energy", shares_json(r.energy)},
                        {"partition_error", r.energy.partition_error()},
                        {"neck_share", r.neck_share},
                        {"bubble_deviation", r.bubble_deviation},
                        {"overlap", r.overlap}};
    j["sections"] = nlohmann::json::array();
    for (std::size_t i = 0; i < r.sections.size(); ++i) {
        nlohmann::json s = shares_json(r.sections[i]);
        s["eigenvalue"] = r.section_eigenvalues[i];
        j["sections"].push_back(s);
    }
    return j;
}

void write_sequence_csv(const BubbleSequence& seq, const std::string& path) {
    auto out = open_csv(path, "k,scale,energy,cells,resolved");
    for (const auto& e : seq.entries)
        out << e.k << "," << e.scale << "," << e.energy << "," << e.cells << "," << (e.resolved ? 1 : 0) << "\n";
}

void write_lower_bound_csv(const LowerBoundReport& r, const std::string& path) {
    auto out = open_csv(path, "k,scale,lhs,rhs,gap,disjoint,index,transferred_negative");
    for (const auto& row : r.rows)
        out << row.k << "," << row.scale << "," << row.lhs << "," << r.rhs << "," << row.gap << ","
            << (row.disjoint ? 1 : 0) << "," << row.index << "," << row.transferred_negative << "\n";
}

void write_upper_bound_csv(const UpperBoundReport& r, const std::string& path) {
    auto out = open_csv(path, "k,scale,index,nullity,index_comparison,nullity_comparison,lhs,rhs,included,holds");
    for (const auto& row : r.rows)
        out << row.k << "," << row.scale << "," << row.coarse.index << "," << row.coarse.nullity << ","
            << (row.comparison ? row.comparison->index : -1) << ","
            << (row.comparison ? row.comparison->nullity : -1) << ","
            << row.lhs << "," << r.rhs << "," << (row.included ? 1 : 0) << "," << (row.holds ? 1 : 0) << "\n";
}

void write_accounting_csv(const std::vector<AccountingReport>& rows, const std::string& path) {
    auto out = open_csv(path, "k,scale,radius,base,bubble,neck,total,neck_share,bubble_deviation,overlap");
    for (const auto& r : rows)
        out << r.k << "," << r.scale << "," << r.radius << "," << r.energy.base << "," << r.energy.bubble << ","
            << r.energy.neck << "," << r.energy.total << "," << r.neck_share << "," << r.bubble_deviation << ","
            << (r.overlap ? 1 : 0) << "\n";
}

}  // namespace bubblespectra
