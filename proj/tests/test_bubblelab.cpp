#include <doctest.h>

#include "bubblespectra/bubblelab.hpp"
#include "bubblespectra/errors.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace bubblespectra;

namespace {

const SphereMap kIdentity({0.0, 1.0}, {1.0});

std::shared_ptr<const SurfaceMesh> graded(int level, double g) {
    MeshGrading gr;
    gr.factor = g;
    gr.transition = 0.5;
    return std::make_shared<const SurfaceMesh>(icosphere(level, gr));
}

std::shared_ptr<const SurfaceMesh> uniform(int level) { return std::make_shared<const SurfaceMesh>(icosphere(level)); }

ManifoldPtr sphere() { return make_manifold("sphere2"); }

}  // namespace

TEST_CASE("geometric schedule") {
    const auto r = geometric_schedule(4.0, 1, 3);
    REQUIRE(r.size() == 3);
    CHECK(r[0] == 0.25);
    CHECK(r[2] == doctest::Approx(1.0 / 64));
    CHECK_THROWS_AS(geometric_schedule(1.0, 1, 3), ConfigError);
    CHECK_THROWS_AS(geometric_schedule(4.0, 3, 1), ConfigError);
}

TEST_CASE("identity bubbles keep their energy while resolved") {
    const auto seq = make_sequence(kIdentity, geometric_schedule(4.0, 1, 5), 0.0, graded(4, 0.1), sphere());
    CHECK(seq.limit_value.isApprox(Eigen::Vector3d(0, 0, 1)));
    CHECK(seq.bubble_energy() == doctest::Approx(4 * M_PI));
    int resolved = 0;
    for (const auto& e : seq.entries)
        if (e.resolved) {
            ++resolved;
            CHECK(e.energy == doctest::Approx(4 * M_PI).epsilon(0.02));
        }
    CHECK(resolved >= 2);
    CHECK_FALSE(seq.entries.back().resolved);
    CHECK_FALSE(seq.warnings.empty());
    CHECK(seq.last_resolved() == resolved - 1);
    // u_k∘m_k is the bubble itself
    const SphereMap uk = *seq.entries[1].map;
    const double r = seq.entries[1].scale;
    for (cplx zeta : {cplx(0.3, -0.2), cplx(-2.0, 1.0)})
        CHECK((uk.at_coordinate(r * zeta) - kIdentity.at_coordinate(zeta)).norm() < 1e-12);
}

TEST_CASE("sequence maps are exactly harmonic") {
    const SphereMap uk = kIdentity.compose(ConformalChart::dilation(0.0, 4.0));
    std::vector<double> res;
    for (int level : {2, 3, 4}) res.push_back(harmonic_residual(sample_map(uk, graded(level, 0.3), sphere())));
    CHECK(res[1] < res[0]);
    CHECK(res[2] < res[1]);
}

TEST_CASE("degree-two bubble and degenerate schedule") {
    const SphereMap sq({0.0, 0.0, 1.0}, {1.0});
    const auto seq = make_sequence(sq, {0.5, 0.25}, 0.0, graded(4, 0.1), sphere());
    CHECK(seq.bubble_energy() == doctest::Approx(8 * M_PI));
    for (const auto& e : seq.entries) CHECK(e.energy == doctest::Approx(8 * M_PI).epsilon(0.02));

    const auto flat = make_sequence(kIdentity, {0.25, 0.25, 0.25}, 0.0, graded(3, 0.3), sphere());
    CHECK(flat.entries[0].energy == flat.entries[2].energy);
    CHECK((flat.sampled(0).values - flat.sampled(2).values).norm() == 0.0);
    CHECK_FALSE(flat.warnings.empty());

    CHECK_THROWS_AS(make_sequence(kIdentity, {0.1, 0.2}, 0.0, graded(2, 0.5), sphere()), ConfigError);
    CHECK_THROWS_AS(make_sequence(kIdentity, {0.1}, 0.0, graded(2, 0.5), make_manifold("clifford")), ConfigError);
    CHECK_THROWS_AS(make_sequence(SphereMap({1.0}, {1.0}), {0.1}, 0.0, graded(2, 0.5), sphere()), ConfigError);
}

TEST_CASE("log cutoff") {
    const SurfaceMesh mesh = icosphere(5);
    const Eigen::Vector3d c(0, 0, -1);
    const Vec eta = log_cutoff(mesh, c, 0.3);
    for (int v = 0; v < mesh.vertex_count(); ++v) {
        const double d = (mesh.vertices[v] - c).norm();
        if (d >= 0.3) CHECK(eta[v] == 1.0);
        if (d <= 0.09) CHECK(eta[v] == 0.0);
    }
    const double e = cutoff_energy(mesh, eta);
    CHECK(e <= cutoff_energy_bound(0.3) * 1.1);
    CHECK(e > 0.5 * cutoff_energy_bound(0.3));
    CHECK(cutoff_energy(mesh, log_cutoff(mesh, c, 0.15)) < e);
    CHECK_THROWS_AS(log_cutoff(icosphere(2), c, 0.05), ResolutionError);
    CHECK_THROWS_AS(log_cutoff(mesh, c, 1.5), ConfigError);
}

TEST_CASE("Jacobi fields are null directions of the bubble") {
    const auto mesh = uniform(4);
    for (auto c : {std::array<cplx, 3>{1.0, 0.0, 0.0}, std::array<cplx, 3>{0.0, cplx(0, 1), 0.0},
                   std::array<cplx, 3>{0.0, 1.0, 0.0}}) {
        const BubbleField z = normalize_bubble_field(kIdentity, jacobi_field(kIdentity, c[0], c[1], c[2]), 0.3, mesh,
                                                     sphere());
        CHECK(std::abs(bubble_form(kIdentity, z, 0.3, mesh, sphere())) < 0.05);
    }
    // a non-Jacobi field costs energy
    const BubbleField bump = [](cplx zeta) {
        const Eigen::Vector3d y = inverse_stereographic(zeta);
        const Eigen::Vector3d a(1, 0, 0);
        return Eigen::Vector3d(y.z() * (a - a.dot(y) * y));
    };
    const BubbleField zb = normalize_bubble_field(kIdentity, bump, 0.3, mesh, sphere());
    CHECK(bubble_form(kIdentity, zb, 0.3, mesh, sphere()) > 0.1);
}

TEST_CASE("transfer: supports and projection") {
    const auto seq = make_sequence(kIdentity, geometric_schedule(4.0, 1, 3), 0.0, graded(4, 0.03), sphere());
    const SurfaceMesh& mesh = *seq.mesh;
    const int e = 1;
    const double r = seq.entries[e].scale;
    const MapField u = seq.sampled(e);

    TransferPlan only_z;
    only_z.delta = 0.5;
    only_z.bubble = {jacobi_field(kIdentity, 1.0, 0.0, 0.0)};
    const TransferredSection xz = transfer(seq, e, only_z);
    CHECK(xz.disjoint);
    for (int v = 0; v < mesh.vertex_count(); ++v) {
        CHECK(std::abs(xz.ambient.col(v).dot(u.values.col(v))) < 1e-12);
        if (xz.ambient.col(v).norm() > 0.0) {
            // support lies inside the image of the ζ-disc where η_∞ > 0
            const Eigen::Vector3d y = mesh.vertices[v];
            const cplx z(y.x() / (1 - y.z()), y.y() / (1 - y.z()));
            CHECK(std::abs(z) <= r * 2.0 / (0.25 * 0.25) * 1.01);
        }
    }

    TransferPlan only_x;
    only_x.delta = 0.5;
    only_x.base = Mat::Zero(3, mesh.vertex_count());
    only_x.base.row(0).setOnes();
    const TransferredSection xb = transfer(seq, e, only_x);
    const Vec eta = log_cutoff(mesh, Eigen::Vector3d(0, 0, -1), 0.5);
    for (int v = 0; v < mesh.vertex_count(); ++v) {
        const Eigen::Vector3d p = u.values.col(v);
        const Eigen::Vector3d expect = eta[v] * (Eigen::Vector3d(1, 0, 0) - p.x() * p);
        CHECK((xb.ambient.col(v) - expect).norm() < 1e-14);
    }

    TransferPlan both = only_x;
    both.bubble = only_z.bubble;
    CHECK_FALSE(transfer(seq, 0, both).disjoint);
    CHECK(transfer(seq, 2, both).disjoint);
    TransferPlan bad;
    bad.base = Mat::Zero(3, 5);
    CHECK_THROWS_AS(transfer(seq, e, bad), DimensionMismatch);
}

TEST_CASE("lower bound: transferred null and positive sections converge") {
    const auto seq = make_sequence(kIdentity, geometric_schedule(4.0, 1, 2), 0.0, graded(4, 0.03), sphere());
    const auto bmesh = uniform(3);
    LowerBoundOptions opts;
    opts.bubble_mesh = bmesh;
    opts.eigenpairs = 8;
    opts.solve.path = SolverPath::iterative;

    TransferPlan null_plan;
    null_plan.bubble = {normalize_bubble_field(kIdentity, jacobi_field(kIdentity, 1.0, 0.0, 0.0), 0.5, bmesh, sphere())};
    const LowerBoundReport n = verify_lower_bound(seq, null_plan, opts);
    CHECK(std::abs(n.rhs) < 0.01);
    CHECK(n.pass);
    CHECK(n.final_gap < 0.01);
    for (const auto& row : n.rows) {
        CHECK(row.index == 0);
        CHECK(row.transferred_negative == 0);
    }

    const AssembledForms f0 = assemble(seq.limit());
    opts.compute_index = false;
    const SpectrumReport s0 = solve(f0.index_form(), f0.scalar_product(), 4, opts.solve);
    TransferPlan pos;
    pos.base = f0.basis->to_ambient(s0.eigenvectors.col(2));
    const LowerBoundReport p = verify_lower_bound(seq, pos, opts);
    CHECK(p.rhs > 1.0);
    REQUIRE(p.rows.size() == 2);
    CHECK(p.rows[1].gap < p.rows[0].gap);
    CHECK(p.rows[1].lhs > 0.0);

    const auto dir = std::filesystem::temp_directory_path();
    write_lower_bound_csv(p, (dir / "bs_lower.csv").string());
    std::ifstream in(dir / "bs_lower.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "k,scale,lhs,rhs,gap,disjoint,index,transferred_negative");
    CHECK(to_json(p)["rows"].size() == 2);
}

TEST_CASE("upper bound: identity bubble, lhs 6 against rhs 8") {
    const auto seq = make_sequence(kIdentity, {0.25}, 0.0, graded(3, 0.1), sphere());
    UpperBoundOptions opts;
    opts.bubble_mesh = uniform(3);
    opts.eigenpairs = 16;
    const UpperBoundReport r = verify_upper_bound(seq, opts);
    CHECK(r.limit.index == 0);
    CHECK(r.limit.nullity == 2);
    CHECK(r.bubbles[0].nullity == 6);
    CHECK(r.rhs == 8);
    REQUIRE(r.rows.size() == 1);
    CHECK(r.rows[0].lhs == 6);
    CHECK(r.rows[0].holds);
    CHECK(r.cross_check);
    CHECK(r.pass);
}

TEST_CASE("energy accounting partitions the energy exactly") {
    const auto seq = make_sequence(kIdentity, geometric_schedule(4.0, 1, 3), 0.0, graded(5, 0.03), sphere());
    const int e = seq.last_resolved();
    REQUIRE(e == 2);
    // regions separate once r_k < radius²/4
    const AccountingReport a = energy_accounting(seq, e, 0.3);
    CHECK(a.energy.partition_error() < 1e-10);
    CHECK_FALSE(a.overlap);
    CHECK(a.neck_share < 0.05);
    CHECK(a.bubble_deviation < 0.05);
    // the bubble sphere minus the chordal 0.3-cap around ∞ carries E(ω)(1 - 0.3²/4)
    CHECK(a.energy.bubble == doctest::Approx(4 * M_PI * (1 - 0.09 / 4)).epsilon(0.01));
    CHECK(energy_accounting(seq, 0, 0.3).overlap);

    const auto coarse = make_sequence(kIdentity, {0.25}, 0.0, graded(3, 0.1), sphere());
    const AccountingReport s = energy_accounting(coarse, 0, 0.3, 4);
    REQUIRE(s.sections.size() == 4);
    for (const auto& q : s.sections) CHECK(q.partition_error() < 1e-10 * (1 + std::abs(q.total)));
    for (std::size_t j = 0; j < 4; ++j) CHECK(s.sections[j].total == doctest::Approx(s.section_eigenvalues[j]).epsilon(1e-8));
}

TEST_CASE("two-bubble family") {
    MeshGrading gr;
    gr.factor = 0.1;
    gr.center = Eigen::Vector3d(1, 0, 0);
    gr.antipodal = true;
    const auto mesh = std::make_shared<const SurfaceMesh>(icosphere(4, gr));
    const auto seq = make_two_bubble_sequence(1.0, -1.0, {0.25, 0.0625}, mesh, sphere());
    CHECK(seq.bubbles.size() == 2);
    CHECK(seq.bubble_energy() == doctest::Approx(8 * M_PI));
    for (const auto& en : seq.entries) CHECK(en.energy == doctest::Approx(8 * M_PI).epsilon(0.02));
    // each rescaled site converges to 1/ζ
    const SphereMap uk = *seq.entries[1].map;
    const double r = seq.entries[1].scale;
    const cplx zeta(0.5, 0.5);
    CHECK((uk.at_coordinate(1.0 + r * zeta) - seq.bubbles[0].omega.at_coordinate(zeta)).norm() < 0.1);
    CHECK((uk.at_coordinate(-1.0 + r * zeta) - seq.bubbles[1].omega.at_coordinate(zeta)).norm() < 0.1);
    const AccountingReport a = energy_accounting(seq, 1, 0.2);
    CHECK(a.energy.per_bubble[0] == doctest::Approx(a.energy.per_bubble[1]).epsilon(0.05));
    CHECK(a.energy.partition_error() < 1e-10);
}

TEST_CASE("neck profile of the identity bubble decays") {
    const auto seq = make_sequence(kIdentity, {1e-12}, 0.0, graded(2, 0.5), sphere());
    CHECK_THROWS_AS(neck_profile(make_sequence(kIdentity, {1e-3}, 0.0, graded(2, 0.5), sphere()), 0, 0), ConfigError);
    const NoNeckReport r = neck_profile(seq, 0, 0);
    CHECK(r.applicable);
    CHECK(r.decay.exponent >= 0.1);
    CHECK(r.decay.exponent == doctest::Approx(2.0).epsilon(0.05));
}
