#include <doctest.h>

#include "bubblespectra/errors.hpp"
#include "bubblespectra/maps.hpp"

#include <cmath>

using namespace bubblespectra;

namespace {

std::shared_ptr<const SurfaceMesh> sphere_mesh(int level) {
    return std::make_shared<const SurfaceMesh>(icosphere(level));
}

const ManifoldPtr& s2() {
    static const ManifoldPtr s = std::make_shared<Sphere2>();
    return s;
}

}  // namespace

TEST_CASE("stereographic round trip") {
    for (double x : {-0.9, -0.2, 0.0, 0.4, 0.99}) {
        const Eigen::Vector3d y = Eigen::Vector3d(x, 0.3, std::sqrt(std::max(0.0, 1 - x * x - 0.09))).normalized();
        CHECK((homogeneous_to_sphere(sphere_to_homogeneous(y)) - y).norm() < 1e-14);
        CHECK((homogeneous_to_sphere(sphere_to_homogeneous(-y)) + y).norm() < 1e-14);
    }
    CHECK((inverse_stereographic(0.0) - Eigen::Vector3d(0, 0, -1)).norm() < 1e-15);
    CHECK((inverse_stereographic(1.0) - Eigen::Vector3d(1, 0, 0)).norm() < 1e-15);
}

TEST_CASE("complex parsing") {
    CHECK(parse_complex("1.5") == cplx(1.5, 0));
    CHECK(parse_complex("2i") == cplx(0, 2));
    CHECK(parse_complex("1-0.5i") == cplx(1, -0.5));
    CHECK(parse_complex("-i") == cplx(0, -1));
    CHECK(parse_complex("1e-3+2e-1i") == cplx(1e-3, 0.2));
    CHECK_THROWS_AS(parse_complex("abc"), ConfigError);
}

TEST_CASE("rational map energies") {
    auto mesh = sphere_mesh(4);
    const MapField id = rational_map({0.0, 1.0}, {1.0}, mesh, s2());
    for (int v = 0; v < mesh->vertex_count(); ++v) CHECK((id.value(v) - mesh->vertices[v]).norm() < 1e-14);
    CHECK(std::abs(dirichlet_energy(id) - 4 * M_PI) / (4 * M_PI) < 0.01);

    const MapField sq = rational_map({0.0, 0.0, 1.0}, {1.0}, mesh, s2());
    CHECK(std::abs(dirichlet_energy(sq) - 8 * M_PI) / (8 * M_PI) < 0.01);

    const MapField c = rational_map({2.0}, {1.0}, mesh, s2());
    CHECK(dirichlet_energy(c) < 1e-20);
    CHECK(c.family->is_constant());
    CHECK((c.value(0) - inverse_stereographic(2.0)).norm() < 1e-15);

    CHECK_THROWS_AS(SphereMap({0.0}, {0.0}), ConfigError);
    CHECK_THROWS_AS(SphereMap({-1.0, 1.0}, {-1.0, 0.0, 1.0}), ConfigError);  // (z-1)/(z²-1)
}

TEST_CASE("degree ratio tends to d under refinement") {
    double prev = 1e9;
    for (int level = 2; level <= 4; ++level) {
        auto mesh = sphere_mesh(level);
        const double r = dirichlet_energy(rational_map({0, 0, 0, 1.0}, {1.0}, mesh, s2())) /
                         dirichlet_energy(rational_map({0, 1.0}, {1.0}, mesh, s2()));
        CHECK(std::abs(r - 3.0) < prev);
        prev = std::abs(r - 3.0);
    }
    CHECK(prev < 0.03);
}

TEST_CASE("poles go to the north pole exactly") {
    const SphereMap inv({1.0}, {0.0, 1.0});  // 1/z
    const Eigen::Vector3d south(0, 0, -1);
    CHECK((inv(south) - Eigen::Vector3d(0, 0, 1)).norm() == 0.0);
}

TEST_CASE("charts") {
    const auto d = ConformalChart::dilation(cplx(0.5, 0.1), 0.25);
    const cplx z(0.3, -0.7);
    CHECK(std::abs(d.forward(z) - (cplx(0.5, 0.1) + 0.25 * z)) < 1e-15);
    CHECK(std::abs(d.inverse(d.forward(z)) - z) < 1e-14);
    CHECK(d.conformal_factor(z) == doctest::Approx(2 * 0.0625));

    const auto n = ConformalChart::neck(0.0, std::exp(-6.0));
    for (double t : {-2.0, 0.0, 1.5})
        for (double th : {0.0, 1.0, 4.0}) {
            const cplx s(t, th);
            CHECK(n.conformal_factor(s) == doctest::Approx(2 * std::exp(-12.0) * std::exp(-2 * t)).epsilon(1e-14));
            CHECK(std::abs(std::exp(-n.inverse(n.forward(s))) - std::exp(-s)) < 1e-12);
        }

    const auto m = ConformalChart::mobius(2.0, 1.0, cplx(0, 1), 3.0);
    CHECK(std::abs(m.inverse(m.forward(z)) - z) < 1e-14);
    const Eigen::Vector3d y = inverse_stereographic(z);
    CHECK((m.act_on_sphere(y) - inverse_stereographic(m.forward(z))).norm() < 1e-14);
    CHECK_THROWS_AS(ConformalChart::mobius(1.0, 2.0, 2.0, 4.0), ConfigError);
}

TEST_CASE("composition is analytic for rational families") {
    auto mesh = sphere_mesh(3);
    const MapField id = rational_map({0.0, 1.0}, {1.0}, mesh, s2());
    const MapField same = compose(id, ConformalChart::identity());
    CHECK((same.values - id.values).norm() == 0.0);
    CHECK_FALSE(same.interpolated);

    const auto chart = ConformalChart::mobius(2.0, 0.0, 0.0, 1.0);
    const MapField moved = compose(id, chart);
    for (int v = 0; v < mesh->vertex_count(); v += 17)
        CHECK((moved.value(v) - chart.act_on_sphere(mesh->vertices[v])).norm() < 1e-14);
}

TEST_CASE("conformal invariance of the energy under Möbius charts") {
    auto mesh = sphere_mesh(4);
    const MapField id = rational_map({0.0, 1.0}, {1.0}, mesh, s2());
    const double e0 = dirichlet_energy(id);
    for (const char* spec : {"mobius:2,0,0,1", "dilation:0.3+0.2i,0.2", "mobius:1,0.5i,0,1", "mobius:3,1,1,1",
                             "dilation:-0.4,5"}) {
        const double e = dirichlet_energy(compose(id, parse_chart_spec(spec)));
        CHECK(std::abs(e - e0) / e0 < 0.02);
    }
}

TEST_CASE("interpolated composition is flagged") {
    auto mesh = sphere_mesh(3);
    const MapField t = torus_map(1.0, 2.0, mesh, std::make_shared<CliffordTorus>());
    const MapField moved = compose(t, ConformalChart::mobius(1.2, 0.0, 0.0, 1.0));
    CHECK(moved.interpolated);
    moved.validate();
    const MapField same = compose(t, ConformalChart::identity());
    CHECK((same.values - t.values).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("map spec strings") {
    auto mesh = sphere_mesh(2);
    const MapField u = parse_map_spec("compose(rational:[0,1]/[1], dilation:0,0.5)", mesh, s2());
    REQUIRE(u.family);
    const MapField ref = sample_map(SphereMap({0.0, 1.0}, {1.0}).compose(ConformalChart::dilation(0.0, 0.5)), mesh, s2());
    CHECK((u.values - ref.values).norm() == 0.0);
    CHECK_THROWS_AS(parse_map_spec("polynomial:[1]", mesh, s2()), ConfigError);
    CHECK_THROWS_AS(parse_map_spec("rational:[1,2]", mesh, s2()), ConfigError);
    const MapField c = parse_map_spec("constant:0,0,1", mesh, make_manifold("sphere2+aug:2"));
    CHECK(c.values.rows() == 9);
}

TEST_CASE("augmentation leaves the energy unchanged") {
    auto mesh = sphere_mesh(3);
    const MapField a = parse_map_spec("rational:[0,0,1]/[1,0.5]", mesh, s2());
    const MapField b = parse_map_spec("rational:[0,0,1]/[1,0.5]", mesh, make_manifold("sphere2+aug:3"));
    CHECK(std::abs(dirichlet_energy(a) - dirichlet_energy(b)) < 1e-12 * dirichlet_energy(a));
    auto t = std::make_shared<CliffordTorus>();
    const MapField c = torus_map(1.0, 2.0, mesh, t);
    const MapField d = torus_map(1.0, 2.0, mesh, make_manifold("clifford+aug:2"));
    CHECK(std::abs(dirichlet_energy(c) - dirichlet_energy(d)) < 1e-12 * dirichlet_energy(c));
}

TEST_CASE("harmonic residual") {
    std::vector<double> res;
    for (int level = 3; level <= 5; ++level) {
        auto mesh = sphere_mesh(level);
        res.push_back(harmonic_residual(rational_map({0.0, 1.0}, {1.0}, mesh, s2())));
    }
    CHECK(res[1] / res[0] <= 0.6);
    CHECK(res[2] / res[1] <= 0.6);

    auto mesh = sphere_mesh(3);
    CHECK(harmonic_residual(constant_map(Eigen::Vector3d(0, 0, 1), mesh, s2())) == 0.0);

    std::vector<double> bad;
    for (int level = 3; level <= 5; ++level) {
        auto m = sphere_mesh(level);
        const MapField u = map_from_function(
            [](const Eigen::Vector3d& y) -> Vec { return (y + Eigen::Vector3d(0.3 * y.z(), 0, 0)).normalized(); }, m,
            s2(), "perturbed");
        bad.push_back(harmonic_residual(u));
    }
    CHECK(bad[2] > 0.5 * bad[0]);
    CHECK(bad[2] > 0.1);
}

TEST_CASE("identity bubble in neck coordinates") {
    const double L = 3.0;
    const CylinderGrid grid = cylinder(L, 121, 32);
    const SphereMap id({0.0, 1.0}, {1.0});
    const auto neck = ConformalChart::neck(0.0, std::exp(-2 * L));
    const CylinderField v = pull_to_neck(id, neck, grid);

    // analytic derivatives agree with grid differentiation
    const Eigen::MatrixXd num = grid.d_theta(v.value[0]);
    CHECK((num - v.d_theta[0]).cwiseAbs().maxCoeff() < 1e-10);

    const HopfReport h = hopf_differential(v);
    CHECK(h.max_phi_ratio < 1e-8);
    CHECK(h.max_relative_imbalance < 1e-10);

    // |∇v|² = 8s/(1+s)² with s = ρ²e^{-2t}
    const Eigen::MatrixXd g = v.grad_sq();
    for (int i = 0; i < grid.n_t(); i += 10) {
        const double s = std::exp(-4 * L - 2 * grid.t(i));
        CHECK(g(i, 3) == doctest::Approx(8 * s / ((1 + s) * (1 + s))).epsilon(1e-10));
    }
    const double e1 = grid.slice_integral(g, grid.nearest_index(1.0));
    const double e2 = grid.slice_integral(g, grid.nearest_index(2.0));
    CHECK(std::log(e1 / e2) == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("slice imbalance of a non-conformal field matches direct quadrature") {
    const CylinderGrid grid = cylinder(2.0, 201, 32);
    auto f = [](double t, double th) {
        const double r = 1.0 / std::cosh(t);
        return Eigen::Vector3d(std::cos(th) * r, std::sin(th) * r, 0.0);
    };
    const CylinderField v = cylinder_field(grid, f);
    const HopfReport h = hopf_differential(v);
    for (int i : {20, 100, 170}) {
        const double t = grid.t(i);
        // |∂_t u|² = tanh² sech², |∂_θ u|² = sech²
        const double expected = 2 * M_PI * (std::pow(std::tanh(t), 2) - 1.0) / std::pow(std::cosh(t), 2);
        CHECK(h.slice_balance[i] == doctest::Approx(expected).epsilon(1e-3));
    }
    CHECK(h.max_relative_imbalance > 0.1);

    const CylinderField c = cylinder_field(grid, [](double, double) { return Eigen::Vector3d(0, 0, 1); });
    CHECK(hopf_differential(c).phi.cwiseAbs().maxCoeff() == 0.0);
}
