#include <doctest.h>

#include "bubblespectra/errors.hpp"
#include "bubblespectra/mesh.hpp"

#include <cmath>
#include <filesystem>

using namespace bubblespectra;

TEST_CASE("icosphere combinatorics") {
    for (int level = 0; level <= 4; ++level) {
        const SurfaceMesh m = icosphere(level);
        CHECK(m.triangle_count() == 20 * (1 << (2 * level)));
        CHECK(m.euler_characteristic() == 2);
        for (const auto& v : m.vertices) CHECK(std::abs(v.norm() - 1.0) < 1e-12);
        for (double a : m.areas) CHECK(a > 0.0);
    }
    CHECK(icosphere(0).vertex_count() == 12);
    CHECK_THROWS_AS(icosphere(-1), ConfigError);
}

TEST_CASE("triangles are oriented outward") {
    const SurfaceMesh m = icosphere(2);
    for (int t = 0; t < m.triangle_count(); ++t) CHECK(m.normals[t].dot(m.vertices[m.triangles[t][0]]) > 0.0);
}

TEST_CASE("area converges to 4 pi at second order") {
    std::vector<double> err;
    for (int level = 1; level <= 4; ++level) err.push_back(4 * M_PI - icosphere(level).total_area());
    CHECK(std::abs(err[2]) / (4 * M_PI) < 5e-3);
    for (std::size_t i = 1; i < err.size(); ++i) CHECK(std::log2(err[i - 1] / err[i]) > 1.9);
}

TEST_CASE("integration") {
    const SurfaceMesh m = icosphere(3);
    const Eigen::VectorXd one = Eigen::VectorXd::Ones(m.vertex_count());
    CHECK(std::abs(integrate(m, one) - 4 * M_PI) / (4 * M_PI) < 5e-3);
    Eigen::VectorXd x3(m.vertex_count());
    for (int i = 0; i < m.vertex_count(); ++i) x3[i] = m.vertices[i].z();
    CHECK(std::abs(integrate(m, x3)) < 1e-10 * m.total_area());
    CHECK_THROWS_AS(integrate(m, Eigen::VectorXd::Ones(3)), DimensionMismatch);
}

TEST_CASE("P1 gradient reproduces linear fields on a triangle") {
    SurfaceMesh m;
    m.vertices = {Eigen::Vector3d(1, 0, 0), Eigen::Vector3d(0, 1, 0), Eigen::Vector3d(0, 0, 1)};
    m.triangles = {{0, 1, 2}};
    m.finalize();
    Eigen::VectorXd f(3);
    f << 0, 0, 1;  // x3
    const auto g = gradient(m, f);
    const Eigen::Vector3d n = Eigen::Vector3d(1, 1, 1).normalized();
    const Eigen::Vector3d expected = Eigen::Vector3d(0, 0, 1) - n.z() * n;
    CHECK((g[0] - expected).norm() < 1e-15);
    CHECK(std::abs(g[0].dot(m.normals[0])) < 1e-15);
}

TEST_CASE("stiffness pairs match quadrature of gradients") {
    const SurfaceMesh m = icosphere(2);
    const SpMat k = stiffness_matrix(m);
    Eigen::VectorXd f(m.vertex_count()), g(m.vertex_count());
    for (int i = 0; i < m.vertex_count(); ++i) {
        f[i] = std::sin(m.vertices[i].x()) + m.vertices[i].y();
        g[i] = m.vertices[i].z() * m.vertices[i].x() + m.vertices[i].x();
    }
    const auto gf = gradient(m, f);
    const auto gg = gradient(m, g);
    double q = 0.0;
    for (int t = 0; t < m.triangle_count(); ++t) q += m.areas[t] * gf[t].dot(gg[t]);
    CHECK(std::abs(f.dot(k * g) - q) < 1e-13 * std::abs(q));
    CHECK((k * Eigen::VectorXd::Ones(m.vertex_count())).norm() < 1e-12);
    const SpMat mm = mass_matrix(m);
    CHECK(std::abs(Eigen::VectorXd::Ones(m.vertex_count()).dot(mm * Eigen::VectorXd::Ones(m.vertex_count())) -
                   m.total_area()) < 1e-12);
    CHECK(std::abs(lumped_mass(m).sum() - m.total_area()) < 1e-12);
}

TEST_CASE("energy of a smooth field converges at first order or better") {
    // E(x3) on the unit sphere = (1/2)∫|∇x3|² = 4π/3
    std::vector<double> err;
    for (int level = 1; level <= 4; ++level) {
        const SurfaceMesh m = icosphere(level);
        Eigen::VectorXd f(m.vertex_count());
        for (int i = 0; i < m.vertex_count(); ++i) f[i] = m.vertices[i].z();
        const double e = 0.5 * f.dot(stiffness_matrix(m) * f);
        err.push_back(std::abs(e - 4 * M_PI / 3));
    }
    for (std::size_t i = 1; i < err.size(); ++i) CHECK(std::log2(err[i - 1] / err[i]) > 1.0);
}

TEST_CASE("graded mesh is finer near the centre") {
    MeshGrading g;
    g.factor = 0.25;
    const SurfaceMesh m = icosphere(3, g);
    const SurfaceMesh u = icosphere(3);
    CHECK(m.euler_characteristic() == 2);
    for (const auto& v : m.vertices) CHECK(std::abs(v.norm() - 1.0) < 1e-12);
    for (double a : m.areas) CHECK(a > 0.0);
    const double fine = m.local_mesh_size(g.center, 0.05);
    CHECK(fine < 0.4 * u.local_mesh_size(g.center, 0.05));
    CHECK(m.local_mesh_size(-g.center, 0.2) < 1.2 * u.local_mesh_size(-g.center, 0.2));
}

TEST_CASE("mesh cache round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "bubblespectra_mesh_cache_test";
    std::filesystem::remove_all(dir);
    MeshGrading g;
    g.factor = 0.5;
    const SurfaceMesh a = cached_icosphere(2, g, dir.string());
    const SurfaceMesh b = cached_icosphere(2, g, dir.string());
    REQUIRE(a.vertex_count() == b.vertex_count());
    for (int i = 0; i < a.vertex_count(); ++i) CHECK((a.vertices[i] - b.vertices[i]).norm() == 0.0);
    CHECK(a.triangles == b.triangles);
    REQUIRE(b.grading.has_value());
    CHECK(b.grading->factor == 0.5);
    std::filesystem::remove_all(dir);
}

TEST_CASE("cylinder quadrature and spectral derivatives") {
    const CylinderGrid c = cylinder(3.0, 33, 16);
    const Eigen::MatrixXd one = Eigen::MatrixXd::Ones(c.n_t(), c.n_theta());
    CHECK(std::abs(c.integrate(one) - 4 * M_PI * 3.0) < 1e-12);

    const Eigen::MatrixXd f = c.sample([](double, double th) { return std::cos(th); });
    const Eigen::MatrixXd df = c.d_theta(f);
    const Eigen::MatrixXd ex = c.sample([](double, double th) { return -std::sin(th); });
    CHECK((df - ex).cwiseAbs().maxCoeff() < 1e-14);
    const Eigen::MatrixXd sq = df.cwiseProduct(df);
    CHECK(std::abs(c.slice_integral(sq, 5) - M_PI) < 1e-12);
    CHECK((c.d_theta2(f) + f).cwiseAbs().maxCoeff() < 1e-13);

    CHECK_THROWS_AS(cylinder(3.0, 8, 16), ResolutionError);
    CHECK_THROWS_AS(cylinder(3.0, 32, 9), ResolutionError);
}

TEST_CASE("axial finite differences are second order") {
    std::vector<double> err;
    for (int n : {33, 65, 129}) {
        const CylinderGrid c = cylinder(2.0, n, 8);
        const Eigen::MatrixXd f = c.sample([](double t, double) { return std::sin(t); });
        const Eigen::MatrixXd ex = c.sample([](double t, double) { return std::cos(t); });
        const Eigen::MatrixXd ex2 = c.sample([](double t, double) { return -std::sin(t); });
        err.push_back(std::max((c.d_t(f) - ex).cwiseAbs().maxCoeff(), (c.d_t2(f) - ex2).cwiseAbs().maxCoeff()));
    }
    CHECK(std::log2(err[0] / err[1]) > 1.8);
    CHECK(std::log2(err[1] / err[2]) > 1.8);
}
