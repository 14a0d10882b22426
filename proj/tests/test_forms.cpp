#include <doctest.h>

#include "bubblespectra/errors.hpp"
#include "bubblespectra/forms.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace bubblespectra;

namespace {

std::shared_ptr<const SurfaceMesh> sphere_mesh(int level) {
    return std::make_shared<const SurfaceMesh>(icosphere(level));
}

MapField identity_map(int level, ManifoldPtr target) {
    return rational_map({0.0, 1.0}, {1.0}, sphere_mesh(level), std::move(target));
}

double max_abs(const Mat& a) { return a.cwiseAbs().maxCoeff(); }

/// X = P(u) a at every vertex: a conformal field along the identity map.
Mat projected_constant(const MapField& u, const Vec& a) {
    Mat x(u.values.rows(), u.vertex_count());
    for (int v = 0; v < u.vertex_count(); ++v) x.col(v) = u.target->projector_at(u.values.col(v)) * a;
    return x;
}

double smallest_eigenvalue(const SpMat& a) {
    Eigen::SelfAdjointEigenSolver<Mat> es(Mat(a), Eigen::EigenvaluesOnly);
    return es.eigenvalues()[0];
}

}  // namespace

TEST_CASE("frames follow the canonical projection rule") {
    auto s2 = std::make_shared<Sphere2>();
    auto mesh = std::make_shared<SurfaceMesh>();
    mesh->vertices = {Eigen::Vector3d(0, 0, 1), Eigen::Vector3d(1, 0, 0), Eigen::Vector3d(0, 1, 0)};
    mesh->triangles = {{0, 1, 2}};
    mesh->finalize();
    const MapField u = map_from_function([](const Eigen::Vector3d& y) { return Vec(y); }, mesh, s2, "test");
    const TangentFrameBasis b = build_frames(u);
    CHECK(b.n == 2);
    CHECK((b.frames[0] - (Mat(3, 2) << 1, 0, 0, 1, 0, 0).finished()).norm() < 1e-15);
    CHECK((b.frames[1] - (Mat(3, 2) << 0, 0, 1, 0, 0, 1).finished()).norm() < 1e-15);

    const MapField t = torus_map(0.7, 1.3, sphere_mesh(2), make_manifold("clifford+aug:4"));
    const TangentFrameBasis bt = build_frames(t);
    for (int v = 0; v < t.vertex_count(); ++v) {
        const Mat& e = bt.frames[v];
        CHECK((e.transpose() * e - Mat::Identity(2, 2)).norm() <= 1e-12);
        CHECK((t.target->projector_at(t.values.col(v)) * e - e).norm() <= 1e-10);
    }
}

TEST_CASE("sections reconstruct tangent vectors") {
    const MapField u = torus_map(0.5, 1.0, sphere_mesh(1), make_manifold("clifford"));
    const AssembledForms f = assemble(u);
    std::mt19937_64 rng(3);
    const Section s = f.section(random_section(*f.basis, rng));
    const Mat x = s.ambient();
    for (int v = 0; v < u.vertex_count(); ++v)
        CHECK((u.target->projector_at(u.values.col(v)) * x.col(v) - x.col(v)).norm() <= 1e-10);
    CHECK((f.basis->from_ambient(x) - s.coeffs).norm() < 1e-12);
    CHECK_THROWS_AS(f.basis->to_ambient(Vec::Zero(3)), DimensionMismatch);
}

TEST_CASE("assembled forms are symmetric") {
    for (const char* key : {"sphere2", "sphere2+aug:4"}) {
        const AssembledForms f = assemble(identity_map(2, make_manifold(key)));
        for (const SpMat& a : {f.index_form(), f.scalar_product(), f.K, f.M0, f.C}) {
            const Mat d(a);
            CHECK(max_abs(d - d.transpose()) <= 1e-12 * max_abs(d));
        }
    }
    const AssembledForms q = assemble(torus_map(0.7, 1.3, sphere_mesh(2), make_manifold("clifford+aug:4")),
                                      CurvatureRule::quadrature);
    const Mat c(q.C);
    CHECK(max_abs(c - c.transpose()) <= 1e-12 * max_abs(c));
}

TEST_CASE("constant map: no curvature term and K has only frame constants in its kernel") {
    const MapField u = constant_map(Eigen::Vector3d(0, 0, 1), sphere_mesh(1), make_manifold("sphere2"));
    const AssembledForms f = assemble(u);
    CHECK(Mat(f.C).norm() < 1e-12);
    CHECK(Mat(f.index_form() - f.K).norm() < 1e-12);
    CHECK(Mat(f.scalar_product() - f.M0).norm() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Mat> es{Mat(f.K), Eigen::EigenvaluesOnly};
    const Vec ev = es.eigenvalues();
    CHECK(std::abs(ev[0]) < 1e-12);
    CHECK(std::abs(ev[1]) < 1e-12);
    CHECK(ev[2] > 1e-2);
}

TEST_CASE("scalar product is positive definite after augmentation") {
    CHECK(smallest_eigenvalue(assemble(identity_map(2, make_manifold("sphere2+aug:4"))).scalar_product()) > 0.0);
    const ManifoldPtr cliff = make_manifold("clifford+aug:4");
    const AssembledForms f = assemble(torus_map(0.7, 1.3, sphere_mesh(2), cliff));
    CHECK(smallest_eigenvalue(f.scalar_product()) > 0.0);
    // pointwise the curvature term is PSD, so C ⪰ 0 up to discretization
    CHECK(smallest_eigenvalue(assemble(torus_map(0.7, 1.3, sphere_mesh(2), cliff), CurvatureRule::quadrature).C) >
          -1e-12);
}

TEST_CASE("conformal fields are asymptotically null for the identity map") {
    std::vector<double> ratio;
    for (int level = 2; level <= 4; ++level) {
        const MapField u = identity_map(level, make_manifold("sphere2"));
        const AssembledForms f = assemble(u);
        const Vec c = f.basis->from_ambient(projected_constant(u, Eigen::Vector3d(0.3, -0.5, 0.8)));
        const double q = cross_form(f, c, c, FormKind::index);
        ratio.push_back(std::abs(q) / w12_norm_sq(f, c));
    }
    CHECK(ratio[2] < 0.01);
    CHECK(ratio[1] < ratio[0]);
    CHECK(ratio[2] < ratio[1]);
}

TEST_CASE("curvature form tends to the quadrature rule") {
    const MapField u = identity_map(4, make_manifold("sphere2"));
    const AssembledForms nodal = assemble(u);
    const AssembledForms quad = assemble(u, CurvatureRule::quadrature);
    const Vec c = nodal.basis->from_ambient(projected_constant(u, Eigen::Vector3d(1, 2, -1)));
    const double a = cross_form(nodal, c, c, FormKind::curvature);
    const double b = cross_form(quad, c, c, FormKind::curvature);
    // continuum value: ∫ 2|X|² for the identity on S²
    CHECK(std::abs(a - b) < 0.02 * b);
}

TEST_CASE("polarization identity for cross_form") {
    const AssembledForms f = assemble(identity_map(2, make_manifold("sphere2+aug:4")));
    std::mt19937_64 rng(11);
    for (int k = 0; k < 5; ++k) {
        const Vec x = random_section(*f.basis, rng), y = random_section(*f.basis, rng);
        for (FormKind w : {FormKind::index, FormKind::scalar, FormKind::curvature}) {
            const double lhs = 2 * cross_form(f, x, y, w);
            const double rhs = cross_form(f, x + y, x + y, w) - cross_form(f, x, x, w) - cross_form(f, y, y, w);
            const double scale = std::abs(cross_form(f, x, x, w)) + std::abs(cross_form(f, y, y, w));
            CHECK(std::abs(lhs - rhs) <= 1e-12 * scale);
        }
        CHECK(cross_form(f, x, x, FormKind::scalar) == doctest::Approx(x.dot(f.scalar_product() * x)));
    }
    CHECK_THROWS_AS(cross_form(f, Vec::Zero(4), Vec::Zero(4), FormKind::index), DimensionMismatch);
}

TEST_CASE("finite-difference oracle agrees with the assembled index form") {
    const DirichletFunctional dirichlet;
    for (const char* key : {"sphere2", "sphere2+aug:4"}) {
        const MapField u = identity_map(2, make_manifold(key));
        const AssembledForms f = assemble(u);
        std::mt19937_64 rng(7);
        for (int k = 0; k < 20; ++k) {
            const Vec c = random_section(*f.basis, rng);
            const double exact = cross_form(f, c, c, FormKind::index);
            const FdResult fd = fd_second_variation(dirichlet, u, f.basis->to_ambient(c));
            CHECK(std::abs(fd.value - exact) <= std::max(1e-6 * std::abs(exact), 1e-8 * w12_norm_sq(f, c)));
            CHECK(std::abs(fd.value - exact) <= 1e-5 * std::abs(exact));
        }
    }
    const MapField t = torus_map(0.7, 1.3, sphere_mesh(2), make_manifold("clifford+aug:4"));
    const AssembledForms ft = assemble(t);
    std::mt19937_64 rng(8);
    for (int k = 0; k < 20; ++k) {
        const Vec c = random_section(*ft.basis, rng);
        const double exact = cross_form(ft, c, c, FormKind::index);
        const double fd = fd_second_variation(dirichlet, t, ft.basis->to_ambient(c)).value;
        CHECK(std::abs(fd - exact) <= std::max(1e-6 * std::abs(exact), 1e-8 * w12_norm_sq(ft, c)));
    }
}

TEST_CASE("oracle on a constant map is the stiffness form") {
    const DirichletFunctional dirichlet;
    const MapField u = constant_map(Eigen::Vector3d(0.6, 0, 0.8), sphere_mesh(2), make_manifold("sphere2"));
    const AssembledForms f = assemble(u);
    std::mt19937_64 rng(5);
    for (int k = 0; k < 20; ++k) {
        const Vec c = random_section(*f.basis, rng);
        const double kk = c.dot(f.K * c);
        CHECK(std::abs(fd_second_variation(dirichlet, u, f.basis->to_ambient(c)).value - kk) <= 1e-8 * kk);
    }
    CHECK(fd_second_variation(dirichlet, u, Mat::Zero(3, u.vertex_count())).value == 0.0);
    const Vec c = random_section(*f.basis, rng);
    CHECK_THROWS_AS(fd_second_variation(dirichlet, u, f.basis->to_ambient(c), 1.0), ResolutionError);
    Mat normal = Mat::Zero(3, u.vertex_count());
    normal.col(0) = u.values.col(0);
    CHECK_THROWS_AS(fd_second_variation(dirichlet, u, normal), NonTangentInput);
}

TEST_CASE("general form without a two-form reduces to the Dirichlet index form") {
    const MapField u = identity_map(1, make_manifold("sphere2"));
    const GeneralForms g = assemble_general(u, DirichletFunctional{});
    const Mat a(g.dirichlet.index_form());
    CHECK(max_abs(g.index - a) <= 1e-6 * max_abs(a));
    CHECK(max_abs(g.index - g.index.transpose()) == 0.0);
}

TEST_CASE("two-form terms vanish at a constant map") {
    const MapField u = constant_map(Eigen::Vector3d(0, 0.6, 0.8), sphere_mesh(1), make_manifold("sphere2"));
    const GeneralForms g = assemble_general(u, TwoFormFunctional(volume_calibration_form(1.0, 3)));
    CHECK(max_abs(g.deviation()) <= 1e-6 * max_abs(Mat(g.dirichlet.K)));
}

TEST_CASE("two-form pullback integrates the enclosed volume") {
    // ∫u*(x1 dx2∧dx3) over the identity is the volume of the polyhedron
    const MapField u = identity_map(3, make_manifold("sphere2"));
    const TwoFormFunctional f(volume_calibration_form(1.0, 3));
    double vol = 0.0, exact = 0.0;
    for (const auto& tri : u.mesh->triangles) {
        Mat c(3, 3);
        for (int i = 0; i < 3; ++i) c.col(i) = u.values.col(tri[i]);
        vol += f.pullback_integral(c);
        exact += c.determinant() / 6.0;
    }
    CHECK(std::abs(vol - exact) < 1e-13);
    CHECK(std::abs(vol - 4 * M_PI / 3) < 0.05);
}

TEST_CASE("second variation along a conformal field is linear in the two-form scale") {
    const MapField u = identity_map(2, make_manifold("sphere2"));
    const Mat x = projected_constant(u, Eigen::Vector3d(0.2, 0.9, -0.4));
    std::vector<double> q;
    for (double H : {0.0, 0.1, 0.2})
        q.push_back(fd_second_variation(TwoFormFunctional(volume_calibration_form(H, 3)), u, x).value);
    CHECK(std::abs(q[2] - 2 * q[1] + q[0]) <= 1e-3 * std::max(std::abs(q[1] - q[0]), 1e-12));
}

TEST_CASE("general-form deviation is controlled by the gradient of the map") {
    const MapField u = identity_map(1, make_manifold("sphere2"));
    const GeneralForms g = assemble_general(u, TwoFormFunctional(volume_calibration_form(0.5, 3)));
    const Mat d = g.deviation();
    CHECK(max_abs(d - d.transpose()) == 0.0);
    CHECK(max_abs(d) > 1e-6);
    const DeviationBound b = deviation_bound(g, u, 20, 1);
    CHECK(b.samples == 20);
    CHECK(std::isfinite(b.max_ratio));
    CHECK(b.max_ratio < 10.0);
    CHECK_THROWS_AS(assemble_general(identity_map(4, make_manifold("sphere2")), DirichletFunctional{}), ResourceLimit);
}

TEST_CASE("curvature term is conformally covariant") {
    const ManifoldPtr s2 = make_manifold("sphere2");
    const MapField u = identity_map(4, s2);
    const Eigen::Vector3d a(0.4, -0.7, 0.5);
    for (const ConformalChart& m : {ConformalChart::dilation(cplx(0.2, -0.1), 0.8),
                                    ConformalChart::mobius(1.0, cplx(0.3, 0.2), cplx(-0.1, 0.1), 1.0)}) {
        const MapField um = compose(u, m);
        const AssembledForms f = assemble(u), fm = assemble(um);
        const Vec x = f.basis->from_ambient(projected_constant(u, a));
        const Vec y = fm.basis->from_ambient(projected_constant(um, a));
        const double cu = cross_form(f, x, x, FormKind::curvature);
        const double cm = cross_form(fm, y, y, FormKind::curvature);
        CHECK(std::abs(cu - cm) <= 0.02 * cu);
    }
}

TEST_CASE("triplet export") {
    const AssembledForms f = assemble(identity_map(1, make_manifold("sphere2")));
    const auto path = std::filesystem::temp_directory_path() / "bubblespectra_triplets.txt";
    write_triplets(f.K, path.string());
    std::ifstream in(path);
    std::string hash;
    long rows, cols, nnz;
    in >> hash >> rows >> cols >> nnz;
    CHECK(rows == f.dof());
    CHECK(nnz == f.K.nonZeros());
    Mat k = Mat::Zero(rows, cols);
    int i, j;
    double v;
    while (in >> i >> j >> v) k(i, j) = v;
    CHECK(max_abs(k - Mat(f.K)) == 0.0);
    std::filesystem::remove(path);
}
