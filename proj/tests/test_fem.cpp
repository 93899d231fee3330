#include <doctest.h>

#include "geoflow/coefficients.hpp"
#include "geoflow/errors.hpp"
#include "geoflow/fem.hpp"
#include "geoflow/mesh.hpp"
#include "geoflow/metric.hpp"
#include "geoflow/random.hpp"
#include "geoflow/spectral.hpp"

using namespace geoflow;
using cdouble = std::complex<double>;

namespace {

/// Tetrahedron whose first face is the unit right triangle in the z = 0 plane.
TriangleMesh corner_tetrahedron() {
    std::vector<Eigen::Vector3d> v{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, -1}};
    return TriangleMesh(v, {{{0, 1, 2}}, {{0, 3, 1}}, {{1, 3, 2}}, {{0, 2, 3}}});
}

} // namespace

TEST_SUITE("fem_operators") {

TEST_CASE("gradient of constants vanishes and of x is (1,0) on a flat triangle") {
    const auto mesh = build_icosphere(1);
    const auto a = assemble(mesh, RoughMetric::induced(mesh));
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(mesh.num_vertices());
    CHECK(a->pair.grad(ones).cwiseAbs().maxCoeff() < 1e-13);

    const auto tet = corner_tetrahedron();
    const auto p = assemble(tet, RoughMetric::induced(tet));
    const Eigen::VectorXd x = Eigen::Vector4d(0, 1, 0, 0);
    const Eigen::VectorXd g = p->pair.grad(x);
    // Local frame of triangle 0 has e1 along p1 - p0 = x axis.
    CHECK(g[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(std::abs(g[1]) < 1e-14);
}

TEST_CASE("adjoint identity") {
    for (auto mass : {MassKind::consistent, MassKind::lumped}) {
        const auto mesh = build_icosphere(1);
        const auto a = assemble(mesh, RoughMetric::induced(mesh), mass);
        CounterRng rng(3);
        for (int k = 0; k < 5; ++k) {
            const Eigen::VectorXd u = rng.normal_vector(mesh.num_vertices());
            const Eigen::VectorXd w = rng.normal_vector(2 * mesh.num_triangles());
            const double lhs = a->spaces.covector_inner(a->pair.grad(u), w);
            const double rhs = a->spaces.inner(u, a->pair.divergence(w));
            const double scale = a->spaces.covector_norm(a->pair.grad(u)) * a->spaces.covector_norm(w) +
                                 a->spaces.norm(u) * a->spaces.norm(a->pair.divergence(w));
            CHECK(std::abs(lhs + rhs) <= 1e-12 * scale);
        }
    }
}

TEST_CASE("operator structure") {
    const auto mesh = build_icosphere(1);
    const auto a = assemble(mesh, RoughMetric::induced(mesh));
    const int nT = mesh.num_triangles();
    const auto lap = make_operator(a, CoefficientField::identity(nT));
    const auto two = make_operator(a, CoefficientField::identity(nT, 2.0));
    CHECK((SparseMatrix(two.stiffness() - 2.0 * lap.stiffness())).norm() <= 1e-14 * lap.stiffness().norm());

    CounterRng rng(5);
    const auto A = random_symmetric_field(nT, 0.5, 3.0, rng.substream(1));
    const auto L = make_operator(a, A);
    for (int k = 0; k < 5; ++k) {
        const Eigen::VectorXd u = rng.normal_vector(mesh.num_vertices());
        const double lhs = a->spaces.inner(L.apply(u), u);
        const double J = L.form(Eigen::VectorXcd(u.cast<cdouble>()), Eigen::VectorXcd(u.cast<cdouble>())).real();
        CHECK(std::abs(lhs - J) <= 1e-12 * std::abs(J));
        const Eigen::VectorXd v = rng.normal_vector(mesh.num_vertices());
        // Self-adjoint in the vertex inner product.
        CHECK(std::abs(a->spaces.inner(L.apply(u), v) - a->spaces.inner(u, L.apply(v))) <=
              1e-12 * a->spaces.norm(L.apply(u)) * a->spaces.norm(v));
    }
    CHECK(L.apply(Eigen::VectorXd(Eigen::VectorXd::Ones(mesh.num_vertices()))).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("ellipticity violations are rejected") {
    const auto mesh = build_icosphere(0);
    const auto a = assemble(mesh, RoughMetric::induced(mesh));
    std::vector<Eigen::Matrix2d> bad(mesh.num_triangles(), Eigen::Matrix2d::Identity());
    bad[3] << 1.0, 0.0, 0.0, -0.1;
    CHECK_THROWS_AS(make_operator(a, CoefficientField::from_real(bad)), EllipticityError);
    auto claimed = CoefficientField::identity(mesh.num_triangles());
    claimed.kappa = 2.0;
    CHECK_THROWS_AS(make_operator(a, claimed), EllipticityError);
    Eigen::VectorXcd b = Eigen::VectorXcd::Ones(mesh.num_vertices());
    b[2] = cdouble(-1.0, 0.0);
    CHECK_THROWS_AS(make_operator(a, CoefficientField::identity(mesh.num_triangles()), b), EllipticityError);
}

TEST_CASE("orthogonal splitting into constants and mean-zero part") {
    const auto mesh = build_icosphere(2);
    const auto a = assemble(mesh, RoughMetric::induced(mesh));
    CounterRng rng(8);
    const Eigen::VectorXd u = rng.normal_vector(mesh.num_vertices());
    const Eigen::VectorXd r = a->spaces.mean_zero_part(u);
    const Eigen::VectorXd c = u - r;
    CHECK(std::abs(a->spaces.mean(r)) < 1e-13 * a->spaces.norm(u));
    CHECK(std::abs(a->spaces.inner(c, r)) < 1e-12 * a->spaces.norm(u) * a->spaces.norm(u));
    CHECK((c.array() - c[0]).abs().maxCoeff() < 1e-13);
}

}
