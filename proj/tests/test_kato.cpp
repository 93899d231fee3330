#include <doctest.h>

#include "geoflow/coefficients.hpp"
#include "geoflow/errors.hpp"
#include "geoflow/kato.hpp"
#include "geoflow/metric.hpp"
#include "geoflow/spectral.hpp"

using namespace geoflow;

namespace {

std::shared_ptr<const Assembly> sphere(int level) {
    const auto mesh = build_icosphere(level);
    return assemble(mesh, RoughMetric::induced(mesh));
}

Eigen::MatrixXcd complex_probes(const Assembly& a, std::uint64_t seed) {
    return kato_probes(a, 10, 10, CounterRng(seed)).cast<cdouble>();
}

} // namespace

TEST_SUITE("kato") {

TEST_CASE("probes are mean-zero and normalized") {
    const auto a = sphere(2);
    const Eigen::MatrixXd P = kato_probes(*a, 10, 10, CounterRng(1));
    CHECK(P.cols() == 20);
    for (Eigen::Index j = 0; j < P.cols(); ++j) {
        CHECK(std::abs(a->spaces.mean(Eigen::VectorXd(P.col(j)))) < 1e-12);
        CHECK(a->spaces.norm(Eigen::VectorXd(P.col(j))) == doctest::Approx(1.0).epsilon(1e-10));
    }
}

TEST_CASE("identity and scaled coefficients") {
    const auto a = sphere(2);
    const int nT = a->spaces.num_triangles();
    Eigen::MatrixXcd probes = complex_probes(*a, 2);
    // A constant probe is skipped.
    probes.conservativeResize(Eigen::NoChange, probes.cols() + 1);
    probes.col(probes.cols() - 1).setOnes();
    const auto one = kato_ratio(a, CoefficientField::identity(nT), std::nullopt, probes);
    CHECK(one.skipped == 1);
    CHECK(one.c_low == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(one.c_high == doctest::Approx(1.0).epsilon(1e-10));
    const auto kap = kato_ratio(a, CoefficientField::identity(nT, 0.3), std::nullopt, probes);
    CHECK(kap.c_low == doctest::Approx(std::sqrt(0.3)).epsilon(1e-10));
    CHECK(kap.c_high == doctest::Approx(std::sqrt(0.3)).epsilon(1e-10));
}

TEST_CASE("Lipschitz sweep: exact scalar perturbation and margins") {
    const auto a = sphere(2);
    const int nT = a->spaces.num_triangles();
    const auto probes = complex_probes(*a, 3);
    const std::vector<double> mags{0.0, 1e-3, 1e-2, 1e-1};
    const auto sweep = lipschitz_sweep(a, CoefficientField::identity(nT), std::nullopt, CoefficientField::identity(nT),
                                       std::nullopt, mags, probes);
    REQUIRE(sweep.rows.size() == 4);
    CHECK(sweep.rows[0].ratio == 0.0);
    for (std::size_t i = 1; i < mags.size(); ++i)
        CHECK(sweep.rows[i].ratio == doctest::Approx(std::sqrt(1.0 + mags[i]) - 1.0).epsilon(1e-7));
    CHECK_THROWS_AS(lipschitz_sweep(a, CoefficientField::identity(nT, 0.5), std::nullopt,
                                    CoefficientField::identity(nT), std::nullopt, {0.5}, probes),
                    ValidationError);
}

TEST_CASE("Lipschitz sweep: random complex direction has slope one") {
    const auto mesh = build_icosphere(2);
    const auto a = assemble(mesh, RoughMetric::induced(mesh));
    const auto B = ambient_complex_field(mesh, 0.5, 2.0, 7);
    const Eigen::VectorXcd b = ambient_multiplier(mesh, 0.5, 7);
    const auto dir = random_complex_field(mesh.num_triangles(), 0.5, 2.0, CounterRng(7, 1));
    const Eigen::VectorXcd bdir = ambient_multiplier(mesh, 0.5, 8);
    const auto sweep = lipschitz_sweep(a, B, b, dir, bdir, {1e-4, 1e-3, 1e-2, 1e-1}, complex_probes(*a, 7));
    CHECK(sweep.slope == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("coercivity constants") {
    for (int level : {1, 2}) {
        const auto mesh = build_icosphere(level);
        const auto a = assemble(mesh, RoughMetric::induced(mesh));
        const auto c = coercivity_check(mesh, a, 8);
        const double lam1 = eigensolve_pencil(
                                stiffness_matrix_real(*a, std::vector<Eigen::Matrix2d>(mesh.num_triangles(),
                                                                                       Eigen::Matrix2d::Identity())),
                                a->spaces.mass, 2)
                                .values[1];
        CHECK(c.probes == 16);
        CHECK(c.C1 == doctest::Approx(1.0 / std::sqrt(lam1)).epsilon(1e-8));
        CHECK(c.C2 > c.C1);
        CHECK(std::isfinite(c.C2));
    }
    // A covector part outside the range of grad is rejected.
    const auto mesh = build_icosphere(1);
    const auto a = assemble(mesh, RoughMetric::induced(mesh));
    const VertexFrames frames(mesh, *a);
    Eigen::MatrixXd U = Eigen::MatrixXd::Zero(mesh.num_vertices(), 1);
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(2 * mesh.num_triangles(), 1);
    W(1, 0) = 1.0;
    CHECK_THROWS_AS(coercivity_check(*a, frames, U, W), ValidationError);
}

}
