#include <doctest.h>

#include <cmath>

#include "geoflow/continuity.hpp"
#include "geoflow/errors.hpp"
#include "geoflow/kato.hpp"

using namespace geoflow;

namespace {

std::shared_ptr<const Assembly> sphere_assembly(int level) {
    const auto mesh = build_icosphere(level);
    return assemble(mesh, RoughMetric::induced(mesh), MassKind::lumped);
}

const std::vector<double> kSweep{1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4};

} // namespace

TEST_SUITE("continuity_harness") {

TEST_CASE("family validation") {
    const auto a = sphere_assembly(1);
    auto f = random_family(a, 0.5, 2.0, 0.3, CounterRng(11));
    CHECK(f.kappa() >= 0.5 - 1e-12);
    auto bad = f;
    bad.margin = f.kappa();
    CHECK_THROWS_AS(validate_family(bad), ValidationError);
    bad = f;
    for (auto& P : bad.direction) P *= 2.0;
    CHECK_THROWS_AS(validate_family(bad), ValidationError);
    bad = f;
    bad.data.array() += 1.0;
    CHECK_THROWS_AS(validate_family(bad), CompatibilityError);
    CHECK_THROWS_AS(solution_difference_sweep(f, {0.5}), ValidationError);
}

TEST_CASE("square-root differences: zero, exact scaling, linear slope") {
    const auto a = sphere_assembly(2);
    const auto f = random_family(a, 0.5, 2.0, 0.4, CounterRng(3));
    const Eigen::MatrixXd probes = kato_probes(*a, 10, 10, CounterRng(4));

    const auto zero = sqrt_difference_sweep(f, {0.0}, probes);
    CHECK(zero.rows[0].ratio == 0.0);

    // A_y = (1 + eps) A_x: the two roots share an eigenbasis.
    auto scaled = f;
    double p = 0.0;
    for (const auto& A : f.base) p = std::max(p, Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(A).eigenvalues().cwiseAbs().maxCoeff());
    for (auto& P : scaled.direction) P = scaled.base[&P - scaled.direction.data()] / p;
    const double eps = 0.05;
    scaled.margin = std::min(0.9 * scaled.kappa(), eps * p * 1.01);
    const auto s = sqrt_difference_sweep(scaled, {eps * p}, probes);
    const Eigen::MatrixXd rx = self_adjoint_sqrt(*a, f.base) * probes;
    const Eigen::MatrixXd M = Eigen::MatrixXd(a->spaces.mass);
    const Eigen::VectorXd grad = gradient_norms(*a, probes);
    double expected = 0.0;
    for (Eigen::Index j = 0; j < probes.cols(); ++j)
        expected = std::max(expected, std::abs(std::sqrt(1.0 + eps) - 1.0) * std::sqrt(rx.col(j).dot(M * rx.col(j))) / grad[j]);
    CHECK(s.rows[0].ratio == doctest::Approx(expected).epsilon(1e-9));

    const auto sweep = sqrt_difference_sweep(f, {1e-1, 1e-2, 1e-3, 1e-4}, probes);
    CHECK(sweep.slope == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("solution differences obey the explicit bound and vanish") {
    const auto a = sphere_assembly(2);
    const auto f = random_family(a, 0.5, 2.0, 0.4, CounterRng(21));
    std::vector<double> mags = {0.0};
    for (double m = 0.3; m > 1e-9; m /= 10.0) mags.push_back(m);
    const auto sweep = solution_difference_sweep(f, mags);
    CHECK(sweep.rows[0].lhs_norm == 0.0);
    CHECK(sweep.max_ratio <= 1.0 + 1e-8);
    CHECK(sweep.monotone);
    CHECK(sweep.smallest_relative < 1e-6);
    CHECK(sweep.lambda1_x >= sweep.kappa_x * sweep.lambda1 * (1.0 - 1e-10));
}

TEST_CASE("data-only perturbation is bounded by the inverse spectral gap") {
    const auto a = sphere_assembly(2);
    auto f = random_family(a, 0.5, 2.0, 0.4, CounterRng(5));
    for (auto& P : f.direction) P.setZero();
    const auto sweep = solution_difference_sweep(f, kSweep);
    for (const auto& r : sweep.rows) CHECK(r.lhs_norm <= r.data_only_bound * (1.0 + 1e-10));
}

TEST_CASE("empirical constant is invariant under data rescaling") {
    const auto a = sphere_assembly(1);
    auto f = random_family(a, 0.5, 2.0, 0.4, CounterRng(8));
    const auto base = solution_difference_sweep(f, kSweep);
    f.data *= 7.0;
    f.data_direction *= 7.0;
    const auto scaled = solution_difference_sweep(f, kSweep);
    for (std::size_t i = 0; i < kSweep.size(); ++i)
        CHECK(scaled.rows[i].ratio == doctest::Approx(base.rows[i].ratio).epsilon(1e-8));
}

TEST_CASE("heat-kernel coefficients at adjacent vertices") {
    std::vector<double> constants;
    for (int level : {2, 3}) {
        const auto mesh = build_icosphere(level);
        const auto g = RoughMetric::induced(mesh);
        const auto setup = make_flow_setup(mesh, g, g);
        const int y = mesh.vertex_neighbors(0).front();
        const auto k = heat_kernel_instance(setup, 0, y, 1.0, Eigen::Vector2d(1.0, 0.0));
        CHECK(k.lhs > 0.0);
        CHECK(k.ratio <= 1.0 + 1e-8);
        constants.push_back(k.constant);
        CHECK_THROWS_AS(heat_kernel_instance(setup, 0, 0, 1.0, Eigen::Vector2d(1.0, 0.0)), ValidationError);
    }
    CHECK(constants[1] == doctest::Approx(constants[0]).epsilon(0.2));
}

TEST_CASE("heat-kernel family reaches the neighbouring problem and vanishes monotonically") {
    const auto mesh = build_icosphere(2);
    const auto g = RoughMetric::induced(mesh);
    const auto setup = make_flow_setup(mesh, g, g);
    const int y = mesh.vertex_neighbors(0).front();
    const Eigen::Vector2d v(1.0, 0.0);
    const auto f = heat_kernel_family(setup, 0, y, 1.0, v);
    const auto k = heat_kernel_instance(setup, 0, y, 1.0, v);
    REQUIRE(f.margin == doctest::Approx(k.coefficient_gap).epsilon(1e-12));
    std::vector<double> mags;
    for (double m = f.margin; m > 1e-9 * f.margin; m /= 10.0) mags.push_back(m);
    const auto sweep = solution_difference_sweep(f, mags);
    CHECK(sweep.rows[0].lhs_norm == doctest::Approx(k.lhs).epsilon(1e-8));
    CHECK(sweep.max_ratio <= 1.0 + 1e-8);
    CHECK(sweep.monotone);
    CHECK(sweep.smallest_relative < 1e-6);
}

}
