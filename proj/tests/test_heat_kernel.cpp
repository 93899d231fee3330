#include <doctest.h>

#include <numbers>

#include "geoflow/errors.hpp"
#include "geoflow/heat_kernel.hpp"
#include "geoflow/metric.hpp"

using namespace geoflow;

TEST_SUITE("heat_kernel") {

TEST_CASE("mass, symmetry and long-time limit") {
    const auto mesh = build_icosphere(3);
    const auto g = RoughMetric::induced(mesh);
    const auto hk = build_heat_kernel(mesh, g, g);
    CHECK(hk->t_min() <= 0.01);
    const Eigen::VectorXd& mu = hk->measure();
    const Eigen::VectorXd phi0 = hk->spec().vectors.col(0);
    CHECK((phi0.cwiseAbs().array() - 1.0 / std::sqrt(hk->total_measure())).abs().maxCoeff() < 1e-10);
    for (double t : {0.01, 0.1, 1.0}) {
        std::vector<Eigen::VectorXd> slices;
        for (int x : {0, 17, 300, 641}) {
            const auto s = kernel_slice(*hk, x, t);
            CHECK(mu.dot(s.values) == doctest::Approx(1.0).epsilon(1e-10));
            CHECK(s.values.minCoeff() >= -s.resolution);
            slices.push_back(s.values);
        }
        const int xs[] = {0, 17, 300, 641};
        const double scale = hk->max_diagonal(t);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) CHECK(std::abs(slices[i][xs[j]] - slices[j][xs[i]]) <= 1e-10 * scale);
    }
    const auto late = kernel_slice(*hk, 5, 40.0);
    CHECK((late.values.array() - 1.0 / hk->total_measure()).abs().maxCoeff() < 1e-10);
    CHECK(hk->positivity_certificate());
}

TEST_CASE("semigroup property") {
    const auto mesh = build_icosphere(3);
    const auto g = RoughMetric::induced(mesh);
    const auto hk = build_heat_kernel(mesh, g, g);
    const double t = 0.05, s = 0.08;
    for (int x : {0, 99}) {
        const auto kt = kernel_slice(*hk, x, t);
        const auto kts = kernel_slice(*hk, x, t + s);
        for (int y : {3, 250, 600}) {
            const auto ks = kernel_slice(*hk, y, s);
            const double composed = (kt.values.array() * ks.values.array() * hk->measure().array()).sum();
            CHECK(std::abs(composed - kts.values[y]) <= 1e-8 * hk->max_diagonal(t + s));
        }
    }
}

TEST_CASE("truncated expansion certifies t_min") {
    const auto mesh = build_icosphere(3);
    const auto g = RoughMetric::induced(mesh);
    const auto full = build_heat_kernel(mesh, g, g);
    const auto cut = build_heat_kernel(mesh, g, g, 200);
    CHECK(cut->t_min() > full->t_min());
    CHECK_THROWS_AS(kernel_slice(*cut, 0, 0.5 * cut->t_min()), TruncationError);
    try {
        kernel_slice(*cut, 0, 0.5 * cut->t_min());
    } catch (const TruncationError& e) {
        CHECK(e.t_min == cut->t_min());
    }
    const double t = cut->t_min();
    const auto a = kernel_slice(*cut, 7, t), b = kernel_slice(*full, 7, t);
    CHECK((a.values - b.values).cwiseAbs().maxCoeff() <= cut->tail_bound(t) * (1 + 1e-6) + 1e-12);
}

TEST_CASE("x-derivative: zero, linearity, compatibility") {
    const auto mesh = build_icosphere(3);
    const auto g = RoughMetric::induced(mesh);
    const auto hk = build_heat_kernel(mesh, g, g);
    const double t = 0.1;
    CHECK(kernel_x_derivative(*hk, 12, Eigen::Vector2d::Zero(), t).norm() == 0.0);
    const Eigen::Vector2d u(0.3, -1.2), v(2.0, 0.7);
    const Eigen::VectorXd eu = kernel_x_derivative(*hk, 12, u, t), ev = kernel_x_derivative(*hk, 12, v, t);
    const Eigen::VectorXd euv = kernel_x_derivative(*hk, 12, u + v, t);
    CHECK((euv - eu - ev).norm() <= 1e-14 * euv.norm());
    const double l2 = std::sqrt((eu.array().square() * hk->measure().array()).sum());
    CHECK(std::abs(hk->measure().dot(eu)) <= 1e-8 * l2 * std::sqrt(hk->total_measure()));
}

TEST_CASE("rough metric kernel equals the divergence-form kernel on the background") {
    const auto cone = build_cone_sphere(1.5 * std::numbers::pi, 2);
    const auto& mesh = cone.mesh;
    const auto g = RoughMetric::induced(mesh);
    const auto direct = build_heat_kernel(mesh, cone.metric, g);

    const auto pair = compare_metrics(g, cone.metric);
    const auto background = assemble(mesh, g, MassKind::lumped);
    std::vector<Eigen::Matrix2d> coeff(mesh.num_triangles());
    std::vector<double> weights(mesh.num_triangles());
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        coeff[t] = pair.divergence_coefficient(t);
        weights[t] = pair.theta[t] * background->geometry[t].area;
    }
    const SparseMatrix K = stiffness_matrix_real(*background, coeff);
    const SparseMatrix M = weighted_mass(background->triangles, weights, mesh.num_vertices(), MassKind::lumped);
    const HeatKernel via_g(K, M, std::make_shared<const VertexFrames>(mesh, *background));
    for (double t : {0.05, 0.2})
        for (int x : {0, 40, 150}) {
            const auto a = kernel_slice(*direct, x, t), b = kernel_slice(via_g, x, t);
            CHECK((a.values - b.values).cwiseAbs().maxCoeff() <= 1e-8 * direct->max_diagonal(t));
        }
}

}
