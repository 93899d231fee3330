#include <doctest.h>

#include "geoflow/coefficients.hpp"
#include "geoflow/elliptic_solver.hpp"
#include "geoflow/errors.hpp"
#include "geoflow/metric.hpp"
#include "geoflow/random.hpp"
#include "geoflow/spectral.hpp"

using namespace geoflow;

namespace {

/// Dense oracle: pseudoinverse of M^{-1}K restricted to the mean-zero complement.
Eigen::VectorXd dense_oracle(const EllipticOperator& L, const Eigen::VectorXd& f) {
    const Eigen::MatrixXd K = Eigen::MatrixXd(L.stiffness());
    const Eigen::VectorXd m = L.spaces().measure;
    const Eigen::Index n = K.rows();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n + 1, n + 1);
    A.topLeftCorner(n, n) = K;
    A.block(0, n, n, 1) = m;
    A.block(n, 0, 1, n) = m.transpose();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 1);
    rhs.head(n) = L.spaces().mass * f;
    return A.colPivHouseholderQr().solve(rhs).head(n);
}

} // namespace

TEST_SUITE("elliptic_solver") {

TEST_CASE("zero data and eigenfunction data") {
    const auto mesh = build_icosphere(2);
    const auto a = assemble(mesh, RoughMetric::induced(mesh));
    const auto L = make_operator(a, CoefficientField::identity(mesh.num_triangles()));
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(mesh.num_vertices());
    CHECK(solve_mean_zero(L, zero).norm() == 0.0);
    const auto spec = eigensolve(L, 6);
    for (int k = 1; k < 6; ++k) {
        const Eigen::VectorXd phi = spec.vectors.col(k);
        SolveReport report;
        const Eigen::VectorXd u = solve_mean_zero(L, phi, SolveMethod::projected_cg, &report);
        CHECK(a->spaces.norm(Eigen::VectorXd(u - phi / spec.values[k])) <= 1e-9 * a->spaces.norm(u));
        CHECK(report.relative_residual <= 1e-10);
    }
}

TEST_CASE("solver paths agree with the dense oracle") {
    const auto mesh = build_tetrahedral_sphere();
    const auto a = assemble(mesh, RoughMetric::induced(mesh));
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        CounterRng rng(seed);
        const auto A = random_symmetric_field(mesh.num_triangles(), 0.3, 3.0, rng.substream(1));
        const auto L = make_operator(a, A);
        const Eigen::VectorXd f = a->spaces.mean_zero_part(Eigen::VectorXd(rng.normal_vector(4)));
        const Eigen::VectorXd oracle = dense_oracle(L, f);
        for (auto method : {SolveMethod::projected_cg, SolveMethod::sparse_direct, SolveMethod::dense}) {
            const Eigen::VectorXd u = solve_mean_zero(L, f, method);
            CHECK((u - oracle).norm() <= 1e-9 * oracle.norm());
        }
    }
}

TEST_CASE("incompatible data is rejected") {
    const auto mesh = build_icosphere(1);
    const auto a = assemble(mesh, RoughMetric::induced(mesh));
    const auto L = make_operator(a, CoefficientField::identity(mesh.num_triangles()));
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(mesh.num_vertices());
    CHECK_THROWS_AS(solve_mean_zero(L, ones), CompatibilityError);
}

TEST_CASE("complex coefficients use the dense path") {
    const auto mesh = build_icosphere(1);
    const auto a = assemble(mesh, RoughMetric::induced(mesh));
    CounterRng rng(12);
    const auto B = random_complex_field(mesh.num_triangles(), 0.5, 2.0, rng.substream(1));
    const auto L = make_operator(a, B);
    Eigen::VectorXcd f(mesh.num_vertices());
    for (Eigen::Index i = 0; i < f.size(); ++i) f[i] = {rng.normal(), rng.normal()};
    f = a->spaces.mean_zero_part(f);
    SolveReport report;
    const Eigen::VectorXcd u = solve_mean_zero(MeanZeroProblem{&L, f, {}}, SolveMethod::automatic, &report);
    CHECK((L.apply(u) - f).norm() <= 1e-10 * f.norm());
    CHECK(std::abs(a->spaces.mean(u)) <= 1e-10 * u.norm());
}

TEST_CASE("remean, linearity and stability") {
    const auto mesh = build_icosphere(2);
    const auto g = RoughMetric::induced(mesh);
    const auto a = assemble(mesh, g);
    CounterRng rng(30);
    const Eigen::VectorXd c = Eigen::VectorXd::Constant(mesh.num_vertices(), 3.5);
    CHECK(remean(c, a->spaces.measure).cwiseAbs().maxCoeff() < 1e-13);
    const Eigen::VectorXd u = rng.normal_vector(mesh.num_vertices());
    const Eigen::VectorXd r = remean(u, a->spaces.measure);
    CHECK((remean(r, a->spaces.measure) - r).norm() < 1e-13 * r.norm());

    // A rough metric that is not a constant multiple of g: the two means differ.
    std::vector<Eigen::Matrix2d> rough(mesh.num_triangles());
    for (int t = 0; t < mesh.num_triangles(); ++t)
        rough[t] = (1.0 + 3.0 * (mesh.vertex(mesh.triangle(t)[0]).z() > 0)) * Eigen::Matrix2d::Identity();
    const auto at = assemble(mesh, RoughMetric(mesh, rough));
    const Eigen::VectorXd rt = remean(u, at->spaces.measure);
    CHECK(std::abs(at->spaces.measure.dot(rt)) < 1e-12 * at->spaces.measure.cwiseAbs().dot(rt.cwiseAbs()));
    CHECK(std::abs(a->spaces.measure.dot(rt)) > 1e-6);

    const auto A = random_symmetric_field(mesh.num_triangles(), 0.5, 2.0, rng.substream(2));
    const auto L = make_operator(a, A);
    const Eigen::VectorXd f = a->spaces.mean_zero_part(Eigen::VectorXd(rng.normal_vector(mesh.num_vertices())));
    const Eigen::VectorXd h = a->spaces.mean_zero_part(Eigen::VectorXd(rng.normal_vector(mesh.num_vertices())));
    const Eigen::VectorXd uf = solve_mean_zero(L, f), uh = solve_mean_zero(L, h);
    const Eigen::VectorXd ufh = solve_mean_zero(L, Eigen::VectorXd(2.0 * f - 0.5 * h));
    CHECK((ufh - (2.0 * uf - 0.5 * uh)).norm() <= 1e-9 * ufh.norm());
    const double lam1 = eigensolve(L, 2).values[1];
    CHECK(a->spaces.norm(uf) <= a->spaces.norm(f) / lam1 * (1 + 1e-9));
}

}
