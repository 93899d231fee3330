// Acceptance run: one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "geoflow/coefficients.hpp"
#include "geoflow/continuity.hpp"
#include "geoflow/elliptic_solver.hpp"
#include "geoflow/errors.hpp"
#include "geoflow/fem.hpp"
#include "geoflow/functional_calculus.hpp"
#include "geoflow/gm_flow.hpp"
#include "geoflow/heat_kernel.hpp"
#include "geoflow/kato.hpp"
#include "geoflow/metric.hpp"
#include "geoflow/random.hpp"
#include "geoflow/spectral.hpp"

using namespace geoflow;

namespace {

constexpr double pi = std::numbers::pi;

/// Collects failed sub-checks with their measured values.
struct Verdict {
    std::vector<std::string> failures;
    std::ostringstream notes;

    void require(bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    }
    bool ok() const { return failures.empty(); }
};

std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", x);
    return buf;
}

double relative_drift(const std::vector<double>& xs) {
    const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
    return (*hi - *lo) / std::abs(*lo);
}

struct Surface {
    std::string name;
    TriangleMesh mesh;
    RoughMetric metric;
};

std::vector<Surface> structural_surfaces() {
    std::vector<Surface> out;
    for (int level = 0; level <= 3; ++level) {
        auto mesh = build_icosphere(level);
        auto g = RoughMetric::induced(mesh);
        out.push_back({"icosphere(" + std::to_string(level) + ")", std::move(mesh), std::move(g)});
    }
    auto torus = build_flat_torus(16, 16, 2.0 * pi, 2.0 * pi);
    out.push_back({"flat torus", std::move(torus.mesh), std::move(torus.metric)});
    return out;
}

Eigen::MatrixXcd random_block(Eigen::Index rows, Eigen::Index cols, CounterRng rng) {
    Eigen::MatrixXcd X(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) X(i, j) = {rng.normal(), rng.normal()};
    return X;
}

/// f(T) from the eigendecomposition, with f(0) = 0 on the null space.
Eigen::MatrixXcd eigen_oracle(const Eigen::MatrixXcd& T, const std::function<cdouble(cdouble)>& f) {
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(T);
    const double top = es.eigenvalues().cwiseAbs().maxCoeff();
    Eigen::VectorXcd fl(T.rows());
    for (Eigen::Index i = 0; i < T.rows(); ++i)
        fl[i] = std::abs(es.eigenvalues()[i]) < 1e-9 * top ? cdouble(0.0) : f(es.eigenvalues()[i]);
    return es.eigenvectors() * fl.asDiagonal() * es.eigenvectors().inverse();
}

/// Bordered dense solve of K u = M f with the mean-zero constraint.
Eigen::VectorXd dense_pseudoinverse(const EllipticOperator& L, const Eigen::VectorXd& f) {
    const Eigen::MatrixXd K = Eigen::MatrixXd(L.stiffness());
    const Eigen::VectorXd& m = L.spaces().measure;
    const Eigen::Index n = K.rows();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n + 1, n + 1);
    A.topLeftCorner(n, n) = K;
    A.block(0, n, n, 1) = m;
    A.block(n, 0, 1, n) = m.transpose();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 1);
    rhs.head(n) = L.spaces().mass * f;
    return A.fullPivLu().solve(rhs).head(n);
}

// 1. Structural identities.
void structural(Verdict& v) {
    double adjoint = 0.0, nilpotent = 0.0, form = 0.0, splitting = 0.0, completeness = 0.0;
    for (const auto& s : structural_surfaces()) {
        const auto a = assemble(s.mesh, s.metric);
        const int nT = s.mesh.num_triangles();
        CounterRng rng(101);
        const auto A = random_symmetric_field(nT, 0.5, 2.0, rng.substream(1));
        const auto L = make_operator(a, A);
        for (int k = 0; k < 3; ++k) {
            const Eigen::VectorXd u = rng.normal_vector(s.mesh.num_vertices());
            const Eigen::VectorXd w = rng.normal_vector(2 * nT);
            const Eigen::VectorXd gu = a->pair.grad(u), dw = a->pair.divergence(w);
            const double scale = a->spaces.covector_norm(gu) * a->spaces.covector_norm(w) +
                                 a->spaces.norm(u) * a->spaces.norm(dw);
            adjoint = std::max(adjoint, std::abs(a->spaces.covector_inner(gu, w) + a->spaces.inner(u, dw)) / scale);

            const Eigen::VectorXcd uc = u.cast<cdouble>();
            const double J = L.form(uc, uc).real();
            form = std::max(form, std::abs(a->spaces.inner(L.apply(u), u) - J) / std::abs(J));

            const Eigen::VectorXd r = a->spaces.mean_zero_part(u);
            const Eigen::VectorXd c = u - r;
            const double nu = a->spaces.norm(u);
            splitting = std::max({splitting, std::abs(a->spaces.mean(r)) / nu,
                                  std::abs(a->spaces.inner(c, r)) / (nu * nu),
                                  (c.array() - c[0]).abs().maxCoeff() / nu});
        }
        const auto dirac = std::make_shared<DiracOperator>(a);
        const Eigen::MatrixXcd X = random_block(dirac->dim(), 3, rng.substream(2));
        nilpotent = std::max(nilpotent, dirac->gamma(dirac->gamma(X)).norm() / X.norm());
        nilpotent = std::max(nilpotent, dirac->gamma_star(dirac->gamma_star(X)).norm() / X.norm());

        // Projection completeness on the Dirac block, where the dense contour stays small.
        if (dirac->dim() <= 600) {
            const Eigen::Index N = dirac->dim();
            const Eigen::MatrixXcd I = Eigen::MatrixXcd::Identity(N, N);
            const auto p = sgn_projections(make_bisectorial(dirac, 0.0), I);
            const double root = std::sqrt(static_cast<double>(N));
            completeness = std::max({completeness, (p.chi_plus + p.chi_minus + p.null_projection - I).norm() / root,
                                     (p.chi_plus * p.chi_plus - p.chi_plus).norm() / root,
                                     (p.chi_plus * p.chi_minus).norm() / root});
        }
    }
    v.require(adjoint <= 1e-10, "adjoint " + fmt(adjoint));
    v.require(nilpotent <= 1e-10, "nilpotency " + fmt(nilpotent));
    v.require(form <= 1e-10, "form " + fmt(form));
    v.require(splitting <= 1e-10, "splitting " + fmt(splitting));
    v.require(completeness <= 1e-10, "completeness " + fmt(completeness));
    v.notes << "adjoint " << fmt(adjoint) << ", nilpotency " << fmt(nilpotent) << ", form " << fmt(form)
            << ", splitting " << fmt(splitting) << ", completeness " << fmt(completeness);
}

// 2. Iterative mean-zero solves against the dense pseudoinverse.
void solver_agreement(Verdict& v) {
    const auto sphere = build_icosphere(2);
    const auto torus = build_flat_torus(14, 14, 2.0 * pi, 2.0 * pi);
    const auto sa = assemble(sphere, RoughMetric::induced(sphere));
    const auto ta = assemble(torus.mesh, torus.metric);
    double worst = 0.0;
    int instances = 0;
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        const bool on_sphere = seed % 2 == 1;
        const auto& a = on_sphere ? sa : ta;
        const int nT = static_cast<int>(a->triangles.size());
        CounterRng rng(seed);
        const auto A = random_symmetric_field(nT, 0.3, 3.0, rng.substream(1));
        const auto L = make_operator(a, A);
        const Eigen::VectorXd f = a->spaces.mean_zero_part(Eigen::VectorXd(rng.substream(2).normal_vector(a->spaces.num_vertices())));
        const Eigen::VectorXd oracle = dense_pseudoinverse(L, f);
        const Eigen::VectorXd u = solve_mean_zero(L, f, SolveMethod::projected_cg);
        worst = std::max(worst, (u - oracle).norm() / oracle.norm());
        ++instances;
    }
    v.require(worst <= 1e-9, "relative difference " + fmt(worst));
    v.notes << instances << " instances, worst relative difference " << fmt(worst);
}

// 3. Spectral gap and convergence of the first eigenvalue.
void spectral_gap(Verdict& v) {
    const auto mesh = build_icosphere(2);
    const auto a = assemble(mesh, RoughMetric::induced(mesh));
    const double lap1 = eigensolve(make_operator(a, CoefficientField::identity(mesh.num_triangles())), 2).values[1];
    const double kappa = 0.5;
    double worst_ratio = std::numeric_limits<double>::infinity();
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto A = random_symmetric_field(mesh.num_triangles(), kappa, 2.0, CounterRng(seed));
        const auto spec = eigensolve(make_operator(a, A), 2);
        v.require(spec.values[1] > 1e-8, "seed " + std::to_string(seed) + " has no gap");
        worst_ratio = std::min(worst_ratio, spec.values[1] / (kappa * lap1));
    }
    v.require(worst_ratio >= 1.0 - 1e-10, "gap below kappa lambda_1: ratio " + fmt(worst_ratio));

    double previous = std::numeric_limits<double>::infinity(), lambda4 = 0.0;
    std::ostringstream errs;
    for (int level = 1; level <= 4; ++level) {
        const auto m = build_icosphere(level);
        const auto al = assemble(m, RoughMetric::induced(m));
        const double l1 = eigensolve(make_operator(al, CoefficientField::identity(m.num_triangles())), 2).values[1];
        const double err = std::abs(l1 - 2.0) / 2.0;
        v.require(err < previous, "no improvement at level " + std::to_string(level));
        previous = err;
        lambda4 = l1;
        errs << (level > 1 ? " " : "") << fmt(err);
    }
    v.require(std::abs(lambda4 - 2.0) <= 0.02 * 2.0, "lambda_1 at level 4 " + fmt(lambda4));
    v.notes << "20 seeds, min gap / (kappa lambda_1) " << fmt(worst_ratio) << "; lambda_1 errors levels 1-4: "
            << errs.str() << " (level 4: " << fmt(lambda4) << ")";
}

// 4. Heat kernel identities.
void heat_kernel(Verdict& v) {
    const auto mesh = build_icosphere(3);
    const auto g = RoughMetric::induced(mesh);
    const auto hk = build_heat_kernel(mesh, g, g);
    const Eigen::VectorXd& mu = hk->measure();
    const int xs[] = {0, 17, 300, 641};
    double mass = 0.0, symmetry = 0.0, negativity = 0.0, semigroup = 0.0;
    for (double t : {hk->t_min(), 0.01, 0.1, 1.0}) {
        std::vector<KernelSlice> slices;
        for (int x : xs) slices.push_back(kernel_slice(*hk, x, t));
        const double scale = hk->max_diagonal(t);
        for (int i = 0; i < 4; ++i) {
            mass = std::max(mass, std::abs(mu.dot(slices[i].values) - 1.0));
            negativity = std::max(negativity, -slices[i].values.minCoeff() - slices[i].resolution);
            for (int j = 0; j < 4; ++j)
                symmetry = std::max(symmetry, std::abs(slices[i].values[xs[j]] - slices[j].values[xs[i]]) / scale);
        }
    }
    const double t = 0.05, s = 0.08;
    for (int x : {0, 99}) {
        const auto kt = kernel_slice(*hk, x, t), kts = kernel_slice(*hk, x, t + s);
        for (int y : {3, 250, 600}) {
            const auto ks = kernel_slice(*hk, y, s);
            const double composed = (kt.values.array() * ks.values.array() * mu.array()).sum();
            semigroup = std::max(semigroup, std::abs(composed - kts.values[y]) / hk->max_diagonal(t + s));
        }
    }
    v.require(mass <= 1e-8, "mass " + fmt(mass));
    v.require(symmetry <= 1e-8, "symmetry " + fmt(symmetry));
    v.require(negativity <= 0.0 && hk->positivity_certificate(), "positivity " + fmt(negativity));
    v.require(semigroup <= 1e-8, "semigroup " + fmt(semigroup));

    // Rough metric against the divergence-form kernel on the background.
    const auto cone = build_cone_sphere(1.5 * pi, 2);
    const auto gc = RoughMetric::induced(cone.mesh);
    const auto direct = build_heat_kernel(cone.mesh, cone.metric, gc);
    const auto pair = compare_metrics(gc, cone.metric);
    const auto background = assemble(cone.mesh, gc, MassKind::lumped);
    std::vector<Eigen::Matrix2d> coeff(cone.mesh.num_triangles());
    std::vector<double> weights(cone.mesh.num_triangles());
    for (int tri = 0; tri < cone.mesh.num_triangles(); ++tri) {
        coeff[tri] = pair.divergence_coefficient(tri);
        weights[tri] = pair.theta[tri] * background->geometry[tri].area;
    }
    const HeatKernel via_g(stiffness_matrix_real(*background, coeff),
                           weighted_mass(background->triangles, weights, cone.mesh.num_vertices(), MassKind::lumped),
                           std::make_shared<const VertexFrames>(cone.mesh, *background));
    double rough = 0.0;
    for (double tt : {0.05, 0.2})
        for (int x : {0, 40, 150}) {
            const auto p = kernel_slice(*direct, x, tt), q = kernel_slice(via_g, x, tt);
            rough = std::max(rough, (p.values - q.values).cwiseAbs().maxCoeff() / direct->max_diagonal(tt));
        }
    v.require(rough <= 1e-8, "rough vs divergence form " + fmt(rough));
    v.notes << "icosphere(3): mass " << fmt(mass) << ", symmetry " << fmt(symmetry) << ", semigroup "
            << fmt(semigroup) << ", t_min " << fmt(hk->t_min()) << "; rough vs divergence form " << fmt(rough);
}

// 5. Quadratic estimate and contour calculus.
void functional_calculus(Verdict& v) {
    Eigen::VectorXd lam(4);
    lam << 0.0, 0.5, 2.0, -7.0;
    const auto diag =
        make_bisectorial(std::make_shared<DenseOperator>(lam.cast<cdouble>().asDiagonal().toDenseMatrix()), 0.0);
    Eigen::VectorXcd u = Eigen::VectorXcd::Zero(4);
    u[1] = 0.6;
    u[2] = cdouble(0.0, 0.48);
    u[3] = 0.64;
    const double q1 = quadratic_estimate(diag, psi_canonical(), u, {1e-9, 1e8}).value;
    double quad = std::abs(q1 - 0.5 * u.squaredNorm()) / (0.5 * u.squaredNorm());

    const auto mesh = build_icosphere(1);
    const auto a = assemble(mesh, RoughMetric::induced(mesh));
    const auto dirac = std::make_shared<DiracOperator>(a);
    const Eigen::VectorXcd w = dirac->apply(random_block(dirac->dim(), 1, CounterRng(5))).col(0);
    const auto [lo, hi] = dirac->spectral_bounds();
    const double q2 = quadratic_estimate(make_bisectorial(dirac, 0.0), psi_canonical(), w, {1e-7 / hi, 1e7 / lo}).value;
    const double half = 0.5 * std::pow(dirac->norm(w), 2);
    quad = std::max(quad, std::abs(q2 - half) / half);
    v.require(quad <= 1e-6, "quadratic estimate " + fmt(quad));

    Eigen::MatrixXcd T(4, 4);
    T << 2.0, 0.5, 0.0, 0.0, 0.0, cdouble(0.7, 0.2), 0.3, 0.0, 0.0, 0.0, -1.5, 0.4, 0.0, 0.0, 0.0, cdouble(-3.0, -0.5);
    const auto dense = make_bisectorial(std::make_shared<DenseOperator>(T), 0.3);
    const auto tetra = build_tetrahedral_sphere();
    const auto ta = assemble(tetra, RoughMetric::induced(tetra));
    const auto B = random_complex_field(4, 0.5, 2.0, CounterRng(17));
    const Eigen::VectorXcd b = ambient_multiplier(tetra, 0.5, 17);
    const auto weighted = make_bisectorial(std::make_shared<DiracOperator>(ta, B, b), estimate_omega(B, b));
    double contour = 0.0;
    for (const auto* op : {&dense, &weighted}) {
        const Eigen::MatrixXcd M = op->action->dense();
        const Eigen::MatrixXcd I = Eigen::MatrixXcd::Identity(M.rows(), M.cols());
        for (const auto& psi : shipped_psi_functions()) {
            const Eigen::MatrixXcd want = eigen_oracle(M, psi.eval);
            contour = std::max(contour, (apply_psi(*op, psi, I) - want).norm() / want.norm());
        }
    }
    v.require(contour <= 1e-8, "contour vs eigen oracle " + fmt(contour));
    v.notes << "quadratic estimate relative error " << fmt(quad) << ", contour vs eigen oracle " << fmt(contour);
}

// 6. Kato square root: level drift, Lipschitz slope, coercivity drift.
void kato(Verdict& v) {
    const std::uint64_t seed = 7;
    std::vector<double> lows, highs, c1s, c2s;
    for (int level = 1; level <= 3; ++level) {
        const auto mesh = build_icosphere(level);
        const auto a = assemble(mesh, RoughMetric::induced(mesh));
        const auto B = ambient_complex_field(mesh, 0.5, 2.0, seed);
        const Eigen::VectorXcd b = ambient_multiplier(mesh, 0.5, seed);
        const Eigen::MatrixXcd probes = kato_probes(*a, 10, 10, CounterRng(seed, 2)).cast<cdouble>();
        const auto r = kato_ratio(a, B, b, probes);
        const auto c = coercivity_check(mesh, a, 8);
        lows.push_back(r.c_low);
        highs.push_back(r.c_high);
        c1s.push_back(c.C1);
        c2s.push_back(c.C2);
    }
    const double drift = std::max(relative_drift(lows), relative_drift(highs));
    const double cdrift = std::max(relative_drift(c1s), relative_drift(c2s));

    const auto mesh = build_icosphere(1);
    const auto a = assemble(mesh, RoughMetric::induced(mesh));
    const auto B = ambient_complex_field(mesh, 0.5, 2.0, seed);
    const Eigen::VectorXcd b = ambient_multiplier(mesh, 0.5, seed);
    const auto dir = random_complex_field(mesh.num_triangles(), 0.5, 2.0, CounterRng(seed, 3));
    const Eigen::VectorXcd bdir = ambient_multiplier(mesh, 0.5, seed + 1);
    const Eigen::MatrixXcd probes = kato_probes(*a, 10, 10, CounterRng(seed, 2)).cast<cdouble>();
    const auto sweep = lipschitz_sweep(a, B, b, dir, bdir, {1e-4, 1e-3, 1e-2, 1e-1}, probes);

    v.require(*std::min_element(lows.begin(), lows.end()) > 0.0, "nonpositive lower ratio");
    v.require(drift < 0.2, "Kato drift " + fmt(drift));
    v.require(std::abs(sweep.slope - 1.0) <= 0.1, "Lipschitz slope " + fmt(sweep.slope));
    v.require(cdrift < 0.2, "coercivity drift " + fmt(cdrift));
    v.notes << "levels 1-3: c_low " << fmt(lows.front()) << ".." << fmt(lows.back()) << ", c_high " << fmt(highs.front())
            << ".." << fmt(highs.back()) << ", drift " << fmt(drift) << "; Lipschitz slope " << fmt(sweep.slope)
            << "; C1/C2 drift " << fmt(cdrift);
}

// 7. Solution differences under coefficient and data perturbation.
void solution_differences(Verdict& v) {
    const auto mesh = build_icosphere(2);
    const auto a = assemble(mesh, RoughMetric::induced(mesh), MassKind::lumped);
    double worst_ratio = 0.0, worst_small = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto f = random_family(a, 0.5, 2.0, 0.4, CounterRng(seed, 5));
        std::vector<double> mags;
        for (double m = 0.3; m > 1e-9; m /= 10.0) mags.push_back(m);
        const auto sweep = solution_difference_sweep(f, mags);
        v.require(sweep.monotone, "random family " + std::to_string(seed) + " not monotone");
        worst_ratio = std::max(worst_ratio, sweep.max_ratio);
        worst_small = std::max(worst_small, sweep.smallest_relative);
    }

    const auto g = RoughMetric::induced(mesh);
    const auto setup = make_flow_setup(mesh, g, g);
    const int y = mesh.vertex_neighbors(0).front();
    const Eigen::Vector2d dir(1.0, 0.0);
    const auto instance = heat_kernel_instance(setup, 0, y, 1.0, dir);
    const auto family = heat_kernel_family(setup, 0, y, 1.0, dir);
    std::vector<double> mags;
    for (double m = family.margin; m > 1e-9 * family.margin; m /= 10.0) mags.push_back(m);
    const auto ks = solution_difference_sweep(family, mags);
    v.require(ks.monotone, "heat-kernel family not monotone");
    v.require(instance.ratio <= 1.0 + 1e-8, "heat-kernel instance exceeds its bound: " + fmt(instance.ratio));
    worst_ratio = std::max(worst_ratio, ks.max_ratio);
    worst_small = std::max(worst_small, ks.smallest_relative);
    v.require(worst_ratio <= 1.0 + 1e-8, "bound ratio " + fmt(worst_ratio));
    v.require(worst_small < 1e-6, "smallest relative difference " + fmt(worst_small));
    v.notes << "5 random families plus the heat-kernel pair: max bound ratio " << fmt(worst_ratio)
            << ", smallest relative difference " << fmt(worst_small) << "; instance constant "
            << fmt(instance.constant) << ", ratio " << fmt(instance.ratio);
}

// 8. The evolved metric.
void flow(Verdict& v) {
    const std::vector<double> times{0.02, 0.04, 0.06, 0.08, 0.1};
    double form_gap = 0.0;
    bool spd = true;
    double sphere_diff[2] = {0.0, 0.0}, cone_diff[2] = {0.0, 0.0};
    double slope = 0.0;
    for (int level : {3, 4}) {
        const auto mesh = build_icosphere(level);
        const auto g = RoughMetric::induced(mesh);
        const auto s = make_flow_setup(mesh, g, g);
        const auto flow = compute_flow(s, FlowConfig{{0.1}, {}, 1});
        form_gap = std::max(form_gap, flow.max_form_gap);
        spd = spd && flow.all_positive_definite;
        sphere_diff[level - 3] = continuity_modulus(s, flow, 0).max_diff;
        if (level == 4) {
            const auto r = ricci_tangency(s, 0, Eigen::Vector2d(1.0, 1.0).normalized(), times);
            v.require(r.resolved, "sphere tangency fit unresolved");
            slope = r.slope;
        }

        const auto cone = build_cone_sphere(1.5 * pi, level);
        const auto sc = make_flow_setup(cone.mesh, cone.metric, cone.metric);
        const auto cflow = compute_flow(sc, FlowConfig{{0.1}, default_nonsingular_set(cone.mesh, 2), 1});
        form_gap = std::max(form_gap, cflow.max_form_gap);
        spd = spd && cflow.all_positive_definite;
        cone_diff[level - 3] = continuity_modulus(sc, cflow, 0).max_diff;
    }

    const auto torus = build_flat_torus(32, 32, 2.0 * pi, 2.0 * pi);
    const auto st = make_flow_setup(torus.mesh, torus.metric, torus.metric);
    double torus_slope = 0.0;
    for (const Eigen::Vector2d d : {Eigen::Vector2d(1.0, 0.0), Eigen::Vector2d(0.6, 0.8)})
        torus_slope = std::max(torus_slope, std::abs(ricci_tangency(st, 0, d, times).slope) / d.squaredNorm());

    v.require(form_gap <= 1e-8, "form gap " + fmt(form_gap));
    v.require(spd, "evolved metric not positive definite");
    v.require(std::abs(slope + 2.0) <= 0.2, "sphere tangency slope " + fmt(slope));
    v.require(torus_slope <= 0.05, "torus tangency slope " + fmt(torus_slope));
    v.require(sphere_diff[1] < sphere_diff[0], "sphere continuity did not decrease");
    v.require(cone_diff[1] < cone_diff[0], "cone continuity did not decrease");
    v.notes << "form gap " << fmt(form_gap) << ", sphere slope " << fmt(slope) << ", torus |slope| "
            << fmt(torus_slope) << ", continuity sphere " << fmt(sphere_diff[0]) << " -> " << fmt(sphere_diff[1])
            << ", cone " << fmt(cone_diff[0]) << " -> " << fmt(cone_diff[1]);
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<void(Verdict&)>>> criteria{
        {"structural identities", structural},
        {"mean-zero solver agreement", solver_agreement},
        {"spectral gap", spectral_gap},
        {"heat kernel", heat_kernel},
        {"functional calculus", functional_calculus},
        {"Kato square root", kato},
        {"solution differences", solution_differences},
        {"evolved metric", flow},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Verdict v;
        const auto start = std::chrono::steady_clock::now();
        try {
            criteria[i].second(v);
        } catch (const std::exception& e) {
            v.failures.push_back(std::string("exception: ") + e.what());
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (i == 0 && seconds > 60.0) v.failures.push_back("took " + fmt(seconds) + " s");
        std::string detail = v.notes.str();
        for (const auto& f : v.failures) detail += (detail.empty() ? "" : "; ") + std::string("FAILED ") + f;
        std::printf("%s criterion %zu (%s): %s [%.1f s]\n", v.ok() ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                    detail.c_str(), seconds);
        std::fflush(stdout);
        failed += v.ok() ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
}
