#include "geoflow/continuity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "geoflow/coefficients.hpp"
#include "geoflow/elliptic_solver.hpp"
#include "geoflow/errors.hpp"
#include "geoflow/kato.hpp"
#include "geoflow/spectral.hpp"

namespace geoflow {

namespace {

double min_eigenvalue(const Eigen::Matrix2d& A) {
    return Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(A).eigenvalues()[0];
}

double spectral_norm(const Eigen::Matrix2d& A) {
    return Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(A).eigenvalues().cwiseAbs().maxCoeff();
}

double sup_norm(const std::vector<Eigen::Matrix2d>& P) {
    double s = 0.0;
    for (const auto& A : P) s = std::max(s, spectral_norm(A));
    return s;
}

double mass_norm(const SparseMatrix& M, const Eigen::VectorXd& u) { return std::sqrt(u.dot(M * u)); }

std::vector<Eigen::Matrix2d> combine(const std::vector<Eigen::Matrix2d>& A, const std::vector<Eigen::Matrix2d>& P,
                                     double s) {
    std::vector<Eigen::Matrix2d> out(A.size());
    for (std::size_t t = 0; t < A.size(); ++t) out[t] = A[t] + s * P[t];
    return out;
}

double first_nonzero_eigenvalue(const SparseMatrix& K, const SparseMatrix& M) {
    return eigensolve_pencil(K, M, 2).values[1];
}

SparseMatrix identity_stiffness(const Assembly& a) {
    return stiffness_matrix_real(a, std::vector<Eigen::Matrix2d>(a.geometry.size(), Eigen::Matrix2d::Identity()));
}

} // namespace

double PerturbationFamily::kappa() const {
    double k = std::numeric_limits<double>::infinity();
    for (const auto& A : base) k = std::min(k, min_eigenvalue(A));
    return k;
}

void validate_family(const PerturbationFamily& f) {
    if (!f.assembly) throw ValidationError("family: missing assembly");
    const std::size_t nt = f.assembly->geometry.size();
    const Eigen::Index n = f.assembly->spaces.num_vertices();
    if (f.base.size() != nt || f.direction.size() != nt) throw ValidationError("family: coefficient size mismatch");
    if (f.data.size() != n || f.data_direction.size() != n) throw ValidationError("family: data size mismatch");
    for (std::size_t t = 0; t < nt; ++t) {
        const double scale = std::max(1.0, f.base[t].norm());
        if (std::abs(f.base[t](0, 1) - f.base[t](1, 0)) > 1e-12 * scale ||
            std::abs(f.direction[t](0, 1) - f.direction[t](1, 0)) > 1e-12)
            throw ValidationError("family: coefficients must be symmetric");
    }
    const double p = sup_norm(f.direction);
    if (p != 0.0 && std::abs(p - 1.0) > 1e-12) throw ValidationError("family: direction must have unit sup norm");
    const double kappa = f.kappa();
    if (!(kappa > 0.0)) throw EllipticityError("family: base coefficients are not elliptic");
    if (!(f.margin >= 0.0 && f.margin < kappa))
        throw ValidationError("family: margin " + std::to_string(f.margin) + " must lie in [0, kappa_x = " +
                              std::to_string(kappa) + ")");
    const Eigen::VectorXd& mu = f.assembly->spaces.measure;
    for (const Eigen::VectorXd* d : {&f.data, &f.data_direction})
        if (std::abs(mu.dot(*d)) > 1e-10 * std::max(1e-300, mu.dot(d->cwiseAbs())))
            throw CompatibilityError("family: data must be mean zero");
}

PerturbationFamily random_family(std::shared_ptr<const Assembly> assembly, double kappa, double Lambda, double margin,
                                 CounterRng rng) {
    const int nt = static_cast<int>(assembly->geometry.size());
    const Eigen::Index n = assembly->spaces.num_vertices();
    PerturbationFamily f;
    f.assembly = assembly;
    const auto base = random_symmetric_field(nt, kappa, Lambda, rng.substream(1));
    f.base.resize(nt);
    for (int t = 0; t < nt; ++t) f.base[t] = base.real_tensor(t);
    CounterRng dir = rng.substream(2);
    f.direction.resize(nt);
    for (auto& P : f.direction) {
        const double a = dir.normal(), b = dir.normal(), c = dir.normal();
        P << a, b, b, c;
    }
    const double p = sup_norm(f.direction);
    for (auto& P : f.direction) P /= p;
    const auto& M = assembly->spaces.mass;
    const auto& mu = assembly->spaces.measure;
    CounterRng data = rng.substream(3);
    for (Eigen::VectorXd* d : {&f.data, &f.data_direction}) {
        *d = remean(data.normal_vector(n), mu);
        *d /= mass_norm(M, *d);
    }
    f.margin = margin;
    validate_family(f);
    return f;
}

Eigen::MatrixXd self_adjoint_sqrt(const Assembly& assembly, const std::vector<Eigen::Matrix2d>& A) {
    const Eigen::MatrixXd K = stiffness_matrix_real(assembly, A);
    const Eigen::MatrixXd M = assembly.spaces.mass;
    Eigen::VectorXd lam;
    Eigen::MatrixXd V;
    dense_symmetric_eigen(K, M, lam, V);
    // L = V diag(lam) V^T M with V^T M V = I; the constant mode has lam = 0 up to rounding.
    const Eigen::VectorXd root = lam.cwiseMax(0.0).cwiseSqrt();
    Eigen::VectorXd r = root;
    r[0] = 0.0;
    return V * r.asDiagonal() * V.transpose() * M;
}

Eigen::VectorXd gradient_norms(const Assembly& assembly, const Eigen::MatrixXd& u) {
    const SparseMatrix K = identity_stiffness(assembly);
    Eigen::VectorXd out(u.cols());
    for (Eigen::Index j = 0; j < u.cols(); ++j) out[j] = std::sqrt(std::max(0.0, u.col(j).dot(K * u.col(j))));
    return out;
}

SqrtDifferenceSweep sqrt_difference_sweep(const PerturbationFamily& f, const std::vector<double>& magnitudes,
                                          const Eigen::MatrixXd& probes) {
    validate_family(f);
    const Assembly& a = *f.assembly;
    const Eigen::MatrixXd Mx = Eigen::MatrixXd(a.spaces.mass);
    const Eigen::VectorXd grad = gradient_norms(a, probes);
    const Eigen::MatrixXd root_x = self_adjoint_sqrt(a, f.base);
    SqrtDifferenceSweep sweep;
    std::vector<double> xs, ys;
    for (double s : magnitudes) {
        if (std::abs(s) > f.margin) throw ValidationError("sqrt sweep: magnitude exceeds the margin");
        SqrtDifferenceRow row{s, 0.0};
        if (s != 0.0) {
            const Eigen::MatrixXd D = (root_x - self_adjoint_sqrt(a, combine(f.base, f.direction, s))) * probes;
            for (Eigen::Index j = 0; j < probes.cols(); ++j) {
                if (grad[j] <= 1e-12 * probes.col(j).norm()) continue;
                row.ratio = std::max(row.ratio, std::sqrt(D.col(j).dot(Mx * D.col(j))) / grad[j]);
            }
        }
        if (s > 0.0 && row.ratio > 0.0) {
            xs.push_back(s);
            ys.push_back(row.ratio);
        }
        sweep.rows.push_back(row);
    }
    if (xs.size() >= 2) sweep.slope = loglog_slope(xs, ys);
    return sweep;
}

SolutionDifferenceSweep solution_difference_sweep(const PerturbationFamily& f, const std::vector<double>& magnitudes) {
    validate_family(f);
    const Assembly& a = *f.assembly;
    const SparseMatrix& M = a.spaces.mass;
    const Eigen::VectorXd& mu = a.spaces.measure;
    const SparseMatrix Kx = stiffness_matrix_real(a, f.base);
    SolutionDifferenceSweep sweep;
    sweep.kappa_x = f.kappa();
    sweep.lambda1 = first_nonzero_eigenvalue(identity_stiffness(a), M);
    sweep.lambda1_x = first_nonzero_eigenvalue(Kx, M);
    const Eigen::VectorXd ux = pinned_direct_solve(Kx, M * f.data, mu, 0);
    sweep.norm_u_x = mass_norm(M, ux);
    const double eta = mass_norm(M, f.data);
    const double kz = sweep.kappa_x - f.margin;
    for (double s : magnitudes) {
        if (std::abs(s) > f.margin) throw ValidationError("solution sweep: magnitude exceeds the margin");
        const Eigen::VectorXd ey = f.data + s * f.data_direction;
        const Eigen::VectorXd uy = pinned_direct_solve(stiffness_matrix_real(a, combine(f.base, f.direction, s)),
                                                       M * ey, mu, 0);
        SolutionDifferenceRow row;
        row.magnitude = s;
        row.lhs_norm = mass_norm(M, ux - uy);
        const double gap = std::abs(s) * mass_norm(M, f.data_direction);
        const double coef = std::abs(s) * sup_norm(f.direction);
        row.rhs_bound = coef * eta / (sweep.kappa_x * kz * sweep.lambda1) + gap / (kz * sweep.lambda1);
        row.ratio = row.rhs_bound > 0.0 ? row.lhs_norm / row.rhs_bound : 0.0;
        row.data_only_bound = gap / sweep.lambda1_x;
        sweep.max_ratio = std::max(sweep.max_ratio, row.ratio);
        sweep.rows.push_back(row);
    }

    std::vector<const SolutionDifferenceRow*> positive;
    for (const auto& r : sweep.rows)
        if (r.magnitude > 0.0) positive.push_back(&r);
    std::sort(positive.begin(), positive.end(),
              [](const auto* p, const auto* q) { return p->magnitude > q->magnitude; });
    sweep.monotone = !positive.empty();
    for (std::size_t i = 1; i < positive.size(); ++i)
        if (!(positive[i]->lhs_norm < positive[i - 1]->lhs_norm)) sweep.monotone = false;
    if (!positive.empty() && sweep.norm_u_x > 0.0) sweep.smallest_relative = positive.back()->lhs_norm / sweep.norm_u_x;
    return sweep;
}

KernelInstance heat_kernel_instance(const FlowSetup& setup, int x, int y, double t, const Eigen::Vector2d& v) {
    for (double th : setup.pair->theta)
        if (std::abs(th - 1.0) > 1e-12) throw ValidationError("kernel instance: metrics must coincide");
    const auto& nb = setup.mesh->vertex_neighbors(x);
    if (std::find(nb.begin(), nb.end(), y) == nb.end()) throw ValidationError("kernel instance: vertices not adjacent");
    const ContinuityOperator opx(setup, x, t), opy(setup, y, t);
    // transport(x, y) maps frame-of-y coordinates to frame-of-x coordinates.
    const Eigen::Vector2d vy = setup.kernel->frames().transport(x, y).transpose() * v;
    const FlowSolution sx = opx.solve(v), sy = opy.solve(vy);
    const SparseMatrix& M = setup.background->spaces.mass;

    KernelInstance k;
    k.x = x;
    k.y = y;
    k.t = t;
    k.lhs = mass_norm(M, sx.phi - sy.phi);
    k.eta_norm = mass_norm(M, sx.eta);
    k.eta_gap = mass_norm(M, sx.eta - sy.eta);
    double kx = std::numeric_limits<double>::infinity(), ky = kx;
    for (std::size_t tri = 0; tri < setup.coefficient.size(); ++tri) {
        const double lo = min_eigenvalue(setup.coefficient[tri]), hi = spectral_norm(setup.coefficient[tri]);
        const double wx = opx.triangle_weights()[tri], wy = opy.triangle_weights()[tri];
        kx = std::min(kx, wx * lo);
        ky = std::min(ky, wy * lo);
        k.coefficient_gap = std::max(k.coefficient_gap, std::abs(wx - wy) * hi);
    }
    const double lambda1 = first_nonzero_eigenvalue(identity_stiffness(*setup.background), M);
    const double basis = k.coefficient_gap * k.eta_norm + k.eta_gap;
    k.constant = basis > 0.0 ? k.lhs / basis : 0.0;
    k.explicit_bound = k.coefficient_gap * k.eta_norm / (kx * ky * lambda1) + k.eta_gap / (ky * lambda1);
    k.ratio = k.explicit_bound > 0.0 ? k.lhs / k.explicit_bound : 0.0;
    return k;
}

PerturbationFamily heat_kernel_family(const FlowSetup& setup, int x, int y, double t, const Eigen::Vector2d& v) {
    for (double th : setup.pair->theta)
        if (std::abs(th - 1.0) > 1e-12) throw ValidationError("kernel family: metrics must coincide");
    const auto& nb = setup.mesh->vertex_neighbors(x);
    if (std::find(nb.begin(), nb.end(), y) == nb.end()) throw ValidationError("kernel family: vertices not adjacent");
    const ContinuityOperator opx(setup, x, t), opy(setup, y, t);
    const Eigen::Vector2d vy = setup.kernel->frames().transport(x, y).transpose() * v;
    const FlowSolution sx = opx.solve(v), sy = opy.solve(vy);

    PerturbationFamily f;
    f.assembly = setup.background;
    const std::size_t nt = setup.coefficient.size();
    f.base.resize(nt);
    f.direction.resize(nt);
    for (std::size_t tri = 0; tri < nt; ++tri) {
        f.base[tri] = opx.triangle_weights()[tri] * setup.coefficient[tri];
        f.direction[tri] = (opy.triangle_weights()[tri] - opx.triangle_weights()[tri]) * setup.coefficient[tri];
    }
    const double gap = sup_norm(f.direction);
    if (!(gap > 0.0)) throw ValidationError("kernel family: coefficients at x and y coincide");
    for (auto& P : f.direction) P /= gap;
    f.data = sx.eta;
    f.data_direction = (sy.eta - sx.eta) / gap;
    f.margin = std::min(gap, 0.9 * f.kappa());
    validate_family(f);
    return f;
}

} // namespace geoflow
