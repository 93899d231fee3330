#include "geoflow/elliptic_solver.hpp"

#include <cmath>
#include <string>

#include "geoflow/errors.hpp"

namespace geoflow {

Eigen::VectorXd remean(const Eigen::VectorXd& u, const Eigen::VectorXd& measure) {
    if (measure.size() != u.size() || !(measure.minCoeff() > 0.0)) throw ValidationError("remean: invalid measure");
    return u.array() - measure.dot(u) / measure.sum();
}

Eigen::VectorXcd remean(const Eigen::VectorXcd& u, const Eigen::VectorXd& measure) {
    if (measure.size() != u.size() || !(measure.minCoeff() > 0.0)) throw ValidationError("remean: invalid measure");
    const std::complex<double> m = measure.cast<std::complex<double>>().dot(u) / measure.sum();
    return u.array() - m;
}

Eigen::VectorXd projected_cg(const SparseMatrix& K, const Eigen::VectorXd& load, const Eigen::VectorXd& measure,
                             double tolerance, SolveReport* report) {
    const Eigen::Index n = K.rows();
    const double mu = measure.sum();
    auto project_iterate = [&](Eigen::VectorXd& v) { v.array() -= measure.dot(v) / mu; };
    auto project_range = [&](Eigen::VectorXd& v) { v.array() -= v.sum() / static_cast<double>(n); };

    Eigen::VectorXd b = load;
    project_range(b);
    const double bnorm = b.norm();
    Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
    std::vector<double> history;
    if (bnorm == 0.0) {
        if (report) *report = SolveReport{{0.0}, 0.0, 0};
        return u;
    }
    const Eigen::VectorXd inv_diag = K.diagonal().cwiseInverse();
    Eigen::VectorXd r = b;
    Eigen::VectorXd z = inv_diag.cwiseProduct(r);
    project_iterate(z);
    Eigen::VectorXd p = z;
    double rz = r.dot(z);
    const int max_iter = static_cast<int>(std::max<Eigen::Index>(10 * n, 1000));
    int it = 0;
    double rel = 1.0;
    for (; it < max_iter; ++it) {
        const Eigen::VectorXd Kp = K * p;
        const double alpha = rz / p.dot(Kp);
        u += alpha * p;
        r -= alpha * Kp;
        project_range(r);
        // Recompute the true residual periodically to avoid drift.
        if (it % 50 == 49) {
            project_iterate(u);
            r = b - K * u;
            project_range(r);
        }
        rel = r.norm() / bnorm;
        history.push_back(rel);
        if (rel <= tolerance) break;
        z = inv_diag.cwiseProduct(r);
        project_iterate(z);
        const double rz_new = r.dot(z);
        p = z + (rz_new / rz) * p;
        rz = rz_new;
    }
    project_iterate(u);
    rel = (b - K * u).norm() / bnorm;
    if (report) *report = SolveReport{history, rel, it + 1};
    if (!(rel <= std::max(tolerance * 10.0, 1e-10)))
        throw NonConvergence("projected CG stalled at relative residual " + std::to_string(rel), history);
    return u;
}

Eigen::VectorXd pinned_direct_solve(const SparseMatrix& K, const Eigen::VectorXd& load, const Eigen::VectorXd& measure,
                                    int pin) {
    const Eigen::Index n = K.rows();
    // Replace row/column `pin` by the identity: the singular system is consistent, so
    // fixing u[pin] = 0 selects one solution; remeaning gives the unique mean-zero one.
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(K.nonZeros());
    for (int k = 0; k < K.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(K, k); it; ++it)
            if (it.row() != pin && it.col() != pin) trip.emplace_back(it.row(), it.col(), it.value());
    trip.emplace_back(pin, pin, 1.0);
    SparseMatrix Kp(n, n);
    Kp.setFromTriplets(trip.begin(), trip.end());
    Eigen::SimplicialLDLT<SparseMatrix> solver(Kp);
    if (solver.info() != Eigen::Success) throw NonConvergence("pinned factorization failed", {});
    Eigen::VectorXd b = load;
    b[pin] = 0.0;
    Eigen::VectorXd u = solver.solve(b);
    return remean(u, measure);
}

namespace {

Eigen::VectorXcd dense_bordered(const SparseMatrixC& K, const Eigen::VectorXcd& load, const Eigen::VectorXd& measure) {
    const Eigen::Index n = K.rows();
    Eigen::MatrixXcd A = Eigen::MatrixXcd::Zero(n + 1, n + 1);
    A.topLeftCorner(n, n) = Eigen::MatrixXcd(K);
    A.block(0, n, n, 1).setOnes();
    A.block(n, 0, 1, n) = measure.transpose().cast<std::complex<double>>();
    Eigen::VectorXcd rhs(n + 1);
    rhs.head(n) = load;
    rhs[n] = 0.0;
    Eigen::VectorXcd sol = A.partialPivLu().solve(rhs);
    return sol.head(n);
}

} // namespace

Eigen::VectorXcd solve_mean_zero(const MeanZeroProblem& p, SolveMethod method, SolveReport* report) {
    if (!p.op) throw ValidationError("solve_mean_zero: missing operator");
    const EllipticOperator& op = *p.op;
    const auto& spaces = op.spaces();
    const Eigen::Index n = op.dimension();
    if (p.rhs.size() != n) throw ValidationError("solve_mean_zero: rhs size mismatch");
    const Eigen::VectorXd measure = p.measure.size() ? p.measure : spaces.measure;
    if (measure.size() != n || !(measure.minCoeff() > 0.0)) throw ValidationError("solve_mean_zero: invalid measure");

    // L u = f  <=>  K u = M (f / b).
    Eigen::VectorXcd g = p.rhs;
    if (op.multiplier()) g = g.cwiseQuotient(*op.multiplier());
    const Eigen::VectorXcd load = spaces.mass.cast<std::complex<double>>() * g;
    const double gnorm = spaces.norm(g);
    if (std::abs(load.sum()) > 1e-10 * gnorm * std::sqrt(spaces.total_measure))
        throw CompatibilityError("solve_mean_zero: right-hand side does not integrate to zero");
    if (gnorm == 0.0) {
        if (report) *report = SolveReport{};
        return Eigen::VectorXcd::Zero(n);
    }

    if (method == SolveMethod::automatic) method = op.is_real() ? SolveMethod::projected_cg : SolveMethod::dense;
    Eigen::VectorXcd u;
    SolveReport local;
    if (method == SolveMethod::dense) {
        u = dense_bordered(op.stiffness_complex(), load, measure);
    } else {
        if (!op.is_real()) throw ValidationError("solve_mean_zero: iterative paths need a self-adjoint operator");
        const Eigen::VectorXd lre = load.real();
        const Eigen::VectorXd lim = load.imag();
        Eigen::VectorXd ure, uim = Eigen::VectorXd::Zero(n);
        if (method == SolveMethod::projected_cg) {
            ure = projected_cg(op.stiffness(), lre, measure, 1e-13, &local);
            if (lim.norm() > 0.0) uim = projected_cg(op.stiffness(), lim, measure, 1e-13, nullptr);
        } else {
            Eigen::Index pin;
            measure.maxCoeff(&pin);
            ure = pinned_direct_solve(op.stiffness(), lre, measure, static_cast<int>(pin));
            if (lim.norm() > 0.0) uim = pinned_direct_solve(op.stiffness(), lim, measure, static_cast<int>(pin));
        }
        u.resize(n);
        u.real() = ure;
        u.imag() = uim;
    }
    u = remean(u, measure);
    const double rel = (op.stiffness_complex() * u - load).norm() / load.norm();
    local.relative_residual = rel;
    if (report) *report = local;
    if (!(rel <= 1e-10))
        throw NonConvergence("solve_mean_zero: relative residual " + std::to_string(rel) + " above 1e-10",
                             local.residual_history);
    return u;
}

Eigen::VectorXd solve_mean_zero(const EllipticOperator& op, const Eigen::VectorXd& f, SolveMethod method,
                                SolveReport* report, const Eigen::VectorXd& measure) {
    MeanZeroProblem p{&op, f.cast<std::complex<double>>(), measure};
    return solve_mean_zero(p, method, report).real();
}

} // namespace geoflow
