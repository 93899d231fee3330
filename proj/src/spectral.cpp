#include "geoflow/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <lapacke.h>

#include "geoflow/errors.hpp"
#include "geoflow/random.hpp"

namespace geoflow {

void dense_symmetric_eigen(const Eigen::MatrixXd& K, const Eigen::MatrixXd& M, Eigen::VectorXd& values,
                           Eigen::MatrixXd& vectors) {
    const lapack_int n = static_cast<lapack_int>(K.rows());
    Eigen::MatrixXd A = 0.5 * (K + K.transpose());
    values.resize(n);
    const bool diagonal_mass = (M - Eigen::MatrixXd(M.diagonal().asDiagonal())).norm() == 0.0;
    lapack_int info;
    if (diagonal_mass) {
        // Symmetric scaling by M^{-1/2} and the divide-and-conquer standard solver.
        const Eigen::VectorXd s = M.diagonal().cwiseSqrt().cwiseInverse();
        A = s.asDiagonal() * A * s.asDiagonal();
        info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'L', n, A.data(), n, values.data());
        if (info == 0) A = s.asDiagonal() * A;
    } else {
        Eigen::MatrixXd B = 0.5 * (M + M.transpose());
        info = LAPACKE_dsygvd(LAPACK_COL_MAJOR, 1, 'V', 'L', n, A.data(), n, B.data(), n, values.data());
    }
    if (info != 0) throw NonConvergence("dense eigensolver failed (LAPACK info " + std::to_string(info) + ")", {});
    vectors = std::move(A);
}

namespace {

/// Fix sign so the largest-magnitude entry is positive (deterministic output).
void normalize_signs(Eigen::MatrixXd& V) {
    for (Eigen::Index k = 0; k < V.cols(); ++k) {
        Eigen::Index i;
        V.col(k).cwiseAbs().maxCoeff(&i);
        if (V(i, k) < 0.0) V.col(k) *= -1.0;
    }
}

double residual_norm(const SparseMatrix& K, const SparseMatrix& M, double lambda, const Eigen::VectorXd& phi) {
    const Eigen::VectorXd Mphi = M * phi;
    return (K * phi - lambda * Mphi).norm() / Mphi.norm();
}

SpectralDecomposition subspace_iteration(const SparseMatrix& K, const SparseMatrix& M, int count) {
    const int n = static_cast<int>(K.rows());
    const double scale = K.diagonal().mean() / M.diagonal().mean();
    const double sigma = -1e-3 * scale;
    SparseMatrix shifted = K - sigma * M;
    Eigen::SimplicialLDLT<SparseMatrix> solver(shifted);
    if (solver.info() != Eigen::Success) throw NonConvergence("shift-invert factorization failed", {});

    // Block shift-invert iteration with M-orthonormalization and Rayleigh-Ritz;
    // the block resolves exactly degenerate eigenvalues.
    const int p = std::min(n, std::max(2 * count, count + 10));
    CounterRng rng(0x7375627370616365ULL);
    Eigen::MatrixXd X(n, p);
    for (int j = 0; j < p; ++j) X.col(j) = rng.normal_vector(n);
    std::vector<double> history;
    SpectralDecomposition out;
    out.dense_path = false;
    for (int iter = 0; iter < 1000; ++iter) {
        Eigen::MatrixXd Y(n, p);
        const Eigen::MatrixXd MX = M * X;
        for (int j = 0; j < p; ++j) Y.col(j) = solver.solve(MX.col(j));
        // Rayleigh-Ritz on span(Y) for the pencil (K, M).
        const Eigen::MatrixXd Kr = Y.transpose() * (K * Y);
        const Eigen::MatrixXd Mr = Y.transpose() * (M * Y);
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (Kr + Kr.transpose()),
                                                                     0.5 * (Mr + Mr.transpose()));
        if (es.info() != Eigen::Success) throw NonConvergence("Rayleigh-Ritz step failed", history);
        X = Y * es.eigenvectors();
        out.values = es.eigenvalues().head(count);
        out.vectors = X.leftCols(count);
        double worst = 0.0;
        const double lam1 = count > 1 ? std::abs(out.values[1]) : 1.0;
        for (int k = 0; k < count; ++k) {
            const double r = residual_norm(K, M, out.values[k], out.vectors.col(k));
            worst = std::max(worst, r / std::max(std::abs(out.values[k]), lam1));
        }
        history.push_back(worst);
        if (worst <= 1e-11) {
            out.max_residual = worst;
            return out;
        }
    }
    throw NonConvergence("shift-invert subspace iteration did not converge", history);
}

} // namespace

SpectralDecomposition eigensolve_pencil(const SparseMatrix& K, const SparseMatrix& M, int count, EigenMethod method) {
    const int n = static_cast<int>(K.rows());
    if (count < 1 || count > n) throw ValidationError("eigensolve: count must lie in [1, dimension]");
    if ((SparseMatrix(K.transpose()) - K).norm() > 1e-12 * K.norm())
        throw ValidationError("eigensolve: stiffness is not symmetric");
    bool dense = method == EigenMethod::dense ||
                 (method == EigenMethod::automatic && (n < 600 || 4 * count > n));
    SpectralDecomposition out;
    if (dense) {
        Eigen::VectorXd vals;
        Eigen::MatrixXd vecs;
        dense_symmetric_eigen(Eigen::MatrixXd(K), Eigen::MatrixXd(M), vals, vecs);
        out.values = vals.head(count);
        out.vectors = vecs.leftCols(count);
        out.dense_path = true;
    } else {
        out = subspace_iteration(K, M, count);
    }
    // The null mode of a closed connected surface is exactly constant.
    out.values[0] = std::max(out.values[0], 0.0);
    if (std::abs(out.values[0]) < 1e-8 * (count > 1 ? out.values[1] : 1.0)) {
        out.values[0] = 0.0;
        const double mu = (M * Eigen::VectorXd::Ones(n)).sum();
        out.vectors.col(0).setConstant(1.0 / std::sqrt(mu));
        // Re-orthogonalize the rest against the exact constant.
        for (int k = 1; k < count; ++k) {
            const Eigen::VectorXd Mc = M * out.vectors.col(0);
            out.vectors.col(k) -= out.vectors.col(0) * Mc.dot(out.vectors.col(k));
            out.vectors.col(k) /= std::sqrt(out.vectors.col(k).dot(M * out.vectors.col(k)));
        }
    }
    normalize_signs(out.vectors);
    double worst = 0.0;
    const double lam1 = count > 1 ? out.values[1] : 1.0;
    for (int k = 0; k < count; ++k) {
        const double r = residual_norm(K, M, out.values[k], out.vectors.col(k));
        worst = std::max(worst, r / std::max(out.values[k], lam1));
    }
    out.max_residual = worst;
    if (worst > 1e-10) throw NonConvergence("eigensolve: residual " + std::to_string(worst) + " above 1e-10", {worst});
    return out;
}

SpectralDecomposition eigensolve(const EllipticOperator& op, int count, EigenMethod method) {
    if (!op.self_adjoint())
        throw ValidationError("eigensolve: operator is not self-adjoint (use the functional calculus instead)");
    return eigensolve_pencil(op.stiffness(), op.spaces().mass, count, method);
}

double poincare_constant(const SpectralDecomposition& spec) {
    if (spec.count() < 2 || !(spec.values[1] >= 1e-12))
        throw ValidationError("poincare_constant: lambda_1 unresolved or below 1e-12");
    return 1.0 / std::sqrt(spec.values[1]);
}

} // namespace geoflow
