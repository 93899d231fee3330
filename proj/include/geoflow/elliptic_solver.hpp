#pragma once

#include <vector>

#include <Eigen/Dense>

#include "geoflow/fem.hpp"

namespace geoflow {

enum class SolveMethod {
    automatic,      ///< projected CG for self-adjoint operators, dense otherwise
    projected_cg,   ///< Jacobi-preconditioned CG with mean-zero projections
    sparse_direct,  ///< pinned sparse LDLT, then remean (self-adjoint only)
    dense,          ///< dense factorization on the mean-zero complement
};

/// L u = f with the compatibility condition checked against the operator's measure and
/// the solution normalized to mean zero against `measure` (vertex weights, e.g. M*1).
struct MeanZeroProblem {
    const EllipticOperator* op = nullptr;
    Eigen::VectorXcd rhs;
    /// Vertex weights of the measure whose mean must vanish; empty = operator's measure.
    Eigen::VectorXd measure;
};

struct SolveReport {
    std::vector<double> residual_history;
    double relative_residual = 0.0;
    int iterations = 0;
};

/// Unique mean-zero solution. Throws CompatibilityError / NonConvergence.
Eigen::VectorXcd solve_mean_zero(const MeanZeroProblem& p, SolveMethod method = SolveMethod::automatic,
                                 SolveReport* report = nullptr);
/// Real convenience overload for self-adjoint operators.
Eigen::VectorXd solve_mean_zero(const EllipticOperator& op, const Eigen::VectorXd& f,
                                SolveMethod method = SolveMethod::automatic, SolveReport* report = nullptr,
                                const Eigen::VectorXd& measure = {});

/// u - (integral of u against the measure) / total measure.
Eigen::VectorXd remean(const Eigen::VectorXd& u, const Eigen::VectorXd& measure);
Eigen::VectorXcd remean(const Eigen::VectorXcd& u, const Eigen::VectorXd& measure);

/// Projected CG on a symmetric positive semidefinite K whose kernel is the constants:
/// solves K u = load (load must sum to zero) with mean zero against `measure`.
Eigen::VectorXd projected_cg(const SparseMatrix& K, const Eigen::VectorXd& load, const Eigen::VectorXd& measure,
                             double tolerance, SolveReport* report);

/// Direct solve of the same singular system by pinning one vertex, then remeaning.
Eigen::VectorXd pinned_direct_solve(const SparseMatrix& K, const Eigen::VectorXd& load, const Eigen::VectorXd& measure,
                                    int pin);

} // namespace geoflow
