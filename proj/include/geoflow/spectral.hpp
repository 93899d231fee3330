#pragma once

#include <Eigen/Dense>

#include "geoflow/fem.hpp"

namespace geoflow {

/// Lowest eigenpairs of K phi = lambda M phi, eigenvectors M-orthonormal.
struct SpectralDecomposition {
    Eigen::VectorXd values;
    Eigen::MatrixXd vectors;
    double max_residual = 0.0;
    bool dense_path = true;

    int count() const { return static_cast<int>(values.size()); }
};

enum class EigenMethod { automatic, dense, shift_invert };

/// Symmetric-definite pencil solve. The dense path (LAPACK) is used below 600
/// vertices or when most of the spectrum is requested; otherwise block shift-invert
/// subspace iteration.
SpectralDecomposition eigensolve_pencil(const SparseMatrix& K, const SparseMatrix& M, int count,
                                        EigenMethod method = EigenMethod::automatic);

/// Eigenpairs of a self-adjoint elliptic operator (real symmetric A, b = 1).
SpectralDecomposition eigensolve(const EllipticOperator& op, int count, EigenMethod method = EigenMethod::automatic);

/// Dense generalized symmetric-definite eigenproblem (ascending), vectors M-orthonormal.
void dense_symmetric_eigen(const Eigen::MatrixXd& K, const Eigen::MatrixXd& M, Eigen::VectorXd& values,
                           Eigen::MatrixXd& vectors);

/// 1/sqrt(lambda_1): the sharp constant in ||u - mean u|| <= C ||grad u||.
double poincare_constant(const SpectralDecomposition& spec);

} // namespace geoflow
