#ifndef FEDDAR_NUMERICS_HPP
#define FEDDAR_NUMERICS_HPP

#include "feddar/types.hpp"

namespace feddar::numerics {

struct QrResult {
    Matrix q;  // d x k, orthonormal columns
    Matrix r;  // k x k, upper triangular, positive diagonal
};

// Thin QR with a deterministic sign convention (R diagonal > 0).
// Throws RankDeficientError naming the first deficient column.
QrResult qr_orthonormalize(const Matrix& a);

struct TopKEigs {
    Matrix vectors;      // p x k, orthonormal columns, one eigenvector per column
    Vector values;       // k eigenvalues, non-increasing
    bool gap_collapsed;  // true when lambda_k ~ lambda_{k+1} within 1e-12
};

// Top-k eigenpairs of a symmetric PSD matrix, eigenvalues non-increasing,
// each column signed so its largest-magnitude entry is positive.
TopKEigs top_k_eigvecs(const Matrix& s, Index k);

// Solves (h + ridge*I) x = b for symmetric h. Throws SingularMatrixError
// (carrying the smallest-eigenvalue estimate) when the shifted system is
// numerically singular.
Vector solve_spd(const Matrix& h, const Vector& b, double ridge = 0.0);

// Principal angle distance ||(I - A A^T) B||_2 between two orthonormal bases.
// Inputs are validated to be orthonormal within 1e-8.
double principal_angle_dist(const Matrix& a, const Matrix& b);

// true when ||Q^T Q - I||_max <= tol
bool is_orthonormal(const Matrix& q, double tol);

}  // namespace feddar::numerics

#endif
