#pragma once

#include "anomalography/core.hpp"

namespace anomalography {

struct ThinSvd {
    Matrix u;  // m x k, orthonormal columns (columns for zero singular values are zero)
    Vector s;  // k singular values, descending
    Matrix v;  // n x k
};

/// One-sided (Hestenes) Jacobi SVD, k = min(m, n). Throws NumericalError if
/// the sweeps fail to converge.
ThinSvd jacobi_svd(const Matrix& a, std::size_t max_sweeps = 100);

/// Proximal operator of tau * nuclear norm: shrinks every singular value by tau.
Matrix shrink_singular_values(const Matrix& a, double tau);

double nuclear_norm(const Matrix& a);

/// Largest singular value by power iteration on A'A; stops when the relative
/// change of the estimate drops below tol.
double spectral_norm(const Matrix& a, double tol = 1e-8, std::size_t max_iters = 20000);

/// Orthonormal basis of the top-r left singular subspace.
Matrix top_left_singular_vectors(const Matrix& a, std::size_t r);

}  // namespace anomalography
