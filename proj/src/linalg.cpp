#include "anomalography/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace anomalography {

namespace {

// Orthogonalizes the columns of `work` (m >= n) in place and accumulates the
// rotations in `v`.
void hestenes_sweeps(Matrix& work, Matrix& v, std::size_t max_sweeps) {
    const Eigen::Index n = work.cols();
    constexpr double eps = 1e-15;
    for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (Eigen::Index i = 0; i + 1 < n; ++i) {
            for (Eigen::Index j = i + 1; j < n; ++j) {
                const double alpha = work.col(i).squaredNorm();
                const double beta = work.col(j).squaredNorm();
                const double gamma = work.col(i).dot(work.col(j));
                if (alpha == 0.0 || beta == 0.0) continue;
                if (std::abs(gamma) <= eps * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (Matrix* m : {&work, &v}) {
                    for (Eigen::Index r = 0; r < m->rows(); ++r) {
                        const double xi = (*m)(r, i);
                        const double xj = (*m)(r, j);
                        (*m)(r, i) = c * xi - s * xj;
                        (*m)(r, j) = s * xi + c * xj;
                    }
                }
            }
        }
        if (!rotated) return;
    }
    throw NumericalError("jacobi_svd: no convergence within the sweep budget");
}

}  // namespace

ThinSvd jacobi_svd(const Matrix& a, std::size_t max_sweeps) {
    if (!all_finite(a)) throw NumericalError("jacobi_svd: non-finite input");
    const bool transposed = a.rows() < a.cols();
    Matrix work = transposed ? Matrix(a.transpose()) : a;
    const Eigen::Index n = work.cols();
    Matrix v = Matrix::Identity(n, n);
    hestenes_sweeps(work, v, max_sweeps);

    Vector s(n);
    for (Eigen::Index i = 0; i < n; ++i) s[i] = work.col(i).norm();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) { return s[x] > s[y]; });

    ThinSvd out;
    out.s.resize(n);
    Matrix u(work.rows(), n);
    Matrix vs(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const Eigen::Index src = order[static_cast<std::size_t>(k)];
        out.s[k] = s[src];
        u.col(k) = s[src] > 0.0 ? Vector(work.col(src) / s[src]) : Vector::Zero(work.rows());
        vs.col(k) = v.col(src);
    }
    if (transposed) {
        out.u = std::move(vs);
        out.v = std::move(u);
    } else {
        out.u = std::move(u);
        out.v = std::move(vs);
    }
    return out;
}

Matrix shrink_singular_values(const Matrix& a, double tau) {
    const ThinSvd svd = jacobi_svd(a);
    Matrix out = Matrix::Zero(a.rows(), a.cols());
    for (Eigen::Index k = 0; k < svd.s.size(); ++k) {
        const double shrunk = svd.s[k] - tau;
        if (shrunk <= 0.0) break;
        out.noalias() += shrunk * svd.u.col(k) * svd.v.col(k).transpose();
    }
    return out;
}

double nuclear_norm(const Matrix& a) {
    if (a.size() == 0) return 0.0;
    return jacobi_svd(a).s.sum();
}

double spectral_norm(const Matrix& a, double tol, std::size_t max_iters) {
    if (a.size() == 0) return 0.0;
    // Deterministic, generic start vector.
    Vector x(a.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = 1.0 + 0.01 * static_cast<double>(i % 7);
    x.normalize();
    double estimate = 0.0;
    for (std::size_t it = 0; it < max_iters; ++it) {
        const Vector ax = a * x;
        const double norm_ax = ax.norm();
        if (norm_ax == 0.0) return 0.0;
        Vector next = a.transpose() * ax;
        const double norm_next = next.norm();
        if (norm_next == 0.0) return norm_ax;
        x = next / norm_next;
        const double updated = norm_ax;
        if (it > 0 && std::abs(updated - estimate) <= tol * updated) {
            return (a * x).norm();
        }
        estimate = updated;
    }
    return (a * x).norm();
}

Matrix top_left_singular_vectors(const Matrix& a, std::size_t r) {
    const ThinSvd svd = jacobi_svd(a);
    const Eigen::Index k = std::min<Eigen::Index>(static_cast<Eigen::Index>(r), svd.u.cols());
    return svd.u.leftCols(k);
}

}  // namespace anomalography
