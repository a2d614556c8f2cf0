#include <doctest.h>

#include <random>

#include <Eigen/SVD>

#include "anomalography/linalg.hpp"

using namespace anomalography;

namespace {

Matrix random_matrix(Eigen::Index m, Eigen::Index n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0.0, 1.0);
    Matrix a(m, n);
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < m; ++i) a(i, j) = d(rng);
    return a;
}

}  // namespace

TEST_CASE("jacobi svd matches the Eigen oracle") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Eigen::Index m = 3 + static_cast<Eigen::Index>(seed % 7);
        const Eigen::Index n = 2 + static_cast<Eigen::Index>((seed * 5) % 9);
        const Matrix a = random_matrix(m, n, seed);
        const ThinSvd svd = jacobi_svd(a);
        const Eigen::JacobiSVD<Matrix> oracle(a);
        CHECK((svd.s - oracle.singularValues()).norm() <= 1e-10 * oracle.singularValues()[0]);
        const Matrix rebuilt = svd.u * svd.s.asDiagonal() * svd.v.transpose();
        CHECK((rebuilt - a).norm() <= 1e-10 * a.norm());
        const auto k = svd.s.size();
        CHECK((svd.u.transpose() * svd.u - Matrix::Identity(k, k)).norm() < 1e-10);
        CHECK((svd.v.transpose() * svd.v - Matrix::Identity(k, k)).norm() < 1e-10);
    }
}

TEST_CASE("jacobi svd of a rank-deficient matrix") {
    const Matrix a = random_matrix(8, 2, 1) * random_matrix(2, 6, 2);
    const ThinSvd svd = jacobi_svd(a);
    CHECK(svd.s.size() == 6);
    CHECK(svd.s[2] <= 1e-12 * svd.s[0]);
    CHECK((svd.u * svd.s.asDiagonal() * svd.v.transpose() - a).norm() <= 1e-10 * a.norm());
}

TEST_CASE("singular value shrinkage of diag(3,1) by 2") {
    Matrix a = Matrix::Zero(2, 2);
    a(0, 0) = 3;
    a(1, 1) = 1;
    const Matrix s = shrink_singular_values(a, 2.0);
    Matrix expected = Matrix::Zero(2, 2);
    expected(0, 0) = 1;
    CHECK((s - expected).norm() < 1e-14);
}

TEST_CASE("shrinkage matches the Eigen oracle on random input") {
    const Matrix a = random_matrix(7, 5, 11);
    const Eigen::JacobiSVD<Matrix> oracle(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double tau = 0.8;
    const Vector s = (oracle.singularValues().array() - tau).max(0.0).matrix();
    const Matrix expected = oracle.matrixU() * s.asDiagonal() * oracle.matrixV().transpose();
    CHECK((shrink_singular_values(a, tau) - expected).norm() < 1e-10);
}

TEST_CASE("nuclear and spectral norms") {
    const Matrix a = random_matrix(9, 6, 4);
    const Eigen::JacobiSVD<Matrix> oracle(a);
    CHECK(nuclear_norm(a) == doctest::Approx(oracle.singularValues().sum()).epsilon(1e-12));
    CHECK(std::abs(spectral_norm(a) - oracle.singularValues()[0]) <= 1e-6 * oracle.singularValues()[0]);
    CHECK(spectral_norm(Matrix::Zero(3, 4)) == 0.0);
}

TEST_CASE("top singular subspace spans the leading singular vectors") {
    const Matrix a = random_matrix(10, 3, 5) * random_matrix(3, 12, 6) + 1e-3 * random_matrix(10, 12, 7);
    const Matrix basis = top_left_singular_vectors(a, 3);
    CHECK((basis.transpose() * basis - Matrix::Identity(3, 3)).norm() < 1e-10);
    const Eigen::JacobiSVD<Matrix> oracle(a, Eigen::ComputeThinU);
    const Matrix u = oracle.matrixU().leftCols(3);
    // Equal projectors.
    CHECK((basis * basis.transpose() - u * u.transpose()).norm() < 1e-8);
}
