#pragma once

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "anomalography/core.hpp"

namespace anomalography::batch {

/// P_Omega(Y) with a fixed routing matrix. Unobserved entries of y are 0 and
/// are never read.
struct BatchProblem {
    Matrix y;  // L x T
    std::vector<ObservationMask> masks;  // one per column
    std::shared_ptr<const RoutingMatrix> routing;
    HyperParams params;

    static BatchProblem from_observations(std::span<const Observation> slots, const HyperParams& params);

    std::size_t links() const { return static_cast<std::size_t>(y.rows()); }
    std::size_t horizon() const { return static_cast<std::size_t>(y.cols()); }
    std::size_t flows() const { return routing ? routing->flows() : 0; }

    /// 0/1 matrix of observed entries.
    Matrix mask_matrix() const;
    void validate() const;
};

struct BatchSolution {
    Matrix l_hat;  // L x rho
    Matrix q_hat;  // T x rho
    Matrix a_dense;  // F x T
    AnomalyMap a_hat;
    // objective[0] is the value at the initial point, objective[k] after iteration k.
    std::vector<double> objective;
    std::size_t iterations = 0;
    bool converged = false;

    Matrix x_hat() const { return l_hat * q_hat.transpose(); }
};

struct FactorInit {
    Matrix l;
    Matrix q;
};

/// 1/2 ||P_Omega(Y - L Q' - R A)||_F^2 + lambda*/2 (||L||_F^2 + ||Q||_F^2) + lambda1 ||A||_1.
double objective_p3(const BatchProblem& prob, const Matrix& l, const Matrix& q, const Matrix& a);

/// 1/2 ||P_Omega(Y - X - R A)||_F^2 + lambda* ||X||_* + lambda1 ||A||_1.
double objective_p1(const BatchProblem& prob, const Matrix& x, const Matrix& a);

/// P_Omega(Y - X - R A).
Matrix masked_residual(const BatchProblem& prob, const Matrix& x, const Matrix& a);

/// Block coordinate descent over (A, L, Q): one cyclic Lasso pass per column,
/// then row-wise ridge solves for L and Q. Random init is N(0, 1/rho) from
/// params.seed unless `init` is given.
BatchSolution bcd_solve(const BatchProblem& prob, const std::optional<FactorInit>& init = std::nullopt);

/// Ridge update of every row of L given (Q, A).
Matrix update_subspace(const BatchProblem& prob, const Matrix& q, const Matrix& a);
/// Ridge update of every row of Q given (L, A).
Matrix update_coefficients(const BatchProblem& prob, const Matrix& l, const Matrix& a);

struct SvtSolution {
    Matrix x_hat;
    Matrix a_dense;
    std::vector<double> objective;
    std::size_t iterations = 0;
    bool converged = false;
};

/// Convex reference solver: alternates per-column Lasso in A with proximal
/// gradient (singular-value shrinkage) in X.
SvtSolution svt_oracle_p1(const BatchProblem& prob);

struct QualificationCheck {
    bool holds = false;
    double residual_spectral_norm = 0.0;
};

/// ||P_Omega(Y - L Q' - R A)|| <= lambda* certifies a stationary point of the
/// factorized problem as the global optimum of the nuclear-norm problem.
QualificationCheck prop1_check(const BatchProblem& prob, const Matrix& l, const Matrix& q, const Matrix& a);

/// 1/2 (||L||_F^2 + ||Q||_F^2) - ||X||_* for the balanced factorization
/// L = U sqrt(S), Q = V sqrt(S). Throws DimensionError if rank(X) > rank.
double factorization_gap(const Matrix& x, std::size_t rank);

}  // namespace anomalography::batch
