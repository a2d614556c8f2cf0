#pragma once

#include <vector>

#include "anomalography/core.hpp"

namespace anomalography::online {

struct SlotEstimate {
    Vector a_hat;  // length F
    Vector q_hat;  // length rho
    Vector x_hat;  // length L, subspace * q_hat
    std::size_t lasso_passes = 0;
};

/// Joint (q, a) estimate for one slot with the subspace held fixed:
///   min 1/2 ||Omega (y - L q - R a)||^2 + lambda*/2 ||q||^2 + lambda1 ||a||_1.
/// q is eliminated in closed form, leaving a Lasso in a; x_hat = subspace * q_hat.
SlotEstimate estimate_slot(const Matrix& subspace, const Observation& obs, const HyperParams& params,
                           const Vector* warm_start = nullptr);

/// g_t(L, q, a), the per-slot joint cost.
double slot_cost(const Matrix& subspace, const Observation& obs, const Vector& q, const Vector& a,
                 const HyperParams& params);

/// Exponentially weighted recursive state (per-link accumulators).
struct OnlineState {
    Matrix subspace;  // L[t]
    std::vector<Matrix> gram;  // G_l
    std::vector<Vector> cross;  // s_l
    std::vector<Matrix> inverse;  // M_l = (G_l + lambda* I)^{-1}, maintained by rls_fast_step only
    Vector last_anomaly;  // a[t], warm start for the next Lasso
    std::size_t t = 0;
    HyperParams params;

    /// L[0] has i.i.d. N(0, 1/L) entries drawn from params.seed.
    static OnlineState init(std::size_t n_links, std::size_t n_flows, const HyperParams& params);
};

/// One slot of the recursive tracker with a fresh ridge solve per link.
SlotEstimate online_step(OnlineState& state, const Observation& obs);

/// Same recursion for beta = 1 using rank-one inverse updates of M_l.
/// Throws ConfigError when beta != 1.
SlotEstimate rls_fast_step(OnlineState& state, const Observation& obs);

/// Subspace updates given the slot estimate; the step functions are
/// estimate_slot followed by one of these. est.x_hat is refreshed.
void direct_update(OnlineState& state, const Observation& obs, SlotEstimate& est);
void rls_fast_update(OnlineState& state, const Observation& obs, SlotEstimate& est);

/// Accelerated stochastic-gradient tracker state.
struct NesterovState {
    Matrix current;  // L[t]
    Matrix previous;  // L[t-1]
    Matrix extrapolated;  // L~[t+1]
    double momentum = 1.0;  // k[t+1]
    double step_scale = 1.0;  // mu[t]; the step is 1 / mu
    Vector last_anomaly;
    std::size_t t = 0;
    std::size_t last_backtracks = 0;
    HyperParams params;

    static NesterovState init(std::size_t n_links, std::size_t n_flows, const HyperParams& params,
                              double initial_step_scale = 1.0);
};

/// f_t(L) = 1/2 ||Omega(y - L q - R a)||^2 + lambda*/(2t) ||L||_F^2 + lambda*/2 ||q||^2 + lambda1 ||a||_1.
double instantaneous_cost(const Matrix& subspace, const Observation& obs, const Vector& q, const Vector& a,
                          std::size_t t, const HyperParams& params);
Matrix instantaneous_gradient(const Matrix& subspace, const Observation& obs, const Vector& q, const Vector& a,
                              std::size_t t, const HyperParams& params);

/// One slot of the accelerated tracker with backtracking on the step size.
/// Throws NumericalError if 60 expansions do not satisfy the quadratic bound.
SlotEstimate sgd_step(NesterovState& state, const Observation& obs);

}  // namespace anomalography::online
