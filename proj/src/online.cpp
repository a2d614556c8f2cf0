#include "anomalography/online.hpp"

#include <cmath>
#include <random>
#include <string>

#include "anomalography/sparse_solver.hpp"

namespace anomalography::online {

namespace {

constexpr std::uint64_t kSubspaceInitStream = 201;
constexpr std::size_t kMaxBacktracks = 60;

Matrix random_subspace(std::size_t n_links, const HyperParams& params) {
    Rng rng = seeded_rng(params.seed, kSubspaceInitStream);
    std::normal_distribution<double> entry(0.0, 1.0 / std::sqrt(static_cast<double>(n_links)));
    Matrix l(static_cast<Eigen::Index>(n_links), static_cast<Eigen::Index>(params.rank));
    for (Eigen::Index j = 0; j < l.cols(); ++j)
        for (Eigen::Index i = 0; i < l.rows(); ++i) l(i, j) = entry(rng);
    return l;
}

void check_slot(const Observation& obs, std::size_t n_links, std::size_t expected_t, const Vector& last_anomaly) {
    const Dims dims{n_links, static_cast<std::size_t>(last_anomaly.size()), 0, 0};
    validate(obs, dims);
    if (obs.t != expected_t)
        throw DimensionError("online: expected slot " + std::to_string(expected_t) + ", got " + std::to_string(obs.t));
}

// Omega_t (y_t - R_t a), zero on unobserved links.
Vector masked_target(const Observation& obs, const Vector& a) {
    return (obs.y - obs.routing->apply(a)).cwiseProduct(obs.mask.weights());
}

}  // namespace

SlotEstimate estimate_slot(const Matrix& subspace, const Observation& obs, const HyperParams& params,
                           const Vector* warm_start) {
    const Eigen::Index n_links = subspace.rows();
    const Eigen::Index rho = subspace.cols();
    const auto n_flows = static_cast<Eigen::Index>(obs.routing->flows());
    const Vector w = obs.mask.weights();
    const double lambda = params.lambda_star;

    SlotEstimate est;
    if (obs.mask.count() == 0) {
        est.a_hat = Vector::Zero(n_flows);
        est.q_hat = Vector::Zero(rho);
        est.x_hat = Vector::Zero(n_links);
        return est;
    }

    // D Omega = (lambda I + L' Omega L)^{-1} (Omega L)'.
    const Matrix lo = w.asDiagonal() * subspace;
    const Matrix h = lambda * Matrix::Identity(rho, rho) + lo.transpose() * lo;
    const Matrix d_omega = solve_pd(h, Matrix(lo.transpose()));

    // B = Omega R, built column by column from the routing paths.
    Matrix b = Matrix::Zero(n_links, n_flows);
    for (Eigen::Index f = 0; f < n_flows; ++f)
        for (std::size_t l : obs.routing->flow_links(static_cast<std::size_t>(f)))
            if (obs.mask.observed(l)) b(static_cast<Eigen::Index>(l), f) = 1.0;
    const Vector yo = obs.y.cwiseProduct(w);

    // F[t] stacks (Omega - Omega L D Omega) over sqrt(lambda*) D Omega; applied
    // blockwise to y and to the columns of R.
    const Matrix db = d_omega * b;
    const Vector dy = d_omega * yo;
    const double root = std::sqrt(lambda);
    Matrix design(n_links + rho, n_flows);
    design.topRows(n_links) = b - lo * db;
    design.bottomRows(rho) = root * db;
    Vector response(n_links + rho);
    response.head(n_links) = yo - lo * dy;
    response.tail(rho) = root * dy;

    const lasso::DenseDesign dense(design);
    const Vector start = (warm_start && warm_start->size() == n_flows) ? *warm_start : Vector::Zero(n_flows);
    auto res = lasso::lasso_cd_on(dense, response, params.lambda_one, start, params.lasso_tol, params.lasso_max_passes);
    est.a_hat = std::move(res.a);
    est.lasso_passes = res.passes;
    est.q_hat = d_omega * (obs.y - obs.routing->apply(est.a_hat));
    est.x_hat = subspace * est.q_hat;
    return est;
}

double slot_cost(const Matrix& subspace, const Observation& obs, const Vector& q, const Vector& a,
                 const HyperParams& params) {
    const Vector r = masked_target(obs, a) - (subspace * q).cwiseProduct(obs.mask.weights());
    return 0.5 * r.squaredNorm() + 0.5 * params.lambda_star * q.squaredNorm() + params.lambda_one * a.lpNorm<1>();
}

OnlineState OnlineState::init(std::size_t n_links, std::size_t n_flows, const HyperParams& params) {
    params.validate();
    OnlineState s;
    s.params = params;
    s.subspace = random_subspace(n_links, params);
    const auto rho = static_cast<Eigen::Index>(params.rank);
    s.gram.assign(n_links, Matrix::Zero(rho, rho));
    s.cross.assign(n_links, Vector::Zero(rho));
    s.last_anomaly = Vector::Zero(static_cast<Eigen::Index>(n_flows));
    return s;
}

void direct_update(OnlineState& state, const Observation& obs, SlotEstimate& est) {
    const std::size_t n_links = static_cast<std::size_t>(state.subspace.rows());
    const HyperParams& p = state.params;
    const auto rho = static_cast<Eigen::Index>(p.rank);
    const Matrix ridge = p.lambda_star * Matrix::Identity(rho, rho);
    const Matrix qq = est.q_hat * est.q_hat.transpose();
    for (std::size_t l = 0; l < n_links; ++l) {
        state.gram[l] *= p.beta;
        state.cross[l] *= p.beta;
        if (obs.mask.observed(l)) {
            state.gram[l] += qq;
            const double innovation = obs.y[static_cast<Eigen::Index>(l)] - obs.routing->row_dot(l, est.a_hat);
            state.cross[l] += innovation * est.q_hat;
        }
        state.subspace.row(static_cast<Eigen::Index>(l)) = solve_pd(state.gram[l] + ridge, state.cross[l]).transpose();
    }
    est.x_hat = state.subspace * est.q_hat;
    state.last_anomaly = est.a_hat;
    ++state.t;
}

void rls_fast_update(OnlineState& state, const Observation& obs, SlotEstimate& est) {
    const HyperParams& p = state.params;
    if (p.beta != 1.0) throw ConfigError("rls_fast_step requires beta = 1 (got " + std::to_string(p.beta) + ")");
    const std::size_t n_links = static_cast<std::size_t>(state.subspace.rows());
    const auto rho = static_cast<Eigen::Index>(p.rank);
    if (state.inverse.empty()) {
        // M_l = (G_l + lambda* I)^{-1} for whatever G_l the state carries.
        state.inverse.resize(n_links);
        for (std::size_t l = 0; l < n_links; ++l)
            state.inverse[l] = solve_pd(Matrix(state.gram[l] + p.lambda_star * Matrix::Identity(rho, rho)),
                                        Matrix(Matrix::Identity(rho, rho)));
    }
    const Matrix qq = est.q_hat * est.q_hat.transpose();
    for (std::size_t l = 0; l < n_links; ++l) {
        if (obs.mask.observed(l)) {
            state.gram[l] += qq;
            const double innovation = obs.y[static_cast<Eigen::Index>(l)] - obs.routing->row_dot(l, est.a_hat);
            state.cross[l] += innovation * est.q_hat;
            Matrix& m = state.inverse[l];
            const Vector mq = m * est.q_hat;
            m -= (mq * mq.transpose()) / (1.0 + est.q_hat.dot(mq));
        }
        state.subspace.row(static_cast<Eigen::Index>(l)) = (state.inverse[l] * state.cross[l]).transpose();
    }
    est.x_hat = state.subspace * est.q_hat;
    state.last_anomaly = est.a_hat;
    ++state.t;
}

SlotEstimate online_step(OnlineState& state, const Observation& obs) {
    check_slot(obs, static_cast<std::size_t>(state.subspace.rows()), state.t + 1, state.last_anomaly);
    SlotEstimate est = estimate_slot(state.subspace, obs, state.params, &state.last_anomaly);
    direct_update(state, obs, est);
    return est;
}

SlotEstimate rls_fast_step(OnlineState& state, const Observation& obs) {
    if (state.params.beta != 1.0)
        throw ConfigError("rls_fast_step requires beta = 1 (got " + std::to_string(state.params.beta) + ")");
    check_slot(obs, static_cast<std::size_t>(state.subspace.rows()), state.t + 1, state.last_anomaly);
    SlotEstimate est = estimate_slot(state.subspace, obs, state.params, &state.last_anomaly);
    rls_fast_update(state, obs, est);
    return est;
}

NesterovState NesterovState::init(std::size_t n_links, std::size_t n_flows, const HyperParams& params,
                                  double initial_step_scale) {
    params.validate();
    if (!(initial_step_scale > 0.0)) throw ConfigError("initial step scale mu[0] must be positive");
    NesterovState s;
    s.params = params;
    s.current = random_subspace(n_links, params);
    s.previous = s.current;
    s.extrapolated = s.current;
    s.momentum = 1.0;
    s.step_scale = initial_step_scale;
    s.last_anomaly = Vector::Zero(static_cast<Eigen::Index>(n_flows));
    return s;
}

double instantaneous_cost(const Matrix& subspace, const Observation& obs, const Vector& q, const Vector& a,
                          std::size_t t, const HyperParams& params) {
    return slot_cost(subspace, obs, q, a, params) +
           0.5 * params.lambda_star / static_cast<double>(t) * subspace.squaredNorm();
}

Matrix instantaneous_gradient(const Matrix& subspace, const Observation& obs, const Vector& q, const Vector& a,
                              std::size_t t, const HyperParams& params) {
    const Vector r = masked_target(obs, a) - (subspace * q).cwiseProduct(obs.mask.weights());
    return -r * q.transpose() + (params.lambda_star / static_cast<double>(t)) * subspace;
}

SlotEstimate sgd_step(NesterovState& state, const Observation& obs) {
    const std::size_t n_links = static_cast<std::size_t>(state.current.rows());
    check_slot(obs, n_links, state.t + 1, state.last_anomaly);
    const HyperParams& p = state.params;
    const std::size_t t = state.t + 1;

    SlotEstimate est = estimate_slot(state.current, obs, p, &state.last_anomaly);

    const Matrix& base = state.extrapolated;
    const Matrix grad = instantaneous_gradient(base, obs, est.q_hat, est.a_hat, t, p);
    const double f_base = instantaneous_cost(base, obs, est.q_hat, est.a_hat, t, p);
    const double grad_sq = grad.squaredNorm();
    if (!std::isfinite(f_base) || !std::isfinite(grad_sq)) throw NumericalError("sgd_step: non-finite gradient");
    const double slack = 1e-12 * std::max(1.0, std::abs(f_base));

    double mu = state.step_scale;
    Matrix candidate;
    bool accepted = false;
    for (std::size_t i = 0; i <= kMaxBacktracks; ++i) {
        candidate = base - grad / mu;
        // Quadratic model Q_mu(candidate, base) = f(base) - ||grad||^2 / (2 mu).
        const double model = f_base - grad_sq / (2.0 * mu);
        if (instantaneous_cost(candidate, obs, est.q_hat, est.a_hat, t, p) <= model + slack) {
            state.last_backtracks = i;
            accepted = true;
            break;
        }
        mu *= p.eta;
    }
    if (!accepted) throw NumericalError("sgd_step: backtracking failed at slot " + std::to_string(t));

    const double next_momentum = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * state.momentum * state.momentum));
    Matrix extrapolated = candidate + ((state.momentum - 1.0) / next_momentum) * (candidate - state.current);
    state.previous = std::move(state.current);
    state.current = std::move(candidate);
    state.extrapolated = std::move(extrapolated);
    state.momentum = next_momentum;
    state.step_scale = mu;
    state.last_anomaly = est.a_hat;
    state.t = t;

    est.x_hat = state.current * est.q_hat;
    return est;
}

}  // namespace anomalography::online
