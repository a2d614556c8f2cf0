#include "anomalography/batch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "anomalography/linalg.hpp"
#include "anomalography/sparse_solver.hpp"

namespace anomalography::batch {

namespace {

constexpr std::uint64_t kInitStream = 101;

Matrix routed(const RoutingMatrix& routing, const Matrix& a) {
    Matrix out(static_cast<Eigen::Index>(routing.links()), a.cols());
    for (Eigen::Index t = 0; t < a.cols(); ++t) out.col(t) = routing.apply(a.col(t));
    return out;
}

Matrix random_factor(Rng& rng, Eigen::Index rows, Eigen::Index cols, double std_dev) {
    std::normal_distribution<double> entry(0.0, std_dev);
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = entry(rng);
    return m;
}

double relative_change(double previous, double current) {
    const double scale = std::max(std::abs(previous), std::numeric_limits<double>::min());
    return std::abs(previous - current) / scale;
}

}  // namespace

BatchProblem BatchProblem::from_observations(std::span<const Observation> slots, const HyperParams& params) {
    if (slots.empty()) throw DimensionError("batch: no observations");
    BatchProblem prob;
    prob.routing = slots.front().routing;
    prob.params = params;
    if (!prob.routing) throw DimensionError("batch: observation without routing");
    const Dims dims{prob.routing->links(), prob.routing->flows(), slots.size(), params.rank};
    prob.y.resize(static_cast<Eigen::Index>(dims.n_links), static_cast<Eigen::Index>(slots.size()));
    for (std::size_t t = 0; t < slots.size(); ++t) {
        const Observation& obs = slots[t];
        anomalography::validate(obs, dims);
        if (!(*obs.routing == *prob.routing))
            throw DimensionError("batch: routing changes at slot " + std::to_string(obs.t) + "; batch needs fixed R");
        prob.y.col(static_cast<Eigen::Index>(t)) = obs.y.cwiseProduct(obs.mask.weights());
        prob.masks.push_back(obs.mask);
    }
    return prob;
}

Matrix BatchProblem::mask_matrix() const {
    Matrix m(y.rows(), y.cols());
    for (Eigen::Index t = 0; t < y.cols(); ++t) m.col(t) = masks[static_cast<std::size_t>(t)].weights();
    return m;
}

void BatchProblem::validate() const {
    if (!routing) throw DimensionError("batch: missing routing matrix");
    if (routing->links() != links()) throw DimensionError("batch: routing rows != rows of Y");
    if (masks.size() != horizon()) throw DimensionError("batch: one mask per column of Y required");
    for (const auto& m : masks)
        if (m.size() != links()) throw DimensionError("batch: mask length != rows of Y");
    params.validate();
}

Matrix masked_residual(const BatchProblem& prob, const Matrix& x, const Matrix& a) {
    return (prob.y - x - routed(*prob.routing, a)).cwiseProduct(prob.mask_matrix());
}

double objective_p3(const BatchProblem& prob, const Matrix& l, const Matrix& q, const Matrix& a) {
    const Matrix x = l * q.transpose();
    return 0.5 * masked_residual(prob, x, a).squaredNorm() +
           0.5 * prob.params.lambda_star * (l.squaredNorm() + q.squaredNorm()) +
           prob.params.lambda_one * a.cwiseAbs().sum();
}

double objective_p1(const BatchProblem& prob, const Matrix& x, const Matrix& a) {
    return 0.5 * masked_residual(prob, x, a).squaredNorm() + prob.params.lambda_star * nuclear_norm(x) +
           prob.params.lambda_one * a.cwiseAbs().sum();
}

Matrix update_subspace(const BatchProblem& prob, const Matrix& q, const Matrix& a) {
    const Eigen::Index rho = q.cols();
    const Matrix target = prob.y - routed(*prob.routing, a);
    const Matrix omega = prob.mask_matrix();
    const Matrix ridge = prob.params.lambda_star * Matrix::Identity(rho, rho);
    Matrix l(prob.y.rows(), rho);
    for (Eigen::Index row = 0; row < prob.y.rows(); ++row) {
        Matrix h = ridge;
        Vector b = Vector::Zero(rho);
        for (Eigen::Index t = 0; t < prob.y.cols(); ++t) {
            if (omega(row, t) == 0.0) continue;
            h.noalias() += q.row(t).transpose() * q.row(t);
            b.noalias() += target(row, t) * q.row(t).transpose();
        }
        l.row(row) = solve_pd(h, b).transpose();
    }
    return l;
}

Matrix update_coefficients(const BatchProblem& prob, const Matrix& l, const Matrix& a) {
    const Eigen::Index rho = l.cols();
    const Matrix ridge = prob.params.lambda_star * Matrix::Identity(rho, rho);
    Matrix q(prob.y.cols(), rho);
    for (Eigen::Index t = 0; t < prob.y.cols(); ++t) {
        const ObservationMask& mask = prob.masks[static_cast<std::size_t>(t)];
        const Vector target = prob.y.col(t) - prob.routing->apply(a.col(t));
        Matrix h = ridge;
        Vector b = Vector::Zero(rho);
        for (std::size_t link : mask.indices()) {
            const auto row = static_cast<Eigen::Index>(link);
            h.noalias() += l.row(row).transpose() * l.row(row);
            b.noalias() += target[row] * l.row(row).transpose();
        }
        q.row(t) = solve_pd(h, b).transpose();
    }
    return q;
}

BatchSolution bcd_solve(const BatchProblem& prob, const std::optional<FactorInit>& init) {
    prob.validate();
    const auto& params = prob.params;
    const auto rho = static_cast<Eigen::Index>(params.rank);
    const Eigen::Index n_links = prob.y.rows();
    const Eigen::Index horizon = prob.y.cols();
    const auto n_flows = static_cast<Eigen::Index>(prob.flows());

    BatchSolution sol;
    if (init) {
        if (init->l.rows() != n_links || init->l.cols() != rho || init->q.rows() != horizon || init->q.cols() != rho)
            throw DimensionError("bcd_solve: initial factors have the wrong shape");
        sol.l_hat = init->l;
        sol.q_hat = init->q;
    } else {
        Rng rng = seeded_rng(params.seed, kInitStream);
        const double std_dev = 1.0 / std::sqrt(static_cast<double>(rho));
        sol.l_hat = random_factor(rng, n_links, rho, std_dev);
        sol.q_hat = random_factor(rng, horizon, rho, std_dev);
    }
    sol.a_dense = Matrix::Zero(n_flows, horizon);
    sol.objective.push_back(objective_p3(prob, sol.l_hat, sol.q_hat, sol.a_dense));

    for (std::size_t k = 1; k <= params.bcd_max_iters; ++k) {
        // [S1] one cyclic coordinate-descent pass per column.
        for (Eigen::Index t = 0; t < horizon; ++t) {
            const ObservationMask& mask = prob.masks[static_cast<std::size_t>(t)];
            const lasso::MaskedRoutingDesign design(*prob.routing, mask);
            Vector residual = (prob.y.col(t) - sol.l_hat * sol.q_hat.row(t).transpose()).cwiseProduct(mask.weights());
            Vector a = sol.a_dense.col(t);
            for (Eigen::Index f = 0; f < n_flows; ++f)
                if (a[f] != 0.0) design.axpy(f, -a[f], residual);
            lasso::cd_sweep(design, a, residual, params.lambda_one);
            sol.a_dense.col(t) = a;
        }
        // [S2], [S3] ridge solves.
        sol.l_hat = update_subspace(prob, sol.q_hat, sol.a_dense);
        sol.q_hat = update_coefficients(prob, sol.l_hat, sol.a_dense);

        const double obj = objective_p3(prob, sol.l_hat, sol.q_hat, sol.a_dense);
        if (!std::isfinite(obj)) throw NumericalError("bcd_solve: non-finite objective at iteration " + std::to_string(k));
        const double previous = sol.objective.back();
        sol.objective.push_back(obj);
        sol.iterations = k;
        if (relative_change(previous, obj) < params.bcd_tol) {
            sol.converged = true;
            break;
        }
    }
    sol.a_hat = AnomalyMap::from_dense(sol.a_dense);
    return sol;
}

SvtSolution svt_oracle_p1(const BatchProblem& prob) {
    prob.validate();
    const auto& params = prob.params;
    const Eigen::Index horizon = prob.y.cols();
    const auto n_flows = static_cast<Eigen::Index>(prob.flows());
    const Matrix omega = prob.mask_matrix();
    const bool full_mask = (omega.array() == 1.0).all();
    constexpr double kInnerTol = 1e-8;
    constexpr std::size_t kInnerMaxIters = 5000;
    const std::size_t lasso_passes = std::max<std::size_t>(params.lasso_max_passes, 10000);

    SvtSolution sol;
    sol.x_hat = Matrix::Zero(prob.y.rows(), horizon);
    sol.a_dense = Matrix::Zero(n_flows, horizon);
    sol.objective.push_back(objective_p1(prob, sol.x_hat, sol.a_dense));

    for (std::size_t k = 1; k <= params.bcd_max_iters; ++k) {
        // A-step: exact per-column Lasso on P_Omega(Y - X).
        for (Eigen::Index t = 0; t < horizon; ++t) {
            const ObservationMask& mask = prob.masks[static_cast<std::size_t>(t)];
            const lasso::MaskedRoutingDesign design(*prob.routing, mask);
            const Vector response = (prob.y.col(t) - sol.x_hat.col(t)).cwiseProduct(mask.weights());
            const auto res = lasso::lasso_cd_on(design, response, params.lambda_one, sol.a_dense.col(t),
                                                params.lasso_tol, lasso_passes);
            sol.a_dense.col(t) = res.a;
        }
        // X-step: proximal gradient on the nuclear-norm subproblem (unit step,
        // the smooth part has Lipschitz constant 1).
        const Matrix target = prob.y - routed(*prob.routing, sol.a_dense);
        if (full_mask) {
            sol.x_hat = shrink_singular_values(target, params.lambda_star);
        } else {
            Matrix x = sol.x_hat;
            Matrix z = x;
            double momentum = 1.0;
            for (std::size_t it = 0; it < kInnerMaxIters; ++it) {
                const Matrix step = z + (target - z).cwiseProduct(omega);
                const Matrix x_next = shrink_singular_values(step, params.lambda_star);
                const double next_momentum = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
                const double move = (x_next - x).norm();
                z = x_next + ((momentum - 1.0) / next_momentum) * (x_next - x);
                x = x_next;
                momentum = next_momentum;
                if (move <= kInnerTol * std::max(1.0, x.norm())) break;
            }
            sol.x_hat = std::move(x);
        }

        const double obj = objective_p1(prob, sol.x_hat, sol.a_dense);
        if (!std::isfinite(obj)) throw NumericalError("svt_oracle_p1: non-finite objective");
        const double previous = sol.objective.back();
        sol.objective.push_back(obj);
        sol.iterations = k;
        if (relative_change(previous, obj) < params.bcd_tol) {
            sol.converged = true;
            break;
        }
    }
    return sol;
}

QualificationCheck prop1_check(const BatchProblem& prob, const Matrix& l, const Matrix& q, const Matrix& a) {
    QualificationCheck check;
    check.residual_spectral_norm = spectral_norm(masked_residual(prob, l * q.transpose(), a), 1e-8);
    // Relative slack absorbs rounding when the norm sits exactly on lambda*.
    check.holds = check.residual_spectral_norm <= prob.params.lambda_star * (1.0 + 1e-12);
    return check;
}

double factorization_gap(const Matrix& x, std::size_t rank) {
    if (x.size() == 0) return 0.0;
    const ThinSvd svd = jacobi_svd(x);
    const double top = svd.s.size() ? svd.s[0] : 0.0;
    std::size_t numerical_rank = 0;
    for (Eigen::Index k = 0; k < svd.s.size(); ++k)
        if (svd.s[k] > 1e-10 * top) ++numerical_rank;
    if (numerical_rank > rank)
        throw DimensionError("factorization_gap: rank " + std::to_string(numerical_rank) + " exceeds " +
                             std::to_string(rank));
    const auto keep = static_cast<Eigen::Index>(std::min<std::size_t>(rank, static_cast<std::size_t>(svd.s.size())));
    const Vector root = svd.s.head(keep).cwiseSqrt();
    const Matrix l = svd.u.leftCols(keep) * root.asDiagonal();
    const Matrix q = svd.v.leftCols(keep) * root.asDiagonal();
    return 0.5 * (l.squaredNorm() + q.squaredNorm()) - svd.s.sum();
}

}  // namespace anomalography::batch
