#include "anomalography/eval.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "anomalography/linalg.hpp"
#include "anomalography/sparse_solver.hpp"

namespace anomalography::eval {

DetectionReport detection_rates(const Matrix& a_hat, const Matrix& a_true, double threshold,
                                std::optional<double> truth_threshold) {
    if (a_hat.rows() != a_true.rows() || a_hat.cols() != a_true.cols())
        throw DimensionError("detection_rates: estimate and truth differ in shape");
    const double truth_thr = truth_threshold.value_or(threshold);
    DetectionReport rep;
    rep.threshold = threshold;
    for (Eigen::Index t = 0; t < a_true.cols(); ++t) {
        for (Eigen::Index f = 0; f < a_true.rows(); ++f) {
            const bool flagged = std::abs(a_hat(f, t)) >= threshold;
            if (std::abs(a_true(f, t)) >= truth_thr) {
                ++rep.positives;
                if (flagged) ++rep.true_detections;
            } else {
                ++rep.negatives;
                if (flagged) ++rep.false_alarms;
            }
        }
    }
    if (rep.positives > 0)
        rep.p_d = static_cast<double>(rep.true_detections) / static_cast<double>(rep.positives);
    if (rep.negatives > 0)
        rep.p_fa = static_cast<double>(rep.false_alarms) / static_cast<double>(rep.negatives);
    return rep;
}

DetectionReport detection_rates(const AnomalyMap& a_hat, const AnomalyMap& a_true, double threshold,
                                std::optional<double> truth_threshold) {
    return detection_rates(a_hat.dense(), a_true.dense(), threshold, truth_threshold);
}

std::vector<DetectionReport> roc_sweep(const Matrix& a_hat, const Matrix& a_true, std::span<const double> thresholds,
                                       std::optional<double> truth_threshold) {
    if (!std::is_sorted(thresholds.begin(), thresholds.end()))
        throw DimensionError("roc_sweep: thresholds must be ascending");
    std::vector<DetectionReport> out;
    out.reserve(thresholds.size());
    for (double thr : thresholds) out.push_back(detection_rates(a_hat, a_true, thr, truth_threshold));
    return out;
}

std::vector<double> threshold_grid(const Matrix& scores, std::size_t count) {
    const double top = scores.size() ? scores.cwiseAbs().maxCoeff() : 0.0;
    std::vector<double> grid(count);
    for (std::size_t i = 0; i < count; ++i)
        grid[i] = count > 1 ? top * static_cast<double>(i) / static_cast<double>(count - 1) : 0.0;
    return grid;
}

double roc_auc(std::span<const DetectionReport> roc) {
    std::vector<std::pair<double, double>> pts{{0.0, 0.0}, {1.0, 1.0}};
    for (const auto& r : roc)
        if (r.p_d && r.p_fa) pts.emplace_back(*r.p_fa, *r.p_d);
    std::sort(pts.begin(), pts.end());
    double area = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i)
        area += 0.5 * (pts[i].first - pts[i - 1].first) * (pts[i].second + pts[i - 1].second);
    return area;
}

void ErrorTrace::push(const Vector& a_hat, const Vector& a_true, const Vector& x_hat, const Vector& x_true) {
    anomaly_sum_ += (a_hat - a_true).squaredNorm();
    traffic_sum_ += (x_hat - x_true).squaredNorm();
    const auto t = static_cast<double>(anomaly_.size() + 1);
    anomaly_.push_back(anomaly_sum_ / t);
    traffic_.push_back(traffic_sum_ / t);
}

double slot_loss(const Matrix& subspace, const Observation& obs, const HyperParams& params) {
    const online::SlotEstimate est = online::estimate_slot(subspace, obs, params);
    return online::slot_cost(subspace, obs, est.q_hat, est.a_hat, params);
}

double target_cost(const Matrix& subspace, std::span<const Observation> history, const HyperParams& params,
                   std::size_t stride) {
    if (history.empty()) throw DimensionError("target_cost: empty history");
    if (stride == 0) stride = 1;
    const auto t = static_cast<double>(history.size());
    double sum = 0.0;
    std::size_t kept = 0;
    for (std::size_t tau = 0; tau < history.size(); tau += stride) {
        sum += slot_loss(subspace, history[tau], params);
        ++kept;
    }
    const double mean_loss = sum / static_cast<double>(kept);
    return mean_loss + 0.5 * params.lambda_star / t * subspace.squaredNorm();
}

Matrix target_cost_gradient(const Matrix& subspace, std::span<const Observation> history, const HyperParams& params) {
    if (history.empty()) throw DimensionError("target_cost_gradient: empty history");
    const auto t = static_cast<double>(history.size());
    Matrix grad = params.lambda_star * subspace;
    for (const Observation& obs : history) {
        const online::SlotEstimate est = online::estimate_slot(subspace, obs, params);
        const Vector r = (obs.y - obs.routing->apply(est.a_hat) - subspace * est.q_hat).cwiseProduct(obs.mask.weights());
        grad.noalias() -= r * est.q_hat.transpose();
    }
    return grad / t;
}

double approx_cost(const Matrix& subspace, std::span<const Observation> history, std::span<const SlotRecord> records,
                   const HyperParams& params) {
    if (history.empty() || history.size() != records.size())
        throw DimensionError("approx_cost: history and records must be nonempty and equally long");
    const auto t = static_cast<double>(history.size());
    double sum = 0.0;
    for (std::size_t tau = 0; tau < history.size(); ++tau)
        sum += online::slot_cost(subspace, history[tau], records[tau].q, records[tau].a, params);
    return sum / t + 0.5 * params.lambda_star / t * subspace.squaredNorm();
}

namespace {

void require_complete(const Matrix* mask, const char* who) {
    if (mask && (mask->array() != 1.0).any())
        throw DimensionError(std::string(who) + ": the PCA baselines need complete data");
}

Matrix pca_residual(const Matrix& y, std::size_t rank) {
    const Matrix basis = top_left_singular_vectors(y, rank);
    return y - basis * (basis.transpose() * y);
}

}  // namespace

Vector pca_residual_energy(const Matrix& y, std::size_t rank) {
    return pca_residual(y, rank).colwise().squaredNorm().transpose();
}

std::vector<bool> pca_residual_detector(const Matrix& y, std::size_t rank, double threshold, const Matrix* mask) {
    require_complete(mask, "pca_residual_detector");
    const Vector energy = pca_residual_energy(y, rank);
    std::vector<bool> flags(static_cast<std::size_t>(energy.size()));
    for (Eigen::Index t = 0; t < energy.size(); ++t) flags[static_cast<std::size_t>(t)] = energy[t] > threshold;
    return flags;
}

Matrix anomography_l1(const Matrix& y, std::size_t rank, const RoutingMatrix& routing, const Matrix* mask,
                      double relative_lambda, double tol, std::size_t max_passes) {
    require_complete(mask, "anomography_l1");
    if (routing.links() != static_cast<std::size_t>(y.rows()))
        throw DimensionError("anomography_l1: routing rows != rows of Y");
    const Matrix residual = pca_residual(y, rank);
    const ObservationMask full = ObservationMask::full(routing.links());
    const lasso::MaskedRoutingDesign design(routing, full);
    const auto n_flows = static_cast<Eigen::Index>(routing.flows());
    Matrix a = Matrix::Zero(n_flows, y.cols());
    for (Eigen::Index t = 0; t < y.cols(); ++t) {
        const Vector col = residual.col(t);
        const double scale = max_abs(routing.apply_transpose(col));
        if (scale == 0.0) continue;
        const auto res =
            lasso::lasso_cd_on(design, col, relative_lambda * scale, Vector::Zero(n_flows), tol * scale, max_passes);
        a.col(t) = res.a;
    }
    return a;
}

BenchmarkExtract benchmark_anomaly_extract(const Matrix& y_flows, const Matrix& mask, const HyperParams& params) {
    if (mask.rows() != y_flows.rows() || mask.cols() != y_flows.cols())
        throw DimensionError("benchmark_anomaly_extract: mask shape differs from Y");
    batch::BatchProblem prob;
    prob.y = y_flows.cwiseProduct(mask);
    prob.routing = std::make_shared<const RoutingMatrix>(RoutingMatrix::identity(static_cast<std::size_t>(y_flows.rows())));
    prob.params = params;
    for (Eigen::Index t = 0; t < mask.cols(); ++t) {
        std::vector<std::uint8_t> ind(static_cast<std::size_t>(mask.rows()));
        for (Eigen::Index r = 0; r < mask.rows(); ++r) ind[static_cast<std::size_t>(r)] = mask(r, t) != 0.0 ? 1 : 0;
        prob.masks.push_back(ObservationMask::from_indicator(ind));
    }

    BenchmarkExtract out;
    const double denom = static_cast<double>(y_flows.rows()) * static_cast<double>(y_flows.cols());
    out.threshold = 50.0 * prob.y.norm() / denom;
    out.solution = batch::bcd_solve(prob);
    out.x_hat = out.solution.x_hat();
    out.benchmark = AnomalyMap::from_dense(out.solution.a_dense, out.threshold);
    return out;
}

}  // namespace anomalography::eval
