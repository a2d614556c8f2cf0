#pragma once

#include <optional>
#include <span>
#include <vector>

#include "anomalography/batch.hpp"
#include "anomalography/core.hpp"
#include "anomalography/online.hpp"

namespace anomalography::eval {

/// Detection and false-alarm rates. A rate is std::nullopt when its
/// denominator is zero.
struct DetectionReport {
    std::optional<double> p_d;
    std::optional<double> p_fa;
    std::size_t true_detections = 0;
    std::size_t false_alarms = 0;
    std::size_t positives = 0;
    std::size_t negatives = 0;
    double threshold = 0.0;
};

/// An entry is a true anomaly when |a| >= truth_threshold and is flagged when
/// |a_hat| >= threshold. truth_threshold defaults to threshold.
DetectionReport detection_rates(const Matrix& a_hat, const Matrix& a_true, double threshold,
                                std::optional<double> truth_threshold = std::nullopt);
DetectionReport detection_rates(const AnomalyMap& a_hat, const AnomalyMap& a_true, double threshold,
                                std::optional<double> truth_threshold = std::nullopt);

/// One report per threshold (ascending).
std::vector<DetectionReport> roc_sweep(const Matrix& a_hat, const Matrix& a_true, std::span<const double> thresholds,
                                       std::optional<double> truth_threshold = std::nullopt);

/// `count` evenly spaced thresholds in [0, max |score|].
std::vector<double> threshold_grid(const Matrix& scores, std::size_t count);

/// Trapezoidal area under the (P_FA, P_D) curve, closed with (0,0) and (1,1).
/// Reports with an undefined rate are skipped.
double roc_auc(std::span<const DetectionReport> roc);

/// Running e_t^a = (1/t) sum ||a_hat - a||^2 and e_t^x likewise.
class ErrorTrace {
public:
    void push(const Vector& a_hat, const Vector& a_true, const Vector& x_hat, const Vector& x_true);
    std::size_t size() const { return anomaly_.size(); }
    double anomaly_error(std::size_t t) const { return anomaly_[t - 1]; }
    double traffic_error(std::size_t t) const { return traffic_[t - 1]; }
    std::span<const double> anomaly_errors() const { return anomaly_; }
    std::span<const double> traffic_errors() const { return traffic_; }

private:
    double anomaly_sum_ = 0.0;
    double traffic_sum_ = 0.0;
    std::vector<double> anomaly_;
    std::vector<double> traffic_;
};

/// l_tau(L) = min_{q,a} g_tau(L, q, a), solved through online::estimate_slot.
double slot_loss(const Matrix& subspace, const Observation& obs, const HyperParams& params);

/// C_t(L) = (1/t) sum_tau l_tau(L) + lambda*/(2t) ||L||_F^2 over `history`
/// (t = history size). With stride s > 1 only every s-th slot is solved and
/// the sum is estimated by t times the mean of the retained losses.
double target_cost(const Matrix& subspace, std::span<const Observation> history, const HyperParams& params,
                   std::size_t stride = 1);

/// grad C_t(L) using the minimizers of each l_tau (Danskin).
Matrix target_cost_gradient(const Matrix& subspace, std::span<const Observation> history, const HyperParams& params);

struct SlotRecord {
    Vector q;
    Vector a;
};

/// C^_t(L) = (1/t) sum_tau g_tau(L, q[tau], a[tau]) + lambda*/(2t) ||L||_F^2.
double approx_cost(const Matrix& subspace, std::span<const Observation> history, std::span<const SlotRecord> records,
                   const HyperParams& params);

/// Per-slot squared residual energy ||y_t - P y_t||^2 after projecting onto
/// the top-`rank` left singular subspace of Y.
Vector pca_residual_energy(const Matrix& y, std::size_t rank);

/// Flags slot t when its residual energy exceeds threshold. Requires complete
/// data; throws DimensionError if `mask` marks anything missing.
std::vector<bool> pca_residual_detector(const Matrix& y, std::size_t rank, double threshold,
                                        const Matrix* mask = nullptr);

/// PCA residual followed by per-column l1 recovery through R (basis pursuit
/// approximated by a Lasso with lambda = relative_lambda * ||R' y~_t||_inf).
Matrix anomography_l1(const Matrix& y, std::size_t rank, const RoutingMatrix& routing, const Matrix* mask = nullptr,
                      double relative_lambda = 1e-4, double tol = 1e-10, std::size_t max_passes = 20000);

struct BenchmarkExtract {
    AnomalyMap benchmark;
    Matrix x_hat;
    double threshold = 0.0;
    batch::BatchSolution solution;
};

/// Runs the batch solver with identity routing on a flow-level matrix and
/// keeps the entries with |a_hat| > 50 ||Y||_F / (rows * T).
BenchmarkExtract benchmark_anomaly_extract(const Matrix& y_flows, const Matrix& mask, const HyperParams& params);

}  // namespace anomalography::eval
