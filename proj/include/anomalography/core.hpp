#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace anomalography {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;

// Error categories. The CLI maps ConfigError to exit code 1 and everything
// else to exit code 2.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

struct Dims {
    std::size_t n_links = 0;
    std::size_t n_flows = 0;
    std::size_t horizon = 0;
    std::size_t rank = 0;
};

/// Binary link-by-flow incidence matrix. Column f lists the links that carry
/// flow f; all-zero columns are legal (inactive flows).
class RoutingMatrix {
public:
    RoutingMatrix() = default;
    RoutingMatrix(std::size_t n_links, std::size_t n_flows);

    /// Throws DimensionError if any entry is not exactly 0 or 1.
    static RoutingMatrix from_dense(const Matrix& dense);
    static RoutingMatrix identity(std::size_t n);

    std::size_t links() const { return n_links_; }
    std::size_t flows() const { return flow_links_.size(); }

    void set_path(std::size_t flow, std::vector<std::size_t> links);

    std::span<const std::size_t> flow_links(std::size_t flow) const { return flow_links_[flow]; }
    bool carries(std::size_t link, std::size_t flow) const;

    Matrix dense() const;

    /// R * a.
    Vector apply(const Vector& a) const;
    /// r_l' * a for a single link row.
    double row_dot(std::size_t link, const Vector& a) const;
    /// R' * v.
    Vector apply_transpose(const Vector& v) const;

    bool operator==(const RoutingMatrix& other) const = default;

private:
    std::size_t n_links_ = 0;
    std::vector<std::vector<std::size_t>> flow_links_;
    std::vector<std::vector<std::size_t>> link_flows_;
};

/// Observed link indices for one slot (the diagonal of Omega_t).
class ObservationMask {
public:
    ObservationMask() = default;

    static ObservationMask full(std::size_t n_links);
    static ObservationMask empty(std::size_t n_links);
    /// Throws DimensionError for indices outside [0, n_links).
    static ObservationMask from_indices(std::size_t n_links, std::vector<std::size_t> indices);
    static ObservationMask from_indicator(std::span<const std::uint8_t> indicator);

    std::size_t size() const { return indicator_.size(); }
    std::size_t count() const { return indices_.size(); }
    bool observed(std::size_t link) const { return indicator_[link] != 0; }
    std::span<const std::size_t> indices() const { return indices_; }
    /// 0/1 weights, one per link.
    Vector weights() const;

    bool operator==(const ObservationMask& other) const = default;

private:
    std::vector<std::uint8_t> indicator_;
    std::vector<std::size_t> indices_;
};

struct Observation {
    Vector y;  // unobserved entries hold 0
    ObservationMask mask;
    std::shared_ptr<const RoutingMatrix> routing;
    std::size_t t = 0;  // 1-based slot index
};

/// Sparse flow-by-time anomaly amplitudes stored as triplets.
class AnomalyMap {
public:
    struct Entry {
        std::size_t flow;
        std::size_t time;
        double amplitude;
        bool operator==(const Entry&) const = default;
    };

    AnomalyMap() = default;
    AnomalyMap(std::size_t n_flows, std::size_t horizon);

    /// Keeps entries with |value| > threshold (threshold 0 keeps all nonzeros).
    static AnomalyMap from_dense(const Matrix& dense, double threshold = 0.0);

    std::size_t flows() const { return n_flows_; }
    std::size_t horizon() const { return horizon_; }
    std::span<const Entry> entries() const { return entries_; }
    std::size_t nonzeros() const { return entries_.size(); }

    /// Entries must be added in (time, flow) order; zero amplitudes are dropped.
    void push(std::size_t flow, std::size_t time, double amplitude);

    Matrix dense() const;

    bool operator==(const AnomalyMap& other) const = default;

private:
    std::size_t n_flows_ = 0;
    std::size_t horizon_ = 0;
    std::vector<Entry> entries_;
};

struct HyperParams {
    double lambda_star = 0.36;
    double lambda_one = 0.11;
    double beta = 0.99;
    std::size_t rank = 5;
    double detect_threshold = 0.1;
    double lasso_tol = 1e-8;
    std::size_t lasso_max_passes = 200;
    double bcd_tol = 1e-6;
    std::size_t bcd_max_iters = 500;
    double eta = 1.5;
    std::uint64_t seed = 0;

    /// Throws ConfigError naming the first invalid field.
    void validate() const;
};

/// Checks that y, mask and routing agree with dims (n_links, n_flows).
void validate(const Observation& obs, const Dims& dims);

/// Solves H x = b for symmetric positive-definite H by Cholesky.
Vector solve_pd(const Matrix& h, const Vector& b);
/// Column-wise solve with a shared factorization.
Matrix solve_pd(const Matrix& h, const Matrix& b);

/// Deterministic generator for (seed, stream, substream); distinct streams are
/// statistically independent.
Rng seeded_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream = 0);

double max_abs(const Vector& v);
bool all_finite(const Matrix& m);

}  // namespace anomalography
