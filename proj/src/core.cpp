#include "anomalography/core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace anomalography {

RoutingMatrix::RoutingMatrix(std::size_t n_links, std::size_t n_flows)
    : n_links_(n_links), flow_links_(n_flows), link_flows_(n_links) {}

RoutingMatrix RoutingMatrix::from_dense(const Matrix& dense) {
    RoutingMatrix r(static_cast<std::size_t>(dense.rows()), static_cast<std::size_t>(dense.cols()));
    for (Eigen::Index f = 0; f < dense.cols(); ++f) {
        std::vector<std::size_t> links;
        for (Eigen::Index l = 0; l < dense.rows(); ++l) {
            const double v = dense(l, f);
            if (v == 1.0) {
                links.push_back(static_cast<std::size_t>(l));
            } else if (v != 0.0) {
                throw DimensionError("routing: entry (" + std::to_string(l) + "," + std::to_string(f) +
                                     ") is not binary");
            }
        }
        r.set_path(static_cast<std::size_t>(f), std::move(links));
    }
    return r;
}

RoutingMatrix RoutingMatrix::identity(std::size_t n) {
    RoutingMatrix r(n, n);
    for (std::size_t f = 0; f < n; ++f) r.set_path(f, {f});
    return r;
}

void RoutingMatrix::set_path(std::size_t flow, std::vector<std::size_t> links) {
    if (flow >= flow_links_.size()) throw DimensionError("routing: flow index out of range");
    std::sort(links.begin(), links.end());
    links.erase(std::unique(links.begin(), links.end()), links.end());
    for (std::size_t l : flow_links_[flow]) {
        auto& row = link_flows_[l];
        row.erase(std::remove(row.begin(), row.end(), flow), row.end());
    }
    for (std::size_t l : links) {
        if (l >= n_links_) throw DimensionError("routing: link index out of range");
        auto& row = link_flows_[l];
        row.insert(std::lower_bound(row.begin(), row.end(), flow), flow);
    }
    flow_links_[flow] = std::move(links);
}

bool RoutingMatrix::carries(std::size_t link, std::size_t flow) const {
    const auto& links = flow_links_[flow];
    return std::binary_search(links.begin(), links.end(), link);
}

Matrix RoutingMatrix::dense() const {
    Matrix m = Matrix::Zero(static_cast<Eigen::Index>(n_links_), static_cast<Eigen::Index>(flows()));
    for (std::size_t f = 0; f < flows(); ++f)
        for (std::size_t l : flow_links_[f]) m(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(f)) = 1.0;
    return m;
}

Vector RoutingMatrix::apply(const Vector& a) const {
    Vector out = Vector::Zero(static_cast<Eigen::Index>(n_links_));
    for (std::size_t f = 0; f < flows(); ++f) {
        const double af = a[static_cast<Eigen::Index>(f)];
        if (af == 0.0) continue;
        for (std::size_t l : flow_links_[f]) out[static_cast<Eigen::Index>(l)] += af;
    }
    return out;
}

double RoutingMatrix::row_dot(std::size_t link, const Vector& a) const {
    double s = 0.0;
    for (std::size_t f : link_flows_[link]) s += a[static_cast<Eigen::Index>(f)];
    return s;
}

Vector RoutingMatrix::apply_transpose(const Vector& v) const {
    Vector out(static_cast<Eigen::Index>(flows()));
    for (std::size_t f = 0; f < flows(); ++f) {
        double s = 0.0;
        for (std::size_t l : flow_links_[f]) s += v[static_cast<Eigen::Index>(l)];
        out[static_cast<Eigen::Index>(f)] = s;
    }
    return out;
}

ObservationMask ObservationMask::full(std::size_t n_links) {
    ObservationMask m;
    m.indicator_.assign(n_links, 1);
    m.indices_.resize(n_links);
    for (std::size_t l = 0; l < n_links; ++l) m.indices_[l] = l;
    return m;
}

ObservationMask ObservationMask::empty(std::size_t n_links) {
    ObservationMask m;
    m.indicator_.assign(n_links, 0);
    return m;
}

ObservationMask ObservationMask::from_indices(std::size_t n_links, std::vector<std::size_t> indices) {
    ObservationMask m = empty(n_links);
    std::sort(indices.begin(), indices.end());
    indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
    for (std::size_t l : indices) {
        if (l >= n_links)
            throw DimensionError("mask: index " + std::to_string(l) + " outside [0, " + std::to_string(n_links) + ")");
        m.indicator_[l] = 1;
    }
    m.indices_ = std::move(indices);
    return m;
}

ObservationMask ObservationMask::from_indicator(std::span<const std::uint8_t> indicator) {
    ObservationMask m;
    m.indicator_.assign(indicator.begin(), indicator.end());
    for (std::size_t l = 0; l < indicator.size(); ++l) {
        if (indicator[l] != 0) {
            m.indicator_[l] = 1;
            m.indices_.push_back(l);
        }
    }
    return m;
}

Vector ObservationMask::weights() const {
    Vector w(static_cast<Eigen::Index>(indicator_.size()));
    for (std::size_t l = 0; l < indicator_.size(); ++l) w[static_cast<Eigen::Index>(l)] = indicator_[l];
    return w;
}

AnomalyMap::AnomalyMap(std::size_t n_flows, std::size_t horizon) : n_flows_(n_flows), horizon_(horizon) {}

AnomalyMap AnomalyMap::from_dense(const Matrix& dense, double threshold) {
    AnomalyMap map(static_cast<std::size_t>(dense.rows()), static_cast<std::size_t>(dense.cols()));
    for (Eigen::Index t = 0; t < dense.cols(); ++t)
        for (Eigen::Index f = 0; f < dense.rows(); ++f) {
            const double v = dense(f, t);
            if (v != 0.0 && std::abs(v) > threshold)
                map.push(static_cast<std::size_t>(f), static_cast<std::size_t>(t), v);
        }
    return map;
}

void AnomalyMap::push(std::size_t flow, std::size_t time, double amplitude) {
    if (flow >= n_flows_ || time >= horizon_) throw DimensionError("anomaly map: entry out of range");
    if (amplitude == 0.0) return;
    if (!entries_.empty()) {
        const Entry& last = entries_.back();
        if (time < last.time || (time == last.time && flow <= last.flow))
            throw DimensionError("anomaly map: entries must be pushed in (time, flow) order");
    }
    entries_.push_back({flow, time, amplitude});
}

Matrix AnomalyMap::dense() const {
    Matrix m = Matrix::Zero(static_cast<Eigen::Index>(n_flows_), static_cast<Eigen::Index>(horizon_));
    for (const Entry& e : entries_) m(static_cast<Eigen::Index>(e.flow), static_cast<Eigen::Index>(e.time)) = e.amplitude;
    return m;
}

void HyperParams::validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
        throw ConfigError("hyperparameter " + field + ": " + why);
    };
    if (!(lambda_star > 0.0) || !std::isfinite(lambda_star)) fail("lambda_star", "must be positive");
    if (!(lambda_one >= 0.0) || !std::isfinite(lambda_one)) fail("lambda_one", "must be nonnegative");
    if (!(beta > 0.0 && beta <= 1.0)) fail("beta", "must lie in (0, 1]");
    if (rank < 1) fail("rank", "must be at least 1");
    if (!(detect_threshold >= 0.0)) fail("detect_threshold", "must be nonnegative");
    if (!(lasso_tol > 0.0)) fail("lasso_tol", "must be positive");
    if (lasso_max_passes < 1) fail("lasso_max_passes", "must be at least 1");
    if (!(bcd_tol > 0.0)) fail("bcd_tol", "must be positive");
    if (bcd_max_iters < 1) fail("bcd_max_iters", "must be at least 1");
    if (!(eta > 1.0)) fail("eta", "must exceed 1");
}

void validate(const Observation& obs, const Dims& dims) {
    auto mismatch = [](const std::string& field, std::size_t got, std::size_t want) {
        throw DimensionError("dimension mismatch in " + field + ": got " + std::to_string(got) + ", expected " +
                             std::to_string(want));
    };
    if (static_cast<std::size_t>(obs.y.size()) != dims.n_links)
        mismatch("y", static_cast<std::size_t>(obs.y.size()), dims.n_links);
    if (obs.mask.size() != dims.n_links) mismatch("mask", obs.mask.size(), dims.n_links);
    if (!obs.routing) throw DimensionError("dimension mismatch in routing: missing routing matrix");
    if (obs.routing->links() != dims.n_links) mismatch("routing.links", obs.routing->links(), dims.n_links);
    if (obs.routing->flows() != dims.n_flows) mismatch("routing.flows", obs.routing->flows(), dims.n_flows);
    for (std::size_t l : obs.mask.indices())
        if (!std::isfinite(obs.y[static_cast<Eigen::Index>(l)]))
            throw DimensionError("non-finite observed value in y at link " + std::to_string(l));
}

Matrix solve_pd(const Matrix& h, const Matrix& b) {
    if (h.rows() != h.cols() || h.rows() != b.rows()) throw DimensionError("solve_pd: shape mismatch");
    if (!all_finite(h) || !all_finite(b)) throw NumericalError("solve_pd: non-finite input");
    Eigen::LLT<Matrix> llt(h);
    if (llt.info() != Eigen::Success)
        throw NumericalError("solve_pd: matrix is not positive definite (check lambda_star)");
    Matrix x = llt.solve(b);
    // One step of iterative refinement tightens the residual on moderately
    // conditioned systems.
    x += llt.solve(b - h * x);
    if (!all_finite(x)) throw NumericalError("solve_pd: non-finite solution");
    return x;
}

Vector solve_pd(const Matrix& h, const Vector& b) {
    Matrix x = solve_pd(h, Matrix(b));
    return x.col(0);
}

Rng seeded_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(substream),
                      static_cast<std::uint32_t>(substream >> 32)};
    return Rng(seq);
}

double max_abs(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace anomalography
