#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <random>
#include <utility>
#include <vector>

#include "anomalography/core.hpp"

namespace anomalography::netsim {

/// Independent generator substreams. Changing one experiment knob (for example
/// the observation probability) never perturbs the draws of another stream.
enum class Stream : std::uint64_t {
    positions = 1,
    traffic = 2,
    anomalies = 3,
    noise = 4,
    mask = 5,
    churn = 6,
};

Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t substream = 0);

struct Topology {
    std::vector<std::array<double, 2>> positions;
    // Undirected edges (i < j), ascending. Index into this list is the edge id.
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    // Directed links in ascending (from, to) order; defines the row order of R.
    std::vector<std::pair<std::size_t, std::size_t>> links;

    std::size_t nodes() const { return positions.size(); }
    std::size_t flows() const { return nodes() * (nodes() - 1); }
    bool adjacent(std::size_t i, std::size_t j) const;
    /// Row index of the directed link (from, to); throws if absent.
    std::size_t link_index(std::size_t from, std::size_t to) const;
    /// Column index of the OD flow (src, dst), src != dst.
    std::size_t flow_index(std::size_t src, std::size_t dst) const;
    std::pair<std::size_t, std::size_t> flow_endpoints(std::size_t flow) const;
};

/// Builds the geometric graph for fixed positions (no connectivity check).
Topology topology_from_positions(std::vector<std::array<double, 2>> positions, double comm_range);

/// Union-find connectivity test over the undirected edges flagged active.
bool is_connected(std::size_t n_nodes, const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                  const std::vector<bool>& active);
bool is_connected(const Topology& topo);

/// Random geometric graph on the unit square, redrawn until connected.
/// Throws NumericalError after `max_redraws` disconnected draws.
Topology gen_rgg(std::size_t n_nodes, double comm_range, std::uint64_t seed, std::size_t max_redraws = 10000);

/// Same redraw loop with a caller-supplied position sampler (draw index -> positions).
template <typename Sampler>
Topology gen_rgg_with(Sampler&& sample, double comm_range, std::size_t max_redraws = 10000) {
    for (std::size_t draw = 0; draw < max_redraws; ++draw) {
        Topology topo = topology_from_positions(sample(draw), comm_range);
        if (is_connected(topo)) return topo;
    }
    throw NumericalError("gen_rgg: no connected draw; communication range is infeasible");
}

/// Minimum-hop single-path routing over the active undirected edges. Ties are
/// broken towards the lexicographically smallest node sequence. Every link of
/// the full topology keeps its row (inactive links carry nothing).
RoutingMatrix min_hop_routing(const Topology& topo, const std::vector<bool>& active_edges);
RoutingMatrix min_hop_routing(const Topology& topo);

/// Node sequence of the route chosen for (src, dst).
std::vector<std::size_t> min_hop_path(const Topology& topo, const std::vector<bool>& active_edges, std::size_t src,
                                      std::size_t dst);

struct ChurnModel {
    double alpha = 0.0;
    std::vector<bool> active;  // per undirected edge of the topology

    static ChurnModel all_active(const Topology& topo, double alpha);
};

struct ChurnResult {
    ChurnModel model;
    RoutingMatrix routing;
    bool changed = false;
};

/// One slot of the link failure/recovery chain. Removal and addition use
/// independent Bernoulli(alpha) coins; both candidates are drawn against the
/// current active set, and a removal is only made if connectivity survives.
ChurnResult churn_step(const ChurnModel& model, const Topology& topo, Rng& rng);

struct SynthConfig {
    std::size_t n_nodes = 15;
    double comm_range = 0.35;
    std::size_t traffic_rank = 2;
    double noise_std = 1e-2;
    double anomaly_prob = 0.005;
    double observe_prob = 1.0;
    std::size_t horizon = 100;
    double churn_alpha = 0.0;
    double anomaly_scale = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Supplies R_t for t = 1, 2, ...
class RoutingSchedule {
public:
    virtual ~RoutingSchedule() = default;
    virtual std::shared_ptr<const RoutingMatrix> next() = 0;
};

class StaticRouting final : public RoutingSchedule {
public:
    explicit StaticRouting(RoutingMatrix routing);
    std::shared_ptr<const RoutingMatrix> next() override { return routing_; }

private:
    std::shared_ptr<const RoutingMatrix> routing_;
};

class ChurnRouting final : public RoutingSchedule {
public:
    ChurnRouting(Topology topo, double alpha, std::uint64_t seed);
    std::shared_ptr<const RoutingMatrix> next() override;
    std::size_t changes() const { return changes_; }

private:
    Topology topo_;
    ChurnModel model_;
    Rng rng_;
    std::shared_ptr<const RoutingMatrix> current_;
    bool first_ = true;
    std::size_t changes_ = 0;
};

struct SyntheticSlot {
    Observation obs;
    Vector x_true;  // R_t z_t
    Vector a_true;
};

/// Emits P_Omega(y_t) = Omega_t (R_t z_t + R_t a_t + v_t) slot by slot.
class StreamGenerator {
public:
    StreamGenerator(const SynthConfig& cfg, std::shared_ptr<RoutingSchedule> routing, std::size_t n_links,
                    std::size_t n_flows);

    SyntheticSlot next();
    const Matrix& flow_basis() const { return basis_; }

private:
    SynthConfig cfg_;
    std::shared_ptr<RoutingSchedule> routing_;
    std::size_t n_links_;
    std::size_t n_flows_;
    Matrix basis_;  // U, F x r
    Rng traffic_rng_;
    Rng anomaly_rng_;
    Rng noise_rng_;
    Rng mask_rng_;
    std::size_t t_ = 0;
};

std::vector<SyntheticSlot> gen_stream(const SynthConfig& cfg, std::shared_ptr<RoutingSchedule> routing,
                                      std::size_t n_links, std::size_t n_flows);

/// Convenience: RGG topology + (static or churning) min-hop routing + stream.
struct SyntheticScenario {
    Topology topology;
    RoutingMatrix initial_routing;
    std::vector<SyntheticSlot> slots;
};

SyntheticScenario make_scenario(const SynthConfig& cfg);

}  // namespace anomalography::netsim
