#include "anomalography/netsim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <string>

namespace anomalography::netsim {

namespace {

class DisjointSets {
public:
    explicit DisjointSets(std::size_t n) : parent_(n), rank_(n, 0) { std::iota(parent_.begin(), parent_.end(), 0); }

    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    bool unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        if (rank_[a] < rank_[b]) std::swap(a, b);
        parent_[b] = a;
        if (rank_[a] == rank_[b]) ++rank_[a];
        return true;
    }

private:
    std::vector<std::size_t> parent_;
    std::vector<std::size_t> rank_;
};

std::vector<std::vector<std::size_t>> adjacency_lists(const Topology& topo, const std::vector<bool>& active) {
    std::vector<std::vector<std::size_t>> adj(topo.nodes());
    for (std::size_t e = 0; e < topo.edges.size(); ++e) {
        if (!active[e]) continue;
        const auto [i, j] = topo.edges[e];
        adj[i].push_back(j);
        adj[j].push_back(i);
    }
    for (auto& list : adj) std::sort(list.begin(), list.end());
    return adj;
}

std::vector<std::size_t> bfs_distances(const std::vector<std::vector<std::size_t>>& adj, std::size_t root) {
    constexpr std::size_t unreachable = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> dist(adj.size(), unreachable);
    std::deque<std::size_t> queue{root};
    dist[root] = 0;
    while (!queue.empty()) {
        const std::size_t u = queue.front();
        queue.pop_front();
        for (std::size_t v : adj[u]) {
            if (dist[v] != unreachable) continue;
            dist[v] = dist[u] + 1;
            queue.push_back(v);
        }
    }
    return dist;
}

// Lexicographically smallest shortest path: walk greedily from src to the
// smallest-index neighbor that is one hop closer to dst.
std::vector<std::size_t> greedy_path(const std::vector<std::vector<std::size_t>>& adj,
                                     const std::vector<std::size_t>& dist_to_dst, std::size_t src, std::size_t dst) {
    std::vector<std::size_t> path{src};
    std::size_t u = src;
    while (u != dst) {
        std::size_t next = u;
        for (std::size_t v : adj[u]) {
            if (dist_to_dst[v] + 1 == dist_to_dst[u]) {
                next = v;
                break;
            }
        }
        if (next == u) throw DimensionError("min_hop_routing: topology is disconnected");
        path.push_back(next);
        u = next;
    }
    return path;
}

}  // namespace

Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t substream) {
    return seeded_rng(seed, static_cast<std::uint64_t>(stream), substream);
}

bool Topology::adjacent(std::size_t i, std::size_t j) const {
    const auto key = std::minmax(i, j);
    return std::binary_search(edges.begin(), edges.end(), std::pair<std::size_t, std::size_t>(key.first, key.second));
}

std::size_t Topology::link_index(std::size_t from, std::size_t to) const {
    const std::pair<std::size_t, std::size_t> key{from, to};
    auto it = std::lower_bound(links.begin(), links.end(), key);
    if (it == links.end() || *it != key)
        throw DimensionError("topology: no link (" + std::to_string(from) + "," + std::to_string(to) + ")");
    return static_cast<std::size_t>(it - links.begin());
}

std::size_t Topology::flow_index(std::size_t src, std::size_t dst) const {
    if (src == dst || src >= nodes() || dst >= nodes()) throw DimensionError("topology: invalid OD pair");
    return src * (nodes() - 1) + (dst < src ? dst : dst - 1);
}

std::pair<std::size_t, std::size_t> Topology::flow_endpoints(std::size_t flow) const {
    const std::size_t src = flow / (nodes() - 1);
    std::size_t dst = flow % (nodes() - 1);
    if (dst >= src) ++dst;
    return {src, dst};
}

Topology topology_from_positions(std::vector<std::array<double, 2>> positions, double comm_range) {
    Topology topo;
    topo.positions = std::move(positions);
    const std::size_t n = topo.positions.size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dx = topo.positions[i][0] - topo.positions[j][0];
            const double dy = topo.positions[i][1] - topo.positions[j][1];
            if (std::hypot(dx, dy) < comm_range) topo.edges.emplace_back(i, j);
        }
    }
    for (const auto& [i, j] : topo.edges) {
        topo.links.emplace_back(i, j);
        topo.links.emplace_back(j, i);
    }
    std::sort(topo.links.begin(), topo.links.end());
    return topo;
}

bool is_connected(std::size_t n_nodes, const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                  const std::vector<bool>& active) {
    if (n_nodes <= 1) return true;
    DisjointSets sets(n_nodes);
    std::size_t components = n_nodes;
    for (std::size_t e = 0; e < edges.size(); ++e)
        if (active[e] && sets.unite(edges[e].first, edges[e].second)) --components;
    return components == 1;
}

bool is_connected(const Topology& topo) {
    return is_connected(topo.nodes(), topo.edges, std::vector<bool>(topo.edges.size(), true));
}

Topology gen_rgg(std::size_t n_nodes, double comm_range, std::uint64_t seed, std::size_t max_redraws) {
    if (n_nodes < 2) throw ConfigError("gen_rgg: need at least 2 nodes");
    if (!(comm_range > 0.0)) throw ConfigError("gen_rgg: communication range must be positive");
    auto sample = [&](std::size_t draw) {
        Rng rng = make_rng(seed, Stream::positions, draw);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::vector<std::array<double, 2>> pos(n_nodes);
        for (auto& p : pos) {
            p[0] = unit(rng);
            p[1] = unit(rng);
        }
        return pos;
    };
    return gen_rgg_with(sample, comm_range, max_redraws);
}

std::vector<std::size_t> min_hop_path(const Topology& topo, const std::vector<bool>& active_edges, std::size_t src,
                                      std::size_t dst) {
    const auto adj = adjacency_lists(topo, active_edges);
    return greedy_path(adj, bfs_distances(adj, dst), src, dst);
}

RoutingMatrix min_hop_routing(const Topology& topo, const std::vector<bool>& active_edges) {
    const std::size_t n = topo.nodes();
    RoutingMatrix routing(topo.links.size(), topo.flows());
    const auto adj = adjacency_lists(topo, active_edges);
    for (std::size_t dst = 0; dst < n; ++dst) {
        const auto dist = bfs_distances(adj, dst);
        for (std::size_t src = 0; src < n; ++src) {
            if (src == dst) continue;
            const auto path = greedy_path(adj, dist, src, dst);
            std::vector<std::size_t> links;
            links.reserve(path.size() - 1);
            for (std::size_t k = 0; k + 1 < path.size(); ++k) links.push_back(topo.link_index(path[k], path[k + 1]));
            routing.set_path(topo.flow_index(src, dst), std::move(links));
        }
    }
    return routing;
}

RoutingMatrix min_hop_routing(const Topology& topo) {
    return min_hop_routing(topo, std::vector<bool>(topo.edges.size(), true));
}

ChurnModel ChurnModel::all_active(const Topology& topo, double alpha) {
    if (!(alpha >= 0.0 && alpha < 1.0)) throw ConfigError("churn: alpha must lie in [0, 1)");
    return ChurnModel{alpha, std::vector<bool>(topo.edges.size(), true)};
}

ChurnResult churn_step(const ChurnModel& model, const Topology& topo, Rng& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    // Coins and candidate picks are always drawn so the stream consumption
    // does not depend on the outcome.
    const bool remove_coin = unit(rng) < model.alpha;
    const bool add_coin = unit(rng) < model.alpha;
    const double remove_pick = unit(rng);
    const double add_pick = unit(rng);

    ChurnResult result{model, {}, false};
    std::vector<bool>& active = result.model.active;

    std::vector<std::size_t> addable;
    for (std::size_t e = 0; e < active.size(); ++e)
        if (!active[e]) addable.push_back(e);

    if (remove_coin) {
        std::vector<std::size_t> removable;
        std::vector<bool> trial = model.active;
        for (std::size_t e = 0; e < trial.size(); ++e) {
            if (!trial[e]) continue;
            trial[e] = false;
            if (is_connected(topo.nodes(), topo.edges, trial)) removable.push_back(e);
            trial[e] = true;
        }
        if (!removable.empty()) {
            const auto k = std::min(removable.size() - 1, static_cast<std::size_t>(remove_pick * removable.size()));
            active[removable[k]] = false;
            result.changed = true;
        }
    }
    if (add_coin && !addable.empty()) {
        const auto k = std::min(addable.size() - 1, static_cast<std::size_t>(add_pick * addable.size()));
        active[addable[k]] = true;
        result.changed = true;
    }
    result.routing = min_hop_routing(topo, active);
    return result;
}

void SynthConfig::validate() const {
    if (n_nodes < 2) throw ConfigError("n_nodes must be at least 2");
    if (!(comm_range > 0.0)) throw ConfigError("comm_range must be positive");
    if (traffic_rank < 1) throw ConfigError("traffic_rank must be at least 1");
    if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be nonnegative");
    if (!(anomaly_prob >= 0.0 && anomaly_prob <= 1.0)) throw ConfigError("anomaly_prob must lie in [0, 1]");
    if (!(observe_prob > 0.0 && observe_prob <= 1.0)) throw ConfigError("observe_prob must lie in (0, 1]");
    if (horizon < 1) throw ConfigError("horizon must be at least 1");
    if (!(churn_alpha >= 0.0 && churn_alpha < 1.0)) throw ConfigError("churn_alpha must lie in [0, 1)");
}

StaticRouting::StaticRouting(RoutingMatrix routing)
    : routing_(std::make_shared<const RoutingMatrix>(std::move(routing))) {}

ChurnRouting::ChurnRouting(Topology topo, double alpha, std::uint64_t seed)
    : topo_(std::move(topo)),
      model_(ChurnModel::all_active(topo_, alpha)),
      rng_(make_rng(seed, Stream::churn)),
      current_(std::make_shared<const RoutingMatrix>(min_hop_routing(topo_))) {}

std::shared_ptr<const RoutingMatrix> ChurnRouting::next() {
    if (first_) {
        first_ = false;
        return current_;
    }
    ChurnResult step = churn_step(model_, topo_, rng_);
    model_ = std::move(step.model);
    if (step.changed && !(step.routing == *current_)) {
        current_ = std::make_shared<const RoutingMatrix>(std::move(step.routing));
        ++changes_;
    }
    return current_;
}

StreamGenerator::StreamGenerator(const SynthConfig& cfg, std::shared_ptr<RoutingSchedule> routing,
                                 std::size_t n_links, std::size_t n_flows)
    : cfg_(cfg),
      routing_(std::move(routing)),
      n_links_(n_links),
      n_flows_(n_flows),
      traffic_rng_(make_rng(cfg.seed, Stream::traffic)),
      anomaly_rng_(make_rng(cfg.seed, Stream::anomalies)),
      noise_rng_(make_rng(cfg.seed, Stream::noise)),
      mask_rng_(make_rng(cfg.seed, Stream::mask)) {
    cfg_.validate();
    const auto f = static_cast<Eigen::Index>(n_flows_);
    const auto r = static_cast<Eigen::Index>(cfg_.traffic_rank);
    basis_.resize(f, r);
    std::normal_distribution<double> entry(0.0, 1.0 / std::sqrt(static_cast<double>(n_flows_)));
    for (Eigen::Index j = 0; j < r; ++j)
        for (Eigen::Index i = 0; i < f; ++i) basis_(i, j) = entry(traffic_rng_);
}

SyntheticSlot StreamGenerator::next() {
    ++t_;
    auto routing = routing_->next();
    if (routing->links() != n_links_ || routing->flows() != n_flows_)
        throw DimensionError("stream: routing schedule changed dimensions at slot " + std::to_string(t_));

    std::normal_distribution<double> standard(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    Vector w(static_cast<Eigen::Index>(cfg_.traffic_rank));
    for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = standard(traffic_rng_);
    const Vector z = basis_ * w;

    Vector a = Vector::Zero(static_cast<Eigen::Index>(n_flows_));
    for (Eigen::Index f = 0; f < a.size(); ++f) {
        const double u = unit(anomaly_rng_);
        if (u < 0.5 * cfg_.anomaly_prob)
            a[f] = -cfg_.anomaly_scale;
        else if (u < cfg_.anomaly_prob)
            a[f] = cfg_.anomaly_scale;
    }

    Vector noise(static_cast<Eigen::Index>(n_links_));
    for (Eigen::Index l = 0; l < noise.size(); ++l) noise[l] = cfg_.noise_std * standard(noise_rng_);

    std::vector<std::uint8_t> indicator(n_links_);
    for (auto& o : indicator) o = unit(mask_rng_) < cfg_.observe_prob ? 1 : 0;

    SyntheticSlot slot;
    slot.x_true = routing->apply(z);
    slot.a_true = a;
    const Vector y_full = slot.x_true + routing->apply(a) + noise;
    slot.obs.mask = ObservationMask::from_indicator(indicator);
    slot.obs.y = y_full.cwiseProduct(slot.obs.mask.weights());
    slot.obs.routing = std::move(routing);
    slot.obs.t = t_;
    return slot;
}

std::vector<SyntheticSlot> gen_stream(const SynthConfig& cfg, std::shared_ptr<RoutingSchedule> routing,
                                      std::size_t n_links, std::size_t n_flows) {
    StreamGenerator gen(cfg, std::move(routing), n_links, n_flows);
    std::vector<SyntheticSlot> slots;
    slots.reserve(cfg.horizon);
    for (std::size_t t = 0; t < cfg.horizon; ++t) slots.push_back(gen.next());
    return slots;
}

SyntheticScenario make_scenario(const SynthConfig& cfg) {
    cfg.validate();
    SyntheticScenario scenario;
    scenario.topology = gen_rgg(cfg.n_nodes, cfg.comm_range, cfg.seed);
    scenario.initial_routing = min_hop_routing(scenario.topology);
    std::shared_ptr<RoutingSchedule> schedule;
    if (cfg.churn_alpha > 0.0)
        schedule = std::make_shared<ChurnRouting>(scenario.topology, cfg.churn_alpha, cfg.seed);
    else
        schedule = std::make_shared<StaticRouting>(scenario.initial_routing);
    scenario.slots = gen_stream(cfg, schedule, scenario.topology.links.size(), scenario.topology.flows());
    return scenario;
}

}  // namespace anomalography::netsim
