#include "anomalography/experiment.hpp"

#include <chrono>
#include <cmath>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "anomalography/batch.hpp"
#include "anomalography/eval.hpp"
#include "anomalography/online.hpp"

namespace anomalography::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::map<std::string, Mode>& mode_table() {
    static const std::map<std::string, Mode> table{
        {"simulate", Mode::simulate},
        {"batch", Mode::batch},
        {"online-rls", Mode::online_rls},
        {"online-sgd", Mode::online_sgd},
        {"baseline-pca", Mode::baseline_pca},
        {"baseline-anomography", Mode::baseline_anomography},
    };
    return table;
}

const std::set<std::string> kSynthKeys{"n_nodes",      "comm_range",   "traffic_rank", "noise_std",    "anomaly_prob",
                                       "observe_prob", "horizon",      "churn_alpha",  "anomaly_scale"};
const std::set<std::string> kPathKeys{"link_loads", "mask",          "routing",     "routing_schedule",
                                      "true_anomalies", "true_traffic", "output_dir"};
const std::set<std::string> kOtherKeys{"mode",        "seed",          "lambda_star",   "lambda_one",     "beta",
                                       "rank",        "detect_threshold", "lasso_tol",  "lasso_max_passes",
                                       "bcd_tol",     "bcd_max_iters", "eta",           "step_scale",     "fast_rls",
                                       "roc_points",  "cost_stride",   "learn_in",      "monitored_flows", "pca_rank",
                                       "pca_threshold", "record_wall_time"};

template <typename T>
T get_field(const json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config: field '" + key + "' has the wrong type");
    }
}

std::size_t get_count(const json& j, const std::string& key, std::size_t fallback) {
    if (!j.contains(key)) return fallback;
    const json& v = j.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0)
        throw ConfigError("config: field '" + key + "' must be a nonnegative integer");
    return v.get<std::size_t>();
}

std::optional<fs::path> get_path(const json& j, const std::string& key, const fs::path& base, bool must_exist) {
    if (!j.contains(key)) return std::nullopt;
    const fs::path p = base / get_field<std::string>(j, key, "");
    if (must_exist && !fs::exists(p)) throw ConfigError("config: " + key + " file not found: " + p.string());
    return p;
}

std::vector<std::size_t> parse_flow_list(const json& v) {
    std::vector<std::size_t> out;
    if (v.is_array()) {
        for (const json& e : v) {
            if (!e.is_number_integer() || e.get<long long>() < 0)
                throw ConfigError("config: monitored_flows entries must be nonnegative integers");
            out.push_back(e.get<std::size_t>());
        }
        return out;
    }
    if (v.is_number_integer() && v.get<long long>() >= 0) return {v.get<std::size_t>()};
    if (!v.is_string()) throw ConfigError("config: monitored_flows must be a list of flow indices");
    std::stringstream ss(v.get<std::string>());
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            std::size_t used = 0;
            const long long value = std::stoll(tok, &used);
            if (value < 0 || used != tok.size()) throw std::invalid_argument(tok);
            out.push_back(static_cast<std::size_t>(value));
        } catch (const std::exception&) {
            throw ConfigError("config: bad monitored flow '" + tok + "'");
        }
    }
    return out;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

// ---- data assembly ----

struct Dataset {
    std::vector<Observation> slots;
    std::optional<Matrix> a_true;  // F x T
    std::optional<Matrix> x_true;  // L x T
    std::optional<netsim::SyntheticScenario> scenario;
    std::size_t n_links = 0;
    std::size_t n_flows = 0;
    std::size_t horizon() const { return slots.size(); }
    bool static_routing() const {
        for (const Observation& o : slots)
            if (!(*o.routing == *slots.front().routing)) return false;
        return true;
    }
    bool complete() const {
        for (const Observation& o : slots)
            if (o.mask.count() != o.mask.size()) return false;
        return true;
    }
};

Dataset load_dataset(const ExperimentConfig& cfg) {
    Dataset d;
    if (cfg.synth) {
        d.scenario = netsim::make_scenario(*cfg.synth);
        const auto& slots = d.scenario->slots;
        d.n_links = d.scenario->topology.links.size();
        d.n_flows = d.scenario->topology.flows();
        Matrix a(static_cast<Eigen::Index>(d.n_flows), static_cast<Eigen::Index>(slots.size()));
        Matrix x(static_cast<Eigen::Index>(d.n_links), static_cast<Eigen::Index>(slots.size()));
        for (std::size_t t = 0; t < slots.size(); ++t) {
            d.slots.push_back(slots[t].obs);
            a.col(static_cast<Eigen::Index>(t)) = slots[t].a_true;
            x.col(static_cast<Eigen::Index>(t)) = slots[t].x_true;
        }
        d.a_true = std::move(a);
        d.x_true = std::move(x);
        return d;
    }
    d.slots = io::replay_stream(*cfg.files);
    if (d.slots.empty()) throw IoError("replay: link loads file holds no slots");
    d.n_links = d.slots.front().routing->links();
    d.n_flows = d.slots.front().routing->flows();
    if (cfg.true_anomalies) {
        const io::MaskedMatrix m = io::load_matrix_csv(*cfg.true_anomalies);
        if (static_cast<std::size_t>(m.values.rows()) != d.n_flows ||
            static_cast<std::size_t>(m.values.cols()) != d.horizon())
            throw DimensionError("true_anomalies: expected " + std::to_string(d.n_flows) + " x " +
                                 std::to_string(d.horizon()));
        d.a_true = m.values;
    }
    if (cfg.true_traffic) {
        const io::MaskedMatrix m = io::load_matrix_csv(*cfg.true_traffic);
        if (static_cast<std::size_t>(m.values.rows()) != d.n_links ||
            static_cast<std::size_t>(m.values.cols()) != d.horizon())
            throw DimensionError("true_traffic: expected " + std::to_string(d.n_links) + " x " +
                                 std::to_string(d.horizon()));
        d.x_true = m.values;
    }
    return d;
}

// ---- output helpers ----

std::string fmt(double v) { return io::format_double(v); }
std::string fmt(const std::optional<double>& v) { return v ? io::format_double(*v) : std::string("NA"); }

std::string anomaly_triplets(const Matrix& a, double threshold) {
    std::string out;
    for (Eigen::Index t = 0; t < a.cols(); ++t)
        for (Eigen::Index f = 0; f < a.rows(); ++f)
            if (std::abs(a(f, t)) >= threshold && a(f, t) != 0.0)
                out += std::to_string(t + 1) + "," + std::to_string(f) + "," + fmt(a(f, t)) + "\n";
    return out;
}

struct TraceRow {
    std::optional<double> cost;
    std::optional<double> approx_cost;
};

// Per-slot running errors and cumulative detection rates.
std::string trace_table(const Dataset& d, const Matrix& a_hat, const Matrix& x_hat, double threshold,
                        const std::vector<TraceRow>& costs) {
    eval::ErrorTrace errors;
    const bool have_a = d.a_true.has_value();
    const bool have_x = d.x_true.has_value();
    std::size_t det = 0, fa = 0, pos = 0, neg = 0;
    std::string out;
    for (Eigen::Index t = 0; t < a_hat.cols(); ++t) {
        std::optional<double> e_a, e_x, p_d, p_fa;
        if (have_a && have_x) {
            errors.push(a_hat.col(t), d.a_true->col(t), x_hat.col(t), d.x_true->col(t));
            e_a = errors.anomaly_error(errors.size());
            e_x = errors.traffic_error(errors.size());
        } else if (have_a) {
            errors.push(a_hat.col(t), d.a_true->col(t), Vector::Zero(1), Vector::Zero(1));
            e_a = errors.anomaly_error(errors.size());
        } else if (have_x) {
            errors.push(Vector::Zero(1), Vector::Zero(1), x_hat.col(t), d.x_true->col(t));
            e_x = errors.traffic_error(errors.size());
        }
        if (have_a) {
            const auto r = eval::detection_rates(Matrix(a_hat.col(t)), Matrix(d.a_true->col(t)), threshold);
            det += r.true_detections;
            fa += r.false_alarms;
            pos += r.positives;
            neg += r.negatives;
            if (pos) p_d = static_cast<double>(det) / static_cast<double>(pos);
            if (neg) p_fa = static_cast<double>(fa) / static_cast<double>(neg);
        }
        const std::size_t ti = static_cast<std::size_t>(t);
        const TraceRow cost = ti < costs.size() ? costs[ti] : TraceRow{};
        out += std::to_string(t + 1) + "," + fmt(e_a) + "," + fmt(e_x) + "," + fmt(p_d) + "," + fmt(p_fa) + "," +
               fmt(cost.cost) + "," + fmt(cost.approx_cost) + "\n";
    }
    return out;
}

std::string monitored_table(const Dataset& d, const Matrix& a_hat, const std::vector<std::size_t>& flows) {
    std::string out;
    for (Eigen::Index t = 0; t < a_hat.cols(); ++t)
        for (std::size_t f : flows) {
            const auto fi = static_cast<Eigen::Index>(f);
            const std::optional<double> truth =
                d.a_true ? std::optional<double>((*d.a_true)(fi, t)) : std::optional<double>();
            out += std::to_string(t + 1) + "," + std::to_string(f) + "," + fmt(truth) + "," + fmt(a_hat(fi, t)) + "\n";
        }
    return out;
}

json report_json(const eval::DetectionReport& r) {
    return json{{"p_d", optional_number(r.p_d)},
                {"p_fa", optional_number(r.p_fa)},
                {"true_detections", r.true_detections},
                {"false_alarms", r.false_alarms},
                {"positives", r.positives},
                {"negatives", r.negatives},
                {"threshold", r.threshold}};
}

// Detection metrics over slots t > learn_in, plus the ROC area when truth exists.
void add_detection_metrics(json& metrics, const ExperimentConfig& cfg, const Dataset& d, const Matrix& scores,
                           const Matrix& a_hat) {
    if (!d.a_true) return;
    const auto start = static_cast<Eigen::Index>(std::min<std::size_t>(cfg.learn_in, d.horizon()));
    const Eigen::Index width = a_hat.cols() - start;
    const Matrix truth = d.a_true->rightCols(width);
    const double thr = cfg.params.detect_threshold;
    metrics["detection"] = report_json(eval::detection_rates(Matrix(a_hat.rightCols(width)), truth, thr));
    const Matrix window = scores.rightCols(width);
    const auto grid = eval::threshold_grid(window, cfg.roc_points);
    const auto roc = eval::roc_sweep(window, truth, grid, thr);
    metrics["auc"] = eval::roc_auc(roc);
    if (!cfg.monitored_flows.empty()) {
        json per_flow = json::array();
        for (std::size_t f : cfg.monitored_flows) {
            const auto fi = static_cast<Eigen::Index>(f);
            auto r = eval::detection_rates(Matrix(a_hat.row(fi).tail(width)), Matrix(truth.row(fi)), thr);
            json entry = report_json(r);
            entry["flow"] = f;
            per_flow.push_back(entry);
        }
        metrics["monitored"] = per_flow;
    }
}

void add_error_metrics(json& metrics, const Dataset& d, const Matrix& a_hat, const Matrix& x_hat) {
    const auto t = static_cast<double>(a_hat.cols());
    if (d.a_true) metrics["e_a"] = (a_hat - *d.a_true).squaredNorm() / t;
    if (d.x_true) metrics["e_x"] = (x_hat - *d.x_true).squaredNorm() / t;
}

void check_flows(const ExperimentConfig& cfg, const Dataset& d) {
    for (std::size_t f : cfg.monitored_flows)
        if (f >= d.n_flows)
            throw ConfigError("monitored flow " + std::to_string(f) + " out of range (F = " + std::to_string(d.n_flows) +
                              ")");
}

Matrix link_loads(const Dataset& d, Matrix* mask) {
    Matrix y(static_cast<Eigen::Index>(d.n_links), static_cast<Eigen::Index>(d.horizon()));
    if (mask) mask->resize(y.rows(), y.cols());
    for (std::size_t t = 0; t < d.horizon(); ++t) {
        y.col(static_cast<Eigen::Index>(t)) = d.slots[t].y;
        if (mask) mask->col(static_cast<Eigen::Index>(t)) = d.slots[t].mask.weights();
    }
    return y;
}

// ---- modes ----

void run_simulate(const ExperimentConfig& cfg, const Dataset& d, json& summary) {
    const fs::path& out = cfg.output_dir;
    Matrix mask;
    const Matrix y = link_loads(d, &mask);
    io::save_matrix_csv(out / "link_loads.csv", y, &mask);
    if (d.a_true) io::save_matrix_csv(out / "true_anomalies.csv", *d.a_true);
    if (d.x_true) io::save_matrix_csv(out / "true_traffic.csv", *d.x_true);
    io::save_matrix_csv(out / "routing.csv", d.slots.front().routing->dense());

    std::string schedule;
    std::size_t epochs = 0;
    for (std::size_t t = 0; t < d.horizon(); ++t) {
        if (t > 0 && *d.slots[t].routing == *d.slots[t - 1].routing) continue;
        ++epochs;
        const std::string name = "routing_" + std::to_string(epochs) + ".csv";
        io::save_matrix_csv(out / name, d.slots[t].routing->dense());
        schedule += std::to_string(t + 1) + "," + name + "\n";
    }
    io::write_text(out / "routing_schedule.csv", schedule);
    io::write_text(out / "anomalies.csv", d.a_true ? anomaly_triplets(*d.a_true, cfg.params.detect_threshold) : "");

    json& m = summary["metrics"];
    m["links"] = d.n_links;
    m["flows"] = d.n_flows;
    m["slots"] = d.horizon();
    m["routing_epochs"] = epochs;
    m["observed_fraction"] = mask.size() ? mask.sum() / static_cast<double>(mask.size()) : 0.0;
    if (d.a_true) m["anomalies"] = (d.a_true->array() != 0.0).count();
}

void run_batch(const ExperimentConfig& cfg, const Dataset& d, json& summary) {
    const auto prob = batch::BatchProblem::from_observations(d.slots, cfg.params);
    const batch::BatchSolution sol = batch::bcd_solve(prob);
    const Matrix x_hat = sol.x_hat();
    const fs::path& out = cfg.output_dir;

    io::write_text(out / "anomalies.csv", anomaly_triplets(sol.a_dense, cfg.params.detect_threshold));
    std::string objective;
    for (std::size_t k = 0; k < sol.objective.size(); ++k) objective += std::to_string(k) + "," + fmt(sol.objective[k]) + "\n";
    io::write_text(out / "objective.csv", objective);
    io::write_text(out / "traces.csv", trace_table(d, sol.a_dense, x_hat, cfg.params.detect_threshold, {}));
    if (!cfg.monitored_flows.empty())
        io::write_text(out / "monitored.csv", monitored_table(d, sol.a_dense, cfg.monitored_flows));

    json& m = summary["metrics"];
    m["iterations"] = sol.iterations;
    m["converged"] = sol.converged;
    m["objective"] = sol.objective.back();
    m["objective_per_slot"] = sol.objective.back() / static_cast<double>(d.horizon());
    const auto check = batch::prop1_check(prob, sol.l_hat, sol.q_hat, sol.a_dense);
    m["prop1_holds"] = check.holds;
    m["residual_spectral_norm"] = check.residual_spectral_norm;
    m["detected"] = sol.a_hat.nonzeros();
    add_error_metrics(m, d, sol.a_dense, x_hat);
    add_detection_metrics(m, cfg, d, sol.a_dense, sol.a_dense);
}

void run_online(const ExperimentConfig& cfg, const Dataset& d, json& summary) {
    const bool sgd = cfg.mode == Mode::online_sgd;
    if (!sgd && cfg.fast_rls && cfg.params.beta != 1.0) throw ConfigError("fast_rls requires beta = 1");
    online::OnlineState rls;
    online::NesterovState nesterov;
    if (sgd)
        nesterov = online::NesterovState::init(d.n_links, d.n_flows, cfg.params, cfg.step_scale);
    else
        rls = online::OnlineState::init(d.n_links, d.n_flows, cfg.params);

    const auto T = static_cast<Eigen::Index>(d.horizon());
    Matrix a_hat(static_cast<Eigen::Index>(d.n_flows), T);
    Matrix x_hat(static_cast<Eigen::Index>(d.n_links), T);
    std::vector<eval::SlotRecord> records;
    std::vector<TraceRow> costs(d.horizon());
    std::size_t backtracks = 0;
    for (std::size_t t = 0; t < d.horizon(); ++t) {
        online::SlotEstimate est;
        if (sgd) {
            est = online::sgd_step(nesterov, d.slots[t]);
            backtracks += nesterov.last_backtracks;
        } else {
            est = cfg.fast_rls ? online::rls_fast_step(rls, d.slots[t]) : online::online_step(rls, d.slots[t]);
        }
        a_hat.col(static_cast<Eigen::Index>(t)) = est.a_hat;
        x_hat.col(static_cast<Eigen::Index>(t)) = est.x_hat;
        if (cfg.cost_stride == 0) continue;
        records.push_back({est.q_hat, est.a_hat});
        if ((t + 1) % cfg.cost_stride != 0) continue;
        const Matrix& subspace = sgd ? nesterov.current : rls.subspace;
        const std::span<const Observation> history(d.slots.data(), t + 1);
        costs[t].cost = eval::target_cost(subspace, history, cfg.params);
        costs[t].approx_cost = eval::approx_cost(subspace, history, records, cfg.params);
    }

    const fs::path& out = cfg.output_dir;
    io::write_text(out / "anomalies.csv", anomaly_triplets(a_hat, cfg.params.detect_threshold));
    io::write_text(out / "traces.csv", trace_table(d, a_hat, x_hat, cfg.params.detect_threshold, costs));
    if (!cfg.monitored_flows.empty()) io::write_text(out / "monitored.csv", monitored_table(d, a_hat, cfg.monitored_flows));

    json& m = summary["metrics"];
    for (auto it = costs.rbegin(); it != costs.rend(); ++it)
        if (it->cost) {
            m["final_cost"] = *it->cost;
            m["final_approx_cost"] = *it->approx_cost;
            break;
        }
    if (sgd) {
        m["backtracks"] = backtracks;
        m["final_step_scale"] = nesterov.step_scale;
    }
    add_error_metrics(m, d, a_hat, x_hat);
    add_detection_metrics(m, cfg, d, a_hat, a_hat);
}

void run_baseline_pca(const ExperimentConfig& cfg, const Dataset& d, json& summary) {
    const Matrix y = link_loads(d, nullptr);
    const Vector energy = eval::pca_residual_energy(y, cfg.pca_rank);
    double threshold = 0.0;
    if (cfg.pca_threshold) {
        threshold = *cfg.pca_threshold;
    } else {
        const double mean = energy.mean();
        const double var = (energy.array() - mean).square().mean();
        threshold = mean + 3.0 * std::sqrt(var);
    }
    // Slot-level detector: every flow of a flagged slot carries the slot energy.
    Matrix scores(static_cast<Eigen::Index>(d.n_flows), energy.size());
    for (Eigen::Index t = 0; t < energy.size(); ++t) scores.col(t).setConstant(energy[t]);

    std::string flags;
    std::string anomalies;
    std::size_t flagged = 0;
    for (Eigen::Index t = 0; t < energy.size(); ++t) {
        const bool hit = energy[t] > threshold;
        flagged += hit ? 1 : 0;
        flags += std::to_string(t + 1) + "," + fmt(energy[t]) + "," + (hit ? "1" : "0") + "\n";
        if (hit)
            for (std::size_t f = 0; f < d.n_flows; ++f)
                anomalies += std::to_string(t + 1) + "," + std::to_string(f) + "," + fmt(energy[t]) + "\n";
    }
    io::write_text(cfg.output_dir / "slot_flags.csv", flags);
    io::write_text(cfg.output_dir / "anomalies.csv", anomalies);

    json& m = summary["metrics"];
    m["pca_rank"] = cfg.pca_rank;
    m["pca_threshold"] = threshold;
    m["flagged_slots"] = flagged;
    if (d.a_true) {
        const auto start = static_cast<Eigen::Index>(std::min<std::size_t>(cfg.learn_in, d.horizon()));
        const Eigen::Index width = scores.cols() - start;
        const Matrix window = scores.rightCols(width);
        const Matrix truth = d.a_true->rightCols(width);
        // Flagged flows are exactly those whose slot energy exceeds the threshold.
        const double flag_level = std::nextafter(threshold, std::numeric_limits<double>::infinity());
        m["detection"] = report_json(eval::detection_rates(window, truth, flag_level, cfg.params.detect_threshold));
        const auto grid = eval::threshold_grid(window, cfg.roc_points);
        m["auc"] = eval::roc_auc(eval::roc_sweep(window, truth, grid, cfg.params.detect_threshold));
    }
}

void run_baseline_anomography(const ExperimentConfig& cfg, const Dataset& d, json& summary) {
    const Matrix y = link_loads(d, nullptr);
    const Matrix a_hat = eval::anomography_l1(y, cfg.pca_rank, *d.slots.front().routing);
    io::write_text(cfg.output_dir / "anomalies.csv", anomaly_triplets(a_hat, cfg.params.detect_threshold));
    if (!cfg.monitored_flows.empty())
        io::write_text(cfg.output_dir / "monitored.csv", monitored_table(d, a_hat, cfg.monitored_flows));
    json& m = summary["metrics"];
    m["pca_rank"] = cfg.pca_rank;
    if (d.a_true) m["e_a"] = (a_hat - *d.a_true).squaredNorm() / static_cast<double>(a_hat.cols());
    add_detection_metrics(m, cfg, d, a_hat, a_hat);
}

}  // namespace

Mode parse_mode(const std::string& name) {
    const auto it = mode_table().find(name);
    if (it == mode_table().end()) throw ConfigError("unknown mode '" + name + "'");
    return it->second;
}

std::string mode_name(Mode mode) {
    for (const auto& [name, m] : mode_table())
        if (m == mode) return name;
    return "?";
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const fs::path& base_dir) {
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    for (const auto& [key, value] : j.items())
        if (!kSynthKeys.count(key) && !kPathKeys.count(key) && !kOtherKeys.count(key))
            throw ConfigError("config: unknown field '" + key + "'");

    ExperimentConfig cfg;
    if (j.contains("mode")) cfg.mode = parse_mode(get_field<std::string>(j, "mode", ""));
    if (auto p = get_path(j, "output_dir", base_dir, false)) cfg.output_dir = *p;

    HyperParams& hp = cfg.params;
    hp.seed = get_field<std::uint64_t>(j, "seed", hp.seed);
    hp.lambda_star = get_field<double>(j, "lambda_star", hp.lambda_star);
    hp.lambda_one = get_field<double>(j, "lambda_one", hp.lambda_one);
    hp.beta = get_field<double>(j, "beta", hp.beta);
    hp.rank = get_count(j, "rank", hp.rank);
    hp.detect_threshold = get_field<double>(j, "detect_threshold", hp.detect_threshold);
    hp.lasso_tol = get_field<double>(j, "lasso_tol", hp.lasso_tol);
    hp.lasso_max_passes = get_count(j, "lasso_max_passes", hp.lasso_max_passes);
    hp.bcd_tol = get_field<double>(j, "bcd_tol", hp.bcd_tol);
    hp.bcd_max_iters = get_count(j, "bcd_max_iters", hp.bcd_max_iters);
    hp.eta = get_field<double>(j, "eta", hp.eta);
    hp.validate();

    cfg.step_scale = get_field<double>(j, "step_scale", cfg.step_scale);
    if (!(cfg.step_scale > 0.0)) throw ConfigError("config: step_scale must be positive");
    cfg.fast_rls = get_field<bool>(j, "fast_rls", cfg.fast_rls);
    cfg.roc_points = get_count(j, "roc_points", cfg.roc_points);
    if (cfg.roc_points < 2) throw ConfigError("config: roc_points must be at least 2");
    cfg.cost_stride = get_count(j, "cost_stride", cfg.cost_stride);
    cfg.learn_in = get_count(j, "learn_in", cfg.learn_in);
    if (j.contains("monitored_flows")) cfg.monitored_flows = parse_flow_list(j.at("monitored_flows"));
    cfg.pca_rank = get_count(j, "pca_rank", cfg.pca_rank);
    if (cfg.pca_rank < 1) throw ConfigError("config: pca_rank must be at least 1");
    if (j.contains("pca_threshold")) cfg.pca_threshold = get_field<double>(j, "pca_threshold", 0.0);
    cfg.record_wall_time = get_field<bool>(j, "record_wall_time", cfg.record_wall_time);

    bool any_synth = false;
    for (const auto& key : kSynthKeys) any_synth = any_synth || j.contains(key);
    const bool any_file = j.contains("link_loads") || j.contains("mask") || j.contains("routing") ||
                          j.contains("routing_schedule") || j.contains("true_anomalies") || j.contains("true_traffic");
    if (any_synth && any_file) throw ConfigError("config: give either synthetic settings or input files, not both");

    if (any_file) {
        if (!j.contains("link_loads")) throw ConfigError("config: file input needs link_loads");
        if (j.contains("routing") == j.contains("routing_schedule"))
            throw ConfigError("config: file input needs exactly one of routing, routing_schedule");
        io::ReplayPaths paths;
        paths.link_loads = *get_path(j, "link_loads", base_dir, true);
        paths.mask = get_path(j, "mask", base_dir, true);
        paths.routing = get_path(j, "routing", base_dir, true);
        paths.routing_schedule = get_path(j, "routing_schedule", base_dir, true);
        cfg.files = paths;
        cfg.true_anomalies = get_path(j, "true_anomalies", base_dir, true);
        cfg.true_traffic = get_path(j, "true_traffic", base_dir, true);
        if (cfg.mode == Mode::simulate) throw ConfigError("config: simulate mode takes synthetic settings only");
    } else {
        netsim::SynthConfig s;
        s.n_nodes = get_count(j, "n_nodes", s.n_nodes);
        s.comm_range = get_field<double>(j, "comm_range", s.comm_range);
        s.traffic_rank = get_count(j, "traffic_rank", s.traffic_rank);
        s.noise_std = get_field<double>(j, "noise_std", s.noise_std);
        s.anomaly_prob = get_field<double>(j, "anomaly_prob", s.anomaly_prob);
        s.observe_prob = get_field<double>(j, "observe_prob", s.observe_prob);
        s.horizon = get_count(j, "horizon", s.horizon);
        s.churn_alpha = get_field<double>(j, "churn_alpha", s.churn_alpha);
        s.anomaly_scale = get_field<double>(j, "anomaly_scale", s.anomaly_scale);
        s.seed = hp.seed;
        s.validate();
        cfg.synth = s;
        const bool needs_static = cfg.mode == Mode::batch || cfg.mode == Mode::baseline_pca ||
                                  cfg.mode == Mode::baseline_anomography;
        if (needs_static && s.churn_alpha > 0.0)
            throw ConfigError("config: " + mode_name(cfg.mode) + " needs static routing (churn_alpha = 0)");
        const bool pca = cfg.mode == Mode::baseline_pca || cfg.mode == Mode::baseline_anomography;
        if (pca && s.observe_prob < 1.0)
            throw ConfigError("config: the PCA baselines need complete data (observe_prob = 1)");
    }
    return cfg;
}

json ExperimentConfig::to_json() const {
    json j;
    j["mode"] = mode_name(mode);
    j["output_dir"] = output_dir.generic_string();
    j["seed"] = params.seed;
    j["lambda_star"] = params.lambda_star;
    j["lambda_one"] = params.lambda_one;
    j["beta"] = params.beta;
    j["rank"] = params.rank;
    j["detect_threshold"] = params.detect_threshold;
    j["lasso_tol"] = params.lasso_tol;
    j["lasso_max_passes"] = params.lasso_max_passes;
    j["bcd_tol"] = params.bcd_tol;
    j["bcd_max_iters"] = params.bcd_max_iters;
    j["eta"] = params.eta;
    j["step_scale"] = step_scale;
    j["fast_rls"] = fast_rls;
    j["roc_points"] = roc_points;
    j["cost_stride"] = cost_stride;
    j["learn_in"] = learn_in;
    j["monitored_flows"] = monitored_flows;
    j["pca_rank"] = pca_rank;
    if (pca_threshold) j["pca_threshold"] = *pca_threshold;
    j["record_wall_time"] = record_wall_time;
    if (synth) {
        j["n_nodes"] = synth->n_nodes;
        j["comm_range"] = synth->comm_range;
        j["traffic_rank"] = synth->traffic_rank;
        j["noise_std"] = synth->noise_std;
        j["anomaly_prob"] = synth->anomaly_prob;
        j["observe_prob"] = synth->observe_prob;
        j["horizon"] = synth->horizon;
        j["churn_alpha"] = synth->churn_alpha;
        j["anomaly_scale"] = synth->anomaly_scale;
    }
    if (files) {
        j["link_loads"] = files->link_loads.generic_string();
        if (files->mask) j["mask"] = files->mask->generic_string();
        if (files->routing) j["routing"] = files->routing->generic_string();
        if (files->routing_schedule) j["routing_schedule"] = files->routing_schedule->generic_string();
        if (true_anomalies) j["true_anomalies"] = true_anomalies->generic_string();
        if (true_traffic) j["true_traffic"] = true_traffic->generic_string();
    }
    return j;
}

ExperimentConfig parse_command_line(const std::vector<std::string>& args) {
    CLI::App app{"Low-rank plus sparse traffic anomaly detection", "anomalography"};
    std::string mode;
    std::string config_path;
    app.add_option("mode", mode, "simulate | batch | online-rls | online-sgd | baseline-pca | baseline-anomography")
        ->required();
    app.add_option("--config", config_path, "flat JSON configuration file");
    app.allow_extras();
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        throw ConfigError(std::string("command line: ") + e.what());
    }

    json merged = json::object();
    if (!config_path.empty()) {
        const fs::path path(config_path);
        if (!fs::exists(path)) throw ConfigError("config file not found: " + config_path);
        try {
            merged = json::parse(io::read_text(path));
        } catch (const json::parse_error& e) {
            throw ConfigError("config: " + config_path + ": " + e.what());
        }
        if (!merged.is_object()) throw ConfigError("config: expected a JSON object");
        const fs::path base = path.parent_path();
        for (const auto& key : kPathKeys)
            if (merged.contains(key) && merged[key].is_string())
                merged[key] = (base / merged[key].get<std::string>()).generic_string();
    }

    const std::vector<std::string> extras = app.remaining();
    for (std::size_t i = 0; i < extras.size(); ++i) {
        const std::string& flag = extras[i];
        if (flag.rfind("--", 0) != 0 || flag.size() <= 2) throw ConfigError("command line: unexpected '" + flag + "'");
        if (i + 1 >= extras.size()) throw ConfigError("command line: " + flag + " needs a value");
        std::string key = flag.substr(2);
        for (char& c : key)
            if (c == '-') c = '_';
        const std::string& raw = extras[++i];
        json value;
        if (kPathKeys.count(key) || key == "mode") {
            value = raw;
        } else {
            try {
                value = json::parse(raw);
            } catch (const json::parse_error&) {
                value = raw;
            }
        }
        merged[key] = value;
    }
    if (merged.contains("mode") && merged["mode"] != mode)
        throw ConfigError("config: mode '" + merged["mode"].dump() + "' conflicts with command-line mode '" + mode + "'");
    merged["mode"] = mode;
    return ExperimentConfig::from_json(merged, "");
}

void execute(const ExperimentConfig& cfg) {
    const auto started = std::chrono::steady_clock::now();
    std::error_code ec;
    fs::create_directories(cfg.output_dir, ec);
    if (ec) throw IoError("cannot create output directory " + cfg.output_dir.string() + ": " + ec.message());

    const Dataset d = load_dataset(cfg);
    check_flows(cfg, d);
    if ((cfg.mode == Mode::baseline_pca || cfg.mode == Mode::baseline_anomography) && !d.complete())
        throw ConfigError("the PCA baselines need complete data; the input has missing entries");
    if ((cfg.mode == Mode::batch || cfg.mode == Mode::baseline_pca || cfg.mode == Mode::baseline_anomography) &&
        !d.static_routing())
        throw ConfigError(mode_name(cfg.mode) + " needs a single routing matrix");

    json summary;
    summary["mode"] = mode_name(cfg.mode);
    summary["seed"] = cfg.params.seed;
    summary["config"] = cfg.to_json();
    summary["metrics"] = json::object();
    switch (cfg.mode) {
        case Mode::simulate: run_simulate(cfg, d, summary); break;
        case Mode::batch: run_batch(cfg, d, summary); break;
        case Mode::online_rls:
        case Mode::online_sgd: run_online(cfg, d, summary); break;
        case Mode::baseline_pca: run_baseline_pca(cfg, d, summary); break;
        case Mode::baseline_anomography: run_baseline_anomography(cfg, d, summary); break;
    }
    if (cfg.record_wall_time)
        summary["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    io::write_text(cfg.output_dir / "summary.json", summary.dump(2) + "\n");
}

int run_experiment(const ExperimentConfig& cfg) {
    try {
        execute(cfg);
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

int run_cli(const std::vector<std::string>& args) {
    ExperimentConfig cfg;
    try {
        cfg = parse_command_line(args);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    }
    return run_experiment(cfg);
}

}  // namespace anomalography::experiment
