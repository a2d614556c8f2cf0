#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "anomalography/core.hpp"
#include "anomalography/io.hpp"
#include "anomalography/netsim.hpp"

namespace anomalography::experiment {

enum class Mode { simulate, batch, online_rls, online_sgd, baseline_pca, baseline_anomography };

/// Throws ConfigError for unknown names.
Mode parse_mode(const std::string& name);
std::string mode_name(Mode mode);

struct ExperimentConfig {
    Mode mode = Mode::batch;
    std::filesystem::path output_dir = "out";

    // Exactly one source: synthetic (default) or replayed files.
    std::optional<netsim::SynthConfig> synth;
    std::optional<io::ReplayPaths> files;
    std::optional<std::filesystem::path> true_anomalies;  // F x T, file source only
    std::optional<std::filesystem::path> true_traffic;  // L x T, file source only

    HyperParams params;
    double step_scale = 1.0;  // mu[0] for online-sgd
    bool fast_rls = false;  // online-rls with rank-one inverse updates (beta = 1)

    std::size_t roc_points = 20;
    std::size_t cost_stride = 0;  // 0 disables the online cost traces
    std::size_t learn_in = 0;  // summary metrics use slots t > learn_in
    std::vector<std::size_t> monitored_flows;
    std::size_t pca_rank = 2;
    std::optional<double> pca_threshold;  // default: mean + 3 std of residual energies
    bool record_wall_time = false;

    /// Flat JSON object. Relative paths are resolved against base_dir; input
    /// files must exist. Throws ConfigError on unknown keys, bad types,
    /// missing files or a mixed source.
    static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
    nlohmann::json to_json() const;
};

/// `<mode> [--config path] [--key value ...]`; overrides win over the file.
ExperimentConfig parse_command_line(const std::vector<std::string>& args);

/// Runs the configured mode and writes its output files. Throws on failure.
void execute(const ExperimentConfig& cfg);

/// execute() with errors mapped to exit codes: 0 ok, 1 config, 2 runtime.
int run_experiment(const ExperimentConfig& cfg);

/// Full command-line entry point (parsing included).
int run_cli(const std::vector<std::string>& args);

}  // namespace anomalography::experiment
