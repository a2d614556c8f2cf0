#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "anomalography/core.hpp"

namespace anomalography::io {

/// Matrix read from CSV; mask(i, j) is 0 where the file held `NA`.
struct MaskedMatrix {
    Matrix values;  // NA entries hold 0
    Matrix mask;
    bool complete() const { return (mask.array() == 1.0).all(); }
};

/// Headerless CSV of decimal floats, one matrix row per line. Throws IoError
/// on ragged rows or unparseable tokens (with 1-based line and column).
MaskedMatrix parse_matrix_csv(std::string_view text, const std::string& source = "<memory>");
MaskedMatrix load_matrix_csv(const std::filesystem::path& path);

/// Shortest decimal string that parses back to exactly `value`.
std::string format_double(double value);

std::string format_matrix_csv(const Matrix& m, const Matrix* mask = nullptr);
void save_matrix_csv(const std::filesystem::path& path, const Matrix& m, const Matrix* mask = nullptr);

void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

struct RoutingEpoch {
    std::size_t start = 1;  // first slot (1-based) that uses this routing
    std::shared_ptr<const RoutingMatrix> routing;
};

/// Schedule file: one `start_slot,routing_csv_path` line per epoch, paths
/// relative to the schedule file. The first epoch must start at slot 1 and
/// starts must increase.
std::vector<RoutingEpoch> load_routing_schedule(const std::filesystem::path& path);

struct ReplayPaths {
    std::filesystem::path link_loads;  // L x T, NA = missing
    std::optional<std::filesystem::path> mask;  // L x T, 1 observed, 0 or NA missing
    std::optional<std::filesystem::path> routing;  // single epoch
    std::optional<std::filesystem::path> routing_schedule;  // multiple epochs
};

/// Validated observations t = 1..T.
std::vector<Observation> replay_stream(const ReplayPaths& paths);
std::vector<Observation> replay_stream(const MaskedMatrix& loads, const std::optional<MaskedMatrix>& mask,
                                       const std::vector<RoutingEpoch>& epochs);

}  // namespace anomalography::io
