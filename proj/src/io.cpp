#include "anomalography/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace anomalography::io {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        lines.push_back(text.substr(start, end - start));
        start = end + 1;
    }
    return lines;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        fields.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return fields;
}

}  // namespace

MaskedMatrix parse_matrix_csv(std::string_view text, const std::string& source) {
    std::vector<std::vector<double>> rows;
    std::vector<std::vector<double>> observed;
    const auto lines = split_lines(text);
    for (std::size_t li = 0; li < lines.size(); ++li) {
        const std::string_view line = trim(lines[li]);
        if (line.empty()) continue;
        std::vector<double> row;
        std::vector<double> obs;
        const auto fields = split_fields(line);
        for (std::size_t ci = 0; ci < fields.size(); ++ci) {
            const std::string_view tok = trim(fields[ci]);
            if (tok == "NA") {
                row.push_back(0.0);
                obs.push_back(0.0);
                continue;
            }
            double value = 0.0;
            const char* first = tok.data();
            const char* last = tok.data() + tok.size();
            if (!tok.empty() && *first == '+') ++first;
            const auto [ptr, ec] = std::from_chars(first, last, value);
            if (tok.empty() || ec != std::errc() || ptr != last)
                throw IoError(source + ":" + std::to_string(li + 1) + ":" + std::to_string(ci + 1) +
                              ": cannot parse '" + std::string(tok) + "'");
            row.push_back(value);
            obs.push_back(1.0);
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw IoError(source + ":" + std::to_string(li + 1) + ": ragged row (" + std::to_string(row.size()) +
                          " fields, expected " + std::to_string(rows.front().size()) + ")");
        rows.push_back(std::move(row));
        observed.push_back(std::move(obs));
    }
    MaskedMatrix out;
    const auto n_rows = static_cast<Eigen::Index>(rows.size());
    const auto n_cols = static_cast<Eigen::Index>(rows.empty() ? 0 : rows.front().size());
    out.values.resize(n_rows, n_cols);
    out.mask.resize(n_rows, n_cols);
    for (Eigen::Index i = 0; i < n_rows; ++i)
        for (Eigen::Index j = 0; j < n_cols; ++j) {
            out.values(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            out.mask(i, j) = observed[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
    return out;
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

MaskedMatrix load_matrix_csv(const std::filesystem::path& path) { return parse_matrix_csv(read_text(path), path.string()); }

std::string format_double(double value) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc()) throw IoError("format_double: conversion failed");
    return std::string(buf, ptr);
}

std::string format_matrix_csv(const Matrix& m, const Matrix* mask) {
    std::string out;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) out += ',';
            if (mask && (*mask)(i, j) == 0.0)
                out += "NA";
            else
                out += format_double(m(i, j));
        }
        out += '\n';
    }
    return out;
}

void write_text(const std::filesystem::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

void save_matrix_csv(const std::filesystem::path& path, const Matrix& m, const Matrix* mask) {
    write_text(path, format_matrix_csv(m, mask));
}

namespace {

std::shared_ptr<const RoutingMatrix> load_routing(const std::filesystem::path& path) {
    const MaskedMatrix m = load_matrix_csv(path);
    if (!m.complete()) throw IoError(path.string() + ": routing matrix cannot contain NA");
    try {
        return std::make_shared<const RoutingMatrix>(RoutingMatrix::from_dense(m.values));
    } catch (const DimensionError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

}  // namespace

std::vector<RoutingEpoch> load_routing_schedule(const std::filesystem::path& path) {
    const std::string text = read_text(path);
    std::vector<RoutingEpoch> epochs;
    const auto lines = split_lines(text);
    for (std::size_t li = 0; li < lines.size(); ++li) {
        const std::string_view line = trim(lines[li]);
        if (line.empty()) continue;
        const auto fields = split_fields(line);
        const std::string where = path.string() + ":" + std::to_string(li + 1);
        if (fields.size() != 2) throw IoError(where + ": expected 'start_slot,routing_path'");
        const std::string_view start_tok = trim(fields[0]);
        std::size_t start = 0;
        const auto [ptr, ec] = std::from_chars(start_tok.data(), start_tok.data() + start_tok.size(), start);
        if (ec != std::errc() || ptr != start_tok.data() + start_tok.size() || start == 0)
            throw IoError(where + ": invalid start slot '" + std::string(start_tok) + "'");
        if (epochs.empty() && start != 1) throw IoError(where + ": first epoch must start at slot 1");
        if (!epochs.empty() && start <= epochs.back().start) throw IoError(where + ": epoch starts must increase");
        const std::filesystem::path routing_path = path.parent_path() / std::string(trim(fields[1]));
        epochs.push_back({start, load_routing(routing_path)});
    }
    if (epochs.empty()) throw IoError(path.string() + ": empty routing schedule");
    return epochs;
}

std::vector<Observation> replay_stream(const MaskedMatrix& loads, const std::optional<MaskedMatrix>& mask,
                                       const std::vector<RoutingEpoch>& epochs) {
    if (epochs.empty()) throw DimensionError("replay: no routing epochs");
    const Eigen::Index n_links = loads.values.rows();
    const Eigen::Index horizon = loads.values.cols();
    if (mask && (mask->values.rows() != n_links || mask->values.cols() != horizon))
        throw DimensionError("replay: mask shape differs from link loads");
    const Dims dims{static_cast<std::size_t>(n_links), epochs.front().routing->flows(),
                    static_cast<std::size_t>(horizon), 0};
    std::vector<Observation> out;
    out.reserve(static_cast<std::size_t>(horizon));
    std::size_t epoch = 0;
    for (Eigen::Index col = 0; col < horizon; ++col) {
        const std::size_t t = static_cast<std::size_t>(col) + 1;
        while (epoch + 1 < epochs.size() && epochs[epoch + 1].start <= t) ++epoch;
        std::vector<std::uint8_t> ind(static_cast<std::size_t>(n_links));
        for (Eigen::Index l = 0; l < n_links; ++l) {
            bool seen = loads.mask(l, col) != 0.0;
            if (mask) seen = seen && mask->mask(l, col) != 0.0 && mask->values(l, col) != 0.0;
            ind[static_cast<std::size_t>(l)] = seen ? 1 : 0;
        }
        Observation obs;
        obs.mask = ObservationMask::from_indicator(ind);
        obs.y = loads.values.col(col).cwiseProduct(obs.mask.weights());
        obs.routing = epochs[epoch].routing;
        obs.t = t;
        try {
            validate(obs, dims);
        } catch (const DimensionError& e) {
            throw DimensionError("replay: slot " + std::to_string(t) + ": " + e.what());
        }
        out.push_back(std::move(obs));
    }
    return out;
}

std::vector<Observation> replay_stream(const ReplayPaths& paths) {
    const MaskedMatrix loads = load_matrix_csv(paths.link_loads);
    std::optional<MaskedMatrix> mask;
    if (paths.mask) mask = load_matrix_csv(*paths.mask);
    std::vector<RoutingEpoch> epochs;
    if (paths.routing_schedule)
        epochs = load_routing_schedule(*paths.routing_schedule);
    else if (paths.routing)
        epochs.push_back({1, load_routing(*paths.routing)});
    else
        throw IoError("replay: a routing matrix or routing schedule is required");
    return replay_stream(loads, mask, epochs);
}

}  // namespace anomalography::io
