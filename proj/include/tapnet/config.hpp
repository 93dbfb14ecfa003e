#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tapnet/data.hpp"
#include "tapnet/episode.hpp"
#include "tapnet/evaluate.hpp"

namespace tapnet {

/// Flat key=value configuration with [section] headers. Keys are stored as
/// "section.key". Later sources override earlier ones; the echo is a sorted,
/// regenerable rendering of the effective configuration.
class ConfigMap {
public:
    static ConfigMap parse_text(const std::string& text, const std::string& origin = "<text>");
    static ConfigMap parse_file(const std::string& path);

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    void merge_from(const ConfigMap& overrides);
    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::size_t get_size(const std::string& key, std::size_t fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::size_t> get_sizes(const std::string& key,
                                       const std::vector<std::size_t>& fallback) const;
    /// "full" (or absence) -> nullopt; otherwise a positive integer.
    std::optional<std::size_t> get_proj_dim(const std::string& key) const;

    /// Reject keys outside the known schema, listing every offender.
    void require_known(const std::set<std::string>& known) const;

    std::string echo() const;
    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

/// Everything one experiment needs: dataset recipe, model shape, training
/// and evaluation protocols.
struct ExperimentConfig {
    // data
    std::string dataset = "synthetic"; // "synthetic" or "image-folder:PATH"
    SyntheticTaskSpec synthetic;
    bool augment_rotations = false;
    SplitSizes splits{10, 5, 5};
    // model
    std::string arch = "mlp"; // "mlp" or "conv"
    std::size_t embed_dim = 64;
    std::vector<std::size_t> mlp_hidden{64, 64};
    std::vector<std::size_t> conv_channels{8, 16, 32, 64};
    // protocols
    TrainConfig train;
    EvalProtocol eval;

    static const std::set<std::string>& known_keys();
    static ExperimentConfig from_map(const ConfigMap& map);
    ConfigMap to_map() const;
};

/// Load the dataset named by the config and partition it into splits.
DatasetBundle load_dataset(const ExperimentConfig& config);

/// Deterministic "%.17g" rendering used by every text artifact.
std::string format_double(double v);

std::string format_metrics(const std::vector<MetricsRecord>& records);
std::string format_eval_report(const EvalReport& report);

struct SweepEntry {
    std::string proj_dim_label;
    std::optional<EvalReport> report; // empty on a failed dimension
    std::string error;
};

std::string format_sweep_report(const std::vector<SweepEntry>& entries);

} // namespace tapnet
