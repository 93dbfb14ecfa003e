#include "tapnet/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "tapnet/errors.hpp"

namespace tapnet {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string csv(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(v[i]);
    }
    return out;
}

} // namespace

ConfigMap ConfigMap::parse_text(const std::string& text, const std::string& origin) {
    ConfigMap map;
    std::istringstream in(text);
    std::string line;
    std::string section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto comment = line.find('#');
        if (comment != std::string::npos) line = line.substr(0, comment);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError(origin + ":" + std::to_string(line_no) +
                                  ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty section name");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
        if (section.empty())
            throw ConfigError(origin + ":" + std::to_string(line_no) +
                              ": key outside of any [section]");
        map.values_[section + "." + key] = value;
    }
    return map;
}

ConfigMap ConfigMap::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file: " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_text(buffer.str(), path);
}

void ConfigMap::merge_from(const ConfigMap& overrides) {
    for (const auto& [k, v] : overrides.values_) values_[k] = v;
}

std::string ConfigMap::get_string(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

std::size_t ConfigMap::get_size(const std::string& key, std::size_t fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        return static_cast<std::size_t>(std::stoull(it->second));
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' is not a non-negative integer: " + it->second);
    }
}

std::uint64_t ConfigMap::get_u64(const std::string& key, std::uint64_t fallback) const {
    return static_cast<std::uint64_t>(get_size(key, static_cast<std::size_t>(fallback)));
}

double ConfigMap::get_double(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        return std::stod(it->second);
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' is not a number: " + it->second);
    }
}

bool ConfigMap::get_bool(const std::string& key, bool fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError("config key '" + key + "' must be true or false: " + it->second);
}

std::vector<std::size_t> ConfigMap::get_sizes(const std::string& key,
                                              const std::vector<std::size_t>& fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<std::size_t> out;
    std::stringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        try {
            out.push_back(static_cast<std::size_t>(std::stoull(tok)));
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "' has a bad list entry: " + tok);
        }
    }
    if (out.empty()) throw ConfigError("config key '" + key + "' must list at least one value");
    return out;
}

std::optional<std::size_t> ConfigMap::get_proj_dim(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end() || it->second == "full") return std::nullopt;
    try {
        const auto v = std::stoull(it->second);
        if (v < 1) throw std::invalid_argument("zero");
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' must be a positive integer or 'full': " +
                          it->second);
    }
}

void ConfigMap::require_known(const std::set<std::string>& known) const {
    std::string unknown;
    for (const auto& [k, _] : values_)
        if (!known.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
    if (!unknown.empty()) throw ConfigError("unknown config keys: " + unknown);
}

std::string ConfigMap::echo() const {
    std::string out;
    std::string section;
    for (const auto& [k, v] : values_) { // std::map: sorted, deterministic
        const auto dot = k.find('.');
        const std::string sec = k.substr(0, dot);
        if (sec != section) {
            if (!out.empty()) out += '\n';
            out += "[" + sec + "]\n";
            section = sec;
        }
        out += k.substr(dot + 1) + " = " + v + "\n";
    }
    return out;
}

const std::set<std::string>& ExperimentConfig::known_keys() {
    static const std::set<std::string> keys = {
        "data.dataset", "data.augment_rotations", "data.split_train", "data.split_val",
        "data.split_test", "data.synthetic_classes", "data.synthetic_input_dim",
        "data.synthetic_cluster_std", "data.synthetic_cluster_separation",
        "data.synthetic_samples_per_class", "data.synthetic_seed",
        "model.arch", "model.embed_dim", "model.mlp_hidden", "model.conv_channels",
        "train.episodes", "train.way", "train.shot", "train.query", "train.proj_dim",
        "train.seed", "train.distance", "train.grad_through_projection", "train.lr_initial",
        "train.lr_decay_every", "train.lr_factor", "train.val_every", "train.val_episodes",
        "train.log_every",
        "eval.episodes", "eval.way", "eval.shot", "eval.query", "eval.proj_dim", "eval.seed",
    };
    return keys;
}

ExperimentConfig ExperimentConfig::from_map(const ConfigMap& map) {
    map.require_known(known_keys());
    ExperimentConfig cfg;

    cfg.dataset = map.get_string("data.dataset", cfg.dataset);
    cfg.augment_rotations = map.get_bool("data.augment_rotations", cfg.augment_rotations);
    cfg.splits.train = map.get_size("data.split_train", cfg.splits.train);
    cfg.splits.val = map.get_size("data.split_val", cfg.splits.val);
    cfg.splits.test = map.get_size("data.split_test", cfg.splits.test);
    cfg.synthetic.n_classes_pool = map.get_size("data.synthetic_classes", cfg.synthetic.n_classes_pool);
    cfg.synthetic.input_dim = map.get_size("data.synthetic_input_dim", cfg.synthetic.input_dim);
    cfg.synthetic.cluster_std = map.get_double("data.synthetic_cluster_std", cfg.synthetic.cluster_std);
    cfg.synthetic.cluster_separation =
        map.get_double("data.synthetic_cluster_separation", cfg.synthetic.cluster_separation);
    cfg.synthetic.samples_per_class =
        map.get_size("data.synthetic_samples_per_class", cfg.synthetic.samples_per_class);
    cfg.synthetic.seed = map.get_u64("data.synthetic_seed", cfg.synthetic.seed);

    cfg.arch = map.get_string("model.arch", cfg.arch);
    if (cfg.arch != "mlp" && cfg.arch != "conv")
        throw ConfigError("model.arch must be 'mlp' or 'conv', got " + cfg.arch);
    cfg.embed_dim = map.get_size("model.embed_dim", cfg.embed_dim);
    cfg.mlp_hidden = map.get_sizes("model.mlp_hidden", cfg.mlp_hidden);
    cfg.conv_channels = map.get_sizes("model.conv_channels", cfg.conv_channels);

    cfg.train.n_episodes = map.get_size("train.episodes", cfg.train.n_episodes);
    cfg.train.n_way_train = map.get_size("train.way", cfg.train.n_way_train);
    cfg.train.n_shot = map.get_size("train.shot", cfg.train.n_shot);
    cfg.train.n_query_train = map.get_size("train.query", cfg.train.n_query_train);
    cfg.train.proj_dim = map.get_proj_dim("train.proj_dim");
    cfg.train.seed = map.get_u64("train.seed", cfg.train.seed);
    const std::string dist = map.get_string("train.distance", "squared");
    if (dist == "squared") cfg.train.distance = DistanceKind::Squared;
    else if (dist == "euclidean") cfg.train.distance = DistanceKind::Euclidean;
    else throw ConfigError("train.distance must be 'squared' or 'euclidean', got " + dist);
    const std::string gp = map.get_string("train.grad_through_projection", "off");
    if (gp == "off") cfg.train.grad_policy = GradPolicy::StopGradient;
    else if (gp == "on") cfg.train.grad_policy = GradPolicy::ThroughProjection;
    else throw ConfigError("train.grad_through_projection must be 'off' or 'on', got " + gp);
    cfg.train.lr.initial = map.get_double("train.lr_initial", cfg.train.lr.initial);
    cfg.train.lr.decay_every = map.get_u64("train.lr_decay_every", cfg.train.lr.decay_every);
    cfg.train.lr.factor = map.get_double("train.lr_factor", cfg.train.lr.factor);
    cfg.train.val_every = map.get_size("train.val_every", cfg.train.val_every);
    cfg.train.val_episodes = map.get_size("train.val_episodes", cfg.train.val_episodes);
    cfg.train.log_every = map.get_size("train.log_every", cfg.train.log_every);
    if (cfg.train.log_every < 1) throw ConfigError("train.log_every must be at least 1");

    cfg.eval.n_way = map.get_size("eval.way", cfg.eval.n_way);
    cfg.eval.n_shot = map.get_size("eval.shot", cfg.eval.n_shot);
    cfg.eval.n_query = map.get_size("eval.query", cfg.eval.n_query);
    cfg.eval.n_episodes = map.get_size("eval.episodes", cfg.eval.n_episodes);
    cfg.eval.proj_dim = map.get_proj_dim("eval.proj_dim");
    cfg.eval.seed = map.get_u64("eval.seed", cfg.eval.seed);
    cfg.eval.distance = cfg.train.distance;

    cfg.train.n_way_eval = cfg.eval.n_way;
    cfg.train.n_query_eval = cfg.eval.n_query;
    return cfg;
}

ConfigMap ExperimentConfig::to_map() const {
    ConfigMap map;
    map.set("data.dataset", dataset);
    map.set("data.augment_rotations", augment_rotations ? "true" : "false");
    map.set("data.split_train", std::to_string(splits.train));
    map.set("data.split_val", std::to_string(splits.val));
    map.set("data.split_test", std::to_string(splits.test));
    map.set("data.synthetic_classes", std::to_string(synthetic.n_classes_pool));
    map.set("data.synthetic_input_dim", std::to_string(synthetic.input_dim));
    map.set("data.synthetic_cluster_std", format_double(synthetic.cluster_std));
    map.set("data.synthetic_cluster_separation", format_double(synthetic.cluster_separation));
    map.set("data.synthetic_samples_per_class", std::to_string(synthetic.samples_per_class));
    map.set("data.synthetic_seed", std::to_string(synthetic.seed));
    map.set("model.arch", arch);
    map.set("model.embed_dim", std::to_string(embed_dim));
    map.set("model.mlp_hidden", csv(mlp_hidden));
    map.set("model.conv_channels", csv(conv_channels));
    map.set("train.episodes", std::to_string(train.n_episodes));
    map.set("train.way", std::to_string(train.n_way_train));
    map.set("train.shot", std::to_string(train.n_shot));
    map.set("train.query", std::to_string(train.n_query_train));
    map.set("train.proj_dim", train.proj_dim ? std::to_string(*train.proj_dim) : "full");
    map.set("train.seed", std::to_string(train.seed));
    map.set("train.distance",
            train.distance == DistanceKind::Squared ? "squared" : "euclidean");
    map.set("train.grad_through_projection",
            train.grad_policy == GradPolicy::StopGradient ? "off" : "on");
    map.set("train.lr_initial", format_double(train.lr.initial));
    map.set("train.lr_decay_every", std::to_string(train.lr.decay_every));
    map.set("train.lr_factor", format_double(train.lr.factor));
    map.set("train.val_every", std::to_string(train.val_every));
    map.set("train.val_episodes", std::to_string(train.val_episodes));
    map.set("train.log_every", std::to_string(train.log_every));
    map.set("eval.episodes", std::to_string(eval.n_episodes));
    map.set("eval.way", std::to_string(eval.n_way));
    map.set("eval.shot", std::to_string(eval.n_shot));
    map.set("eval.query", std::to_string(eval.n_query));
    map.set("eval.proj_dim", eval.proj_dim ? std::to_string(*eval.proj_dim) : "full");
    map.set("eval.seed", std::to_string(eval.seed));
    return map;
}

DatasetBundle load_dataset(const ExperimentConfig& config) {
    DatasetSplit all;
    if (config.dataset == "synthetic") {
        all = generate_synthetic(config.synthetic);
    } else if (config.dataset.rfind("image-folder:", 0) == 0) {
        all = load_image_folder(config.dataset.substr(13));
    } else {
        throw ConfigError("data.dataset must be 'synthetic' or 'image-folder:PATH', got " +
                          config.dataset);
    }
    if (config.augment_rotations) all = augment_rotations(all);
    return split_classes(all, config.splits);
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string format_metrics(const std::vector<MetricsRecord>& records) {
    std::string out;
    for (const auto& r : records) {
        out += "episode=" + std::to_string(r.episode) + " loss=" + format_double(r.loss) +
               " lr=" + format_double(r.lr) +
               " min_ref_distance=" + format_double(r.min_ref_distance);
        if (r.val_accuracy) out += " val_accuracy=" + format_double(*r.val_accuracy);
        out += '\n';
    }
    return out;
}

std::string format_eval_report(const EvalReport& report) {
    std::string out = "record=summary mean_accuracy=" + format_double(report.mean_accuracy) +
                      " ci95_halfwidth=" + format_double(report.ci95_halfwidth) +
                      " n_episodes=" + std::to_string(report.n_episodes) +
                      " way=" + std::to_string(report.config.n_way) +
                      " shot=" + std::to_string(report.config.n_shot) +
                      " query=" + std::to_string(report.config.n_query) + " proj_dim=" +
                      (report.config.proj_dim ? std::to_string(*report.config.proj_dim) : "full") +
                      " seed=" + std::to_string(report.config.seed) + "\n";
    for (std::size_t i = 0; i < report.per_episode.size(); ++i)
        out += "record=episode index=" + std::to_string(i) +
               " accuracy=" + format_double(report.per_episode[i]) + "\n";
    return out;
}

std::string format_sweep_report(const std::vector<SweepEntry>& entries) {
    std::string out;
    for (const auto& e : entries) {
        out += "record=sweep proj_dim=" + e.proj_dim_label;
        if (e.report) {
            out += " mean_accuracy=" + format_double(e.report->mean_accuracy) +
                   " ci95_halfwidth=" + format_double(e.report->ci95_halfwidth) +
                   " n_episodes=" + std::to_string(e.report->n_episodes);
        } else {
            out += " error=\"" + e.error + "\"";
        }
        out += '\n';
    }
    return out;
}

} // namespace tapnet
