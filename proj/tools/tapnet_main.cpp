#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "tapnet/checkpoint.hpp"
#include "tapnet/config.hpp"
#include "tapnet/errors.hpp"
#include "tapnet/evaluate.hpp"

namespace fs = std::filesystem;
using namespace tapnet;

namespace {

struct CommonFlags {
    std::optional<std::string> config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> episodes;
    std::optional<std::size_t> way;
    std::optional<std::size_t> shot;
    std::optional<std::size_t> query;
    std::optional<std::string> proj_dim;
    std::optional<std::string> dataset;
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "Config file (key = value with [sections])");
    cmd->add_option("--seed", flags.seed, "Random seed");
    cmd->add_option("--episodes", flags.episodes, "Episode count");
    cmd->add_option("--way", flags.way, "Classes per episode");
    cmd->add_option("--shot", flags.shot, "Support samples per class");
    cmd->add_option("--query", flags.query, "Query samples per class");
    cmd->add_option("--proj-dim", flags.proj_dim, "Projection dimension (N or 'full')");
    cmd->add_option("--dataset", flags.dataset, "synthetic or image-folder:PATH");
}

/// Precedence: defaults < config file < command-line flags.
ConfigMap resolve_config(const ConfigMap& base, const CommonFlags& flags, bool training) {
    ConfigMap map = base;
    if (flags.config_path) map.merge_from(ConfigMap::parse_file(*flags.config_path));
    const std::string sec = training ? "train." : "eval.";
    if (flags.seed) map.set(sec + "seed", std::to_string(*flags.seed));
    if (flags.episodes) map.set(sec + "episodes", std::to_string(*flags.episodes));
    if (flags.way) map.set(sec + "way", std::to_string(*flags.way));
    if (flags.shot) map.set(sec + "shot", std::to_string(*flags.shot));
    if (flags.query) map.set(sec + "query", std::to_string(*flags.query));
    if (flags.proj_dim) map.set(sec + "proj_dim", *flags.proj_dim);
    if (flags.dataset) map.set("data.dataset", *flags.dataset);
    return map;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path.string());
    out << content;
    if (!out) throw DataError("write failed: " + path.string());
}

EmbeddingNetwork build_network(const ExperimentConfig& cfg, const DatasetBundle& data,
                               std::uint64_t init_seed) {
    const auto& shape = data.train.sample_shape();
    Rng rng(init_seed);
    if (cfg.arch == "mlp") {
        if (shape.size() != 1)
            throw ConfigError("mlp architecture needs flat samples, got " +
                              Tensor::shape_string(shape));
        return EmbeddingNetwork::mlp(shape[0], cfg.mlp_hidden, cfg.embed_dim, rng);
    }
    if (shape.size() != 3)
        throw ConfigError("conv architecture needs [C,H,W] samples, got " +
                          Tensor::shape_string(shape));
    return EmbeddingNetwork::conv_stack(shape[0], shape[1], shape[2], cfg.conv_channels, rng);
}

int cmd_train(const CommonFlags& flags, const std::string& out_dir) {
    const ConfigMap map = resolve_config(ConfigMap{}, flags, true);
    const ExperimentConfig cfg = ExperimentConfig::from_map(map);
    const std::string echo = cfg.to_map().echo();

    const DatasetBundle data = load_dataset(cfg);
    EmbeddingNetwork net = build_network(cfg, data, Rng::derive(cfg.train.seed, 1));
    ReferenceBank bank =
        init_references(cfg.train.n_way_train, net.output_dim(), Rng::derive(cfg.train.seed, 2));

    std::vector<Tensor*> params = net.parameters();
    params.push_back(&bank.phi());
    AdamOptimizer opt(params);

    TrainResult result = train(cfg.train, data, net, bank, opt);

    fs::create_directories(out_dir);
    CheckpointMeta meta;
    meta.episodes_trained = result.episodes_run;
    meta.seed = cfg.train.seed;
    meta.config_echo = echo;
    save_checkpoint((fs::path(out_dir) / "checkpoint_final.tapn").string(), net, bank, &opt, meta);

    restore_snapshot(net, bank, result.best_snapshot);
    meta.episodes_trained = result.best_episode;
    save_checkpoint((fs::path(out_dir) / "checkpoint_best.tapn").string(), net, bank, nullptr,
                    meta);

    write_file(fs::path(out_dir) / "metrics.log", format_metrics(result.metrics));
    write_file(fs::path(out_dir) / "config_echo.cfg", echo);

    std::cout << "trained " << result.episodes_run << " episodes";
    if (result.best_val_accuracy)
        std::cout << ", best validation accuracy " << format_double(*result.best_val_accuracy)
                  << " at episode " << result.best_episode;
    std::cout << "\n";
    return 0;
}

struct LoadedForEval {
    LoadedCheckpoint checkpoint;
    ExperimentConfig cfg;
    DatasetBundle data;
};

LoadedForEval load_for_eval(const std::string& checkpoint_path, const CommonFlags& flags) {
    LoadedCheckpoint loaded = load_checkpoint(checkpoint_path);
    const ConfigMap stored =
        ConfigMap::parse_text(loaded.meta.config_echo, checkpoint_path + " (embedded config)");
    const ConfigMap map = resolve_config(stored, flags, false);
    ExperimentConfig cfg = ExperimentConfig::from_map(map);
    DatasetBundle data = load_dataset(cfg);
    return {std::move(loaded), std::move(cfg), std::move(data)};
}

int cmd_eval(const std::string& checkpoint_path, const CommonFlags& flags,
             const std::string& out_dir) {
    LoadedForEval ctx = load_for_eval(checkpoint_path, flags);
    const EvalReport report =
        evaluate(ctx.checkpoint.net, ctx.checkpoint.bank, ctx.data.test, ctx.cfg.eval);

    fs::create_directories(out_dir);
    write_file(fs::path(out_dir) / "eval_report.txt", format_eval_report(report));
    std::cout << "accuracy " << format_double(report.mean_accuracy) << " +- "
              << format_double(report.ci95_halfwidth) << " over " << report.n_episodes
              << " episodes\n";
    return 0;
}

int cmd_sweep(const std::string& checkpoint_path, const CommonFlags& flags,
              const std::string& d_list, const std::string& out_dir) {
    LoadedForEval ctx = load_for_eval(checkpoint_path, flags);

    std::vector<std::string> labels;
    std::stringstream ss(d_list);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) labels.push_back(tok);
    }
    if (labels.empty()) throw ConfigError("--d-list must name at least one dimension");

    std::vector<SweepEntry> entries;
    for (const std::string& label : labels) {
        SweepEntry entry;
        entry.proj_dim_label = label;
        try {
            std::optional<std::size_t> d;
            if (label != "full") {
                ConfigMap probe;
                probe.set("eval.proj_dim", label);
                d = probe.get_proj_dim("eval.proj_dim");
            }
            EvalProtocol protocol = ctx.cfg.eval;
            protocol.proj_dim = d;
            entry.report = evaluate(ctx.checkpoint.net, ctx.checkpoint.bank, ctx.data.test, protocol);
        } catch (const Error& e) {
            entry.error = e.what();
        }
        entries.push_back(std::move(entry));
    }

    fs::create_directories(out_dir);
    write_file(fs::path(out_dir) / "sweep_report.txt", format_sweep_report(entries));
    std::cout << "swept " << entries.size() << " dimensions\n";
    return 0;
}

int cmd_inspect(const std::string& checkpoint_path) {
    LoadedCheckpoint loaded = load_checkpoint(checkpoint_path);
    std::cout << "architecture: " << loaded.net.descriptor() << "\n"
              << "embed_dim: " << loaded.net.output_dim() << "\n"
              << "way: " << loaded.bank.way() << "\n"
              << "episodes_trained: " << loaded.meta.episodes_trained << "\n"
              << "seed: " << loaded.meta.seed << "\n"
              << "min_ref_distance: " << format_double(min_pairwise_distance(loaded.bank.matrix()))
              << "\n"
              << "optimizer_state: " << (loaded.optimizer ? "present" : "absent") << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Few-shot classification with task-adaptive null-space projection"};
    app.require_subcommand(1);

    CommonFlags train_flags, eval_flags, sweep_flags;
    std::string train_out, eval_out = ".", sweep_out = ".";
    std::string eval_ckpt, sweep_ckpt, inspect_ckpt, sweep_dlist;

    CLI::App* train_cmd = app.add_subcommand("train", "Train a model episodically");
    add_common_flags(train_cmd, train_flags);
    train_cmd->add_option("--out", train_out, "Output directory")->required();

    CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
    add_common_flags(eval_cmd, eval_flags);
    eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint path")->required();
    eval_cmd->add_option("--out", eval_out, "Output directory");

    CLI::App* sweep_cmd = app.add_subcommand("sweep", "Evaluate across projection dimensions");
    add_common_flags(sweep_cmd, sweep_flags);
    sweep_cmd->add_option("--checkpoint", sweep_ckpt, "Checkpoint path")->required();
    sweep_cmd->add_option("--d-list", sweep_dlist, "Comma-separated dimensions (N or 'full')")
        ->required();
    sweep_cmd->add_option("--out", sweep_out, "Output directory");

    CLI::App* inspect_cmd = app.add_subcommand("inspect", "Summarize a checkpoint");
    inspect_cmd->add_option("--checkpoint", inspect_ckpt, "Checkpoint path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (train_cmd->parsed()) return cmd_train(train_flags, train_out);
        if (eval_cmd->parsed()) return cmd_eval(eval_ckpt, eval_flags, eval_out);
        if (sweep_cmd->parsed()) return cmd_sweep(sweep_ckpt, sweep_flags, sweep_dlist, sweep_out);
        if (inspect_cmd->parsed()) return cmd_inspect(inspect_ckpt);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const NotImplementedError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
