// Acceptance runner: each criterion prints exactly one PASS/FAIL/SKIP line.
// Exit status is the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <unistd.h>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "tapnet/checkpoint.hpp"
#include "tapnet/config.hpp"
#include "tapnet/episode.hpp"
#include "tapnet/errors.hpp"
#include "tapnet/evaluate.hpp"

using namespace tapnet;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

Eigen::MatrixXd random_rows(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
    return m;
}

bool grads_match(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double mag = std::max(std::abs(a[i]), std::abs(b[i]));
        if (mag < 1e-6) continue;
        if (std::abs(a[i] - b[i]) / mag > 1e-4) return false;
    }
    return true;
}

std::vector<double> finite_diff(Tensor& param, const std::function<double()>& eval) {
    const double h = 1e-5;
    std::vector<double> g(param.size());
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double saved = param[i];
        param[i] = saved + h;
        const double plus = eval();
        param[i] = saved - h;
        const double minus = eval();
        param[i] = saved;
        g[i] = (plus - minus) / (2.0 * h);
    }
    return g;
}

// --- shared acceptance fixture: the synthetic end-to-end task ---------------

ExperimentConfig acceptance_config() {
    ExperimentConfig cfg;
    cfg.dataset = "synthetic";
    cfg.synthetic.n_classes_pool = 20;
    cfg.synthetic.input_dim = 32;
    cfg.synthetic.cluster_separation = 10.0;
    cfg.synthetic.cluster_std = 1.0;
    cfg.synthetic.samples_per_class = 30;
    cfg.synthetic.seed = 424242;
    cfg.splits = {10, 5, 5};
    cfg.arch = "mlp";
    cfg.embed_dim = 64;
    cfg.mlp_hidden = {64, 64};
    cfg.train.n_way_train = 10;
    cfg.train.n_way_eval = 5;
    cfg.train.n_shot = 1;
    cfg.train.n_query_train = 8;
    cfg.train.n_query_eval = 15;
    cfg.train.n_episodes = 2000;
    cfg.train.seed = 7;
    cfg.train.val_every = 500;
    cfg.train.val_episodes = 200;
    cfg.train.log_every = 10;
    cfg.eval.n_way = 5;
    cfg.eval.n_shot = 1;
    cfg.eval.n_query = 15;
    cfg.eval.n_episodes = 1000;
    cfg.eval.seed = 99;
    return cfg;
}

struct TrainedFixture {
    ExperimentConfig cfg;
    DatasetBundle data;
    EmbeddingNetwork net;
    ReferenceBank bank;
    AdamOptimizer opt;
    TrainResult result;
};

TrainedFixture train_acceptance_model(const ExperimentConfig& cfg) {
    DatasetBundle data = load_dataset(cfg);
    Rng init(Rng::derive(cfg.train.seed, 1));
    EmbeddingNetwork net = EmbeddingNetwork::mlp(cfg.synthetic.input_dim, cfg.mlp_hidden,
                                                 cfg.embed_dim, init);
    ReferenceBank bank =
        init_references(cfg.train.n_way_train, cfg.embed_dim, Rng::derive(cfg.train.seed, 2));
    std::vector<Tensor*> params = net.parameters();
    params.push_back(&bank.phi());
    AdamOptimizer opt(params);
    TrainResult result = train(cfg.train, data, net, bank, opt);
    return TrainedFixture{cfg,           std::move(data), std::move(net),
                          std::move(bank), std::move(opt), std::move(result)};
}

/// Accuracy of the nearest-centroid baseline over the same seeded episodes
/// the evaluation protocol would draw.
double baseline_accuracy(EmbeddingNetwork& net, const DatasetSplit& split,
                         const EvalProtocol& protocol) {
    double total = 0.0;
    for (std::size_t e = 0; e < protocol.n_episodes; ++e) {
        Rng rng(Rng::derive(protocol.seed, e));
        const Episode ep =
            sample_episode(split, protocol.n_way, protocol.n_shot, protocol.n_query, rng);
        const auto pred = nearest_centroid_baseline(net, ep, protocol.distance);
        std::size_t correct = 0;
        for (std::size_t k = 0; k < ep.n_c; ++k)
            for (std::size_t q = 0; q < ep.n_q; ++q)
                if (pred[k * ep.n_q + q] == k) ++correct;
        total += static_cast<double>(correct) / static_cast<double>(ep.n_c * ep.n_q);
    }
    return total / static_cast<double>(protocol.n_episodes);
}

} // namespace

int main() {
    int failures = 0;
    const auto report = [&failures](const std::string& name, bool pass,
                                    const std::string& detail) {
        std::cout << (pass ? "PASS" : "FAIL") << " " << name << " (" << detail << ")\n";
        std::cout.flush();
        if (!pass) ++failures;
    };

    // ---- null-space suite --------------------------------------------------
    {
        const auto start = Clock::now();
        Rng rng(1001);
        const std::size_t dims[3] = {32, 64, 128};
        double worst_null = 0.0, worst_ortho = 0.0;
        bool ok = true;
        for (int i = 0; i < 1000; ++i) {
            const auto n_c = static_cast<Eigen::Index>(2 + rng.uniform_index(19)); // 2..20
            const auto l = static_cast<Eigen::Index>(dims[rng.uniform_index(3)]);
            const auto d = static_cast<Eigen::Index>(
                1 + rng.uniform_index(static_cast<std::size_t>(l - n_c)));
            const Eigen::MatrixXd e = random_rows(n_c, l, rng);
            const ProjectionSpace space = build_projection(ErrorMatrix(e, {}), d);
            worst_null = std::max(worst_null, (e * space.basis()).cwiseAbs().maxCoeff());
            const Eigen::MatrixXd gram = space.basis().transpose() * space.basis();
            worst_ortho = std::max(
                worst_ortho,
                (gram - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff());
            if (worst_null > 1e-8 || worst_ortho > 1e-10) {
                ok = false;
                break;
            }
        }
        const double secs = seconds_since(start);
        ok = ok && secs < 60.0;
        std::ostringstream detail;
        detail << "1000 instances, max |E*M|=" << worst_null << ", max |M'M-I|=" << worst_ortho
               << ", " << secs << "s";
        report("null-space-suite", ok, detail.str());
    }

    // ---- alignment suite ---------------------------------------------------
    {
        const auto start = Clock::now();
        Rng rng(2002);
        double worst = 0.0;
        bool ok = true;
        for (int i = 0; i < 500 && ok; ++i) {
            const auto n_c = static_cast<Eigen::Index>(2 + rng.uniform_index(15));
            const auto l = static_cast<Eigen::Index>(n_c + 1 + rng.uniform_index(64));
            const auto d = static_cast<Eigen::Index>(
                1 + rng.uniform_index(static_cast<std::size_t>(l - n_c)));
            const Eigen::MatrixXd phi = random_rows(n_c, l, rng);
            ClassCentroids centroids;
            centroids.rows = random_rows(n_c, l, rng);
            const ErrorMatrix e = error_matrix(phi, centroids);
            const ProjectionSpace space = build_projection(e, d);
            for (Eigen::Index k = 0; k < n_c; ++k) {
                const Eigen::RowVectorXd tilde = modified_reference(phi, k);
                const Eigen::RowVectorXd eps =
                    tilde / tilde.norm() - centroids.rows.row(k) / centroids.rows.row(k).norm();
                worst = std::max(worst, (eps * space.basis()).norm());
            }
            ok = worst <= 1e-8;
        }
        const double secs = seconds_since(start);
        ok = ok && secs < 60.0;
        std::ostringstream detail;
        detail << "500 instances, max |eps*M|=" << worst << ", " << secs << "s";
        report("alignment-suite", ok, detail.str());
    }

    // ---- basis invariance over random episodes ------------------------------
    {
        Rng init(3003);
        EmbeddingNetwork net = EmbeddingNetwork::mlp(16, {24}, 32, init);
        ReferenceBank bank = init_references(8, 32, 77);
        SyntheticTaskSpec spec;
        spec.n_classes_pool = 10;
        spec.input_dim = 16;
        spec.samples_per_class = 12;
        spec.seed = 5;
        const DatasetSplit split = generate_synthetic(spec);

        double worst = 0.0;
        bool predictions_agree = true;
        for (std::size_t e = 0; e < 100; ++e) {
            Rng rng(Rng::derive(31, e));
            const Episode ep = sample_episode(split, 5, 1, 3, rng);
            const ClassCentroids centroids = compute_centroids(net, ep);
            const Eigen::MatrixXd refs = select_and_relabel(bank.matrix(), centroids).rows;
            const ProjectionSpace space = build_projection(error_matrix(refs, centroids), 20);
            const Eigen::MatrixXd p = space.basis() * space.basis().transpose();

            const Tensor features = net.embed(ep.query);
            Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                           Eigen::RowMajor>>
                f(features.data(), static_cast<Eigen::Index>(features.dim(0)),
                  static_cast<Eigen::Index>(features.dim(1)));
            for (Eigen::Index q = 0; q < f.rows(); ++q) {
                std::size_t arg_m = 0, arg_p = 0;
                double best_m = std::numeric_limits<double>::infinity();
                double best_p = best_m;
                for (Eigen::Index j = 0; j < refs.rows(); ++j) {
                    const Eigen::RowVectorXd diff = f.row(q) - refs.row(j);
                    const double via_m = (diff * space.basis()).squaredNorm();
                    const double via_p = (diff * p).dot(diff);
                    worst = std::max(worst, std::abs(via_m - via_p));
                    if (via_m < best_m) {
                        best_m = via_m;
                        arg_m = static_cast<std::size_t>(j);
                    }
                    if (via_p < best_p) {
                        best_p = via_p;
                        arg_p = static_cast<std::size_t>(j);
                    }
                }
                if (arg_m != arg_p) predictions_agree = false;
            }
        }
        std::ostringstream detail;
        detail << "100 episodes, max distance deviation " << worst;
        report("basis-invariance", predictions_agree && worst <= 1e-8, detail.str());
    }

    // ---- gradient suite ----------------------------------------------------
    {
        const auto start = Clock::now();
        bool ok = true;
        int instances = 0;
        Rng rng(4004);

        const auto check_instance = [&](EmbeddingNetwork& net, Tensor& phi, const Episode& ep) {
            Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                           Eigen::RowMajor>>
                pm(phi.data(), static_cast<Eigen::Index>(phi.dim(0)),
                   static_cast<Eigen::Index>(phi.dim(1)));
            const EpisodeProjection proj = build_episode_projection(
                net, pm, ep, static_cast<Eigen::Index>(phi.dim(1) - phi.dim(0)));

            auto eval = [&](bool want_grad) {
                Tape tape(want_grad);
                Var loss =
                    episode_loss_with_projection(tape, net, phi, ep, proj.basis,
                                                 DistanceKind::Squared);
                if (want_grad) tape.backward(loss);
                return tape.value(loss)[0];
            };
            net.zero_grad();
            phi.zero_grad();
            eval(true);
            for (Tensor* p : net.parameters()) {
                if (!grads_match(p->grad(), finite_diff(*p, [&] { return eval(false); })))
                    return false;
            }
            return grads_match(phi.grad(), finite_diff(phi, [&] { return eval(false); }));
        };

        // dense + relu instances
        for (int i = 0; i < 12 && ok; ++i, ++instances) {
            EmbeddingNetwork net = EmbeddingNetwork::mlp(4 + rng.uniform_index(3), {5, 4}, 8, rng);
            SyntheticTaskSpec spec;
            spec.n_classes_pool = 4;
            spec.input_dim = net.input_shape()[0];
            spec.samples_per_class = 8;
            spec.seed = rng.next_u64();
            const DatasetSplit split = generate_synthetic(spec);
            Rng ep_rng(rng.next_u64());
            const Episode ep = sample_episode(split, 3, 2, 2, ep_rng);
            Tensor phi({3, 8});
            for (std::size_t j = 0; j < phi.size(); ++j) phi[j] = rng.normal(0.0, 0.3);
            phi.enable_grad();
            ok = check_instance(net, phi, ep);
        }
        // conv + maxpool + flatten instances
        for (int i = 0; i < 8 && ok; ++i, ++instances) {
            EmbeddingNetwork net = EmbeddingNetwork::conv_stack(1, 8, 8, {2, 3}, rng);
            DatasetSplit split;
            split.provenance = "synthetic";
            for (int c = 0; c < 3; ++c) {
                ClassRecord rec;
                rec.id = "c" + std::to_string(c);
                for (int s = 0; s < 6; ++s) {
                    Tensor t({1, 8, 8});
                    for (std::size_t j = 0; j < t.size(); ++j) t[j] = rng.normal();
                    rec.samples.push_back(std::move(t));
                }
                split.classes.push_back(std::move(rec));
            }
            Rng ep_rng(rng.next_u64());
            const Episode ep = sample_episode(split, 3, 2, 2, ep_rng);
            Tensor phi({3, net.output_dim()});
            for (std::size_t j = 0; j < phi.size(); ++j) phi[j] = rng.normal(0.0, 0.3);
            phi.enable_grad();
            ok = check_instance(net, phi, ep);
        }
        const double secs = seconds_since(start);
        ok = ok && secs < 300.0;
        std::ostringstream detail;
        detail << instances << " instances, all layer types, " << secs << "s";
        report("gradient-suite", ok, detail.str());
    }

    // ---- loss sanity at random init -----------------------------------------
    {
        const ExperimentConfig cfg = acceptance_config();
        const DatasetBundle data = load_dataset(cfg);
        Rng init(5005);
        EmbeddingNetwork net =
            EmbeddingNetwork::mlp(cfg.synthetic.input_dim, cfg.mlp_hidden, cfg.embed_dim, init);
        ReferenceBank bank = init_references(5, cfg.embed_dim, 55);

        Rng ep_rng(66);
        double mean = 0.0;
        for (int e = 0; e < 100; ++e) {
            const Episode ep = sample_episode(data.train, 5, 1, 8, ep_rng);
            Tape tape;
            const EpisodeLossResult r = episode_loss(tape, net, bank.phi(), ep, 59,
                                                     GradPolicy::StopGradient,
                                                     DistanceKind::Squared);
            mean += tape.value(r.loss)[0];
        }
        mean /= 100.0;
        const double target = std::log(5.0);
        const bool ok = mean >= 0.85 * target && mean <= 1.15 * target;
        std::ostringstream detail;
        detail << "mean loss " << mean << " vs ln(5)=" << target << " (+-15%)";
        report("loss-sanity", ok, detail.str());
    }

    // ---- synthetic end-to-end (plus checkpoint and sweep criteria) ----------
    {
        const auto start = Clock::now();
        const ExperimentConfig cfg = acceptance_config();
        TrainedFixture fixture = train_acceptance_model(cfg);

        const EvalReport tapnet_report =
            evaluate(fixture.net, fixture.bank, fixture.data.test, cfg.eval);
        const double base_acc = baseline_accuracy(fixture.net, fixture.data.test, cfg.eval);

        // determinism: a second run from the same seeds must match bit for bit
        TrainedFixture again = train_acceptance_model(cfg);
        bool deterministic = true;
        const ParamSnapshot snap_a = take_snapshot(fixture.net, fixture.bank);
        const ParamSnapshot snap_b = take_snapshot(again.net, again.bank);
        for (std::size_t t = 0; t < snap_a.size() && deterministic; ++t)
            for (std::size_t i = 0; i < snap_a[t].size(); ++i)
                if (snap_a[t][i] != snap_b[t][i]) {
                    deterministic = false;
                    break;
                }

        const double secs = seconds_since(start);
        const bool ok = tapnet_report.mean_accuracy >= 0.95 &&
                        tapnet_report.mean_accuracy >= base_acc - 0.02 && deterministic &&
                        secs < 600.0;
        std::ostringstream detail;
        detail << "accuracy " << tapnet_report.mean_accuracy << " (ci " <<
            tapnet_report.ci95_halfwidth << "), baseline " << base_acc << ", deterministic="
               << (deterministic ? "yes" : "no") << ", " << secs << "s";
        report("synthetic-end-to-end", ok, detail.str());

        // ---- checkpoint round trip ------------------------------------------
        {
            const fs::path dir =
                fs::temp_directory_path() / ("tapnet_accept_" + std::to_string(::getpid()));
            fs::create_directories(dir);
            const fs::path first = dir / "first.tapn";
            const fs::path second = dir / "second.tapn";
            CheckpointMeta meta;
            meta.episodes_trained = fixture.result.episodes_run;
            meta.seed = cfg.train.seed;
            meta.config_echo = cfg.to_map().echo();
            save_checkpoint(first.string(), fixture.net, fixture.bank, &fixture.opt, meta);

            LoadedCheckpoint loaded = load_checkpoint(first.string());
            std::vector<Tensor*> params = loaded.net.parameters();
            params.push_back(&loaded.bank.phi());
            AdamOptimizer opt2(params, loaded.optimizer->config);
            opt2.restore(loaded.optimizer->step_count, loaded.optimizer->m,
                         loaded.optimizer->v);
            save_checkpoint(second.string(), loaded.net, loaded.bank, &opt2, loaded.meta);

            std::ifstream fa(first, std::ios::binary), fb(second, std::ios::binary);
            std::stringstream sa, sb;
            sa << fa.rdbuf();
            sb << fb.rdbuf();
            const bool identical = sa.str() == sb.str() && !sa.str().empty();
            fs::remove_all(dir);
            std::ostringstream d2;
            d2 << sa.str().size() << " bytes, save->load->save identical="
               << (identical ? "yes" : "no");
            report("checkpoint-round-trip", identical, d2.str());
        }

        // ---- dimension sweep -------------------------------------------------
        {
            const std::vector<std::optional<std::size_t>> d_list = {
                std::size_t{1}, std::size_t{2}, std::size_t{4},
                std::size_t{8}, std::size_t{16}, std::nullopt};
            const auto swept =
                dimension_sweep(fixture.net, fixture.bank, fixture.data.test, d_list, cfg.eval);
            const double acc_1 = swept.front().second.mean_accuracy;
            const double acc_full = swept.back().second.mean_accuracy;
            const bool ok_sweep = swept.size() == 6 && acc_full > acc_1;
            std::ostringstream d3;
            d3 << "accuracy@D=1 " << acc_1 << ", @full " << acc_full;
            report("dimension-sweep", ok_sweep, d3.str());
        }
    }

    // ---- selection / relabel correctness ------------------------------------
    {
        Rng rng(6006);
        bool ok = true;
        int trials = 0;
        while (trials < 500 && ok) {
            for (std::size_t way = 2; way <= 6 && trials < 500; ++way)
                for (std::size_t n_c = 2; n_c <= std::min<std::size_t>(way, 4) && trials < 500;
                     ++n_c, ++trials) {
                    const Eigen::MatrixXd bank =
                        random_rows(static_cast<Eigen::Index>(way), 5, rng);
                    ClassCentroids centroids;
                    centroids.rows = random_rows(static_cast<Eigen::Index>(n_c), 5, rng);
                    const SelectedReferences sel = select_and_relabel(bank, centroids);

                    // exhaustive oracle: scan every remaining row per class
                    std::vector<bool> used(way, false);
                    bool match = true;
                    for (std::size_t k = 0; k < n_c; ++k) {
                        double best = std::numeric_limits<double>::infinity();
                        std::size_t best_j = 0;
                        for (std::size_t j = 0; j < way; ++j) {
                            if (used[j]) continue;
                            const double d = (centroids.rows.row(static_cast<Eigen::Index>(k)) -
                                              bank.row(static_cast<Eigen::Index>(j)))
                                                 .norm();
                            if (d < best) {
                                best = d;
                                best_j = j;
                            }
                        }
                        used[best_j] = true;
                        if (sel.bank_indices[k] != best_j) match = false;
                    }
                    if (!match) ok = false;
                }
        }
        std::ostringstream detail;
        detail << trials << " randomized trials across way<=6, N_c<=4";
        report("selection-relabel", ok, detail.str());
    }

    // ---- optional scaled image run ------------------------------------------
    {
        const char* path = std::getenv("TAPNET_IMAGE_DATASET");
        if (path == nullptr) {
            std::cout << "SKIP image-folder-run (set TAPNET_IMAGE_DATASET to enable)\n";
        } else {
            const auto start = Clock::now();
            ExperimentConfig cfg;
            cfg.dataset = std::string("image-folder:") + path;
            cfg.augment_rotations = true;
            cfg.arch = "conv";
            cfg.conv_channels = {8, 16, 32, 64};
            cfg.embed_dim = 64;
            DatasetSplit all = load_image_folder(path);
            all = augment_rotations(all);
            const std::size_t n = all.class_count();
            cfg.splits = {(n * 7) / 10, n / 10, n - (n * 7) / 10 - n / 10};
            DatasetBundle data = split_classes(all, cfg.splits);

            cfg.train.n_way_train = 20;
            cfg.train.n_way_eval = 5;
            cfg.train.n_shot = 1;
            cfg.train.n_query_train = 8;
            cfg.train.n_episodes = 20000;
            cfg.train.seed = 3;
            Rng init(Rng::derive(3, 1));
            EmbeddingNetwork net = EmbeddingNetwork::conv_stack(1, 28, 28, cfg.conv_channels, init);
            ReferenceBank bank = init_references(20, net.output_dim(), Rng::derive(3, 2));
            std::vector<Tensor*> params = net.parameters();
            params.push_back(&bank.phi());
            AdamOptimizer opt(params);
            train(cfg.train, data, net, bank, opt);

            EvalProtocol protocol;
            protocol.n_way = 5;
            protocol.n_shot = 1;
            protocol.n_query = 5;
            protocol.n_episodes = 2000;
            protocol.seed = 17;
            const EvalReport rep = evaluate(net, bank, data.test, protocol);
            std::ostringstream detail;
            detail << "accuracy " << rep.mean_accuracy << ", " << seconds_since(start) << "s";
            report("image-folder-run", rep.mean_accuracy >= 0.85, detail.str());
        }
    }

    std::cout << (failures == 0 ? "ALL CRITERIA PASSED" : "CRITERIA FAILED") << " (" << failures
              << " failures)\n";
    return failures;
}
