#include "tapnet/episode.hpp"

#include <cmath>
#include <string>

#include "tapnet/errors.hpp"
#include "tapnet/evaluate.hpp"

namespace tapnet {

namespace {

using RowMajorMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

std::vector<std::size_t> batch_shape(const std::vector<std::size_t>& sample_shape,
                                     std::size_t rows) {
    std::vector<std::size_t> shape{rows};
    shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
    return shape;
}

/// First k elements of a partial Fisher-Yates shuffle over [0, n).
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + rng.uniform_index(n - i);
        std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
}

} // namespace

Episode sample_episode(const DatasetSplit& split, std::size_t n_c, std::size_t n_s,
                       std::size_t n_q, Rng& rng) {
    if (n_c < 2) throw ConfigError("an episode needs at least 2 classes");
    if (n_s < 1 || n_q < 1) throw ConfigError("an episode needs at least 1 support and 1 query");
    if (split.class_count() < n_c)
        throw DataError("split has " + std::to_string(split.class_count()) +
                        " classes but the episode needs " + std::to_string(n_c));

    Episode ep;
    ep.n_c = n_c;
    ep.n_s = n_s;
    ep.n_q = n_q;
    ep.classes = sample_without_replacement(split.class_count(), n_c, rng);

    const auto& sample_shape = split.sample_shape();
    std::size_t per_sample = 1;
    for (std::size_t d : sample_shape) per_sample *= d;
    ep.support = Tensor(batch_shape(sample_shape, n_c * n_s));
    ep.query = Tensor(batch_shape(sample_shape, n_c * n_q));

    for (std::size_t k = 0; k < n_c; ++k) {
        const ClassRecord& record = split.classes[ep.classes[k]];
        if (record.samples.size() < n_s + n_q)
            throw DataError("class " + record.id + " has " +
                            std::to_string(record.samples.size()) + " samples but the episode needs " +
                            std::to_string(n_s + n_q));
        const auto picks = sample_without_replacement(record.samples.size(), n_s + n_q, rng);
        for (std::size_t i = 0; i < n_s + n_q; ++i) {
            const Tensor& src = record.samples[picks[i]];
            double* dst = i < n_s ? ep.support.data() + (k * n_s + i) * per_sample
                                  : ep.query.data() + (k * n_q + (i - n_s)) * per_sample;
            std::copy(src.data(), src.data() + per_sample, dst);
        }
    }
    return ep;
}

ClassCentroids compute_centroids(EmbeddingNetwork& net, const Episode& episode) {
    const Tensor features = net.embed(episode.support); // [n_c*n_s, L]
    const auto l = features.dim(1);
    RowMajorMap f(features.data(), static_cast<Eigen::Index>(features.dim(0)),
                  static_cast<Eigen::Index>(l));

    ClassCentroids centroids;
    centroids.rows.resize(static_cast<Eigen::Index>(episode.n_c), static_cast<Eigen::Index>(l));
    centroids.class_order.resize(episode.n_c);
    for (std::size_t k = 0; k < episode.n_c; ++k) {
        centroids.class_order[k] = static_cast<int>(k);
        Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(l));
        for (std::size_t i = 0; i < episode.n_s; ++i)
            acc += f.row(static_cast<Eigen::Index>(k * episode.n_s + i));
        centroids.rows.row(static_cast<Eigen::Index>(k)) =
            acc / static_cast<double>(episode.n_s);
    }
    return centroids;
}

EpisodeProjection build_episode_projection(EmbeddingNetwork& net, const Eigen::MatrixXd& phi_rows,
                                           const Episode& episode, Eigen::Index d) {
    EpisodeProjection out;
    out.centroids = compute_centroids(net, episode);
    const ErrorMatrix errors = error_matrix(phi_rows, out.centroids);
    out.degenerate_rows = errors.degenerate_rows();
    out.basis = build_projection(errors, d).basis();
    return out;
}

Var episode_loss_with_projection(Tape& tape, EmbeddingNetwork& net, Tensor& phi,
                                 const Episode& episode, const Eigen::MatrixXd& basis,
                                 DistanceKind kind) {
    if (phi.rank() != 2 || phi.dim(0) != episode.n_c)
        throw ShapeError("episode_loss: reference rows must match the episode way");

    Var queries = net.forward(tape, tape.constant(episode.query)); // [n_c*n_q, L]
    Var refs = tape.param(phi);
    Var q_proj = tape.matmul_const(queries, basis);
    Var r_proj = tape.matmul_const(refs, basis);
    Var dists = tape.pairwise_sqdist(q_proj, r_proj); // [n_c*n_q, n_c]
    if (kind == DistanceKind::Euclidean) dists = tape.sqrt_elem(dists);

    std::vector<std::size_t> labels(episode.n_c * episode.n_q);
    for (std::size_t k = 0; k < episode.n_c; ++k)
        for (std::size_t j = 0; j < episode.n_q; ++j) labels[k * episode.n_q + j] = k;

    Var matching = tape.select_cols(dists, labels);
    Var partition = tape.logsumexp_rows(tape.neg(dists));
    return tape.mean_all(tape.add(matching, partition));
}

EpisodeLossResult episode_loss(Tape& tape, EmbeddingNetwork& net, Tensor& phi,
                               const Episode& episode, Eigen::Index d, GradPolicy policy,
                               DistanceKind kind) {
    if (policy == GradPolicy::ThroughProjection)
        throw NotImplementedError(
            "gradient through the projection construction is reserved but not implemented");

    RowMajorMap phi_rows(phi.data(), static_cast<Eigen::Index>(phi.dim(0)),
                         static_cast<Eigen::Index>(phi.dim(1)));
    EpisodeProjection proj = build_episode_projection(net, phi_rows, episode, d);

    EpisodeLossResult result;
    result.loss = episode_loss_with_projection(tape, net, phi, episode, proj.basis, kind);
    result.projection = std::move(proj.basis);
    result.degenerate_rows = proj.degenerate_rows;
    return result;
}

ParamSnapshot take_snapshot(EmbeddingNetwork& net, const ReferenceBank& bank) {
    ParamSnapshot snap;
    for (Tensor* p : net.parameters()) snap.push_back(*p);
    snap.push_back(bank.phi());
    return snap;
}

void restore_snapshot(EmbeddingNetwork& net, ReferenceBank& bank, const ParamSnapshot& snap) {
    auto params = net.parameters();
    if (snap.size() != params.size() + 1)
        throw StateError("snapshot does not match the parameter list");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!snap[i].same_shape(*params[i])) throw StateError("snapshot shape mismatch");
        params[i]->values() = snap[i].values();
    }
    if (!snap.back().same_shape(bank.phi())) throw StateError("snapshot bank shape mismatch");
    bank.phi().values() = snap.back().values();
}

TrainResult train(const TrainConfig& config, const DatasetBundle& data, EmbeddingNetwork& net,
                  ReferenceBank& bank, AdamOptimizer& opt) {
    const std::size_t l = net.output_dim();
    if (bank.way() != config.n_way_train)
        throw ConfigError("reference bank way " + std::to_string(bank.way()) +
                          " does not match the training way " +
                          std::to_string(config.n_way_train));
    if (config.n_way_eval > config.n_way_train)
        throw ConfigError("evaluation way cannot exceed the training way");
    const std::size_t d_train =
        config.proj_dim ? *config.proj_dim : l - config.n_way_train;
    if (l < config.n_way_train + d_train)
        throw ConfigError("embedding dimension too small: need L >= way + D");

    TrainResult result;
    Rng episode_rng(config.seed);

    const auto log_record = [&](std::uint64_t e, double loss_value,
                                std::optional<double> val_acc) {
        MetricsRecord rec;
        rec.episode = e;
        rec.loss = loss_value;
        rec.lr = config.lr.at(e);
        rec.min_ref_distance = min_pairwise_distance(bank.matrix());
        rec.val_accuracy = val_acc;
        result.metrics.push_back(std::move(rec));
    };

    for (std::uint64_t e = 0; e < config.n_episodes; ++e) {
        Episode ep = sample_episode(data.train, config.n_way_train, config.n_shot,
                                    config.n_query_train, episode_rng);

        net.zero_grad();
        bank.phi().zero_grad();

        Tape tape;
        EpisodeLossResult el =
            episode_loss(tape, net, bank.phi(), ep, static_cast<Eigen::Index>(d_train),
                         config.grad_policy, config.distance);
        const double loss_value = tape.value(el.loss)[0];
        if (!std::isfinite(loss_value))
            throw NumericError("non-finite training loss at episode " + std::to_string(e));

        tape.backward(el.loss);
        opt.step(config.lr.at(e));

        std::optional<double> val_acc;
        const bool val_due = config.val_every > 0 && (e + 1) % config.val_every == 0 &&
                             config.val_episodes > 0 && !data.val.classes.empty();
        if (val_due) {
            EvalProtocol proto;
            proto.n_way = config.n_way_eval;
            proto.n_shot = config.n_shot;
            proto.n_query = config.n_query_eval;
            proto.n_episodes = config.val_episodes;
            proto.proj_dim = config.proj_dim;
            proto.seed = Rng::derive(config.seed, 0x76616cULL + (e + 1) / config.val_every);
            proto.distance = config.distance;
            const EvalReport report = evaluate(net, bank, data.val, proto);
            val_acc = report.mean_accuracy;
            if (!result.best_val_accuracy || report.mean_accuracy > *result.best_val_accuracy) {
                result.best_val_accuracy = report.mean_accuracy;
                result.best_episode = e + 1;
                result.best_snapshot = take_snapshot(net, bank);
            }
        }

        if (e % config.log_every == 0 || val_acc || e + 1 == config.n_episodes)
            log_record(e, loss_value, val_acc);
        result.episodes_run = e + 1;
    }

    if (result.best_snapshot.empty()) {
        result.best_snapshot = take_snapshot(net, bank);
        result.best_episode = result.episodes_run;
    }
    return result;
}

} // namespace tapnet
