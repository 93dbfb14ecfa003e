#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "tapnet/adam.hpp"
#include "tapnet/autodiff.hpp"
#include "tapnet/data.hpp"
#include "tapnet/network.hpp"
#include "tapnet/projection.hpp"
#include "tapnet/references.hpp"
#include "tapnet/rng.hpp"

namespace tapnet {

/// One sampled task. Support row k*n_s + i and query row k*n_q + j belong to
/// episode class k; support and query index sets are disjoint per class.
struct Episode {
    std::vector<std::size_t> classes; // dataset class indices in episode-label order
    Tensor support;                   // [n_c * n_s, ...sample]
    Tensor query;                     // [n_c * n_q, ...sample]
    std::size_t n_c = 0;
    std::size_t n_s = 0;
    std::size_t n_q = 0;
};

/// Whether gradients are taken through the projection construction. Only
/// StopGradient is implemented: the projection is a per-episode conditioning
/// step, held constant on the tape.
enum class GradPolicy { StopGradient, ThroughProjection };

struct TrainConfig {
    std::size_t n_way_train = 10;
    std::size_t n_way_eval = 5;
    std::size_t n_shot = 1;
    std::size_t n_query_train = 8;
    std::size_t n_query_eval = 15;
    std::size_t n_episodes = 2000;
    std::optional<std::size_t> proj_dim; // nullopt = full (L minus way)
    LrSchedule lr;
    std::uint64_t seed = 0;
    DistanceKind distance = DistanceKind::Squared;
    GradPolicy grad_policy = GradPolicy::StopGradient;
    std::size_t val_every = 500;
    std::size_t val_episodes = 200;
    std::size_t log_every = 1;
};

/// Uniform sampling without replacement: n_c classes, then n_s + n_q samples
/// per class with the first n_s forming the support set.
Episode sample_episode(const DatasetSplit& split, std::size_t n_c, std::size_t n_s,
                       std::size_t n_q, Rng& rng);

/// Per-class mean of embedded support features (no gradient recording).
ClassCentroids compute_centroids(EmbeddingNetwork& net, const Episode& episode);

struct EpisodeProjection {
    ClassCentroids centroids;
    Eigen::MatrixXd basis; // L x D
    int degenerate_rows = 0;
};

/// Centroids -> error rows -> null-space basis for this episode.
EpisodeProjection build_episode_projection(EmbeddingNetwork& net, const Eigen::MatrixXd& phi_rows,
                                           const Episode& episode, Eigen::Index d);

struct EpisodeLossResult {
    Var loss;
    Eigen::MatrixXd projection;
    int degenerate_rows = 0;
};

/// Mean over all queries of d(q*M, phi_k*M) + log sum_l exp(-d(q*M, phi_l*M)),
/// computed as a stable negative log softmax. `phi` rows pair with episode
/// classes in fixed label order (training uses the whole bank, no selection).
EpisodeLossResult episode_loss(Tape& tape, EmbeddingNetwork& net, Tensor& phi,
                               const Episode& episode, Eigen::Index d, GradPolicy policy,
                               DistanceKind kind);

/// Same loss with the projection supplied, for gradient checks against a
/// frozen basis.
Var episode_loss_with_projection(Tape& tape, EmbeddingNetwork& net, Tensor& phi,
                                 const Episode& episode, const Eigen::MatrixXd& basis,
                                 DistanceKind kind);

struct MetricsRecord {
    std::uint64_t episode = 0;
    double loss = 0.0;
    double lr = 0.0;
    double min_ref_distance = 0.0;
    std::optional<double> val_accuracy;
};

/// Parameter values (network parameters then bank rows) captured at a moment.
using ParamSnapshot = std::vector<Tensor>;

ParamSnapshot take_snapshot(EmbeddingNetwork& net, const ReferenceBank& bank);
void restore_snapshot(EmbeddingNetwork& net, ReferenceBank& bank, const ParamSnapshot& snap);

struct TrainResult {
    std::vector<MetricsRecord> metrics;
    std::uint64_t episodes_run = 0;
    ParamSnapshot best_snapshot;
    std::optional<double> best_val_accuracy;
    std::uint64_t best_episode = 0;
};

/// Episodic training: sample at the training way, accumulate the loss, step
/// Adam on network and references jointly under the schedule, log metrics,
/// and keep the parameters with the best periodic validation accuracy (the
/// final parameters when no validation runs).
TrainResult train(const TrainConfig& config, const DatasetBundle& data, EmbeddingNetwork& net,
                  ReferenceBank& bank, AdamOptimizer& opt);

} // namespace tapnet
