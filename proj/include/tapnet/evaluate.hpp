#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tapnet/episode.hpp"

namespace tapnet {

struct EvalProtocol {
    std::size_t n_way = 5;
    std::size_t n_shot = 1;
    std::size_t n_query = 15;
    std::size_t n_episodes = 1000;
    std::optional<std::size_t> proj_dim; // nullopt = full (L minus way)
    std::uint64_t seed = 0;
    DistanceKind distance = DistanceKind::Squared;
    /// Greedy is the standard protocol; Identity pairs episode class k with
    /// bank row k directly (the training-time path, exposed for equivalence
    /// checks when the episode way equals the trained way).
    enum class Relabel { Greedy, Identity } relabel = Relabel::Greedy;
};

struct EvalReport {
    std::size_t n_episodes = 0;
    double mean_accuracy = 0.0;
    double ci95_halfwidth = 0.0; // 1.96 * sample stdev / sqrt(n); 0 for n < 2
    std::vector<double> per_episode;
    EvalProtocol config;
};

/// Argmin over projected reference distances; ties go to the lowest label.
std::size_t classify_embedded(const Eigen::RowVectorXd& query_embedding,
                              const Eigen::MatrixXd& refs, const ProjectionSpace& space,
                              DistanceKind kind);

/// Embed one query sample and classify it against the episode's references in
/// the projection space.
std::size_t classify_query(EmbeddingNetwork& net, const Eigen::MatrixXd& refs,
                           const ProjectionSpace& space, const Tensor& query_sample,
                           DistanceKind kind);

/// Few-shot test protocol: per episode, embed supports, select/relabel
/// references by centroid closeness, rebuild the projection, classify all
/// queries. Episode RNG streams derive from (seed, episode index).
EvalReport evaluate(EmbeddingNetwork& net, const ReferenceBank& bank, const DatasetSplit& split,
                    const EvalProtocol& protocol);

/// Evaluate at each dimension with a shared seed so the episode sets match.
std::vector<std::pair<std::optional<std::size_t>, EvalReport>> dimension_sweep(
    EmbeddingNetwork& net, const ReferenceBank& bank, const DatasetSplit& split,
    const std::vector<std::optional<std::size_t>>& d_list, const EvalProtocol& base);

/// Plain nearest-centroid classification of every query in the episode (raw
/// embedding space, no references, no projection). Returns predicted episode
/// labels in query row order.
std::vector<std::size_t> nearest_centroid_baseline(EmbeddingNetwork& net, const Episode& episode,
                                                   DistanceKind kind);

} // namespace tapnet
