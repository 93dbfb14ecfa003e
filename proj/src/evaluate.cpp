#include "tapnet/evaluate.hpp"

#include <cmath>

#include "tapnet/errors.hpp"

namespace tapnet {

namespace {

using RowMajorMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

std::size_t argmin_distance(const Eigen::RowVectorXd& projected,
                            const Eigen::MatrixXd& projected_refs, DistanceKind kind) {
    std::size_t best = 0;
    double best_d = distance(projected, projected_refs.row(0), kind);
    for (Eigen::Index j = 1; j < projected_refs.rows(); ++j) {
        const double d = distance(projected, projected_refs.row(j), kind);
        if (d < best_d) { // strict: ties keep the lowest label
            best_d = d;
            best = static_cast<std::size_t>(j);
        }
    }
    return best;
}

} // namespace

std::size_t classify_embedded(const Eigen::RowVectorXd& query_embedding,
                              const Eigen::MatrixXd& refs, const ProjectionSpace& space,
                              DistanceKind kind) {
    const Eigen::RowVectorXd q_proj = project(space, query_embedding);
    const Eigen::MatrixXd r_proj = refs * space.basis();
    return argmin_distance(q_proj, r_proj, kind);
}

std::size_t classify_query(EmbeddingNetwork& net, const Eigen::MatrixXd& refs,
                           const ProjectionSpace& space, const Tensor& query_sample,
                           DistanceKind kind) {
    std::vector<std::size_t> shape{1};
    shape.insert(shape.end(), query_sample.shape().begin(), query_sample.shape().end());
    const Tensor features = net.embed(Tensor(shape, query_sample.values()));
    RowMajorMap f(features.data(), 1, static_cast<Eigen::Index>(features.dim(1)));
    return classify_embedded(f.row(0), refs, space, kind);
}

EvalReport evaluate(EmbeddingNetwork& net, const ReferenceBank& bank, const DatasetSplit& split,
                    const EvalProtocol& protocol) {
    const std::size_t l = net.output_dim();
    if (protocol.n_way > bank.way())
        throw ConfigError("evaluation way " + std::to_string(protocol.n_way) +
                          " exceeds the trained way " + std::to_string(bank.way()));
    const std::size_t d = protocol.proj_dim ? *protocol.proj_dim : l - protocol.n_way;
    if (l < protocol.n_way + d)
        throw ShapeError("projection dimension too large: need L >= way + D (L=" +
                         std::to_string(l) + ", way=" + std::to_string(protocol.n_way) +
                         ", D=" + std::to_string(d) + ")");

    EvalReport report;
    report.config = protocol;
    report.per_episode.reserve(protocol.n_episodes);

    for (std::size_t e = 0; e < protocol.n_episodes; ++e) {
        Rng rng(Rng::derive(protocol.seed, e));
        Episode ep = sample_episode(split, protocol.n_way, protocol.n_shot, protocol.n_query, rng);

        const ClassCentroids centroids = compute_centroids(net, ep);
        Eigen::MatrixXd refs;
        if (protocol.relabel == EvalProtocol::Relabel::Greedy) {
            refs = select_and_relabel(bank.matrix(), centroids).rows;
        } else {
            refs = bank.matrix().topRows(static_cast<Eigen::Index>(protocol.n_way));
        }

        const ErrorMatrix errors = error_matrix(refs, centroids);
        const ProjectionSpace space = build_projection(errors, static_cast<Eigen::Index>(d));

        const Tensor features = net.embed(ep.query);
        RowMajorMap f(features.data(), static_cast<Eigen::Index>(features.dim(0)),
                      static_cast<Eigen::Index>(features.dim(1)));

        std::size_t correct = 0;
        for (std::size_t k = 0; k < ep.n_c; ++k)
            for (std::size_t j = 0; j < ep.n_q; ++j) {
                const auto row = static_cast<Eigen::Index>(k * ep.n_q + j);
                if (classify_embedded(f.row(row), refs, space, protocol.distance) == k) ++correct;
            }
        report.per_episode.push_back(static_cast<double>(correct) /
                                     static_cast<double>(ep.n_c * ep.n_q));
    }

    report.n_episodes = report.per_episode.size();
    if (report.n_episodes > 0) {
        double sum = 0.0;
        for (double a : report.per_episode) sum += a;
        report.mean_accuracy = sum / static_cast<double>(report.n_episodes);
        if (report.n_episodes > 1) {
            double ss = 0.0;
            for (double a : report.per_episode) {
                const double d_mean = a - report.mean_accuracy;
                ss += d_mean * d_mean;
            }
            const double stdev = std::sqrt(ss / static_cast<double>(report.n_episodes - 1));
            report.ci95_halfwidth = 1.96 * stdev / std::sqrt(static_cast<double>(report.n_episodes));
        }
    }
    return report;
}

std::vector<std::pair<std::optional<std::size_t>, EvalReport>> dimension_sweep(
    EmbeddingNetwork& net, const ReferenceBank& bank, const DatasetSplit& split,
    const std::vector<std::optional<std::size_t>>& d_list, const EvalProtocol& base) {
    std::vector<std::pair<std::optional<std::size_t>, EvalReport>> out;
    out.reserve(d_list.size());
    for (const auto& d : d_list) {
        EvalProtocol protocol = base;
        protocol.proj_dim = d; // shared seed: identical episode sets across dimensions
        out.emplace_back(d, evaluate(net, bank, split, protocol));
    }
    return out;
}

std::vector<std::size_t> nearest_centroid_baseline(EmbeddingNetwork& net, const Episode& episode,
                                                   DistanceKind kind) {
    const ClassCentroids centroids = compute_centroids(net, episode);
    const Tensor features = net.embed(episode.query);
    RowMajorMap f(features.data(), static_cast<Eigen::Index>(features.dim(0)),
                  static_cast<Eigen::Index>(features.dim(1)));

    std::vector<std::size_t> predictions(episode.n_c * episode.n_q);
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        std::size_t best = 0;
        double best_d = distance(f.row(static_cast<Eigen::Index>(i)), centroids.rows.row(0), kind);
        for (Eigen::Index k = 1; k < centroids.rows.rows(); ++k) {
            const double d = distance(f.row(static_cast<Eigen::Index>(i)), centroids.rows.row(k), kind);
            if (d < best_d) {
                best_d = d;
                best = static_cast<std::size_t>(k);
            }
        }
        predictions[i] = best;
    }
    return predictions;
}

} // namespace tapnet
