#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "tapnet/projection.hpp"
#include "tapnet/tensor.hpp"

namespace tapnet {

/// Learnable stand-alone per-class reference vectors. Row k always carries
/// training label k; the bank is never permuted during training.
class ReferenceBank {
public:
    ReferenceBank(std::size_t n_way, std::size_t embed_dim);

    std::size_t way() const { return n_way_; }
    std::size_t embed_dim() const { return embed_dim_; }

    Tensor& phi() { return phi_; }
    const Tensor& phi() const { return phi_; }

    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
    matrix() const {
        return {phi_.data(), static_cast<Eigen::Index>(n_way_),
                static_cast<Eigen::Index>(embed_dim_)};
    }

private:
    std::size_t n_way_;
    std::size_t embed_dim_;
    Tensor phi_; // [n_way, embed_dim], grad-enabled
};

/// Gaussian rows (std 0.05), deterministic per seed. Requires way >= 2 and
/// L >= way + 1 so a projection space exists for full-way episodes.
ReferenceBank init_references(std::size_t n_way, std::size_t embed_dim, std::uint64_t seed);

/// Result of test-time reference selection: episode-ordered rows plus the
/// bank row index chosen for each episode class.
struct SelectedReferences {
    Eigen::MatrixXd rows;          // N_c x L, in episode-class order
    std::vector<std::size_t> bank_indices;
};

/// Greedy nearest-reference assignment, without replacement: episode classes
/// are visited in ascending label order, each takes the closest remaining bank
/// row (Euclidean; ties to the lowest row index) and inherits that episode
/// label.
SelectedReferences select_and_relabel(const Eigen::MatrixXd& bank_rows,
                                      const ClassCentroids& centroids);

/// Minimum Euclidean distance between L2-normalized rows; in [0, 2].
/// Throws DegenerateError on a zero-norm row.
double min_pairwise_distance(const Eigen::MatrixXd& rows);

} // namespace tapnet
