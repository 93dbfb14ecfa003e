#include "tapnet/references.hpp"

#include <limits>
#include <string>

#include "tapnet/errors.hpp"
#include "tapnet/rng.hpp"

namespace tapnet {

ReferenceBank::ReferenceBank(std::size_t n_way, std::size_t embed_dim)
    : n_way_(n_way), embed_dim_(embed_dim), phi_({n_way, embed_dim}) {
    phi_.enable_grad();
}

ReferenceBank init_references(std::size_t n_way, std::size_t embed_dim, std::uint64_t seed) {
    if (n_way < 2) throw ShapeError("reference bank needs at least 2 classes");
    if (embed_dim < n_way + 1)
        throw ShapeError("reference bank needs L >= way + 1 (L=" + std::to_string(embed_dim) +
                         ", way=" + std::to_string(n_way) + ")");
    ReferenceBank bank(n_way, embed_dim);
    Rng rng(seed);
    for (std::size_t i = 0; i < bank.phi().size(); ++i) bank.phi()[i] = rng.normal(0.0, 0.05);
    return bank;
}

SelectedReferences select_and_relabel(const Eigen::MatrixXd& bank_rows,
                                      const ClassCentroids& centroids) {
    const auto n_c = centroids.rows.rows();
    const auto n_bank = bank_rows.rows();
    if (n_c > n_bank)
        throw ConfigError("episode way " + std::to_string(n_c) +
                          " exceeds the trained reference count " + std::to_string(n_bank));
    if (centroids.rows.cols() != bank_rows.cols())
        throw ShapeError("centroid and reference dimensions differ");

    SelectedReferences out;
    out.rows.resize(n_c, bank_rows.cols());
    out.bank_indices.resize(static_cast<std::size_t>(n_c));
    std::vector<bool> taken(static_cast<std::size_t>(n_bank), false);

    for (Eigen::Index k = 0; k < n_c; ++k) {
        Eigen::Index best = -1;
        double best_dist = std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < n_bank; ++j) {
            if (taken[static_cast<std::size_t>(j)]) continue;
            const double d = (centroids.rows.row(k) - bank_rows.row(j)).norm();
            if (d < best_dist) { // strict: ties keep the lowest index
                best_dist = d;
                best = j;
            }
        }
        taken[static_cast<std::size_t>(best)] = true;
        out.bank_indices[static_cast<std::size_t>(k)] = static_cast<std::size_t>(best);
        out.rows.row(k) = bank_rows.row(best);
    }
    return out;
}

double min_pairwise_distance(const Eigen::MatrixXd& rows) {
    const auto n = rows.rows();
    if (n < 2) throw ShapeError("min_pairwise_distance needs at least 2 rows");
    Eigen::MatrixXd unit(n, rows.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        const double norm = rows.row(i).norm();
        if (norm <= kNormTolerance)
            throw DegenerateError("min_pairwise_distance: row " + std::to_string(i) +
                                  " has zero norm");
        unit.row(i) = rows.row(i) / norm;
    }
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j)
            best = std::min(best, (unit.row(i) - unit.row(j)).norm());
    return best;
}

} // namespace tapnet
