#include "tapnet/projection.hpp"

#include <Eigen/SVD>
#include <string>

namespace tapnet {

namespace {

void require_same_length(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b,
                         const char* what) {
    if (a.size() != b.size())
        throw ShapeError(std::string(what) + ": lengths " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()) + " differ");
}

} // namespace

ErrorMatrix::ErrorMatrix(Eigen::MatrixXd rows, std::vector<int> class_order, int degenerate_rows)
    : rows_(std::move(rows)), class_order_(std::move(class_order)),
      degenerate_rows_(degenerate_rows) {
    const auto n_c = rows_.rows();
    const auto l = rows_.cols();
    if (n_c < 2)
        throw ShapeError("error matrix needs at least 2 class rows, got " + std::to_string(n_c));
    if (l < n_c + 1)
        throw ShapeError("error matrix needs L >= N_c + 1 for a nonempty null space (L=" +
                         std::to_string(l) + ", N_c=" + std::to_string(n_c) + ")");
    if (!class_order_.empty() && static_cast<Eigen::Index>(class_order_.size()) != n_c)
        throw ShapeError("class_order length does not match row count");
    if (!rows_.allFinite()) throw NumericError("error matrix contains non-finite entries");
    if (class_order_.empty()) {
        class_order_.resize(static_cast<std::size_t>(n_c));
        for (std::size_t k = 0; k < class_order_.size(); ++k) class_order_[k] = static_cast<int>(k);
    }
}

ProjectionSpace::ProjectionSpace(Eigen::MatrixXd basis) : basis_(std::move(basis)) {
    if (basis_.cols() < 1 || basis_.cols() > basis_.rows())
        throw ShapeError("projection basis must be L x D with 1 <= D <= L");
    const Eigen::MatrixXd gram = basis_.transpose() * basis_;
    const double dev =
        (gram - Eigen::MatrixXd::Identity(basis_.cols(), basis_.cols())).cwiseAbs().maxCoeff();
    if (dev > 1e-10)
        throw NumericError("projection basis is not orthonormal (max deviation " +
                           std::to_string(dev) + ")");
}

Eigen::RowVectorXd modified_reference(const Eigen::MatrixXd& phi, Eigen::Index k) {
    const auto n_c = phi.rows();
    if (n_c < 2) throw ShapeError("modified reference needs at least 2 classes");
    if (k < 0 || k >= n_c)
        throw ShapeError("class index " + std::to_string(k) + " out of range for " +
                         std::to_string(n_c) + " classes");
    Eigen::RowVectorXd sum_others = phi.colwise().sum() - phi.row(k);
    return phi.row(k) - sum_others / static_cast<double>(n_c - 1);
}

Eigen::RowVectorXd error_vector(const Eigen::RowVectorXd& phi_tilde, const Eigen::RowVectorXd& c) {
    require_same_length(phi_tilde, c, "error_vector");
    const double np = phi_tilde.norm();
    const double nc = c.norm();
    if (np <= kNormTolerance || nc <= kNormTolerance)
        throw DegenerateError("error_vector: a direction has norm at or below tolerance (|phi~|=" +
                              std::to_string(np) + ", |c|=" + std::to_string(nc) + ")");
    return phi_tilde / np - c / nc;
}

ErrorMatrix error_matrix(const Eigen::MatrixXd& phi, const ClassCentroids& centroids) {
    const auto n_c = phi.rows();
    if (centroids.rows.rows() != n_c)
        throw ShapeError("reference and centroid row counts differ");
    if (centroids.rows.cols() != phi.cols())
        throw ShapeError("reference and centroid feature dimensions differ");

    Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(n_c, phi.cols());
    int degenerate = 0;
    for (Eigen::Index k = 0; k < n_c; ++k) {
        const Eigen::RowVectorXd phi_tilde = modified_reference(phi, k);
        const double np = phi_tilde.norm();
        const double nc = centroids.rows.row(k).norm();
        if (np <= kNormTolerance || nc <= kNormTolerance) {
            ++degenerate; // keep the zero row; it constrains nothing
            continue;
        }
        rows.row(k) = phi_tilde / np - centroids.rows.row(k) / nc;
        if (rows.row(k).isZero(0.0)) ++degenerate;
    }
    return ErrorMatrix(std::move(rows), centroids.class_order, degenerate);
}

ProjectionSpace build_projection(const ErrorMatrix& E, Eigen::Index d) {
    const auto n_c = E.class_count();
    const auto l = E.feature_dim();
    if (d < 1) throw ShapeError("projection dimension must be at least 1");
    if (l < n_c + d)
        throw ShapeError("projection dimension too large: need L >= N_c + D (L=" +
                         std::to_string(l) + ", N_c=" + std::to_string(n_c) +
                         ", D=" + std::to_string(d) + ")");

    // Full V is required: the null-space columns sit past the row count.
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(E.rows(), Eigen::ComputeFullV);
    const Eigen::MatrixXd& v = svd.matrixV();
    ProjectionSpace space(v.middleCols(n_c, d));

    const double residual = (E.rows() * space.basis()).cwiseAbs().maxCoeff();
    if (residual > 1e-8)
        throw NumericError("null-space residual " + std::to_string(residual) +
                           " exceeds tolerance");
    return space;
}

Eigen::RowVectorXd project(const ProjectionSpace& M, const Eigen::RowVectorXd& v) {
    if (v.size() != M.feature_dim())
        throw ShapeError("project: vector length " + std::to_string(v.size()) +
                         " does not match feature dimension " + std::to_string(M.feature_dim()));
    return v * M.basis();
}

double sq_distance(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
    require_same_length(a, b, "sq_distance");
    return (a - b).squaredNorm();
}

double distance(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b, DistanceKind kind) {
    const double sq = sq_distance(a, b);
    return kind == DistanceKind::Squared ? sq : std::sqrt(sq);
}

ProjectorReport projector_check(const Eigen::MatrixXd& basis, const Eigen::MatrixXd& phi,
                                const Eigen::RowVectorXd& f) {
    if (phi.cols() != basis.rows() || f.size() != basis.rows())
        throw ShapeError("projector_check: phi/f widths must equal the basis row count");
    const Eigen::MatrixXd p = basis * basis.transpose();

    ProjectorReport report;
    report.idempotency_dev = (p * p - p).cwiseAbs().maxCoeff();
    const Eigen::VectorXd via_m = (phi * basis) * (f * basis).transpose();
    const Eigen::VectorXd via_p = phi * p * f.transpose();
    report.readout_dev = (via_m - via_p).cwiseAbs().maxCoeff();
    report.pass = report.idempotency_dev <= 1e-8 && report.readout_dev <= 1e-8;
    return report;
}

} // namespace tapnet
