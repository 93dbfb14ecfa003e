#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

#include "tapnet/errors.hpp"

namespace tapnet {

/// Norms at or below this are treated as having no usable direction.
inline constexpr double kNormTolerance = 1e-12;

/// Distance flavor used in the loss and at classification time. Argmin is the
/// same either way; the squared form has the smoother gradient and is the
/// default.
enum class DistanceKind { Squared, Euclidean };

/// Per-class means of embedded support features, one row per episode class.
struct ClassCentroids {
    Eigen::MatrixXd rows;          // N_c x L
    std::vector<int> class_order;  // episode labels matching the rows
};

/// Stacked error rows, one per episode class. Rows that carried no usable
/// direction are kept as zeros and counted in `degenerate_rows`; a zero row
/// constrains nothing in the nulling step.
class ErrorMatrix {
public:
    ErrorMatrix(Eigen::MatrixXd rows, std::vector<int> class_order, int degenerate_rows = 0);

    const Eigen::MatrixXd& rows() const { return rows_; }
    const std::vector<int>& class_order() const { return class_order_; }
    int degenerate_rows() const { return degenerate_rows_; }
    Eigen::Index class_count() const { return rows_.rows(); }
    Eigen::Index feature_dim() const { return rows_.cols(); }

private:
    Eigen::MatrixXd rows_;
    std::vector<int> class_order_;
    int degenerate_rows_ = 0;
};

/// Column-orthonormal basis of the error null space.
class ProjectionSpace {
public:
    ProjectionSpace(Eigen::MatrixXd basis);

    const Eigen::MatrixXd& basis() const { return basis_; }
    Eigen::Index feature_dim() const { return basis_.rows(); } // L
    Eigen::Index dim() const { return basis_.cols(); }         // D

private:
    Eigen::MatrixXd basis_; // L x D, M^T M = I within 1e-10
};

/// Reference for class k minus the mean of all other references. The
/// 1/(N_c - 1) factor normalizes for the number of non-matching rows.
Eigen::RowVectorXd modified_reference(const Eigen::MatrixXd& phi, Eigen::Index k);

/// Difference of unit directions: phi_tilde/|phi_tilde| - c/|c|.
/// Throws DegenerateError when either norm is at or below kNormTolerance.
Eigen::RowVectorXd error_vector(const Eigen::RowVectorXd& phi_tilde, const Eigen::RowVectorXd& c);

/// Assemble the per-class error rows from references and centroids. Degenerate
/// pairs (tiny norms, or an exactly zero difference) become zero rows and are
/// tallied rather than raised, so a mid-training episode never aborts on an
/// already-aligned class.
ErrorMatrix error_matrix(const Eigen::MatrixXd& phi, const ClassCentroids& centroids);

/// Null-space basis of the error rows: columns are the right singular vectors
/// of E with indices N_c+1 .. N_c+D (1-based, singular values descending),
/// taken from that fixed offset regardless of numerical rank. Requires
/// L >= N_c + D.
ProjectionSpace build_projection(const ErrorMatrix& E, Eigen::Index d);

/// Row-vector projection v -> v * M.
Eigen::RowVectorXd project(const ProjectionSpace& M, const Eigen::RowVectorXd& v);

/// Squared Euclidean distance between equal-length row vectors.
double sq_distance(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b);

/// Distance under the configured flavor.
double distance(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b, DistanceKind kind);

/// Deviations of the projector P = M M^T from idempotency and of the
/// projected readout identity phi*M*(f*M)^T = phi*P*f^T.
struct ProjectorReport {
    double idempotency_dev = 0.0; // max |P*P - P|
    double readout_dev = 0.0;     // max |phi*M*(f*M)^T - phi*P*f^T|
    bool pass = false;            // both within 1e-8
};

ProjectorReport projector_check(const Eigen::MatrixXd& basis, const Eigen::MatrixXd& phi,
                                const Eigen::RowVectorXd& f);

} // namespace tapnet
