#pragma once

#include <Eigen/Core>

#include "mf/cvae.hpp"
#include "mf/skeleton.hpp"

namespace mf {

enum class ActivationLayer { LatentMean, Hidden };

// One row per window; `windows` holds limb-space past windows as columns.
// LatentMean gives the 20 encoder means, Hidden the 200 post-tanh units.
Eigen::MatrixXd encoder_activations(const LimbCvae& model, const Eigen::Ref<const Eigen::MatrixXd>& windows,
                                    ActivationLayer layer = ActivationLayer::LatentMean);

struct SymmetricEigen {
  Eigen::VectorXd values;   // descending
  Eigen::MatrixXd vectors;  // matching columns
};

// Cyclic Jacobi rotations until the off-diagonal mass is negligible.
SymmetricEigen jacobi_eigen(const Eigen::Ref<const Eigen::MatrixXd>& symmetric, int max_sweeps = 100);

struct PcaModel {
  Eigen::RowVectorXd mean;
  Eigen::MatrixXd components;  // k x dim, orthonormal rows
  Eigen::VectorXd variances;   // descending
  double total_variance = 0.0;

  int k() const { return static_cast<int>(components.rows()); }
};

// Rows of `data` are samples. Covariance divisor n - 1; each component is
// signed so its largest-magnitude entry is positive.
PcaModel pca_fit(const Eigen::Ref<const Eigen::MatrixXd>& data, int k);
Eigen::MatrixXd project(const PcaModel& pca, const Eigen::Ref<const Eigen::MatrixXd>& data);

// Mean silhouette over the points of both groups (rows are points).
double separation_score(const Eigen::Ref<const Eigen::MatrixXd>& a, const Eigen::Ref<const Eigen::MatrixXd>& b);

// Limb-space past windows (columns) of a normalized recording whose last
// frame is each of first_end..last_end (inclusive frame positions).
Eigen::MatrixXd windows_ending(const Recording& normalized, Limb limb, int delta_t, int first_end, int last_end);

}  // namespace mf
