#pragma once

#include <Eigen/Dense>
#include "json.hpp"

#include "stochinv/forward_model.hpp"

namespace stochinv {

// Principal component basis of an observation ensemble. Columns of
// `components` are orthonormal, eigenvalues are non-increasing, and each
// component's largest-magnitude coordinate is positive so the
// decomposition of a given ensemble is unique.
struct PCABasis {
  Eigen::VectorXd mean;         // n_z
  Eigen::MatrixXd components;   // n_z x r
  Eigen::VectorXd eigenvalues;  // r, unbiased (n-1) covariance eigenvalues
  Eigen::VectorXd explained;    // per-component fraction of total variance
  double total_variance = 0.0;  // over all directions, retained or not

  Eigen::Index r() const { return components.cols(); }
  Eigen::Index n_z() const { return mean.size(); }
  double discarded_fraction() const;

  nlohmann::json to_json() const;
  static PCABasis parse(const nlohmann::json& j);
};

// Top-r principal directions of the column sample covariance, computed by
// SVD of the centered data matrix.
PCABasis fit_pca(const Eigen::MatrixXd& data, Eigen::Index r);
PCABasis fit_pca(const ObservationEnsemble& ensemble, Eigen::Index r);

// q = components^T (y - mean).
Eigen::VectorXd project(const PCABasis& basis, const Eigen::VectorXd& y);
Eigen::MatrixXd project_batch(const PCABasis& basis,
                              const Eigen::MatrixXd& ys);

// y = mean + components q.
Eigen::VectorXd reconstruct(const PCABasis& basis, const Eigen::VectorXd& q);

struct ReducedJacobian {
  Eigen::MatrixXd jq;     // r x n_x, square when r = n_x
  double abs_det = 0.0;
  bool singular = false;  // determinant zero or not finite
};

// J_q = components^T J_g; requires the square case r = n_x.
ReducedJacobian reduced_jacobian(const PCABasis& basis,
                                 const Eigen::MatrixXd& model_jacobian);

// Independent normal fit to each projected component.
struct ComponentMarginals {
  Eigen::VectorXd mean, std;

  double joint_log_pdf(const Eigen::VectorXd& q) const;
};

ComponentMarginals fit_component_marginals(const PCABasis& basis,
                                           const Eigen::MatrixXd& data);
ComponentMarginals fit_component_marginals(const PCABasis& basis,
                                           const ObservationEnsemble& ensemble);

}  // namespace stochinv
