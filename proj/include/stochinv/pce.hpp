#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "stochinv/distributions.hpp"
#include "stochinv/forward_model.hpp"
#include "stochinv/rng.hpp"

namespace stochinv {

// Probabilists' Hermite polynomial He_k at xi, returned with its derivative.
// He_{k+1} = xi He_k - k He_{k-1};  He_k' = k He_{k-1}.
std::pair<double, double> hermite_eval(int k, double xi);

// All multi-indices of total degree <= p in graded lexicographic order
// (by total degree, then lexicographically within each grade).
struct MultiIndexSet {
  static MultiIndexSet total_degree(Eigen::Index dim, int p);

  Eigen::Index dim = 0;
  int degree = 0;
  std::vector<std::vector<int>> indices;

  std::size_t size() const { return indices.size(); }
};

// Affine germ map xi_j = (x_j - shift_j) / scale_j.
struct Standardization {
  Eigen::VectorXd shift, scale;
};

// Rows are training points, columns basis functions. The parallel kernel
// and its serial reference produce identical matrices.
Eigen::MatrixXd pce_design_matrix(const MultiIndexSet& indices,
                                  const Standardization& std_map,
                                  const Eigen::MatrixXd& xs);
Eigen::MatrixXd pce_design_matrix_serial(const MultiIndexSet& indices,
                                         const Standardization& std_map,
                                         const Eigen::MatrixXd& xs);

// Polynomial chaos expansion y(x) = sum_a c_a prod_j He_{a_j}(xi_j(x)).
// Immutable once built; safe to share across threads.
class PCESurrogate {
 public:
  PCESurrogate(MultiIndexSet indices, Eigen::MatrixXd coeffs,
               Standardization std_map);

  Eigen::Index input_dim() const { return indices_.dim; }
  Eigen::Index output_dim() const { return coeffs_.cols(); }
  int degree() const { return indices_.degree; }

  Eigen::VectorXd evaluate(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd evaluate_batch(const Eigen::MatrixXd& xs) const;

  // Exact derivative of the polynomial, n_z x n_x.
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const;

  const MultiIndexSet& indices() const { return indices_; }
  const Eigen::MatrixXd& coeffs() const { return coeffs_; }  // basis x n_z
  const Standardization& standardization() const { return std_map_; }

  nlohmann::json to_json() const;
  static PCESurrogate parse(const nlohmann::json& j);

 private:
  MultiIndexSet indices_;
  Eigen::MatrixXd coeffs_;
  Standardization std_map_;
};

struct FitReport {
  double rmse = 0.0;       // RMS training residual over all points and outputs
  double rel_rmse = 0.0;   // rmse relative to the response RMS
  bool undersampled = false;  // n_train below twice the basis size
};

struct FitResult {
  PCESurrogate surrogate;
  FitReport report;
};

// Least-squares fit on a Latin hypercube design through the marginals,
// conditioned to the model's feasible box so every training point is
// evaluable. Standardization comes from the marginals' analytic moments.
FitResult fit_regression(const ForwardModel& model,
                         const std::vector<DistributionSpec>& dists,
                         int degree, std::size_t n_train, RandomSource& rng);

// Fit from precomputed training data (xs: n_x x n, ys: n_z x n).
FitResult fit_regression_data(const Eigen::MatrixXd& xs,
                              const Eigen::MatrixXd& ys, int degree,
                              const Standardization& std_map);

struct CVEntry {
  int degree = 0;
  double mean_rmse = 0.0;
  std::vector<double> fold_rmse;
  bool failed = false;
  std::string error;
};

struct CVResult {
  int selected_degree = 0;
  std::vector<CVEntry> table;
};

// k-fold cross validation over candidate degrees on a shared design; folds
// are assigned round-robin. The lowest degree within 1% of the best mean
// score (plus a noise floor at 1e-12 of the response scale) is selected.
CVResult cross_validate_degree(const ForwardModel& model,
                               const std::vector<DistributionSpec>& dists,
                               const std::vector<int>& degrees,
                               std::size_t n_train, std::size_t k_folds,
                               RandomSource& rng);

}  // namespace stochinv
