#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "stochinv/rng.hpp"

namespace stochinv {

enum class Family { Uniform, Normal, Lognormal, Beta };

std::string family_name(Family f);

// Scalar distribution described by its family and natural parameters.
// Lognormal is parameterized by the mean and standard deviation of the
// variable itself, not of its logarithm; the log-space parameters are
// derived internally. Beta is shape (alpha, beta) scaled to [a, b].
class DistributionSpec {
 public:
  static DistributionSpec uniform(double a, double b);
  static DistributionSpec normal(double mean, double stddev);
  static DistributionSpec lognormal(double mean, double stddev);
  static DistributionSpec beta(double alpha, double beta, double a, double b);

  Family family() const { return family_; }

  double pdf(double x) const;
  double log_pdf(double x) const;   // -inf outside the support
  double cdf(double x) const;
  double quantile(double p) const;  // p strictly inside (0,1)
  double mean() const;
  double stddev() const;
  std::pair<double, double> support() const;

  // One draw by inversion; consumes exactly one uniform regardless of family.
  double sample(RandomSource& rng) const;

  nlohmann::json to_json() const;
  static DistributionSpec parse(const nlohmann::json& j);

 private:
  DistributionSpec() = default;

  Family family_ = Family::Uniform;
  double a_ = 0.0, b_ = 1.0;        // bounds (uniform, beta)
  double m_ = 0.0, s_ = 1.0;        // mean, std as given (normal, lognormal)
  double alpha_ = 1.0, beta_ = 1.0;
  double mu_ln_ = 0.0, sig_ln_ = 1.0;
  double log_bnorm_ = 0.0;          // log B(alpha,beta) + log(b-a)
};

// n independent draws, in draw order.
Eigen::VectorXd sample_iid(const DistributionSpec& spec, std::size_t n,
                           RandomSource& rng);

// Latin hypercube sample of n points through the marginal quantiles: each
// dimension is cut into n equal-probability strata and a random permutation
// assigns one stratum per point.
Eigen::MatrixXd lhs_sample(const std::vector<DistributionSpec>& marginals,
                           std::size_t n, RandomSource& rng);

// Bivariate Gaussian copula with correlation rho in (-1,1). At rho = 0 the
// density is identically one and is returned as exactly 1.0.
class GaussianCopula {
 public:
  explicit GaussianCopula(double rho);

  double rho() const { return rho_; }

  // Copula density at (u1, u2), both strictly inside (0,1).
  double density(double u1, double u2) const;

  // Log density with the arguments clamped into the open interval first, so
  // marginal CDF values that round to 0 or 1 stay finite.
  double log_density(double u1, double u2) const;

  // One dependent pair (u1, u2); consumes exactly two normals.
  std::pair<double, double> sample(RandomSource& rng) const;

  // Log of the joint density with the given marginals at (x1, x2).
  double joint_log_pdf(const DistributionSpec& m1, const DistributionSpec& m2,
                       double x1, double x2) const;

 private:
  double log_density_z(double z1, double z2) const;

  double rho_;
};

}  // namespace stochinv
