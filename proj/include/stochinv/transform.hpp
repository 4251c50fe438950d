#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "stochinv/diagnostics.hpp"
#include "stochinv/distributions.hpp"
#include "stochinv/forward_model.hpp"
#include "stochinv/mcmc.hpp"
#include "stochinv/pca.hpp"
#include "stochinv/pce.hpp"
#include "stochinv/rng.hpp"

namespace stochinv {

// Polynomial surrogate exposed through the differentiable-map interface so
// it can stand in for the physical model wherever a Jacobian is required.
class SurrogateMap final : public DifferentiableMap {
 public:
  SurrogateMap(PCESurrogate surrogate, Box box,
               std::string name = "pce_surrogate");

  std::string name() const override { return name_; }
  Eigen::Index input_dim() const override { return box_.dim(); }
  Eigen::Index output_dim() const override;
  const Box& feasible_domain() const override { return box_; }
  Eigen::VectorXd eval(const Eigen::VectorXd& x) const override;
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const override;

  const PCESurrogate& surrogate() const { return surrogate_; }

 private:
  PCESurrogate surrogate_;
  Box box_;
  std::string name_;
};

// Density of the observed data, in one of two forms: independent normal
// marginals on retained principal components, or per-observable kernel
// densities tied together by a Gaussian copula when the two observables
// come from disjoint specimen sets.
struct DataDensity {
  enum class Variant { pca_marginals, kernel_copula };

  Variant variant = Variant::pca_marginals;

  // pca_marginals
  PCABasis basis;
  ComponentMarginals marginals;
  Eigen::MatrixXd reference;  // declared ensemble, n_z x n

  // kernel_copula
  std::vector<KernelDensity> kernels;  // one per observable
  Eigen::VectorXd obs_a, obs_b;        // declared unpaired observations
  double correlation = 0.0;            // latent-normal copula correlation

  // Densities are used unnormalized; this constant offset makes that
  // explicit and testable.
  double log_scale = 0.0;

  // Log density of one observation vector: the projected-component joint
  // for pca_marginals, kernels times copula for kernel_copula.
  double log_density(const Eigen::VectorXd& z) const;

  nlohmann::json to_json() const;
};

DataDensity build_pca_data_density(const ObservationEnsemble& ensemble,
                                   Eigen::Index r);
DataDensity build_pca_data_density(const Eigen::MatrixXd& data,
                                   Eigen::Index r);

// Kernel fits to two unpaired observation sets plus a copula correlation
// estimated from model simulations with parameters drawn uniformly on the
// feasible box. Consumes n_sim * box.dim() uniforms, point-major.
DataDensity build_kernel_copula_density(const Eigen::VectorXd& obs_a,
                                        const Eigen::VectorXd& obs_b,
                                        const DifferentiableMap& model,
                                        const Box& box, Eigen::Index n_sim,
                                        RandomSource& rng);

// Correlation of two paired samples measured on the latent-normal scale:
// mid-ranks mapped through the normal quantile, then Pearson. A constant
// column yields 0.
double latent_normal_correlation(const Eigen::VectorXd& a,
                                 const Eigen::VectorXd& b);

struct TransformProblem {
  std::shared_ptr<const DifferentiableMap> map;
  DataDensity density;
  Box box;
};

void validate(const TransformProblem& problem);

// log f_Z(g(x)) + log|det J| with the reduced r x n_x Jacobian for the PCA
// variant. Outside the box or at a (near-)singular Jacobian the value is
// -inf; NaN raises.
double log_target(const TransformProblem& problem, const Eigen::VectorXd& x);

struct TransformConfig {
  Eigen::Index n_steps = 100000;
  double burn_in_fraction = 0.2;
  Eigen::Index thin = 1;
  Eigen::Index pilot_steps = 1000;
  int max_tune_rounds = 50;
  Eigen::Index histogram_bins = 30;
};

struct Histogram {
  Eigen::VectorXd edges;       // histogram_bins + 1, spanning the box side
  Eigen::VectorXi counts;      // histogram_bins
};

struct TransformResult {
  Chain chain;  // states over x, log densities of the transformed target
  TuneResult tuning;
  Eigen::VectorXd mean, std;  // post-burn-in moments per parameter
  Eigen::MatrixXd corr;       // pairwise Pearson correlations
  std::vector<Histogram> histograms;

  nlohmann::json summary() const;
  // Post-burn-in sample rows: x_1,...,x_{n_x},logp.
  void to_csv(const std::string& path) const;
};

TransformResult sample_parameters(const TransformProblem& problem,
                                  const TransformConfig& config,
                                  RandomSource& rng);

// Sequential re-identification for the kernel_copula variant: after each
// round the copula correlation is re-estimated from simulations at the
// parameter distribution identified in the previous round.
struct IterationResult {
  TransformProblem problem;                // density holds the final estimate
  std::vector<double> correlation_trace;   // initial estimate first
  std::vector<TransformResult> rounds;     // one chain per pass
};

IterationResult iterate_correlation(const TransformProblem& problem,
                                    Eigen::Index rounds,
                                    const TransformConfig& config,
                                    RandomSource& rng);

}  // namespace stochinv
