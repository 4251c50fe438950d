#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "stochinv/distributions.hpp"
#include "stochinv/forward_model.hpp"
#include "stochinv/mcmc.hpp"
#include "stochinv/rng.hpp"

namespace stochinv {

// Structural prior family for one material parameter.  Each family carries
// two hyperparameters, moving inside uniform hyperprior boxes:
//   lognormal_mean_std: mean in [h1_lo, h1_hi], std in [h2_lo, h2_hi];
//   beta_scaled:        alpha, beta boxes, support fixed to [lo, hi].
struct PriorFamilySpec {
  enum class Kind { lognormal_mean_std, beta_scaled };

  Kind kind = Kind::lognormal_mean_std;
  double lo = 0.0, hi = 0.0;  // beta_scaled support
  double h1_lo = 0.0, h1_hi = 0.0;
  double h2_lo = 0.0, h2_hi = 0.0;

  static PriorFamilySpec lognormal(double mean_lo, double mean_hi,
                                   double std_lo, double std_hi);
  static PriorFamilySpec beta(double lo, double hi, double alpha_lo,
                              double alpha_hi, double beta_lo, double beta_hi);
};

// One experiment: a subset of the model's output components observed on its
// own specimens, with i.i.d. Gaussian noise of known sigma_e.  An empty
// component list is legal and contributes nothing to the likelihood.
struct Experiment {
  std::string name;
  std::vector<Eigen::Index> components;
  Eigen::MatrixXd data;  // components.size() rows x specimen columns
  double sigma_e = 0.0;
};

struct HierModel {
  std::shared_ptr<const ForwardModel> model;
  std::vector<PriorFamilySpec> priors;  // one per model input
  bool use_copula = false;              // adds rho ~ U(-1,1); needs n_x == 2
  std::vector<Experiment> experiments;

  Eigen::Index n_x() const;
  Eigen::Index n_specimens() const;
  Eigen::Index n_theta() const;  // 2 n_x, plus 1 with the copula
  Eigen::Index state_dim() const { return n_specimens() * n_x() + n_theta(); }

  // Hyperprior box of hyperparameter k in the theta layout below.
  std::pair<double, double> hyper_box(Eigen::Index k) const;

  // Marginal of parameter j for given hyperparameters; theta must already
  // lie inside the hyperprior box.
  DistributionSpec marginal(Eigen::Index j, const Eigen::VectorXd& theta) const;
};

// Throws ConfigError when the model description is inconsistent.
void validate(const HierModel& model);

// theta layout: [h1_1, h2_1, ..., h1_nx, h2_nx, (rho)].
struct HierState {
  Eigen::MatrixXd X;  // specimen rows x n_x
  Eigen::VectorXd theta;
};

Eigen::VectorXd flatten_state(const HierState& state);
HierState unflatten_state(const Eigen::VectorXd& v, const HierModel& model);

// Structural priors are truncated to the model's feasible box and
// renormalized, so hyperparameters that push mass outside the box pay for it.
double log_joint_prior(const HierState& state, const HierModel& model);
double log_likelihood(const HierState& state, const HierModel& model);
double log_posterior(const HierState& state, const HierModel& model);

// Family means per parameter at the given hyperparameters.
Eigen::VectorXd structural_means(const HierModel& model,
                                 const Eigen::VectorXd& theta);

struct PosteriorSummary {
  HierState map;
  double map_log_posterior = 0.0;
  Eigen::VectorXd hyper_mean;  // post-burn-in moments of theta
  Eigen::VectorXd hyper_std;
  Eigen::VectorXd hyper_ess;
  double coverage = 0.90;  // envelope specification
  Eigen::Index n_specimens = 0;
  Eigen::Index n_x = 0;
  Eigen::Index n_theta = 0;

  nlohmann::json to_json() const;
};

struct HierConfig {
  std::size_t n_steps = 50000;
  double burn_in_fraction = 0.2;
  std::size_t thin = 1;
  std::size_t pilot_steps = 1000;
  std::size_t max_tune_rounds = 50;
  double envelope_coverage = 0.90;
  // Optional starting state; when absent, specimens start at the
  // structural-prior median and theta at the hyperprior box center.
  std::optional<HierState> init;
};

struct HierResult {
  Chain chain;
  PosteriorSummary summary;
  TuneResult tuning;
};

// Each specimen at a least-squares fit of its own observations: the best of
// a shared random candidate pool, refined by damped Gauss-Newton inside the
// feasible box. Theta sits at the hyperprior box center.  Sharp likelihoods
// (a cycle count pins its specimen to a thin curve) make this the practical
// starting state for the joint chain.
HierState data_consistent_init(const HierModel& model, RandomSource& rng);

// Builds the joint target over all specimen parameters and hyperparameters,
// tunes a per-dimension proposal sized from each specimen's local
// likelihood geometry, rescales it once against a warm-up sample, and runs
// one Metropolis chain that continues from the warm-up state.  The
// production proposal is frozen before the reported chain starts.
HierResult run_hier_inference(const HierModel& model, const HierConfig& config,
                              RandomSource& rng);

// Retained post-burn-in state with the largest stored log posterior.
HierState map_estimate(const Chain& chain, const HierModel& model);

struct PredictiveReport {
  Eigen::VectorXd mean;  // per output component
  Eigen::VectorXd std;
  Eigen::MatrixXd corr;
  ObservationEnsemble ensemble;
};

// Aleatory push-forward: draws parameters from the structural prior at a
// fixed theta, evaluates the model, and summarizes the noise-free response.
PredictiveReport predictive_ensemble(const HierModel& model,
                                     const Eigen::VectorXd& theta,
                                     Eigen::Index n_sim, RandomSource& rng);

struct EnvelopeBand {
  Eigen::VectorXd grid;
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;
  Eigen::VectorXd map_pdf;
};

// Pointwise central band of structural-prior pdf values over the posterior
// hyperparameter cloud, one band per parameter, plus the MAP curve.
std::vector<EnvelopeBand> envelope_pdfs(const Chain& chain,
                                        const HierModel& model,
                                        double coverage = 0.90,
                                        Eigen::Index n_grid = 201);

}  // namespace stochinv
