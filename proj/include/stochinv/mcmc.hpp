#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "stochinv/rng.hpp"

namespace stochinv {

// Unnormalized log target. May return -inf for zero-probability regions;
// NaN is treated as a bug in the target and aborts the run.
struct TargetDensity {
  Eigen::Index dim = 0;
  std::function<double(const Eigen::VectorXd&)> log_density;
};

// Diagonal Gaussian random-walk proposal.
struct ProposalSpec {
  Eigen::VectorXd step_std;

  static ProposalSpec isotropic(Eigen::Index dim, double std);
  ProposalSpec scaled(double factor) const;
};

struct Chain {
  Eigen::MatrixXd states;         // kept rows x dim
  Eigen::VectorXd log_densities;  // one per kept row
  std::vector<std::uint8_t> accepted;  // step outcome that produced each row
  Eigen::Index burn_in = 0;       // kept rows treated as warm-up
  std::size_t thin = 1;
  std::size_t total_steps = 0;
  double acceptance_rate = 0.0;   // over post-burn-in raw steps

  Eigen::Index kept() const { return states.rows(); }
  Eigen::Index dim() const { return states.cols(); }
  // View of the rows after warm-up.
  Eigen::Block<const Eigen::MatrixXd> post_burn_in() const;

  // Columns step,logp,accepted,x_1,...,x_dim.
  void to_csv(const std::string& path) const;
  nlohmann::json summary() const;
};

// One random-walk Metropolis transition. `state` and `logp` are updated in
// place when the proposal is accepted; the return value reports acceptance.
// Consumes exactly dim normals plus one uniform whatever the outcome.
bool metropolis_step(Eigen::VectorXd& state, double& logp,
                     const TargetDensity& target, const ProposalSpec& proposal,
                     RandomSource& rng);

// Fixed-proposal chain of n_steps transitions, storing every thin-th state.
Chain run_chain(const TargetDensity& target, const ProposalSpec& proposal,
                const Eigen::VectorXd& init, std::size_t n_steps,
                double burn_in_fraction, RandomSource& rng,
                std::size_t thin = 1);

struct AcceptanceBand {
  double lo = 0.20;
  double hi = 0.50;
};

struct TuneResult {
  ProposalSpec proposal;
  std::size_t rounds = 0;
  std::vector<double> scales;        // global factor tried per round
  std::vector<double> acceptances;   // measured rate per round
  Eigen::VectorXd final_state;       // where the last pilot stopped
  double final_logp = 0.0;
};

// Scales the whole proposal by a global factor (x1.5 or /1.5 per round,
// pilot windows of `pilot_steps`) until the pilot acceptance rate lands in
// the band. The tuned proposal is then frozen; production chains never
// adapt. Each pilot continues from the previous pilot's final state.
TuneResult tune_proposal(const TargetDensity& target,
                         const ProposalSpec& initial,
                         const Eigen::VectorXd& init, RandomSource& rng,
                         AcceptanceBand band = {},
                         std::size_t max_rounds = 50,
                         std::size_t pilot_steps = 1000);

// Per-dimension effective sample size of a draw matrix (rows are draws),
// from the initial-positive-sequence truncated autocovariance sum. A
// constant column reports 1.
Eigen::VectorXd effective_sample_size(const Eigen::MatrixXd& draws);

struct ChainDiagnostics {
  Eigen::MatrixXd running_means;  // cumulative post-burn-in means, row per kept state
  Eigen::VectorXd ess;            // per dimension
  double acceptance_rate = 0.0;
};

ChainDiagnostics diagnostics(const Chain& chain);

}  // namespace stochinv
