#include "stochinv/mcmc.hpp"

#include <cmath>
#include <limits>

#include "stochinv/batch.hpp"
#include "stochinv/csv.hpp"
#include "stochinv/error.hpp"

namespace stochinv {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

void check_proposal(const ProposalSpec& p, Eigen::Index dim,
                    const char* where) {
  if (p.step_std.size() != dim) {
    throw DataError(std::string(where) +
                    ": proposal dimension does not match the target");
  }
  if (!(p.step_std.array() > 0.0).all()) {
    throw DomainError(std::string(where) +
                      ": proposal step stds must be positive");
  }
}

double eval_target(const TargetDensity& target, const Eigen::VectorXd& x) {
  const double lp = target.log_density(x);
  if (std::isnan(lp)) {
    throw NumericalError(
        "mcmc: target density returned NaN; -inf is the only legal "
        "zero-probability signal");
  }
  return lp;
}

}  // namespace

ProposalSpec ProposalSpec::isotropic(Eigen::Index dim, double std) {
  if (dim < 1) throw DomainError("ProposalSpec: dimension must be positive");
  if (!(std > 0.0)) {
    throw DomainError("ProposalSpec: step std must be positive");
  }
  return ProposalSpec{Eigen::VectorXd::Constant(dim, std)};
}

ProposalSpec ProposalSpec::scaled(double factor) const {
  if (!(factor > 0.0)) {
    throw DomainError("ProposalSpec: scale factor must be positive");
  }
  return ProposalSpec{step_std * factor};
}

bool metropolis_step(Eigen::VectorXd& state, double& logp,
                     const TargetDensity& target, const ProposalSpec& proposal,
                     RandomSource& rng) {
  check_proposal(proposal, state.size(), "metropolis_step");
  if (std::isnan(logp) || logp == -kInf) {
    throw DomainError(
        "metropolis_step: current state must have finite log density");
  }
  Eigen::VectorXd cand(state.size());
  for (Eigen::Index i = 0; i < state.size(); ++i) {
    cand(i) = state(i) + proposal.step_std(i) * rng.normal();
  }
  const double cand_logp = eval_target(target, cand);
  const double u = rng.uniform01();
  if (std::log(u) < cand_logp - logp) {
    state = cand;
    logp = cand_logp;
    return true;
  }
  return false;
}

Eigen::Block<const Eigen::MatrixXd> Chain::post_burn_in() const {
  return states.bottomRows(states.rows() - burn_in);
}

Chain run_chain(const TargetDensity& target, const ProposalSpec& proposal,
                const Eigen::VectorXd& init, std::size_t n_steps,
                double burn_in_fraction, RandomSource& rng, std::size_t thin) {
  if (n_steps < 1) throw DomainError("run_chain: need at least one step");
  if (!(burn_in_fraction >= 0.0 && burn_in_fraction < 1.0)) {
    throw DomainError("run_chain: burn-in fraction must lie in [0,1)");
  }
  if (thin < 1 || thin > n_steps) {
    throw DomainError("run_chain: thinning must lie in [1, n_steps]");
  }
  if (init.size() != target.dim) {
    throw DataError("run_chain: initial state dimension mismatch");
  }
  check_proposal(proposal, target.dim, "run_chain");
  double logp = eval_target(target, init);
  if (logp == -kInf) {
    throw DomainError(
        "run_chain: initial state has zero posterior probability");
  }

  const std::size_t kept_n = n_steps / thin;
  Chain chain;
  chain.thin = thin;
  chain.total_steps = n_steps;
  chain.states.resize(static_cast<Eigen::Index>(kept_n), target.dim);
  chain.log_densities.resize(static_cast<Eigen::Index>(kept_n));
  chain.accepted.resize(kept_n);
  chain.burn_in = static_cast<Eigen::Index>(
      burn_in_fraction * static_cast<double>(kept_n));

  const std::size_t raw_burn_in =
      static_cast<std::size_t>(chain.burn_in) * thin;
  Eigen::VectorXd state = init;
  std::size_t accepted_after = 0;
  Eigen::Index row = 0;
  for (std::size_t step = 1; step <= n_steps; ++step) {
    const bool acc = metropolis_step(state, logp, target, proposal, rng);
    if (acc && step > raw_burn_in) ++accepted_after;
    if (step % thin == 0) {
      chain.states.row(row) = state;
      chain.log_densities(row) = logp;
      chain.accepted[static_cast<std::size_t>(row)] = acc ? 1 : 0;
      ++row;
    }
  }
  chain.acceptance_rate = static_cast<double>(accepted_after) /
                          static_cast<double>(n_steps - raw_burn_in);
  return chain;
}

TuneResult tune_proposal(const TargetDensity& target,
                         const ProposalSpec& initial,
                         const Eigen::VectorXd& init, RandomSource& rng,
                         AcceptanceBand band, std::size_t max_rounds,
                         std::size_t pilot_steps) {
  if (!(band.lo > 0.0 && band.lo < band.hi && band.hi < 1.0)) {
    throw DomainError("tune_proposal: band must satisfy 0 < lo < hi < 1");
  }
  if (max_rounds < 1 || pilot_steps < 1) {
    throw DomainError("tune_proposal: rounds and pilot window must be >= 1");
  }
  check_proposal(initial, target.dim, "tune_proposal");
  if (init.size() != target.dim) {
    throw DataError("tune_proposal: initial state dimension mismatch");
  }

  TuneResult result;
  double scale = 1.0;
  Eigen::VectorXd state = init;
  double logp = eval_target(target, state);
  if (logp == -kInf) {
    throw DomainError(
        "tune_proposal: initial state has zero posterior probability");
  }
  for (std::size_t round = 0; round < max_rounds; ++round) {
    const ProposalSpec current = initial.scaled(scale);
    std::size_t acc = 0;
    for (std::size_t i = 0; i < pilot_steps; ++i) {
      if (metropolis_step(state, logp, target, current, rng)) ++acc;
    }
    const double rate =
        static_cast<double>(acc) / static_cast<double>(pilot_steps);
    result.scales.push_back(scale);
    result.acceptances.push_back(rate);
    result.rounds = round + 1;
    if (rate >= band.lo && rate <= band.hi) {
      result.proposal = current;
      result.final_state = state;
      result.final_logp = logp;
      return result;
    }
    // High acceptance means the walk is too timid; lengthen the steps.
    scale = rate > band.hi ? scale * 1.5 : scale / 1.5;
  }
  std::string trace;
  for (std::size_t i = 0; i < result.rounds; ++i) {
    trace += " [round " + std::to_string(i + 1) + ": scale " +
             csv::format_double(result.scales[i]) + ", acceptance " +
             csv::format_double(result.acceptances[i]) + "]";
  }
  throw NumericalError("tune_proposal: acceptance band [" +
                       csv::format_double(band.lo) + ", " +
                       csv::format_double(band.hi) + "] not reached after " +
                       std::to_string(max_rounds) + " rounds;" + trace);
}

Eigen::VectorXd effective_sample_size(const Eigen::MatrixXd& draws) {
  const Eigen::Index n = draws.rows();
  if (n < 10) {
    throw DataError("effective_sample_size: need at least 10 draws");
  }
  Eigen::VectorXd ess(draws.cols());
  parallel_for(static_cast<std::size_t>(draws.cols()), [&](std::size_t jj) {
    const auto j = static_cast<Eigen::Index>(jj);
    const Eigen::VectorXd x =
        draws.col(j).array() - draws.col(j).mean();
    const double gamma0 = x.squaredNorm() / static_cast<double>(n);
    if (gamma0 <= 0.0) {
      ess(j) = 1.0;  // constant dimension carries one draw of information
      return;
    }
    auto gamma = [&](Eigen::Index t) {
      double s = 0.0;
      for (Eigen::Index i = 0; i + t < n; ++i) s += x(i) * x(i + t);
      return s / static_cast<double>(n);
    };
    // Initial positive sequence: sum Gamma_k = gamma_{2k} + gamma_{2k+1}
    // while positive.
    double tau_sum = 0.0;
    for (Eigen::Index k = 0; 2 * k + 1 < n; ++k) {
      const double pair = gamma(2 * k) + gamma(2 * k + 1);
      if (pair <= 0.0) break;
      tau_sum += pair;
    }
    const double tau = std::max(1.0, -1.0 + 2.0 * tau_sum / gamma0);
    ess(j) = std::max(1.0, static_cast<double>(n) / tau);
  });
  return ess;
}

ChainDiagnostics diagnostics(const Chain& chain) {
  const auto post = chain.post_burn_in();
  if (post.rows() < 10) {
    throw DataError(
        "diagnostics: need at least 10 post-burn-in states, have " +
        std::to_string(post.rows()));
  }
  ChainDiagnostics d;
  d.acceptance_rate = chain.acceptance_rate;
  d.running_means.resize(post.rows(), post.cols());
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(post.cols());
  for (Eigen::Index i = 0; i < post.rows(); ++i) {
    acc += post.row(i).transpose();
    d.running_means.row(i) = acc.transpose() / static_cast<double>(i + 1);
  }
  d.ess = effective_sample_size(post);
  return d;
}

void Chain::to_csv(const std::string& path) const {
  std::vector<std::string> header = {"step", "logp", "accepted"};
  for (Eigen::Index j = 0; j < dim(); ++j) {
    header.push_back("x_" + std::to_string(j + 1));
  }
  Eigen::MatrixXd rows(kept(), 3 + dim());
  for (Eigen::Index i = 0; i < kept(); ++i) {
    rows(i, 0) = static_cast<double>((i + 1) * static_cast<Eigen::Index>(thin));
    rows(i, 1) = log_densities(i);
    rows(i, 2) = accepted[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    rows.block(i, 3, 1, dim()) = states.row(i);
  }
  csv::write(path, header, rows);
}

nlohmann::json Chain::summary() const {
  nlohmann::json j;
  j["dim"] = dim();
  j["total_steps"] = total_steps;
  j["thin"] = thin;
  j["kept_states"] = kept();
  j["burn_in_rows"] = burn_in;
  j["burn_in_steps"] = static_cast<std::size_t>(burn_in) * thin;
  j["acceptance_rate"] = acceptance_rate;
  return j;
}

}  // namespace stochinv
