#include "stochinv/hier_bayes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "stochinv/batch.hpp"
#include "stochinv/error.hpp"

namespace stochinv {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void require_finite_box(double a, double b, const char* what) {
  if (!std::isfinite(a) || !std::isfinite(b) || !(a < b)) {
    throw ConfigError(std::string("HierModel: ") + what +
                      " box must be finite with lo < hi");
  }
}

void check_state(const HierState& state, const HierModel& model,
                 const char* where) {
  if (state.X.rows() != model.n_specimens() || state.X.cols() != model.n_x() ||
      state.theta.size() != model.n_theta()) {
    throw DataError(std::string(where) +
                    ": state dimensions do not match the model");
  }
}

bool theta_in_box(const Eigen::VectorXd& theta, const HierModel& model) {
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    const auto [a, b] = model.hyper_box(k);
    if (!(theta(k) >= a && theta(k) <= b)) return false;
  }
  if (model.use_copula && !(std::fabs(theta(theta.size() - 1)) < 1.0)) {
    return false;
  }
  return true;
}

// CDF of the box-truncated marginal; exact family CDF when the support
// already sits inside the box (Z = 1, F(lo) = 0).
double truncated_cdf(const DistributionSpec& spec, double x, double f_lo,
                     double z) {
  if (f_lo == 0.0 && z == 1.0) return spec.cdf(x);
  return (spec.cdf(x) - f_lo) / z;
}

double type7_quantile(const Eigen::VectorXd& sorted, double p) {
  const Eigen::Index n = sorted.size();
  const double idx = p * static_cast<double>(n - 1);
  const auto lo = static_cast<Eigen::Index>(std::floor(idx));
  if (lo + 1 >= n) return sorted(n - 1);
  const double frac = idx - static_cast<double>(lo);
  // Equal or infinite brackets must not enter the interpolation formula;
  // inf - inf and 0 * inf would both turn a well-defined quantile into NaN.
  if (frac == 0.0 || sorted(lo) == sorted(lo + 1)) return sorted(lo);
  return sorted(lo) + frac * (sorted(lo + 1) - sorted(lo));
}

}  // namespace

PriorFamilySpec PriorFamilySpec::lognormal(double mean_lo, double mean_hi,
                                           double std_lo, double std_hi) {
  PriorFamilySpec p;
  p.kind = Kind::lognormal_mean_std;
  p.h1_lo = mean_lo;
  p.h1_hi = mean_hi;
  p.h2_lo = std_lo;
  p.h2_hi = std_hi;
  return p;
}

PriorFamilySpec PriorFamilySpec::beta(double lo, double hi, double alpha_lo,
                                      double alpha_hi, double beta_lo,
                                      double beta_hi) {
  PriorFamilySpec p;
  p.kind = Kind::beta_scaled;
  p.lo = lo;
  p.hi = hi;
  p.h1_lo = alpha_lo;
  p.h1_hi = alpha_hi;
  p.h2_lo = beta_lo;
  p.h2_hi = beta_hi;
  return p;
}

Eigen::Index HierModel::n_x() const {
  return static_cast<Eigen::Index>(priors.size());
}

Eigen::Index HierModel::n_specimens() const {
  Eigen::Index n = 0;
  for (const auto& e : experiments) n += e.data.cols();
  return n;
}

Eigen::Index HierModel::n_theta() const {
  return 2 * n_x() + (use_copula ? 1 : 0);
}

std::pair<double, double> HierModel::hyper_box(Eigen::Index k) const {
  if (k < 0 || k >= n_theta()) {
    throw DataError("HierModel: hyperparameter index out of range");
  }
  if (use_copula && k == n_theta() - 1) return {-1.0, 1.0};
  const auto& p = priors[static_cast<std::size_t>(k / 2)];
  return k % 2 == 0 ? std::pair{p.h1_lo, p.h1_hi}
                    : std::pair{p.h2_lo, p.h2_hi};
}

DistributionSpec HierModel::marginal(Eigen::Index j,
                                     const Eigen::VectorXd& theta) const {
  const auto& p = priors[static_cast<std::size_t>(j)];
  const double h1 = theta(2 * j), h2 = theta(2 * j + 1);
  if (p.kind == PriorFamilySpec::Kind::lognormal_mean_std) {
    return DistributionSpec::lognormal(h1, h2);
  }
  return DistributionSpec::beta(h1, h2, p.lo, p.hi);
}

void validate(const HierModel& model) {
  if (!model.model) throw ConfigError("HierModel: missing forward model");
  if (model.priors.empty() ||
      static_cast<Eigen::Index>(model.priors.size()) !=
          model.model->input_dim()) {
    throw ConfigError("HierModel: one structural prior per model input "
                      "required");
  }
  const Box& box = model.model->feasible_domain();
  for (std::size_t j = 0; j < model.priors.size(); ++j) {
    const auto& p = model.priors[j];
    require_finite_box(p.h1_lo, p.h1_hi, "hyperprior");
    require_finite_box(p.h2_lo, p.h2_hi, "hyperprior");
    if (p.h1_lo <= 0.0 || p.h2_lo <= 0.0) {
      throw ConfigError("HierModel: hyperprior boxes must be positive");
    }
    if (p.kind == PriorFamilySpec::Kind::beta_scaled) {
      require_finite_box(p.lo, p.hi, "beta support");
      const auto jj = static_cast<Eigen::Index>(j);
      if (p.lo < box.lo(jj) || p.hi > box.hi(jj)) {
        throw ConfigError(
            "HierModel: beta support must lie inside the feasible box");
      }
    }
  }
  if (model.use_copula && model.n_x() != 2) {
    throw ConfigError("HierModel: the copula couples exactly two parameters");
  }
  for (const auto& e : model.experiments) {
    if (!(e.sigma_e > 0.0) || !std::isfinite(e.sigma_e)) {
      throw ConfigError("HierModel: experiment noise sigma must be positive");
    }
    if (e.data.rows() != static_cast<Eigen::Index>(e.components.size())) {
      throw ConfigError(
          "HierModel: experiment data rows must match its component list");
    }
    if (e.data.cols() < 1) {
      throw ConfigError("HierModel: experiment has no specimens");
    }
    if (!e.data.allFinite()) {
      throw ConfigError("HierModel: experiment data must be finite");
    }
    for (const Eigen::Index c : e.components) {
      if (c < 0 || c >= model.model->output_dim()) {
        throw ConfigError("HierModel: observed component out of range");
      }
    }
  }
}

Eigen::VectorXd flatten_state(const HierState& state) {
  const Eigen::Index n = state.X.rows(), nx = state.X.cols();
  Eigen::VectorXd v(n * nx + state.theta.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    v.segment(i * nx, nx) = state.X.row(i).transpose();
  }
  v.tail(state.theta.size()) = state.theta;
  return v;
}

HierState unflatten_state(const Eigen::VectorXd& v, const HierModel& model) {
  const Eigen::Index n = model.n_specimens(), nx = model.n_x();
  const Eigen::Index nth = model.n_theta();
  if (v.size() != n * nx + nth) {
    throw DataError("unflatten_state: vector length does not match the model");
  }
  HierState s;
  s.X.resize(n, nx);
  for (Eigen::Index i = 0; i < n; ++i) {
    s.X.row(i) = v.segment(i * nx, nx).transpose();
  }
  s.theta = v.tail(nth);
  return s;
}

double log_joint_prior(const HierState& state, const HierModel& model) {
  check_state(state, model, "log_joint_prior");
  if (!theta_in_box(state.theta, model)) return kNegInf;

  const Eigen::Index nx = model.n_x(), n = model.n_specimens();
  const Box& box = model.model->feasible_domain();
  std::vector<DistributionSpec> specs;
  specs.reserve(static_cast<std::size_t>(nx));
  Eigen::VectorXd log_z(nx), f_lo(nx), z(nx);
  for (Eigen::Index j = 0; j < nx; ++j) {
    specs.push_back(model.marginal(j, state.theta));
    if (model.priors[static_cast<std::size_t>(j)].kind ==
        PriorFamilySpec::Kind::beta_scaled) {
      f_lo(j) = 0.0;
      z(j) = 1.0;
      log_z(j) = 0.0;
    } else {
      f_lo(j) = specs.back().cdf(box.lo(j));
      z(j) = specs.back().cdf(box.hi(j)) - f_lo(j);
      if (!(z(j) > 0.0)) return kNegInf;
      log_z(j) = std::log(z(j));
    }
  }

  const GaussianCopula copula(model.use_copula ? state.theta(state.theta.size() - 1)
                                               : 0.0);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < nx; ++j) {
      const double x = state.X(i, j);
      if (!(x >= box.lo(j) && x <= box.hi(j))) return kNegInf;
      const double lp = specs[static_cast<std::size_t>(j)].log_pdf(x);
      if (lp == kNegInf) return kNegInf;
      sum += lp - log_z(j);
    }
    if (model.use_copula) {
      const double u1 = truncated_cdf(specs[0], state.X(i, 0), f_lo(0), z(0));
      const double u2 = truncated_cdf(specs[1], state.X(i, 1), f_lo(1), z(1));
      sum += copula.log_density(u1, u2);
    }
  }
  if (std::isnan(sum)) {
    throw NumericalError("log_joint_prior: density evaluated to NaN");
  }
  return sum;
}

double log_likelihood(const HierState& state, const HierModel& model) {
  check_state(state, model, "log_likelihood");
  double total = 0.0;
  Eigen::Index offset = 0;
  for (const auto& e : model.experiments) {
    const Eigen::Index ne = e.data.cols();
    if (!e.components.empty()) {
      const Eigen::MatrixXd inputs =
          state.X.middleRows(offset, ne).transpose();
      const Eigen::MatrixXd y = eval_batch(*model.model, inputs);
      const double s2 = e.sigma_e * e.sigma_e;
      const double c = -0.5 * std::log(2.0 * M_PI * s2);
      double acc = 0.0;
      for (Eigen::Index k = 0; k < ne; ++k) {
        for (std::size_t t = 0; t < e.components.size(); ++t) {
          const double r = e.data(static_cast<Eigen::Index>(t), k) -
                           y(e.components[t], k);
          acc += c - r * r / (2.0 * s2);
        }
      }
      total += acc;
    }
    offset += ne;
  }
  if (std::isnan(total)) {
    throw NumericalError("log_likelihood: density evaluated to NaN");
  }
  return total;
}

double log_posterior(const HierState& state, const HierModel& model) {
  const double prior = log_joint_prior(state, model);
  if (prior == kNegInf) return kNegInf;
  return prior + log_likelihood(state, model);
}

Eigen::VectorXd structural_means(const HierModel& model,
                                 const Eigen::VectorXd& theta) {
  if (theta.size() != model.n_theta() || !theta_in_box(theta, model)) {
    throw DomainError("structural_means: theta outside the hyperprior box");
  }
  Eigen::VectorXd m(model.n_x());
  for (Eigen::Index j = 0; j < model.n_x(); ++j) {
    m(j) = model.marginal(j, theta).mean();
  }
  return m;
}

HierState data_consistent_init(const HierModel& model, RandomSource& rng) {
  validate(model);
  const Box& box = model.model->feasible_domain();
  const Eigen::Index nx = model.n_x();
  const Eigen::Index pool = 256;

  const auto clamp_inside = [&box](Eigen::VectorXd x) {
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      const double margin = 1e-6 * (box.hi(j) - box.lo(j));
      x(j) = std::clamp(x(j), box.lo(j) + margin, box.hi(j) - margin);
    }
    return x;
  };

  // One shared candidate pool; every specimen picks its own best fit from it.
  Eigen::MatrixXd cand(nx, pool);
  for (Eigen::Index c = 0; c < pool; ++c) {
    for (Eigen::Index j = 0; j < nx; ++j) {
      cand(j, c) = rng.uniform(box.lo(j), box.hi(j));
    }
  }
  Eigen::MatrixXd resp(model.model->output_dim(), pool);
  for (Eigen::Index c = 0; c < pool; ++c) {
    resp.col(c) = model.model->eval(cand.col(c));
  }

  HierState st;
  st.theta.resize(model.n_theta());
  for (Eigen::Index k = 0; k < model.n_theta(); ++k) {
    const auto [a, b] = model.hyper_box(k);
    st.theta(k) = 0.5 * (a + b);
  }
  st.X.resize(model.n_specimens(), nx);

  Eigen::Index row = 0;
  for (const auto& e : model.experiments) {
    const auto m = static_cast<Eigen::Index>(e.components.size());
    for (Eigen::Index k = 0; k < e.data.cols(); ++k, ++row) {
      if (m == 0) {
        st.X.row(row) = clamp_inside(0.5 * (box.lo + box.hi)).transpose();
        continue;
      }
      const Eigen::VectorXd obs = e.data.col(k);
      const auto resid_ss = [&](const Eigen::VectorXd& y) {
        double ss = 0.0;
        for (Eigen::Index i = 0; i < m; ++i) {
          const double d = y(e.components[static_cast<std::size_t>(i)]) - obs(i);
          ss += d * d;
        }
        return ss;
      };
      Eigen::Index best = 0;
      double ss = std::numeric_limits<double>::infinity();
      for (Eigen::Index c = 0; c < pool; ++c) {
        const double s = resid_ss(resp.col(c));
        if (s < ss) {
          ss = s;
          best = c;
        }
      }
      Eigen::VectorXd x = cand.col(best);

      // Damped Gauss-Newton with central differences.  Underdetermined
      // specimens (fewer observations than parameters) take the
      // minimum-norm step through the ridge regularization.
      for (int iter = 0; iter < 20; ++iter) {
        Eigen::VectorXd r(m);
        const Eigen::VectorXd y = model.model->eval(x);
        for (Eigen::Index i = 0; i < m; ++i) {
          r(i) = y(e.components[static_cast<std::size_t>(i)]) - obs(i);
        }
        Eigen::MatrixXd J(m, nx);
        for (Eigen::Index j = 0; j < nx; ++j) {
          const double h = 1e-6 * (box.hi(j) - box.lo(j));
          Eigen::VectorXd xp = x, xm = x;
          xp(j) += h;
          xm(j) -= h;
          xp = clamp_inside(xp);
          xm = clamp_inside(xm);
          const Eigen::VectorXd yp = model.model->eval(xp);
          const Eigen::VectorXd ym = model.model->eval(xm);
          const double span = xp(j) - xm(j);
          for (Eigen::Index i = 0; i < m; ++i) {
            const Eigen::Index c = e.components[static_cast<std::size_t>(i)];
            J(i, j) = (yp(c) - ym(c)) / span;
          }
        }
        Eigen::MatrixXd jtj = J.transpose() * J;
        const double ridge =
            1e-8 * std::max(jtj.trace() / static_cast<double>(nx), 1e-12);
        jtj.diagonal().array() += ridge;
        Eigen::VectorXd dstep = jtj.ldlt().solve(J.transpose() * r);
        bool improved = false;
        for (int half = 0; half < 8; ++half) {
          const Eigen::VectorXd xn = clamp_inside(x - dstep);
          const double ssn = resid_ss(model.model->eval(xn));
          if (ssn < ss) {
            x = xn;
            ss = ssn;
            improved = true;
            break;
          }
          dstep *= 0.5;
        }
        if (!improved || ss < 1e-24) break;
      }
      st.X.row(row) = x.transpose();
    }
  }
  return st;
}

HierResult run_hier_inference(const HierModel& model, const HierConfig& config,
                              RandomSource& rng) {
  validate(model);
  const Eigen::Index nx = model.n_x(), n = model.n_specimens();
  const Eigen::Index nth = model.n_theta();
  const Box& box = model.model->feasible_domain();

  Eigen::VectorXd theta0(nth);
  for (Eigen::Index k = 0; k < nth; ++k) {
    const auto [a, b] = model.hyper_box(k);
    theta0(k) = 0.5 * (a + b);
  }

  Eigen::VectorXd x0(nx), prior_std(nx);
  for (Eigen::Index j = 0; j < nx; ++j) {
    const DistributionSpec spec = model.marginal(j, theta0);
    const double w = box.hi(j) - box.lo(j);
    x0(j) = std::clamp(spec.quantile(0.5), box.lo(j) + 1e-3 * w,
                       box.hi(j) - 1e-3 * w);
    prior_std(j) = spec.stddev();
  }

  HierState init;
  if (config.init) {
    init = *config.init;
    if (init.X.rows() != n || init.X.cols() != nx || init.theta.size() != nth) {
      throw ConfigError(
          "run_hier_inference: init state dimensions do not match the model");
    }
  } else {
    // Default start: specimens at the structural-prior median, nudged off
    // the walls, and theta at the hyperprior box center.
    init.X = x0.transpose().replicate(n, 1);
    init.theta = theta0;
  }

  // Proposal scale per specimen dimension: the smaller of the prior spread
  // and the likelihood scale sigma_e / |dy/dx_j| at that specimen's start.
  // Observation-dominated dimensions (a cycle count moved by thousands per
  // unit of S) would otherwise pin the global step at uselessly small sizes.
  Eigen::VectorXd step(model.state_dim());
  Eigen::Index row = 0;
  for (const auto& e : model.experiments) {
    for (Eigen::Index k = 0; k < e.data.cols(); ++k, ++row) {
      Eigen::VectorXd scale_k = prior_std;
      if (!e.components.empty()) {
        const Eigen::VectorXd xa = init.X.row(row).transpose();
        for (Eigen::Index j = 0; j < nx; ++j) {
          const double h = 1e-4 * (box.hi(j) - box.lo(j));
          Eigen::VectorXd xp = xa, xm = xa;
          xp(j) = std::min(xp(j) + h, box.hi(j));
          xm(j) = std::max(xm(j) - h, box.lo(j));
          const Eigen::VectorXd yp = model.model->eval(xp);
          const Eigen::VectorXd ym = model.model->eval(xm);
          double norm2 = 0.0;
          for (const Eigen::Index c : e.components) {
            const double d = (yp(c) - ym(c)) / (xp(j) - xm(j));
            norm2 += d * d;
          }
          if (norm2 > 0.0) {
            scale_k(j) = std::min(scale_k(j), e.sigma_e / std::sqrt(norm2));
          }
        }
      }
      step.segment(row * nx, nx) = scale_k;
    }
  }
  for (Eigen::Index k = 0; k < nth; ++k) {
    const auto [a, b] = model.hyper_box(k);
    step(n * nx + k) = (b - a) / 20.0;
  }

  TargetDensity target{model.state_dim(),
                       [&model](const Eigen::VectorXd& v) {
                         return log_posterior(unflatten_state(v, model),
                                              model);
                       }};
  const Eigen::VectorXd init_v = flatten_state(init);

  HierResult out;
  // Phase 1: tune from the declared start, then warm up with the tuned
  // proposal so the chain can settle into the posterior bulk.
  const TuneResult t1 = tune_proposal(target, ProposalSpec{step}, init_v, rng,
                                      {}, config.max_tune_rounds,
                                      config.pilot_steps);
  const std::size_t warm_steps = std::max<std::size_t>(
      2000, std::min<std::size_t>(config.n_steps / 2, 20000));
  const Chain warm = run_chain(target, t1.proposal, t1.final_state, warm_steps,
                               0.5, rng);

  // Phase 2: rebase each dimension on the spread the warm sample actually
  // shows, retune the global factor, and freeze the proposal.  Production
  // continues from the warm state; no adaptation happens after this point.
  Eigen::VectorXd rebased = t1.proposal.step_std;
  const Eigen::MatrixXd warm_post = warm.post_burn_in();
  if (warm_post.rows() > 10) {
    const Eigen::RowVectorXd mean = warm_post.colwise().mean();
    for (Eigen::Index j = 0; j < rebased.size(); ++j) {
      const double var =
          (warm_post.col(j).array() - mean(j)).square().sum() /
          static_cast<double>(warm_post.rows() - 1);
      const double sd = std::sqrt(var);
      if (sd > 0.0 && std::isfinite(sd)) rebased(j) = sd;
    }
  }
  const Eigen::VectorXd warm_last =
      warm.states.row(warm.kept() - 1).transpose();
  out.tuning = tune_proposal(target, ProposalSpec{rebased}, warm_last, rng, {},
                             config.max_tune_rounds, config.pilot_steps);
  out.chain = run_chain(target, out.tuning.proposal, out.tuning.final_state,
                        config.n_steps, config.burn_in_fraction, rng,
                        config.thin);

  PosteriorSummary& s = out.summary;
  s.map = map_estimate(out.chain, model);
  const Eigen::Index rows = out.chain.kept() - out.chain.burn_in;
  s.map_log_posterior =
      out.chain.log_densities.segment(out.chain.burn_in, rows).maxCoeff();
  const Eigen::MatrixXd th = out.chain.post_burn_in().rightCols(nth);
  s.hyper_mean = th.colwise().mean().transpose();
  if (rows > 1) {
    s.hyper_std = ((th.rowwise() - s.hyper_mean.transpose())
                       .array()
                       .square()
                       .colwise()
                       .sum() /
                   static_cast<double>(rows - 1))
                      .sqrt()
                      .transpose();
  } else {
    s.hyper_std = Eigen::VectorXd::Zero(nth);
  }
  if (rows >= 10) s.hyper_ess = effective_sample_size(th);
  s.coverage = config.envelope_coverage;
  s.n_specimens = n;
  s.n_x = nx;
  s.n_theta = nth;
  return out;
}

HierState map_estimate(const Chain& chain, const HierModel& model) {
  const Eigen::Index rows = chain.kept() - chain.burn_in;
  if (rows < 1) throw DataError("map_estimate: empty post-burn-in chain");
  Eigen::Index rel = 0;
  chain.log_densities.segment(chain.burn_in, rows).maxCoeff(&rel);
  return unflatten_state(
      chain.states.row(chain.burn_in + rel).transpose(), model);
}

nlohmann::json PosteriorSummary::to_json() const {
  nlohmann::json j;
  j["map_log_posterior"] = map_log_posterior;
  j["map_theta"] = std::vector<double>(map.theta.data(),
                                       map.theta.data() + map.theta.size());
  j["hyper_mean"] = std::vector<double>(hyper_mean.data(),
                                        hyper_mean.data() + hyper_mean.size());
  j["hyper_std"] = std::vector<double>(hyper_std.data(),
                                       hyper_std.data() + hyper_std.size());
  j["hyper_ess"] = std::vector<double>(hyper_ess.data(),
                                       hyper_ess.data() + hyper_ess.size());
  j["coverage"] = coverage;
  j["n_specimens"] = n_specimens;
  j["n_x"] = n_x;
  j["n_theta"] = n_theta;
  j["state_dim"] = n_specimens * n_x + n_theta;
  return j;
}

PredictiveReport predictive_ensemble(const HierModel& model,
                                     const Eigen::VectorXd& theta,
                                     Eigen::Index n_sim, RandomSource& rng) {
  validate(model);
  if (theta.size() != model.n_theta() || !theta_in_box(theta, model)) {
    throw DomainError("predictive_ensemble: theta outside the hyperprior "
                      "support");
  }
  if (n_sim < 2) throw DataError("predictive_ensemble: need n_sim >= 2");

  std::vector<DistributionSpec> marginals;
  for (Eigen::Index j = 0; j < model.n_x(); ++j) {
    marginals.push_back(model.marginal(j, theta));
  }
  const NoiseSpec noiseless(0.0);
  PredictiveReport rep;
  if (model.use_copula) {
    const GaussianCopula copula(theta(theta.size() - 1));
    rep.ensemble = generate_synthetic_ensemble(
        *model.model, marginals, copula, static_cast<std::size_t>(n_sim),
        noiseless, rng);
  } else {
    rep.ensemble = generate_synthetic_ensemble(
        *model.model, marginals, static_cast<std::size_t>(n_sim), noiseless,
        rng);
  }

  const Eigen::MatrixXd& d = rep.ensemble.data;
  rep.mean = d.rowwise().mean();
  Eigen::MatrixXd centered = d.colwise() - rep.mean;
  rep.std = (centered.array().square().rowwise().sum() /
             static_cast<double>(n_sim - 1))
                .sqrt();
  Eigen::VectorXd norms = centered.rowwise().norm();
  const Eigen::MatrixXd gram = centered * centered.transpose();
  rep.corr.resize(d.rows(), d.rows());
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    for (Eigen::Index k = 0; k < d.rows(); ++k) {
      rep.corr(i, k) =
          norms(i) > 0.0 && norms(k) > 0.0
              ? std::clamp(gram(i, k) / (norms(i) * norms(k)), -1.0, 1.0)
              : 0.0;
    }
  }
  return rep;
}

std::vector<EnvelopeBand> envelope_pdfs(const Chain& chain,
                                        const HierModel& model,
                                        double coverage, Eigen::Index n_grid) {
  validate(model);
  if (!(coverage >= 0.0 && coverage <= 1.0)) {
    throw DomainError("envelope_pdfs: coverage must lie in [0, 1]");
  }
  if (n_grid < 2) throw DomainError("envelope_pdfs: need at least two "
                                    "grid points");
  const Eigen::Index rows = chain.kept() - chain.burn_in;
  if (rows < 1) throw DataError("envelope_pdfs: empty post-burn-in chain");

  const HierState map = map_estimate(chain, model);
  const Eigen::Index nx = model.n_x(), nth = model.n_theta();
  const Box& box = model.model->feasible_domain();
  const auto post = chain.post_burn_in();

  // Evenly thinned hyperparameter subsample keeps the pointwise quantile
  // sort tractable on long chains.
  const Eigen::Index stride = std::max<Eigen::Index>(1, rows / 2000);
  std::vector<Eigen::VectorXd> thetas;
  for (Eigen::Index r = 0; r < rows; r += stride) {
    thetas.push_back(post.row(r).tail(nth).transpose());
  }
  const auto m = static_cast<Eigen::Index>(thetas.size());

  const auto truncated_pdf = [&box](const DistributionSpec& spec,
                                    Eigen::Index j, double x, bool beta) {
    if (beta) return spec.pdf(x);
    const double z = spec.cdf(box.hi(j)) - spec.cdf(box.lo(j));
    return z > 0.0 ? spec.pdf(x) / z : 0.0;
  };

  std::vector<EnvelopeBand> bands;
  for (Eigen::Index j = 0; j < nx; ++j) {
    const bool beta = model.priors[static_cast<std::size_t>(j)].kind ==
                      PriorFamilySpec::Kind::beta_scaled;
    EnvelopeBand band;
    band.grid = Eigen::VectorXd::LinSpaced(n_grid, box.lo(j), box.hi(j));
    band.lo.resize(n_grid);
    band.hi.resize(n_grid);
    band.map_pdf.resize(n_grid);

    const DistributionSpec map_spec = model.marginal(j, map.theta);
    Eigen::MatrixXd values(m, n_grid);
    for (Eigen::Index r = 0; r < m; ++r) {
      const DistributionSpec spec = model.marginal(j, thetas[static_cast<std::size_t>(r)]);
      for (Eigen::Index g = 0; g < n_grid; ++g) {
        values(r, g) = truncated_pdf(spec, j, band.grid(g), beta);
      }
    }
    for (Eigen::Index g = 0; g < n_grid; ++g) {
      Eigen::VectorXd col = values.col(g);
      std::sort(col.data(), col.data() + m);
      band.lo(g) = type7_quantile(col, 0.5 * (1.0 - coverage));
      band.hi(g) = type7_quantile(col, 0.5 * (1.0 + coverage));
      band.map_pdf(g) = truncated_pdf(map_spec, j, band.grid(g), beta);
    }
    bands.push_back(std::move(band));
  }
  return bands;
}

}  // namespace stochinv
