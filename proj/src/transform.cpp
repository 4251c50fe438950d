#include "stochinv/transform.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

#include "stochinv/batch.hpp"
#include "stochinv/csv.hpp"
#include "stochinv/error.hpp"
#include "stochinv/special.hpp"

namespace stochinv {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Reduced Jacobians below this magnitude count as singular.
constexpr double kDetFloor = 1e-300;

Eigen::VectorXd mid_ranks(const Eigen::VectorXd& v) {
  const Eigen::Index n = v.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(),
            [&v](Eigen::Index a, Eigen::Index b) { return v(a) < v(b); });
  Eigen::VectorXd ranks(n);
  Eigen::Index i = 0;
  while (i < n) {
    Eigen::Index j = i;
    while (j + 1 < n && v(order[static_cast<std::size_t>(j + 1)]) ==
                            v(order[static_cast<std::size_t>(i)])) {
      ++j;
    }
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Eigen::Index k = i; k <= j; ++k) {
      ranks(order[static_cast<std::size_t>(k)]) = r;
    }
    i = j + 1;
  }
  return ranks;
}

void check_box(const Box& box, const char* what) {
  if (box.lo.size() != box.hi.size() || box.dim() < 1 ||
      !box.lo.allFinite() || !box.hi.allFinite() ||
      !(box.lo.array() < box.hi.array()).all()) {
    throw ConfigError(std::string(what) +
                      ": box must be finite with lo < hi in every coordinate");
  }
}

std::vector<double> to_vector(const Eigen::VectorXd& v) {
  return std::vector<double>(v.begin(), v.end());
}

}  // namespace

SurrogateMap::SurrogateMap(PCESurrogate surrogate, Box box, std::string name)
    : surrogate_(std::move(surrogate)),
      box_(std::move(box)),
      name_(std::move(name)) {
  check_box(box_, "SurrogateMap");
  if (box_.dim() != surrogate_.input_dim()) {
    throw ConfigError("SurrogateMap: box dimension does not match the input");
  }
}

Eigen::Index SurrogateMap::output_dim() const {
  return surrogate_.output_dim();
}

Eigen::VectorXd SurrogateMap::eval(const Eigen::VectorXd& x) const {
  check_input(x);
  return surrogate_.evaluate(x);
}

Eigen::MatrixXd SurrogateMap::jacobian(const Eigen::VectorXd& x) const {
  check_input(x);
  return surrogate_.jacobian(x);
}

double DataDensity::log_density(const Eigen::VectorXd& z) const {
  if (variant == Variant::pca_marginals) {
    if (z.size() != basis.n_z()) {
      throw DomainError("DataDensity: observation dimension mismatch");
    }
    return marginals.joint_log_pdf(project(basis, z)) + log_scale;
  }
  if (kernels.size() != 2) {
    throw ConfigError("DataDensity: the copula couples exactly two observables");
  }
  if (z.size() != 2) {
    throw DomainError("DataDensity: observation dimension mismatch");
  }
  double acc = kernels[0].log_pdf(z(0)) + kernels[1].log_pdf(z(1));
  // At zero correlation the copula term is exactly 0, so the joint is the
  // plain independence product.
  const GaussianCopula copula(correlation);
  acc += copula.log_density(kernels[0].cdf(z(0)), kernels[1].cdf(z(1)));
  return acc + log_scale;
}

nlohmann::json DataDensity::to_json() const {
  nlohmann::json j;
  if (variant == Variant::pca_marginals) {
    j["variant"] = "pca_marginals";
    j["marginal_mean"] = to_vector(marginals.mean);
    j["marginal_std"] = to_vector(marginals.std);
    j["eigenvalues"] = to_vector(basis.eigenvalues);
    j["explained"] = to_vector(basis.explained);
    j["discarded_variance_fraction"] = basis.discarded_fraction();
    j["n_reference"] = reference.cols();
  } else {
    j["variant"] = "kernel_copula";
    j["correlation"] = correlation;
    nlohmann::json ks = nlohmann::json::array();
    for (const auto& k : kernels) {
      ks.push_back({{"bandwidth", k.bandwidth()}});
    }
    j["kernels"] = ks;
    j["n_obs"] = {obs_a.size(), obs_b.size()};
  }
  j["log_scale"] = log_scale;
  return j;
}

DataDensity build_pca_data_density(const Eigen::MatrixXd& data,
                                   Eigen::Index r) {
  DataDensity d;
  d.variant = DataDensity::Variant::pca_marginals;
  d.basis = fit_pca(data, r);
  d.marginals = fit_component_marginals(d.basis, data);
  d.reference = data;
  return d;
}

DataDensity build_pca_data_density(const ObservationEnsemble& ensemble,
                                   Eigen::Index r) {
  return build_pca_data_density(ensemble.data, r);
}

double latent_normal_correlation(const Eigen::VectorXd& a,
                                 const Eigen::VectorXd& b) {
  if (a.size() != b.size()) {
    throw DataError("latent_normal_correlation: samples must be paired");
  }
  const Eigen::Index n = a.size();
  if (n < 3) {
    throw DataError("latent_normal_correlation: need at least three pairs");
  }
  const auto scores = [n](const Eigen::VectorXd& v) {
    const Eigen::VectorXd r = mid_ranks(v);
    Eigen::VectorXd eta(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      eta(i) = std_normal_quantile(r(i) / (static_cast<double>(n) + 1.0));
    }
    eta.array() -= eta.mean();
    return eta;
  };
  const Eigen::VectorXd ea = scores(a);
  const Eigen::VectorXd eb = scores(b);
  const double na = ea.norm();
  const double nb = eb.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(ea.dot(eb) / (na * nb), -1.0, 1.0);
}

DataDensity build_kernel_copula_density(const Eigen::VectorXd& obs_a,
                                        const Eigen::VectorXd& obs_b,
                                        const DifferentiableMap& model,
                                        const Box& box, Eigen::Index n_sim,
                                        RandomSource& rng) {
  if (obs_a.size() == 0 || obs_b.size() == 0) {
    throw DataError("build_kernel_copula_density: both observation sets "
                    "must be nonempty");
  }
  if (n_sim < 10) {
    throw DataError("build_kernel_copula_density: correlation estimation "
                    "needs at least ten simulations");
  }
  check_box(box, "build_kernel_copula_density");
  if (box.dim() != model.input_dim()) {
    throw ConfigError("build_kernel_copula_density: box dimension does not "
                      "match the model input");
  }
  if (model.output_dim() != 2) {
    throw ConfigError("build_kernel_copula_density: the model must produce "
                      "exactly two observables");
  }

  DataDensity d;
  d.variant = DataDensity::Variant::kernel_copula;
  d.kernels.emplace_back(obs_a);
  d.kernels.emplace_back(obs_b);
  d.obs_a = obs_a;
  d.obs_b = obs_b;

  Eigen::MatrixXd params(box.dim(), n_sim);
  for (Eigen::Index i = 0; i < n_sim; ++i) {
    for (Eigen::Index j = 0; j < box.dim(); ++j) {
      params(j, i) = rng.uniform(box.lo(j), box.hi(j));
    }
  }
  const Eigen::MatrixXd sims = eval_batch(model, params);
  d.correlation = latent_normal_correlation(sims.row(0).transpose(),
                                            sims.row(1).transpose());
  return d;
}

void validate(const TransformProblem& problem) {
  if (!problem.map) {
    throw ConfigError("transform problem has no forward map");
  }
  check_box(problem.box, "transform problem");
  if (problem.box.dim() != problem.map->input_dim()) {
    throw ConfigError("transform problem: box dimension does not match the "
                      "map input");
  }
  if (problem.density.variant == DataDensity::Variant::pca_marginals) {
    const PCABasis& basis = problem.density.basis;
    if (basis.r() != problem.map->input_dim()) {
      throw ConfigError("transform problem: the reduced map must be square, "
                        "r equal to the parameter count");
    }
    if (basis.n_z() != problem.map->output_dim()) {
      throw ConfigError("transform problem: principal basis does not match "
                        "the map output dimension");
    }
    if (problem.density.marginals.mean.size() != basis.r() ||
        problem.density.marginals.std.size() != basis.r()) {
      throw ConfigError("transform problem: marginal count does not match "
                        "the retained components");
    }
  } else {
    if (problem.density.kernels.size() != 2) {
      throw ConfigError("transform problem: the copula couples exactly two "
                        "observables");
    }
    if (problem.map->input_dim() != 2 || problem.map->output_dim() != 2) {
      throw ConfigError("transform problem: the kernel-copula variant needs "
                        "a square two-observable map");
    }
    if (!(std::fabs(problem.density.correlation) < 1.0)) {
      throw ConfigError("transform problem: copula correlation must lie "
                        "strictly inside (-1,1)");
    }
  }
}

double log_target(const TransformProblem& problem, const Eigen::VectorXd& x) {
  if (x.size() != problem.box.dim()) {
    throw DomainError("log_target: parameter dimension mismatch");
  }
  if (!problem.box.contains(x)) return -kInf;

  const Eigen::MatrixXd jac = problem.map->jacobian(x);
  double log_det;
  if (problem.density.variant == DataDensity::Variant::pca_marginals) {
    const ReducedJacobian rj = reduced_jacobian(problem.density.basis, jac);
    if (rj.singular || rj.abs_det < kDetFloor) return -kInf;
    log_det = std::log(rj.abs_det);
  } else {
    const double abs_det = std::fabs(jac.determinant());
    if (std::isnan(abs_det)) {
      throw NumericalError("log_target: Jacobian evaluated to NaN");
    }
    if (abs_det < kDetFloor) return -kInf;
    log_det = std::log(abs_det);
  }

  const double v = problem.density.log_density(problem.map->eval(x)) + log_det;
  if (std::isnan(v)) {
    throw NumericalError("log_target: target evaluated to NaN");
  }
  return v;
}

namespace {

// Deterministic search for a starting point when the box center has no
// density: a five-level grid while affordable, random probing otherwise.
Eigen::VectorXd scan_for_start(const TransformProblem& problem,
                               RandomSource& rng) {
  const Eigen::Index d = problem.box.dim();
  const Eigen::VectorXd width = problem.box.hi - problem.box.lo;
  Eigen::VectorXd best;
  double best_lp = -kInf;
  const auto consider = [&](const Eigen::VectorXd& x) {
    const double lp = log_target(problem, x);
    if (lp > best_lp) {
      best_lp = lp;
      best = x;
    }
  };

  double grid_total = 1.0;
  for (Eigen::Index j = 0; j < d; ++j) grid_total *= 5.0;
  if (grid_total <= 20000.0) {
    const double levels[5] = {0.1, 0.3, 0.5, 0.7, 0.9};
    std::vector<int> idx(static_cast<std::size_t>(d), 0);
    Eigen::VectorXd x(d);
    while (true) {
      for (Eigen::Index j = 0; j < d; ++j) {
        x(j) = problem.box.lo(j) +
               levels[idx[static_cast<std::size_t>(j)]] * width(j);
      }
      consider(x);
      Eigen::Index j = d - 1;
      while (j >= 0 && ++idx[static_cast<std::size_t>(j)] == 5) {
        idx[static_cast<std::size_t>(j)] = 0;
        --j;
      }
      if (j < 0) break;
    }
  } else {
    Eigen::VectorXd x(d);
    for (int i = 0; i < 2000; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) {
        x(j) = rng.uniform(problem.box.lo(j), problem.box.hi(j));
      }
      consider(x);
    }
  }
  if (!std::isfinite(best_lp)) {
    throw DataError("sample_parameters: no point of finite target density "
                    "found in the feasible box");
  }
  return best;
}

}  // namespace

TransformResult sample_parameters(const TransformProblem& problem,
                                  const TransformConfig& config,
                                  RandomSource& rng) {
  validate(problem);
  if (config.n_steps < 1) {
    throw ConfigError("sample_parameters: n_steps must be positive");
  }
  if (config.histogram_bins < 1) {
    throw ConfigError("sample_parameters: histogram_bins must be positive");
  }
  const Eigen::Index d = problem.box.dim();

  TargetDensity target;
  target.dim = d;
  target.log_density = [&problem](const Eigen::VectorXd& x) {
    return log_target(problem, x);
  };

  Eigen::VectorXd x0 = 0.5 * (problem.box.lo + problem.box.hi);
  if (!std::isfinite(log_target(problem, x0))) {
    x0 = scan_for_start(problem, rng);
  }

  ProposalSpec initial;
  initial.step_std = (problem.box.hi - problem.box.lo) / 10.0;
  TransformResult res;
  res.tuning = tune_proposal(target, initial, x0, rng, {},
                             config.max_tune_rounds, config.pilot_steps);
  res.chain = run_chain(target, res.tuning.proposal, x0, config.n_steps,
                        config.burn_in_fraction, rng, config.thin);

  const auto post = res.chain.post_burn_in();
  const Eigen::Index n = post.rows();
  res.mean = post.colwise().mean().transpose();
  Eigen::MatrixXd centered = post;
  centered.rowwise() -= res.mean.transpose();
  res.std.resize(d);
  if (n > 1) {
    res.std = (centered.colwise().squaredNorm() /
               static_cast<double>(n - 1)).cwiseSqrt().transpose();
  } else {
    res.std.setZero();
  }
  const Eigen::MatrixXd gram = centered.transpose() * centered;
  res.corr.resize(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      if (i == j) {
        res.corr(i, j) = 1.0;
        continue;
      }
      const double den = std::sqrt(gram(i, i) * gram(j, j));
      res.corr(i, j) =
          den > 0.0 ? std::clamp(gram(i, j) / den, -1.0, 1.0) : 0.0;
    }
  }

  res.histograms.resize(static_cast<std::size_t>(d));
  for (Eigen::Index j = 0; j < d; ++j) {
    Histogram& h = res.histograms[static_cast<std::size_t>(j)];
    const double lo = problem.box.lo(j);
    const double w = problem.box.hi(j) - lo;
    h.edges = Eigen::VectorXd::LinSpaced(config.histogram_bins + 1, lo,
                                         problem.box.hi(j));
    h.counts = Eigen::VectorXi::Zero(config.histogram_bins);
    for (Eigen::Index i = 0; i < n; ++i) {
      auto bin = static_cast<Eigen::Index>((post(i, j) - lo) / w *
                                           static_cast<double>(
                                               config.histogram_bins));
      bin = std::clamp<Eigen::Index>(bin, 0, config.histogram_bins - 1);
      h.counts(bin) += 1;
    }
  }
  return res;
}

nlohmann::json TransformResult::summary() const {
  nlohmann::json j;
  j["total_steps"] = chain.total_steps;
  j["kept_states"] = chain.kept();
  j["post_burn_in"] = chain.kept() - chain.burn_in;
  j["acceptance_rate"] = chain.acceptance_rate;
  j["tune_rounds"] = tuning.rounds;
  j["mean"] = to_vector(mean);
  j["std"] = to_vector(std);
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < corr.rows(); ++i) {
    rows.push_back(to_vector(corr.row(i).transpose()));
  }
  j["correlation"] = rows;
  nlohmann::json hs = nlohmann::json::array();
  for (const auto& h : histograms) {
    std::vector<long> counts(h.counts.begin(), h.counts.end());
    hs.push_back({{"edges", to_vector(h.edges)}, {"counts", counts}});
  }
  j["histograms"] = hs;
  return j;
}

void TransformResult::to_csv(const std::string& path) const {
  const auto post = chain.post_burn_in();
  const Eigen::Index n = post.rows();
  const Eigen::Index d = post.cols();
  std::vector<std::string> header;
  for (Eigen::Index j = 0; j < d; ++j) {
    header.push_back("x_" + std::to_string(j + 1));
  }
  header.push_back("logp");
  Eigen::MatrixXd rows(n, d + 1);
  rows.leftCols(d) = post;
  rows.col(d) = chain.log_densities.segment(chain.burn_in, n);
  csv::write(path, header, rows);
}

IterationResult iterate_correlation(const TransformProblem& problem,
                                    Eigen::Index rounds,
                                    const TransformConfig& config,
                                    RandomSource& rng) {
  if (problem.density.variant != DataDensity::Variant::kernel_copula) {
    throw ConfigError("iterate_correlation: only the kernel_copula variant "
                      "re-estimates its correlation");
  }
  if (rounds < 0) {
    throw ConfigError("iterate_correlation: rounds must be nonnegative");
  }

  IterationResult out;
  out.problem = problem;
  out.correlation_trace.push_back(problem.density.correlation);
  out.rounds.push_back(sample_parameters(out.problem, config, rng));

  for (Eigen::Index k = 0; k < rounds; ++k) {
    const auto post = out.rounds.back().chain.post_burn_in();
    const Eigen::Index stride = std::max<Eigen::Index>(1, post.rows() / 5000);
    const Eigen::Index count = (post.rows() + stride - 1) / stride;
    if (count < 3) {
      throw DataError("iterate_correlation: too few posterior draws to "
                      "re-estimate the correlation");
    }
    Eigen::MatrixXd params(post.cols(), count);
    for (Eigen::Index i = 0; i < count; ++i) {
      params.col(i) = post.row(i * stride).transpose();
    }
    const Eigen::MatrixXd sims = eval_batch(*out.problem.map, params);
    out.problem.density.correlation = latent_normal_correlation(
        sims.row(0).transpose(), sims.row(1).transpose());
    out.correlation_trace.push_back(out.problem.density.correlation);
    out.rounds.push_back(sample_parameters(out.problem, config, rng));
  }
  return out;
}

}  // namespace stochinv
