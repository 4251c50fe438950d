// Acceptance gate: one check per release criterion, one verdict line each.
// Exits nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stochinv/batch.hpp"
#include "stochinv/commands.hpp"
#include "stochinv/config.hpp"
#include "stochinv/diagnostics.hpp"
#include "stochinv/distributions.hpp"
#include "stochinv/forward_model.hpp"
#include "stochinv/hier_bayes.hpp"
#include "stochinv/manifest.hpp"
#include "stochinv/mcmc.hpp"
#include "stochinv/pca.hpp"
#include "stochinv/pce.hpp"
#include "stochinv/rng.hpp"
#include "stochinv/transform.hpp"

using namespace stochinv;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 12345;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* label, const Verdict& v, double secs) {
  std::printf("[%s] criterion %2d  %-44s %s  (%.1f s)\n",
              v.pass ? "PASS" : "FAIL", id, label, v.detail.c_str(), secs);
  std::fflush(stdout);
  if (!v.pass) ++failures;
}

std::string fmt(const char* pattern, double a, double b = 0.0,
                double c = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), pattern, a, b, c);
  return buf;
}

// Shared damage study data for the first two criteria.
struct DamageStudy {
  Eigen::VectorXd tensile, cyclic;
  double input_mean_s = 0.0;
};

DamageStudy make_damage_study() {
  LandgrafMorrowModel model;
  RandomSource rng(kSeed, 0);
  Eigen::VectorXd sig(2);
  sig << 0.1, 0.8;
  const ObservationEnsemble ens = generate_synthetic_ensemble(
      model, damage_generation_marginals(), 80, NoiseSpec(sig), rng);
  DamageStudy st;
  st.tensile = ens.data.row(0).head(50).transpose();
  st.cyclic = ens.data.row(1).tail(30).transpose();
  st.input_mean_s = ens.provenance.row(0).mean();
  return st;
}

Verdict criterion_hier_bayes(const DamageStudy& st, double secs_limit,
                             double* elapsed_out) {
  const auto t0 = std::chrono::steady_clock::now();
  const HierModel hm = damage_hier_model(st.tensile, st.cyclic, 0.1, 0.8);
  HierConfig hc;
  hc.n_steps = 50000;
  RandomSource rng(kSeed, 2);
  RandomSource init_rng = rng.derive(1);
  hc.init = data_consistent_init(hm, init_rng);
  const HierResult res = run_hier_inference(hm, hc, rng);

  const auto post = res.chain.post_burn_in();
  const Eigen::Index nth = hm.n_theta();
  double acc = 0.0;
  for (Eigen::Index r = 0; r < post.rows(); ++r) {
    acc += structural_means(hm, post.row(r).tail(nth).transpose())(0);
  }
  const double identified = acc / static_cast<double>(post.rows());
  const double err = std::fabs(identified - st.input_mean_s);
  const double secs = seconds_since(t0);
  *elapsed_out = secs;

  Verdict v;
  v.pass = err <= 0.022 && secs <= secs_limit;
  v.detail = fmt("|mean(S) err|=%.4f <= 0.022", err);
  return v;
}

Verdict criterion_transform_damage(const DamageStudy& st, double secs_limit,
                                   double* elapsed_out) {
  const auto t0 = std::chrono::steady_clock::now();
  auto model = std::make_shared<LandgrafMorrowModel>();
  RandomSource sim_rng(kSeed, 1);
  DataDensity density =
      build_kernel_copula_density(st.tensile, st.cyclic, *model,
                                  model->feasible_domain(), 4000, sim_rng);
  TransformProblem problem{model, std::move(density),
                           model->feasible_domain()};
  TransformConfig tc;
  tc.n_steps = 50000;
  RandomSource rng(kSeed, 3);
  const TransformResult res = sample_parameters(problem, tc, rng);

  const double err = std::fabs(res.mean(0) - st.input_mean_s);
  const double corr = res.corr(0, 1);
  const double secs = seconds_since(t0);
  *elapsed_out = secs;

  Verdict v;
  v.pass = err <= 0.022 && corr < 0.0 && secs <= secs_limit;
  v.detail = fmt("|mean(S) err|=%.4f <= 0.022, corr(S,s)=%.3f < 0", err, corr);
  return v;
}

// g(x) = 2x as a degree-1 surrogate, data density standard normal.
Verdict criterion_linear_gaussian(double secs_limit, double* elapsed_out) {
  const auto t0 = std::chrono::steady_clock::now();
  MultiIndexSet idx = MultiIndexSet::total_degree(1, 1);
  Eigen::MatrixXd coeffs(2, 1);
  coeffs << 0.0, 2.0;
  Standardization sm;
  sm.shift = Eigen::VectorXd::Zero(1);
  sm.scale = Eigen::VectorXd::Ones(1);
  Box box{Eigen::VectorXd::Constant(1, -5.0),
          Eigen::VectorXd::Constant(1, 5.0)};
  auto map = std::make_shared<SurrogateMap>(PCESurrogate(idx, coeffs, sm), box);

  DataDensity density;
  density.variant = DataDensity::Variant::pca_marginals;
  density.basis.mean = Eigen::VectorXd::Zero(1);
  density.basis.components = Eigen::MatrixXd::Identity(1, 1);
  density.basis.eigenvalues = Eigen::VectorXd::Ones(1);
  density.basis.explained = Eigen::VectorXd::Ones(1);
  density.basis.total_variance = 1.0;
  density.marginals.mean = Eigen::VectorXd::Zero(1);
  density.marginals.std = Eigen::VectorXd::Ones(1);

  TransformProblem problem{map, std::move(density), box};
  TransformConfig tc;
  tc.n_steps = 125000;  // leaves 100000 rows after 20 % burn-in
  RandomSource rng(kSeed, 4);
  const TransformResult res = sample_parameters(problem, tc, rng);

  const auto post = res.chain.post_burn_in();
  const Eigen::VectorXd ess = effective_sample_size(post.leftCols(1));
  const double sd = res.std(0);
  const double se_mean = sd / std::sqrt(ess(0));
  const double se_std = sd / std::sqrt(2.0 * ess(0));
  const double secs = seconds_since(t0);
  *elapsed_out = secs;

  Verdict v;
  v.pass = post.rows() == 100000 && std::fabs(res.mean(0)) <= 3.0 * se_mean &&
           std::fabs(sd - 0.5) <= 3.0 * se_std && secs <= secs_limit;
  v.detail = fmt("|mean|=%.4f <= %.4f, |std-0.5|=%.4f", std::fabs(res.mean(0)),
                 3.0 * se_mean, std::fabs(sd - 0.5));
  return v;
}

// Full cubic in two inputs with hand-coded partial derivatives.
class CubicBench final : public DifferentiableMap {
 public:
  CubicBench() {
    box_.lo = Eigen::VectorXd(2);
    box_.hi = Eigen::VectorXd(2);
    box_.lo << -1.0, 0.5;
    box_.hi << 2.0, 3.0;
  }

  std::string name() const override { return "cubic_bench"; }
  Eigen::Index input_dim() const override { return 2; }
  Eigen::Index output_dim() const override { return 2; }
  const Box& feasible_domain() const override { return box_; }

  Eigen::VectorXd eval(const Eigen::VectorXd& p) const override {
    check_input(p);
    const double x = p(0), y = p(1);
    Eigen::VectorXd z(2);
    z(0) = 0.4 + 1.1 * x - 0.6 * y + 0.8 * x * x - 0.5 * x * y +
           0.3 * y * y + 0.25 * x * x * x - 0.15 * x * x * y +
           0.1 * x * y * y - 0.05 * y * y * y;
    z(1) = -0.2 + 0.7 * x + 0.4 * y - 0.3 * x * x + 0.6 * x * y -
           0.2 * y * y + 0.1 * x * x * x + 0.2 * x * x * y -
           0.25 * x * y * y + 0.15 * y * y * y;
    return z;
  }

  Eigen::MatrixXd jacobian(const Eigen::VectorXd& p) const override {
    check_input(p);
    const double x = p(0), y = p(1);
    Eigen::MatrixXd j(2, 2);
    j(0, 0) = 1.1 + 1.6 * x - 0.5 * y + 0.75 * x * x - 0.3 * x * y +
              0.1 * y * y;
    j(0, 1) = -0.6 - 0.5 * x + 0.6 * y - 0.15 * x * x + 0.2 * x * y -
              0.15 * y * y;
    j(1, 0) = 0.7 - 0.6 * x + 0.6 * y + 0.3 * x * x + 0.4 * x * y -
              0.25 * y * y;
    j(1, 1) = 0.4 + 0.6 * x - 0.4 * y + 0.2 * x * x - 0.5 * x * y +
              0.45 * y * y;
    return j;
  }

 private:
  Box box_;
};

Verdict criterion_pce_exactness() {
  CubicBench model;
  const Box& box = model.feasible_domain();
  const std::vector<DistributionSpec> dists = {
      DistributionSpec::uniform(box.lo(0), box.hi(0)),
      DistributionSpec::uniform(box.lo(1), box.hi(1))};
  RandomSource rng(kSeed, 5);
  const FitResult fit = fit_regression(model, dists, 3, 200, rng);

  RandomSource test_rng(kSeed, 6);
  double max_err = 0.0;
  for (int i = 0; i < 1000; ++i) {
    Eigen::VectorXd x(2);
    x << test_rng.uniform(box.lo(0), box.hi(0)),
        test_rng.uniform(box.lo(1), box.hi(1));
    max_err = std::max(
        max_err,
        (fit.surrogate.evaluate(x) - model.eval(x)).cwiseAbs().maxCoeff());
  }

  // Central differences on the surrogate itself, step well inside the
  // cubic's truncation-versus-roundoff sweet spot.
  double max_rel = 0.0;
  for (int i = 0; i < 100; ++i) {
    Eigen::VectorXd x(2);
    x << test_rng.uniform(box.lo(0) + 0.01, box.hi(0) - 0.01),
        test_rng.uniform(box.lo(1) + 0.01, box.hi(1) - 0.01);
    const Eigen::MatrixXd ja = fit.surrogate.jacobian(x);
    Eigen::MatrixXd jfd(2, 2);
    for (int d = 0; d < 2; ++d) {
      const double h = 1e-5 * (box.hi(d) - box.lo(d));
      Eigen::VectorXd xp = x, xm = x;
      xp(d) += h;
      xm(d) -= h;
      jfd.col(d) =
          (fit.surrogate.evaluate(xp) - fit.surrogate.evaluate(xm)) /
          (2.0 * h);
    }
    max_rel = std::max(max_rel, (ja - jfd).norm() / jfd.norm());
  }

  Verdict v;
  v.pass = max_err < 1e-8 && max_rel < 1e-6;
  v.detail = fmt("max|err|=%.1e < 1e-8, jac rel=%.1e < 1e-6", max_err, max_rel);
  return v;
}

Verdict criterion_pca_properties() {
  const Eigen::Index nz = 30, n = 200;
  RandomSource rng(kSeed, 7);
  Eigen::MatrixXd mixing(nz, nz);
  for (Eigen::Index i = 0; i < mixing.size(); ++i) mixing(i) = rng.normal();
  Eigen::MatrixXd latent(nz, n);
  for (Eigen::Index i = 0; i < latent.size(); ++i) latent(i) = rng.normal();
  Eigen::MatrixXd data = mixing * latent;
  data.colwise() += Eigen::VectorXd::LinSpaced(nz, -1.0, 2.0);

  const PCABasis basis = fit_pca(data, nz);
  const double ortho = (basis.components.transpose() * basis.components -
                        Eigen::MatrixXd::Identity(nz, nz))
                           .cwiseAbs()
                           .maxCoeff();
  bool ordered = true;
  for (Eigen::Index k = 1; k < nz; ++k) {
    if (basis.eigenvalues(k) > basis.eigenvalues(k - 1)) ordered = false;
  }
  double recon = 0.0;
  for (Eigen::Index c = 0; c < n; c += 20) {
    const Eigen::VectorXd y = data.col(c);
    recon = std::max(
        recon, (reconstruct(basis, project(basis, y)) - y).cwiseAbs().maxCoeff());
  }
  const Eigen::MatrixXd q = project_batch(basis, data);
  const Eigen::MatrixXd centered =
      q.colwise() - q.rowwise().mean();
  const Eigen::MatrixXd cov =
      centered * centered.transpose() / static_cast<double>(n - 1);
  double cross = 0.0;
  for (Eigen::Index i = 0; i < nz; ++i) {
    for (Eigen::Index j = 0; j < nz; ++j) {
      if (i == j) continue;
      cross = std::max(cross, std::fabs(cov(i, j)) /
                                  std::sqrt(cov(i, i) * cov(j, j)));
    }
  }

  Verdict v;
  v.pass = ortho < 1e-10 && ordered && recon < 1e-10 && cross < 1e-8;
  v.detail =
      fmt("ortho=%.1e, recon=%.1e, cross-corr=%.1e", ortho, recon, cross);
  return v;
}

Verdict criterion_tuner_and_ess() {
  TargetDensity target;
  target.dim = 10;
  target.log_density = [](const Eigen::VectorXd& x) {
    return -0.5 * x.squaredNorm();
  };
  RandomSource rng(kSeed, 8);
  const TuneResult tuned =
      tune_proposal(target, ProposalSpec::isotropic(10, 8.0),
                    Eigen::VectorXd::Zero(10), rng);
  const double rate = tuned.acceptances.back();

  const Eigen::Index n = 5000;
  Eigen::MatrixXd iid(n, 10);
  for (Eigen::Index i = 0; i < iid.size(); ++i) iid(i) = rng.normal();
  const double ess_min = effective_sample_size(iid).minCoeff();

  Verdict v;
  v.pass = rate >= 0.20 && rate <= 0.50 && tuned.rounds <= 50 &&
           ess_min >= 0.8 * static_cast<double>(n);
  v.detail = fmt("acceptance=%.3f in [0.20,0.50], iid ESS=%.0f >= 4000", rate,
                 ess_min);
  return v;
}

Verdict criterion_copula() {
  const GaussianCopula independent(0.0);
  const bool unit = independent.density(0.123, 0.987) == 1.0 &&
                    independent.density(0.5, 0.5) == 1.0;

  double worst = 0.0;
  for (const double rho : {-0.9, 0.0, 0.5, 0.9}) {
    const GaussianCopula c(rho);
    const int n = 1000;
    const double h = 1.0 / n;
    double integral = 0.0;
    for (int i = 0; i < n; ++i) {
      const double u = (i + 0.5) * h;
      double row = 0.0;
      for (int j = 0; j < n; ++j) {
        row += c.density(u, (j + 0.5) * h);
      }
      integral += row * h * h;
    }
    worst = std::max(worst, std::fabs(integral - 1.0));
  }

  Verdict v;
  v.pass = unit && worst <= 1e-3;
  v.detail = std::string("rho=0 exact: ") + (unit ? "yes" : "no") +
             fmt(", max|integral-1|=%.1e <= 1e-3", worst);
  return v;
}

Verdict criterion_srcc() {
  ToyCyclicModel model;
  const Box& box = model.feasible_domain();
  const Eigen::Index n = 10000;
  RandomSource rng(kSeed, 9);
  Eigen::MatrixXd xs(model.input_dim(), n);
  for (Eigen::Index c = 0; c < n; ++c) {
    for (Eigen::Index d = 0; d < model.input_dim(); ++d) {
      xs(d, c) = rng.uniform(box.lo(d), box.hi(d));
    }
  }
  const Eigen::MatrixXd ys = eval_batch(model, xs);
  const SensitivityReport rep = srcc(xs.transpose(), ys.transpose());
  const double inert = rep.srcc.row(5).cwiseAbs().maxCoeff();

  Eigen::MatrixXd mx(200, 1), my(200, 2);
  for (Eigen::Index i = 0; i < 200; ++i) {
    mx(i, 0) = rng.uniform(-2.0, 2.0);
    my(i, 0) = std::pow(mx(i, 0), 3);
    my(i, 1) = -mx(i, 0);
  }
  const SensitivityReport mono = srcc(mx, my);
  const double dev = std::max(std::fabs(mono.srcc(0, 0) - 1.0),
                              std::fabs(mono.srcc(0, 1) + 1.0));

  Verdict v;
  v.pass = inert < 0.05 && dev <= 1e-14;
  v.detail = fmt("max|SRCC(x6)|=%.4f < 0.05, monotone dev=%.1e", inert, dev);
  return v;
}

Verdict criterion_error_stats() {
  Eigen::VectorXd d(5), m(5);
  d << 1.0, 2.0, -3.0, 0.5, 4.0;
  m << 1.1, 1.9, -2.5, 0.9, 3.6;
  double sum_abs = 0.0, sum_rel = 0.0;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    sum_abs += std::fabs(d(i) - m(i));
    sum_rel += std::fabs((d(i) - m(i)) / d(i));
  }
  const double mae_oracle = sum_abs / static_cast<double>(d.size());
  const double mape_oracle = 100.0 * sum_rel / static_cast<double>(d.size());
  const bool exact = mae(d, m) == mae_oracle &&
                     mape(d, m).percent == mape_oracle &&
                     mape(d, m).excluded == 0;

  Eigen::VectorXd hd(2), hm(2);
  hd << 1.0, 2.0;
  hm << 1.1, 1.9;
  const double hand_mae = mae(hd, hm);
  const double hand_mape = mape(hd, hm).percent;
  const bool hand = std::fabs(hand_mae - 0.1) < 1e-12 &&
                    std::fabs(hand_mape - 7.5) < 1e-12;

  Verdict v;
  v.pass = exact && hand;
  v.detail = std::string("loop-oracle exact: ") + (exact ? "yes" : "no") +
             fmt(", MAE=%.3f, MAPE=%.2f%%", hand_mae, hand_mape);
  return v;
}

RunConfig determinism_config(const std::string& dir) {
  nlohmann::json j{
      {"experiment", "determinism-check"},
      {"model", "landgraf_morrow"},
      {"output_dir", dir},
      {"synthetic",
       {{"recipe", "damage"}, {"n_tensile", 6}, {"n_cyclic", 4}, {"seed", 77}}},
      {"surrogate", {{"degree", 2}, {"n_train", 40}}},
      {"mcmc",
       {{"steps", 800},
        {"pilot_steps", 100},
        {"max_tune_rounds", 5},
        {"n_sim", 200},
        {"seed", 77}}}};
  return RunConfig::parse(j);
}

bool same_outputs(const RunManifest& a, const RunManifest& b) {
  if (a.outputs.size() != b.outputs.size() || a.outputs.empty()) return false;
  for (std::size_t i = 0; i < a.outputs.size(); ++i) {
    if (a.outputs[i].path != b.outputs[i].path ||
        a.outputs[i].digest != b.outputs[i].digest ||
        a.outputs[i].bytes != b.outputs[i].bytes) {
      return false;
    }
  }
  return true;
}

Verdict criterion_determinism() {
  const std::string root = "acceptance_tmp";
  fs::remove_all(root);
  RunConfig ca = determinism_config(root + "/a");
  RunConfig cb = determinism_config(root + "/b");
  const RunManifest ga = cmd_generate(ca), gb = cmd_generate(cb);
  const RunManifest fa = cmd_fit_surrogate(ca), fb = cmd_fit_surrogate(cb);
  const RunManifest ia = cmd_infer(ca), ib = cmd_infer(cb);
  const RunManifest da = cmd_diagnose(ca), db = cmd_diagnose(cb);
  bool ok = same_outputs(ga, gb) && same_outputs(fa, fb) &&
            same_outputs(ia, ib) && same_outputs(da, db);
  const std::size_t files = ga.outputs.size() + fa.outputs.size() +
                            ia.outputs.size() + da.outputs.size();

  // Digests recorded at write time must match the files on disk afterwards.
  for (const RunManifest* m : {&ga, &fa, &ia, &da}) {
    for (const auto& e : m->outputs) {
      if (digest_hex(fnv1a_digest_file(root + "/a/" + e.path)) != e.digest) {
        ok = false;
      }
    }
  }

  Verdict v;
  v.pass = ok;
  v.detail = "pipeline rerun digest-identical across " +
             std::to_string(files) + " files";
  return v;
}

}  // namespace

int main() {
  std::printf("acceptance gate, seed %llu\n",
              static_cast<unsigned long long>(kSeed));

  const auto t_all = std::chrono::steady_clock::now();
  const DamageStudy study = make_damage_study();

  double secs = 0.0;
  {
    const Verdict v = criterion_hier_bayes(study, 600.0, &secs);
    report(1, "damage study, hierarchical Bayes", v, secs);
  }
  {
    const Verdict v = criterion_transform_damage(study, 300.0, &secs);
    report(2, "damage study, transformation formulation", v, secs);
  }
  {
    const Verdict v = criterion_linear_gaussian(60.0, &secs);
    report(3, "linear-Gaussian transform oracle", v, secs);
  }
  {
    const auto t0 = std::chrono::steady_clock::now();
    const Verdict v = criterion_pce_exactness();
    report(4, "surrogate exactness and Jacobian", v, seconds_since(t0));
  }
  {
    const auto t0 = std::chrono::steady_clock::now();
    const Verdict v = criterion_pca_properties();
    report(5, "principal component properties", v, seconds_since(t0));
  }
  {
    const auto t0 = std::chrono::steady_clock::now();
    const Verdict v = criterion_tuner_and_ess();
    report(6, "proposal tuner and ESS floor", v, seconds_since(t0));
  }
  {
    const auto t0 = std::chrono::steady_clock::now();
    const Verdict v = criterion_copula();
    report(7, "copula unit mass", v, seconds_since(t0));
  }
  {
    const auto t0 = std::chrono::steady_clock::now();
    const Verdict v = criterion_srcc();
    report(8, "rank sensitivity of the inert parameter", v,
           seconds_since(t0));
  }
  {
    const auto t0 = std::chrono::steady_clock::now();
    const Verdict v = criterion_error_stats();
    report(9, "error statistics versus loop oracles", v, seconds_since(t0));
  }
  {
    const auto t0 = std::chrono::steady_clock::now();
    const Verdict v = criterion_determinism();
    report(10, "pipeline determinism", v, seconds_since(t0));
  }

  std::printf("%d of 10 criteria passed (%.1f s total)\n", 10 - failures,
              seconds_since(t_all));
  return failures == 0 ? 0 : 1;
}
