#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <limits>
#include <memory>

#include "stochinv/csv.hpp"
#include "stochinv/error.hpp"
#include "stochinv/special.hpp"
#include "stochinv/transform.hpp"

using namespace stochinv;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

class AffineMap final : public DifferentiableMap {
 public:
  AffineMap(Eigen::MatrixXd a, Eigen::VectorXd b, Box box)
      : a_(std::move(a)), b_(std::move(b)), box_(std::move(box)) {}

  std::string name() const override { return "affine"; }
  Eigen::Index input_dim() const override { return a_.cols(); }
  Eigen::Index output_dim() const override { return a_.rows(); }
  const Box& feasible_domain() const override { return box_; }
  Eigen::VectorXd eval(const Eigen::VectorXd& x) const override {
    check_input(x);
    return a_ * x + b_;
  }
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const override {
    check_input(x);
    return a_;
  }

 private:
  Eigen::MatrixXd a_;
  Eigen::VectorXd b_;
  Box box_;
};

// Two observables driven by the same coordinate, so their ranks coincide.
class PairModel final : public DifferentiableMap {
 public:
  PairModel() : box_{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2)} {}

  std::string name() const override { return "pair"; }
  Eigen::Index input_dim() const override { return 2; }
  Eigen::Index output_dim() const override { return 2; }
  const Box& feasible_domain() const override { return box_; }
  Eigen::VectorXd eval(const Eigen::VectorXd& x) const override {
    check_input(x);
    Eigen::VectorXd z(2);
    z << x(0), std::exp(x(0));
    return z;
  }
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const override {
    check_input(x);
    Eigen::MatrixXd j(2, 2);
    j << 1.0, 0.0, std::exp(x(0)), 0.0;
    return j;
  }

 private:
  Box box_;
};

Box unit_box(Eigen::Index d) {
  return Box{Eigen::VectorXd::Zero(d), Eigen::VectorXd::Ones(d)};
}

// g(x) = 2x as a degree-1 polynomial surrogate on [-5, 5].
std::shared_ptr<SurrogateMap> doubling_map() {
  MultiIndexSet idx = MultiIndexSet::total_degree(1, 1);
  Eigen::MatrixXd coeffs(2, 1);
  coeffs << 0.0, 2.0;
  Standardization sm;
  sm.shift = Eigen::VectorXd::Zero(1);
  sm.scale = Eigen::VectorXd::Ones(1);
  Box box{Eigen::VectorXd::Constant(1, -5.0),
          Eigen::VectorXd::Constant(1, 5.0)};
  return std::make_shared<SurrogateMap>(PCESurrogate(idx, coeffs, sm), box);
}

DataDensity standard_normal_density_1d() {
  DataDensity d;
  d.variant = DataDensity::Variant::pca_marginals;
  d.basis.mean = Eigen::VectorXd::Zero(1);
  d.basis.components = Eigen::MatrixXd::Identity(1, 1);
  d.basis.eigenvalues = Eigen::VectorXd::Ones(1);
  d.basis.explained = Eigen::VectorXd::Ones(1);
  d.basis.total_variance = 1.0;
  d.marginals.mean = Eigen::VectorXd::Zero(1);
  d.marginals.std = Eigen::VectorXd::Ones(1);
  return d;
}

struct DamageObs {
  Eigen::VectorXd tensile;  // noisy S readings
  Eigen::VectorXd cyclic;   // noisy cycle counts
  ObservationEnsemble ensemble;
};

DamageObs make_damage_obs(int n_tens, int n_cyc, std::uint64_t seed) {
  DamageObs o;
  LandgrafMorrowModel lm;
  const std::vector<DistributionSpec> gen = {
      DistributionSpec::beta(2.0, 2.0, 0.1, 1.2),
      DistributionSpec::beta(2.0, 2.0, 1.0, 2.8)};
  RandomSource rng(seed, 0);
  Eigen::VectorXd sig(2);
  sig << 0.1, 0.8;
  o.ensemble = generate_synthetic_ensemble(
      lm, gen, static_cast<std::size_t>(n_tens + n_cyc), NoiseSpec(sig), rng);
  o.tensile = o.ensemble.data.row(0).head(n_tens).transpose();
  o.cyclic = o.ensemble.data.row(1).segment(n_tens, n_cyc).transpose();
  return o;
}

TransformProblem damage_problem(const DamageObs& obs, std::uint64_t seed,
                                Eigen::Index n_sim = 4000) {
  auto lm = std::make_shared<LandgrafMorrowModel>();
  RandomSource rng(seed, 1);
  TransformProblem p;
  p.map = lm;
  p.box = lm->feasible_domain();
  p.density = build_kernel_copula_density(obs.tensile, obs.cyclic, *lm,
                                          lm->feasible_domain(), n_sim, rng);
  return p;
}

}  // namespace

TEST_CASE("surrogate map exposes the polynomial through the map interface") {
  auto g = doubling_map();
  CHECK(g->input_dim() == 1);
  CHECK(g->output_dim() == 1);
  Eigen::VectorXd x(1);
  x << 1.25;
  CHECK(g->eval(x)(0) == 2.5);
  CHECK(g->jacobian(x)(0, 0) == doctest::Approx(2.0).epsilon(1e-14));
  x << 5.5;
  CHECK_THROWS_AS(g->eval(x), DomainError);
  CHECK_THROWS_AS(g->jacobian(x), DomainError);

  MultiIndexSet idx = MultiIndexSet::total_degree(2, 1);
  Standardization sm;
  sm.shift = Eigen::VectorXd::Zero(2);
  sm.scale = Eigen::VectorXd::Ones(2);
  Eigen::MatrixXd coeffs = Eigen::MatrixXd::Zero(3, 1);
  CHECK_THROWS_AS(SurrogateMap(PCESurrogate(idx, coeffs, sm), unit_box(1)),
                  ConfigError);
}

TEST_CASE("linear doubling map with standard normal data is analytic") {
  TransformProblem p;
  p.map = doubling_map();
  p.density = standard_normal_density_1d();
  p.box = Box{Eigen::VectorXd::Constant(1, -5.0),
              Eigen::VectorXd::Constant(1, 5.0)};
  validate(p);

  // f_X(x) = f_Z(2x) * 2, the density of N(0, 0.25).
  for (double xv = -2.0; xv <= 2.0; xv += 0.5) {
    Eigen::VectorXd x(1);
    x << xv;
    const double analytic = std_normal_log_pdf(2.0 * xv) + std::log(2.0);
    CHECK(log_target(p, x) == doctest::Approx(analytic).epsilon(1e-10));
  }
  Eigen::VectorXd out(1);
  out << 5.01;
  CHECK(log_target(p, out) == -kInf);

  TransformConfig cfg;
  cfg.n_steps = 100000;
  RandomSource rng(42, 0);
  TransformResult res = sample_parameters(p, cfg, rng);

  CHECK(res.chain.acceptance_rate >= 0.20);
  CHECK(res.chain.acceptance_rate <= 0.50);
  const auto post = res.chain.post_burn_in();
  const double ess = effective_sample_size(post)(0);
  REQUIRE(ess > 100.0);
  const double se_mean = 0.5 / std::sqrt(ess);
  const double se_std = 0.5 / std::sqrt(2.0 * ess);
  CHECK(std::fabs(res.mean(0) - 0.0) < 3.0 * se_mean);
  CHECK(std::fabs(res.std(0) - 0.5) < 3.0 * se_std);
  CHECK(res.corr(0, 0) == 1.0);

  // Histogram covers the box and counts every retained sample.
  REQUIRE(res.histograms.size() == 1);
  const auto& h = res.histograms[0];
  CHECK(h.edges(0) == -5.0);
  CHECK(h.edges(h.edges.size() - 1) == 5.0);
  CHECK(h.counts.sum() == post.rows());

  auto j = res.summary();
  CHECK(j["total_steps"] == 100000);
  CHECK(j["histograms"].size() == 1);

  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "stochinv_transform_test";
  fs::create_directories(dir);
  const std::string path = (dir / "samples.csv").string();
  res.to_csv(path);
  auto table = csv::read(path);
  REQUIRE(table.header.size() == 2);
  CHECK(table.header[0] == "x_1");
  CHECK(table.header[1] == "logp");
  CHECK(table.rows.rows() == post.rows());
  CHECK(table.rows(0, 0) == post(0, 0));
  CHECK(table.rows(7, 1) ==
        res.chain.log_densities(res.chain.burn_in + 7));
  fs::remove_all(dir);
}

TEST_CASE("identity map composes to the bare data density") {
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(2, 2);
  auto id = std::make_shared<AffineMap>(a, Eigen::VectorXd::Zero(2),
                                        unit_box(2));
  TransformProblem p;
  p.map = id;
  p.box = unit_box(2);
  p.density.variant = DataDensity::Variant::pca_marginals;
  p.density.basis.mean = Eigen::VectorXd::Zero(2);
  p.density.basis.components = Eigen::MatrixXd::Identity(2, 2);
  p.density.basis.eigenvalues = Eigen::VectorXd::Ones(2);
  p.density.basis.explained = Eigen::VectorXd::Constant(2, 0.5);
  p.density.basis.total_variance = 2.0;
  p.density.marginals.mean = Eigen::VectorXd::Constant(2, 0.3);
  p.density.marginals.std = Eigen::VectorXd::Constant(2, 0.7);
  validate(p);

  Eigen::VectorXd x(2);
  x << 0.25, 0.8;
  CHECK(log_target(p, x) == p.density.log_density(x));

  // A nearly flat data density makes the target nearly flat on the box.
  p.density.marginals.std = Eigen::VectorXd::Constant(2, 1e6);
  Eigen::VectorXd y(2);
  y << 0.9, 0.1;
  CHECK(std::fabs(log_target(p, x) - log_target(p, y)) < 1e-9);
}

TEST_CASE("pca data density reproduces the spectral structure") {
  ToyCyclicModel toy;
  std::vector<DistributionSpec> dists;
  for (int j = 0; j < 6; ++j) {
    dists.push_back(DistributionSpec::lognormal(0.4, 0.15));
  }
  RandomSource rng(7, 0);
  auto ens = generate_synthetic_ensemble(toy, dists, 16, NoiseSpec(0.01), rng);
  REQUIRE(ens.data.rows() == 568);

  DataDensity d = build_pca_data_density(ens, 6);
  CHECK(d.variant == DataDensity::Variant::pca_marginals);
  CHECK(d.basis.r() == 6);
  CHECK((d.reference - ens.data).cwiseAbs().maxCoeff() == 0.0);
  for (int j = 0; j < 6; ++j) {
    // Projection variances are exactly the retained eigenvalues.
    CHECK(d.marginals.std(j) * d.marginals.std(j) ==
          doctest::Approx(d.basis.eigenvalues(j)).epsilon(1e-8));
    CHECK(std::fabs(d.marginals.mean(j)) < 1e-8);
  }

  // r = 1 agrees with a direct fit to the projected scalars.
  DataDensity d1 = build_pca_data_density(ens, 1);
  Eigen::VectorXd proj(16);
  for (int i = 0; i < 16; ++i) {
    proj(i) = project(d1.basis, ens.data.col(i))(0);
  }
  const double m = proj.mean();
  const double sd =
      std::sqrt((proj.array() - m).square().sum() / (proj.size() - 1));
  CHECK(d1.marginals.mean(0) == doctest::Approx(m).epsilon(1e-12));
  CHECK(d1.marginals.std(0) == doctest::Approx(sd).epsilon(1e-12));

  // Whitened data has unit spectrum and standard marginals.
  RandomSource wrng(11, 0);
  Eigen::MatrixXd raw(3, 40);
  for (Eigen::Index i = 0; i < raw.size(); ++i) raw(i) = wrng.normal();
  Eigen::VectorXd mean = raw.rowwise().mean();
  Eigen::MatrixXd centered = raw.colwise() - mean;
  Eigen::MatrixXd cov = centered * centered.transpose() / 39.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  Eigen::MatrixXd white =
      es.operatorInverseSqrt() * centered;
  DataDensity dw = build_pca_data_density(Eigen::MatrixXd(white), 3);
  for (int j = 0; j < 3; ++j) {
    CHECK(dw.marginals.std(j) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(std::fabs(dw.marginals.mean(j)) < 1e-8);
  }
}

TEST_CASE("linear maps push the target through the projection alone") {
  // Orthonormal-column Jacobian: |det Jq| is one constant, so the target
  // and the projected-density path must agree up to that constant.
  Eigen::MatrixXd seed(3, 2);
  seed << 1.0, 0.4, -0.3, 1.1, 0.6, -0.2;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(seed);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(3, 2);
  Eigen::VectorXd b(3);
  b << 0.5, -0.2, 0.1;
  Box box{Eigen::VectorXd::Constant(2, -3.0),
          Eigen::VectorXd::Constant(2, 3.0)};
  auto lin = std::make_shared<AffineMap>(q, b, box);

  RandomSource rng(5, 0);
  Eigen::MatrixXd xs(2, 60);
  for (Eigen::Index i = 0; i < xs.size(); ++i) xs(i) = rng.uniform(-2, 2);
  Eigen::MatrixXd zs(3, 60);
  for (int i = 0; i < 60; ++i) zs.col(i) = lin->eval(xs.col(i));

  TransformProblem p;
  p.map = lin;
  p.box = box;
  p.density = build_pca_data_density(Eigen::MatrixXd(zs), 2);
  validate(p);

  const double log_det =
      std::log(std::fabs((p.density.basis.components.transpose() * q)
                             .determinant()));
  for (int i = 0; i < 10; ++i) {
    const Eigen::VectorXd x = xs.col(i);
    const double via_projection =
        p.density.marginals.joint_log_pdf(
            project(p.density.basis, lin->eval(x))) +
        log_det;
    CHECK(log_target(p, x) == doctest::Approx(via_projection).epsilon(1e-13));
  }
}

TEST_CASE("latent correlation lands on known rank structures") {
  Eigen::VectorXd a(6), b(6);
  a << 0.1, 0.4, 0.2, 0.9, 0.5, 0.7;
  for (int i = 0; i < 6; ++i) b(i) = std::exp(3.0 * a(i));
  CHECK(latent_normal_correlation(a, b) ==
        doctest::Approx(1.0).epsilon(1e-14));
  CHECK(latent_normal_correlation(a, (-b).eval()) ==
        doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(latent_normal_correlation(a, Eigen::VectorXd::Zero(6)) == 0.0);
  CHECK_THROWS_AS(latent_normal_correlation(a, b.head(5)), DataError);
  CHECK_THROWS_AS(latent_normal_correlation(a.head(2), b.head(2)), DataError);
}

TEST_CASE("kernel-copula construction estimates simulated dependence") {
  Eigen::VectorXd obs_a(12), obs_b(10);
  for (int i = 0; i < 12; ++i) obs_a(i) = 0.3 + 0.04 * i;
  for (int i = 0; i < 10; ++i) obs_b(i) = 1.1 + 0.07 * i;

  // Observables locked to one coordinate: the estimate sits at the +1 side.
  PairModel pair;
  RandomSource rng(23, 0);
  DataDensity locked = build_kernel_copula_density(
      obs_a, obs_b, pair, pair.feasible_domain(), 500, rng);
  CHECK(locked.correlation >= 0.9);
  CHECK(locked.kernels.size() == 2);
  CHECK((locked.obs_a - obs_a).cwiseAbs().maxCoeff() == 0.0);

  // Identity observables of independent coordinates: no dependence.
  auto id = std::make_shared<AffineMap>(Eigen::MatrixXd::Identity(2, 2),
                                        Eigen::VectorXd::Zero(2),
                                        unit_box(2));
  RandomSource rng2(29, 0);
  DataDensity indep = build_kernel_copula_density(
      obs_a, obs_b, *id, unit_box(2), 10000, rng2);
  CHECK(std::fabs(indep.correlation) < 0.1);

  // Each kernel integrates to one.
  for (int k = 0; k < 2; ++k) {
    const Eigen::VectorXd& obs = k == 0 ? obs_a : obs_b;
    const double h = indep.kernels[k].bandwidth();
    const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(
        4001, obs.minCoeff() - 8.0 * h, obs.maxCoeff() + 8.0 * h);
    const Eigen::VectorXd pdf = indep.kernels[k].pdf_grid(grid);
    const double dx = grid(1) - grid(0);
    double integral = 0.0;
    for (Eigen::Index i = 0; i + 1 < grid.size(); ++i) {
      integral += 0.5 * (pdf(i) + pdf(i + 1)) * dx;
    }
    CHECK(integral == doctest::Approx(1.0).epsilon(1e-3));
  }

  RandomSource rng3(31, 0);
  CHECK_THROWS_AS(build_kernel_copula_density(obs_a, obs_b, *id, unit_box(2),
                                              9, rng3),
                  DataError);
  CHECK_THROWS_AS(build_kernel_copula_density(Eigen::VectorXd(), obs_b, *id,
                                              unit_box(2), 100, rng3),
                  DataError);
  AffineMap one(Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Zero(1),
                unit_box(1));
  CHECK_THROWS_AS(build_kernel_copula_density(obs_a, obs_b, one, unit_box(1),
                                              100, rng3),
                  ConfigError);
}

TEST_CASE("problem validation rejects mismatched assemblies") {
  DamageObs obs = make_damage_obs(10, 8, 41);
  TransformProblem p = damage_problem(obs, 41, 200);
  CHECK_NOTHROW(validate(p));

  TransformProblem q = p;
  q.map = nullptr;
  CHECK_THROWS_AS(validate(q), ConfigError);

  q = p;
  q.density.kernels.pop_back();
  CHECK_THROWS_AS(validate(q), ConfigError);

  q = p;
  q.density.correlation = 1.0;
  CHECK_THROWS_AS(validate(q), ConfigError);

  q = p;
  q.box.hi = q.box.lo;
  CHECK_THROWS_AS(validate(q), ConfigError);

  // PCA variant demands a square reduced map.
  TransformProblem r;
  r.map = p.map;
  r.box = p.box;
  RandomSource rng(43, 0);
  Eigen::MatrixXd data(2, 30);
  for (Eigen::Index i = 0; i < data.size(); ++i) data(i) = rng.normal();
  r.density = build_pca_data_density(data, 1);
  CHECK_THROWS_AS(validate(r), ConfigError);
  r.density = build_pca_data_density(data, 2);
  CHECK_NOTHROW(validate(r));
}

TEST_CASE("damage target composes kernels, copula, and area element") {
  DamageObs obs = make_damage_obs(50, 30, 137);
  TransformProblem p = damage_problem(obs, 137);
  CHECK(p.density.correlation > 0.0);
  CHECK(p.density.correlation < 1.0);

  LandgrafMorrowModel lm;
  const GaussianCopula copula(p.density.correlation);
  const double pts[4][2] = {
      {0.5, 2.0}, {0.3, 1.5}, {0.9, 2.5}, {1.1, 1.2}};
  for (const auto& pt : pts) {
    Eigen::VectorXd x(2);
    x << pt[0], pt[1];
    const Eigen::VectorXd z = lm.eval(x);
    const Eigen::MatrixXd jac = lm.jacobian(x);
    double oracle = p.density.kernels[0].log_pdf(z(0)) +
                    p.density.kernels[1].log_pdf(z(1));
    oracle += copula.log_density(p.density.kernels[0].cdf(z(0)),
                                 p.density.kernels[1].cdf(z(1)));
    oracle += std::log(std::fabs(jac.determinant()));
    CHECK(log_target(p, x) == doctest::Approx(oracle).epsilon(1e-13));
  }

  Eigen::VectorXd outside(2);
  outside << 0.05, 2.0;
  CHECK(log_target(p, outside) == -kInf);
  Eigen::VectorXd wrong(3);
  wrong << 0.5, 2.0, 1.0;
  CHECK_THROWS_AS(log_target(p, wrong), DomainError);
}

TEST_CASE("singular maps are rejected as infeasible rather than sampled") {
  Eigen::MatrixXd a(2, 2);
  a << 1.0, 0.0, 0.0, 0.0;
  auto flat = std::make_shared<AffineMap>(a, Eigen::VectorXd::Zero(2),
                                          unit_box(2));
  Eigen::VectorXd obs_a(8), obs_b(8);
  for (int i = 0; i < 8; ++i) {
    obs_a(i) = 0.2 + 0.05 * i;
    obs_b(i) = 0.3 + 0.04 * i;
  }
  RandomSource rng(59, 0);
  TransformProblem p;
  p.map = flat;
  p.box = unit_box(2);
  p.density = build_kernel_copula_density(obs_a, obs_b, *flat, unit_box(2),
                                          100, rng);
  Eigen::VectorXd x(2);
  x << 0.4, 0.6;
  CHECK(log_target(p, x) == -kInf);

  TransformConfig cfg;
  cfg.n_steps = 100;
  CHECK_THROWS_AS(sample_parameters(p, cfg, rng), DataError);
}

TEST_CASE("a start is scanned for when the box center has no density") {
  // (x1, x2) -> (x1^2, x2): the Jacobian is singular exactly at the box
  // center, so the starting point has to come from the grid scan.
  class SquareMap final : public DifferentiableMap {
   public:
    SquareMap()
        : box_{Eigen::VectorXd::Constant(2, -1.0),
               Eigen::VectorXd::Constant(2, 1.0)} {}

    std::string name() const override { return "square_first"; }
    Eigen::Index input_dim() const override { return 2; }
    Eigen::Index output_dim() const override { return 2; }
    const Box& feasible_domain() const override { return box_; }
    Eigen::VectorXd eval(const Eigen::VectorXd& x) const override {
      check_input(x);
      Eigen::VectorXd z(2);
      z << x(0) * x(0), x(1);
      return z;
    }
    Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const override {
      check_input(x);
      Eigen::MatrixXd j(2, 2);
      j << 2.0 * x(0), 0.0, 0.0, 1.0;
      return j;
    }

   private:
    Box box_;
  };

  Eigen::VectorXd obs_a(8), obs_b(8);
  for (int i = 0; i < 8; ++i) {
    obs_a(i) = 0.45 + 0.01 * i;  // x1^2 readings around 0.49
    obs_b(i) = 0.46 + 0.01 * i;
  }
  auto sq = std::make_shared<SquareMap>();
  RandomSource rng(61, 0);
  TransformProblem p;
  p.map = sq;
  p.box = sq->feasible_domain();
  p.density = build_kernel_copula_density(obs_a, obs_b, *sq,
                                          sq->feasible_domain(), 100, rng);
  p.density.correlation = 0.0;
  Eigen::VectorXd center(2);
  center << 0.0, 0.0;
  REQUIRE(log_target(p, center) == -kInf);

  TransformConfig cfg;
  cfg.n_steps = 12000;
  TransformResult res = sample_parameters(p, cfg, rng);
  const auto post = res.chain.post_burn_in();
  const double mean_sq = post.col(0).array().square().mean();
  CHECK(std::fabs(mean_sq - obs_a.mean()) < 0.05);
  CHECK(std::fabs(res.mean(1) - obs_b.mean()) < 0.05);
}

TEST_CASE("damage identification tracks the data and haunts the ridge") {
  DamageObs obs = make_damage_obs(50, 30, 211);
  TransformProblem p = damage_problem(obs, 211);
  TransformConfig cfg;
  cfg.n_steps = 30000;
  RandomSource rng(77, 0);
  TransformResult res = sample_parameters(p, cfg, rng);

  CHECK(res.chain.acceptance_rate >= 0.20);
  CHECK(res.chain.acceptance_rate <= 0.50);

  // Every retained sample respects the feasible box.
  const auto post = res.chain.post_burn_in();
  for (Eigen::Index i = 0; i < post.rows(); ++i) {
    CHECK(p.box.contains(post.row(i).transpose()));
  }

  // Midpoint quadrature of the target is an independent oracle for the
  // identified moments.
  const int nq = 240;
  const double ds = (p.box.hi(0) - p.box.lo(0)) / nq;
  const double dt = (p.box.hi(1) - p.box.lo(1)) / nq;
  double z = 0.0, m0 = 0.0, m1 = 0.0, m00 = 0.0, m11 = 0.0, m01 = 0.0;
  Eigen::VectorXd xq(2);
  for (int i = 0; i < nq; ++i) {
    const double sv = p.box.lo(0) + (i + 0.5) * ds;
    for (int k = 0; k < nq; ++k) {
      const double tv = p.box.lo(1) + (k + 0.5) * dt;
      xq << sv, tv;
      const double f = std::exp(log_target(p, xq));
      z += f;
      m0 += f * sv;
      m1 += f * tv;
      m00 += f * sv * sv;
      m11 += f * tv * tv;
      m01 += f * sv * tv;
    }
  }
  m0 /= z;
  m1 /= z;
  const double sd0 = std::sqrt(m00 / z - m0 * m0);
  const double sd1 = std::sqrt(m11 / z - m1 * m1);
  const double qcorr = (m01 / z - m0 * m1) / (sd0 * sd1);
  CHECK(std::fabs(res.mean(0) - m0) < 0.02);
  CHECK(std::fabs(res.mean(1) - m1) < 0.04);
  CHECK(std::fabs(res.std(0) - sd0) < 0.02);
  CHECK(std::fabs(res.corr(0, 1) - qcorr) < 0.08);

  // The two parameters trade off along the cycle-count level sets, and the
  // identified damage-parameter mean sits above the generating sample mean:
  // small parameter values cannot reach the high cycle counts in the data,
  // so the pullback shifts mass upward.
  CHECK(res.corr(0, 1) < 0.0);
  CHECK(res.std(0) > 0.05);
  CHECK(res.mean(0) > obs.ensemble.provenance.row(0).mean() - 0.02);
  CHECK(res.mean(0) < obs.ensemble.provenance.row(0).mean() + 0.12);

  // Scaling the density by a constant changes nothing under a fixed seed.
  TransformProblem scaled = p;
  scaled.density.log_scale = 37.5;
  RandomSource rng_a(311, 0), rng_b(311, 0);
  TransformConfig small = cfg;
  small.n_steps = 4000;
  TransformResult base = sample_parameters(p, small, rng_a);
  TransformResult shifted = sample_parameters(scaled, small, rng_b);
  CHECK((base.chain.states - shifted.chain.states).cwiseAbs().maxCoeff() ==
        0.0);
  CHECK((base.chain.log_densities.array() + 37.5 -
         shifted.chain.log_densities.array())
            .cwiseAbs()
            .maxCoeff() < 1e-10);
}

TEST_CASE("correlation iteration re-estimates at the identified state") {
  DamageObs obs = make_damage_obs(30, 20, 307);
  TransformProblem p = damage_problem(obs, 307, 1000);
  TransformConfig cfg;
  cfg.n_steps = 4000;

  // Zero rounds is the single pass.
  RandomSource r1(401, 0), r2(401, 0);
  IterationResult none = iterate_correlation(p, 0, cfg, r1);
  TransformResult single = sample_parameters(p, cfg, r2);
  REQUIRE(none.rounds.size() == 1);
  REQUIRE(none.correlation_trace.size() == 1);
  CHECK(none.correlation_trace[0] == p.density.correlation);
  CHECK((none.rounds[0].chain.states - single.chain.states)
            .cwiseAbs()
            .maxCoeff() == 0.0);

  RandomSource r3(403, 0);
  IterationResult one = iterate_correlation(p, 1, cfg, r3);
  REQUIRE(one.correlation_trace.size() == 2);
  REQUIRE(one.rounds.size() == 2);
  CHECK(one.correlation_trace[1] != one.correlation_trace[0]);
  CHECK(std::fabs(one.correlation_trace[1]) < 1.0);
  CHECK(one.problem.density.correlation == one.correlation_trace[1]);

  TransformProblem pca_p;
  pca_p.map = p.map;
  pca_p.box = p.box;
  RandomSource rng(239, 0);
  Eigen::MatrixXd data(2, 30);
  for (Eigen::Index i = 0; i < data.size(); ++i) data(i) = rng.normal();
  pca_p.density = build_pca_data_density(data, 2);
  CHECK_THROWS_AS(iterate_correlation(pca_p, 1, cfg, rng), ConfigError);
}

TEST_CASE("iterated estimates drift toward the generating correlation") {
  // The truth is the latent correlation of observable pairs under the
  // generating parameter distribution; iteration should close in on it.
  auto lm = std::make_shared<LandgrafMorrowModel>();
  const std::vector<DistributionSpec> gen = {
      DistributionSpec::beta(2.0, 2.0, 0.1, 1.2),
      DistributionSpec::beta(2.0, 2.0, 1.0, 2.8)};
  RandomSource truth_rng(997, 0);
  auto truth_ens = generate_synthetic_ensemble(*lm, gen, 20000,
                                               NoiseSpec(0.0), truth_rng);
  const double truth = latent_normal_correlation(
      truth_ens.data.row(0).transpose(), truth_ens.data.row(1).transpose());

  TransformConfig cfg;
  cfg.n_steps = 3000;
  double err0 = 0.0, err1 = 0.0, err2 = 0.0;
  const std::uint64_t seeds[3] = {11, 12, 13};
  for (const std::uint64_t s : seeds) {
    DamageObs obs = make_damage_obs(30, 20, s);
    TransformProblem p = damage_problem(obs, s, 1000);
    RandomSource rng(s, 9);
    IterationResult it = iterate_correlation(p, 2, cfg, rng);
    REQUIRE(it.correlation_trace.size() == 3);
    err0 += std::fabs(it.correlation_trace[0] - truth);
    err1 += std::fabs(it.correlation_trace[1] - truth);
    err2 += std::fabs(it.correlation_trace[2] - truth);
    for (const double c : it.correlation_trace) {
      CHECK(std::isfinite(c));
      CHECK(std::fabs(c) < 1.0);
    }
  }
  // Observed, not guaranteed: report the averaged error sequence.
  MESSAGE("mean |estimate - truth| per round: " << err0 / 3.0 << " "
                                                << err1 / 3.0 << " "
                                                << err2 / 3.0);
}
