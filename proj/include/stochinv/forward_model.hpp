#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stochinv/distributions.hpp"
#include "stochinv/rng.hpp"

namespace stochinv {

// Axis-aligned feasible region, bounds inclusive.
struct Box {
  Eigen::VectorXd lo, hi;

  Eigen::Index dim() const { return lo.size(); }
  bool contains(const Eigen::VectorXd& x) const;
};

// Deterministic map from parameter space to response space. Evaluation is
// pure; inputs outside the feasible box are rejected with DomainError.
class ForwardModel {
 public:
  virtual ~ForwardModel() = default;

  virtual std::string name() const = 0;
  virtual Eigen::Index input_dim() const = 0;
  virtual Eigen::Index output_dim() const = 0;
  virtual const Box& feasible_domain() const = 0;
  virtual Eigen::VectorXd eval(const Eigen::VectorXd& x) const = 0;

 protected:
  // Shared precondition: dimension match plus box membership.
  void check_input(const Eigen::VectorXd& x) const;
};

// Forward model with an analytic Jacobian (output_dim x input_dim).
class DifferentiableMap : public ForwardModel {
 public:
  virtual Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const = 0;
};

// Cycles to failure for strain range delta_eps: N_f = (delta_eps / S)^(-s).
double landgraf_morrow(double S, double s, double delta_eps);

// Strain at rupture reported by the tensile test; the observable is the
// parameter itself.
double tensile_observable(double S);

// Stacked damage-parameter model: input (S, s), output (S observable, N_f).
// The two components are measured on disjoint specimen sets; stacking keeps
// one map for both experiments.
class LandgrafMorrowModel final : public DifferentiableMap {
 public:
  explicit LandgrafMorrowModel(double delta_eps = 0.03);

  std::string name() const override { return "landgraf_morrow"; }
  Eigen::Index input_dim() const override { return 2; }
  Eigen::Index output_dim() const override { return 2; }
  const Box& feasible_domain() const override { return box_; }
  Eigen::VectorXd eval(const Eigen::VectorXd& x) const override;
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const override;

  double delta_eps() const { return delta_eps_; }

 private:
  double delta_eps_;
  Box box_;
};

// Synthetic cyclic response curve on [0,1]^6. With amplitude
// A = 0.5 + 0.5 x1, rate r = 1 + 4 x2, drift d = 0.2 x3, phase p = pi x4,
// and angular frequency w = 2 pi (2 + 2 x5), the curve sampled on an
// equispaced grid over [0,1] is
//     y(t) = A (1 - exp(-r t)) sin(w t + p) + d t.
// x6 does not enter; |y| <= 1.2 everywhere on the box.
class ToyCyclicModel final : public ForwardModel {
 public:
  explicit ToyCyclicModel(Eigen::Index n_t = 568);

  std::string name() const override { return "toy_cyclic"; }
  Eigen::Index input_dim() const override { return 6; }
  Eigen::Index output_dim() const override { return n_t_; }
  const Box& feasible_domain() const override { return box_; }
  Eigen::VectorXd eval(const Eigen::VectorXd& x) const override;

  const Eigen::VectorXd& t_grid() const { return t_; }

 private:
  Eigen::Index n_t_;
  Eigen::VectorXd t_;
  Box box_;
};

// Per-component measurement noise levels; a scalar broadcasts to any shape.
class NoiseSpec {
 public:
  explicit NoiseSpec(double sigma);
  explicit NoiseSpec(Eigen::VectorXd sigma);

  bool is_scalar() const { return scalar_; }
  double scalar_sigma() const { return sigma_(0); }
  const Eigen::VectorXd& sigma() const { return sigma_; }
  double sigma_for(Eigen::Index component) const;

 private:
  bool scalar_;
  Eigen::VectorXd sigma_;
};

// Measured responses, one column per specimen. provenance keeps the true
// inputs when the data are synthetic (0x0 otherwise).
struct ObservationEnsemble {
  Eigen::MatrixXd data;  // n_z x n
  NoiseSpec noise{0.0};
  Eigen::MatrixXd provenance;       // n_x x n when present
  std::size_t resample_count = 0;   // feasibility redraws during generation

  Eigen::Index n() const { return data.cols(); }
  Eigen::Index n_z() const { return data.rows(); }
  bool has_provenance() const { return provenance.size() > 0; }
};

Eigen::VectorXd add_noise(const Eigen::VectorXd& response,
                          const NoiseSpec& noise, RandomSource& rng);
Eigen::MatrixXd add_noise(const Eigen::MatrixXd& data, const NoiseSpec& noise,
                          RandomSource& rng);

// Draws n inputs from the given law, re-drawing any specimen that falls
// outside the model's feasible box (truncation, counted in resample_count),
// evaluates the model column by column, and perturbs with noise.
ObservationEnsemble generate_synthetic_ensemble(
    const ForwardModel& model, const std::vector<DistributionSpec>& input_dists,
    std::size_t n, const NoiseSpec& noise, RandomSource& rng);

// Same, with the two marginals coupled by a Gaussian copula.
ObservationEnsemble generate_synthetic_ensemble(
    const ForwardModel& model, const std::vector<DistributionSpec>& input_dists,
    const GaussianCopula& copula, std::size_t n, const NoiseSpec& noise,
    RandomSource& rng);

// Response matrix as CSV (header specimen_1,...,specimen_n; one row per
// response component) plus an optional provenance sidecar (header
// x_1,...,x_{n_x}; one row per specimen).
void write_ensemble_csv(const std::string& path,
                        const ObservationEnsemble& ensemble);
void write_provenance_csv(const std::string& path,
                          const ObservationEnsemble& ensemble);
Eigen::MatrixXd read_ensemble_csv(const std::string& path);
Eigen::MatrixXd read_provenance_csv(const std::string& path);

}  // namespace stochinv
