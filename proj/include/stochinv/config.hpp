#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

namespace stochinv {

enum class Formulation { bayes, transform, both };

// Synthetic-generation block. Which fields apply depends on the recipe:
// "damage" reads the tensile/cyclic counts and noise levels, "toy" the
// curve counts and the single noise level.
struct SyntheticConfig {
  std::string recipe;  // "damage" | "toy"
  Eigen::Index n_tensile = 50;
  Eigen::Index n_cyclic = 30;
  double noise_tensile = 0.1;
  double noise_cyclic = 0.8;
  Eigen::Index n_curves = 16;
  Eigen::Index n_points = 568;
  double noise = 0.01;
  std::uint64_t seed = 1;
};

// Paths to previously generated datasets plus the noise levels the
// inference should assume for them.
struct DatasetConfig {
  std::string tensile;       // damage: one-column CSV
  std::string cyclic;        // damage: one-column CSV
  std::string observations;  // toy: n_points x n_curves CSV
  std::string provenance;    // optional generating-inputs CSV
  double noise_tensile = 0.1;
  double noise_cyclic = 0.8;
  double noise = 0.01;
};

struct SurrogateConfig {
  int degree = 3;
  Eigen::Index n_train = 400;
  std::vector<int> cv_degrees;  // empty: fit the declared degree directly
  Eigen::Index k_folds = 5;
};

struct McmcConfig {
  Eigen::Index steps = 50000;
  double burn_in_fraction = 0.2;
  double band_lo = 0.20;
  double band_hi = 0.50;
  Eigen::Index thin = 1;
  Eigen::Index pilot_steps = 1000;
  int max_tune_rounds = 50;
  Eigen::Index n_sim = 4000;  // simulations for the copula correlation
  std::uint64_t seed = 7;
};

struct RunConfig {
  std::string experiment;
  std::string model;  // "landgraf_morrow" | "toy_cyclic"
  Formulation formulation = Formulation::both;
  std::string output_dir = "out";
  bool has_synthetic = false;
  SyntheticConfig synthetic;
  bool has_dataset = false;
  DatasetConfig dataset;
  SurrogateConfig surrogate;
  McmcConfig mcmc;

  nlohmann::json to_json() const;

  // Strict parse: unknown keys, wrong types, and out-of-range values are
  // rejected with the offending field named.
  static RunConfig parse(const nlohmann::json& j);
  static RunConfig load(const std::string& path);
};

std::string to_string(Formulation f);

// Flag and environment overrides; only the seed and the output directory
// can be overridden from outside the config file.
void apply_overrides(RunConfig& config,
                     const std::optional<std::uint64_t>& seed,
                     const std::optional<std::string>& output_dir);

}  // namespace stochinv
