#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "json.hpp"
#include "stochinv/csv.hpp"

namespace stochinv {

// Spearman rank correlations between paired input and response samples.
// Entries lie in [-1, 1]; a constant column makes every cell it touches
// degenerate, reported as 0 with the flag set.
struct SensitivityReport {
  Eigen::MatrixXd srcc;  // n_x by n_z
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> degenerate;
  Eigen::Index n_samples = 0;
  std::string provenance;  // where the design came from, e.g. the training LHS

  csv::Table to_csv() const;
  nlohmann::json meta() const;
};

SensitivityReport srcc(const Eigen::MatrixXd& samples_x,
                       const Eigen::MatrixXd& samples_y);

double mae(const Eigen::VectorXd& data_stat, const Eigen::VectorXd& model_stat);

struct Mape {
  double percent = 0.0;
  Eigen::Index excluded = 0;  // components whose reference entry was ~0
};

Mape mape(const Eigen::VectorXd& data_stat, const Eigen::VectorXd& model_stat);

// One named collection of observable samples.  Columns of a paired set come
// from the same draws and share a row count; an unpaired set may not be asked
// for correlations.
struct SampleSet {
  std::string name;
  std::vector<std::string> vars;
  std::vector<Eigen::VectorXd> columns;
  bool paired = false;
};

SampleSet paired_set(std::string name, std::vector<std::string> vars,
                     const Eigen::MatrixXd& samples);
SampleSet unpaired_set(std::string name, std::vector<std::string> vars,
                       std::vector<Eigen::VectorXd> columns);

struct CorrelationRequest {
  std::string set;
  std::string var_a;
  std::string var_b;
};

struct MomentRow {
  std::string set;
  std::string var;
  double mean = 0.0;
  double std = 0.0;
  Eigen::Index n = 0;
};

struct CorrelationEntry {
  std::string set;
  std::string var_a;
  std::string var_b;
  double corr = 0.0;
  bool defined = false;  // false when a marginal has zero spread
};

// Error block comparing a set's moment vectors against the first (reference)
// set over the variables they share.
struct ErrorBlockRow {
  std::string set;
  double mae_mean = 0.0;
  double mape_mean = 0.0;
  double mae_std = 0.0;
  double mape_std = 0.0;
  Eigen::Index mape_mean_excluded = 0;
  Eigen::Index mape_std_excluded = 0;
};

struct ComparisonTable {
  std::vector<MomentRow> moments;
  std::vector<CorrelationEntry> correlations;
  std::vector<ErrorBlockRow> errors;

  csv::Table moments_csv() const;
  nlohmann::json to_json() const;
};

ComparisonTable moment_table(const std::vector<SampleSet>& sets,
                             const std::vector<CorrelationRequest>& pairs = {});

// Gaussian-kernel density estimate with Silverman's rule-of-thumb bandwidth.
class KernelDensity {
 public:
  explicit KernelDensity(const Eigen::VectorXd& samples);

  double bandwidth() const { return h_; }
  double pdf(double t) const;
  double log_pdf(double t) const;
  double cdf(double t) const;  // clamped strictly inside (0, 1)
  Eigen::VectorXd pdf_grid(const Eigen::VectorXd& grid) const;

 private:
  Eigen::VectorXd samples_;
  double h_ = 0.0;
};

Eigen::VectorXd kde_normal(const Eigen::VectorXd& samples,
                           const Eigen::VectorXd& grid);

}  // namespace stochinv
