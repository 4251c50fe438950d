#include "stochinv/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "stochinv/error.hpp"
#include "stochinv/special.hpp"

namespace stochinv {

namespace {

constexpr double kMapeFloor = 1e-12;

// Average ranks, ties mid-ranked.  Ranks are half-integers, so reflecting or
// monotonically transforming the data reproduces them exactly.
Eigen::VectorXd mid_ranks(const Eigen::VectorXd& v) {
  const Eigen::Index n = v.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(),
            [&v](Eigen::Index a, Eigen::Index b) { return v(a) < v(b); });
  Eigen::VectorXd r(n);
  Eigen::Index i = 0;
  while (i < n) {
    Eigen::Index j = i;
    while (j + 1 < n && v(order[static_cast<std::size_t>(j + 1)]) ==
                            v(order[static_cast<std::size_t>(i)])) {
      ++j;
    }
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Eigen::Index k = i; k <= j; ++k) {
      r(order[static_cast<std::size_t>(k)]) = avg;
    }
    i = j + 1;
  }
  return r;
}

struct CenteredColumns {
  Eigen::MatrixXd values;
  Eigen::VectorXd norms;
};

CenteredColumns centered_rank_columns(const Eigen::MatrixXd& m) {
  CenteredColumns out;
  out.values.resize(m.rows(), m.cols());
  out.norms.resize(m.cols());
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    Eigen::VectorXd r = mid_ranks(m.col(c));
    r.array() -= r.mean();
    out.values.col(c) = r;
    out.norms(c) = r.norm();
  }
  return out;
}

double sample_mean(const Eigen::VectorXd& v) { return v.mean(); }

double sample_std(const Eigen::VectorXd& v) {
  if (v.size() < 2) return 0.0;
  const double m = v.mean();
  return std::sqrt((v.array() - m).square().sum() /
                   static_cast<double>(v.size() - 1));
}

double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
               bool& defined) {
  const Eigen::VectorXd ca = a.array() - a.mean();
  const Eigen::VectorXd cb = b.array() - b.mean();
  const double na = ca.norm(), nb = cb.norm();
  if (na == 0.0 || nb == 0.0) {
    defined = false;
    return 0.0;
  }
  defined = true;
  return std::clamp(ca.dot(cb) / (na * nb), -1.0, 1.0);
}

struct MapeParts {
  double percent;
  Eigen::Index excluded;
  Eigen::Index included;
};

MapeParts mape_parts(const Eigen::VectorXd& data_stat,
                     const Eigen::VectorXd& model_stat) {
  if (data_stat.size() != model_stat.size()) {
    throw DataError("mape: vector lengths differ");
  }
  MapeParts out{0.0, 0, 0};
  double sum = 0.0;
  for (Eigen::Index i = 0; i < data_stat.size(); ++i) {
    if (std::fabs(data_stat(i)) < kMapeFloor) {
      ++out.excluded;
      continue;
    }
    sum += std::fabs((data_stat(i) - model_stat(i)) / data_stat(i));
    ++out.included;
  }
  out.percent = out.included > 0
                    ? 100.0 * sum / static_cast<double>(out.included)
                    : std::numeric_limits<double>::quiet_NaN();
  return out;
}

const Eigen::VectorXd& set_column(const SampleSet& s, const std::string& var,
                                  const char* where) {
  for (std::size_t i = 0; i < s.vars.size(); ++i) {
    if (s.vars[i] == var) return s.columns[i];
  }
  throw DataError(std::string(where) + ": set '" + s.name +
                  "' has no variable '" + var + "'");
}

}  // namespace

SensitivityReport srcc(const Eigen::MatrixXd& samples_x,
                       const Eigen::MatrixXd& samples_y) {
  const Eigen::Index n = samples_x.rows();
  if (n < 3) throw DataError("srcc: need at least three paired samples");
  if (samples_y.rows() != n) {
    throw DataError("srcc: sample matrices are not paired");
  }
  if (samples_x.cols() < 1 || samples_y.cols() < 1) {
    throw DataError("srcc: empty sample matrix");
  }
  const CenteredColumns rx = centered_rank_columns(samples_x);
  const CenteredColumns ry = centered_rank_columns(samples_y);

  SensitivityReport rep;
  rep.n_samples = n;
  rep.srcc.resize(samples_x.cols(), samples_y.cols());
  rep.degenerate.resize(samples_x.cols(), samples_y.cols());
  for (Eigen::Index i = 0; i < samples_x.cols(); ++i) {
    for (Eigen::Index j = 0; j < samples_y.cols(); ++j) {
      const bool bad = rx.norms(i) == 0.0 || ry.norms(j) == 0.0;
      rep.degenerate(i, j) = bad;
      rep.srcc(i, j) =
          bad ? 0.0
              : std::clamp(rx.values.col(i).dot(ry.values.col(j)) /
                               (rx.norms(i) * ry.norms(j)),
                           -1.0, 1.0);
    }
  }
  return rep;
}

csv::Table SensitivityReport::to_csv() const {
  csv::Table t;
  t.header.reserve(static_cast<std::size_t>(srcc.cols()) + 1);
  t.header.push_back("parameter");
  for (Eigen::Index j = 0; j < srcc.cols(); ++j) {
    t.header.push_back("z_" + std::to_string(j + 1));
  }
  t.rows.resize(srcc.rows(), srcc.cols() + 1);
  for (Eigen::Index i = 0; i < srcc.rows(); ++i) {
    t.rows(i, 0) = static_cast<double>(i + 1);
    t.rows.row(i).tail(srcc.cols()) = srcc.row(i);
  }
  return t;
}

nlohmann::json SensitivityReport::meta() const {
  return nlohmann::json{{"n_samples", n_samples},
                        {"n_x", srcc.rows()},
                        {"n_z", srcc.cols()},
                        {"degenerate_cells", degenerate.count()},
                        {"provenance", provenance}};
}

double mae(const Eigen::VectorXd& data_stat,
           const Eigen::VectorXd& model_stat) {
  if (data_stat.size() != model_stat.size()) {
    throw DataError("mae: vector lengths differ");
  }
  // Plain left-to-right sum, reproducible by an elementwise loop.
  double sum = 0.0;
  for (Eigen::Index i = 0; i < data_stat.size(); ++i) {
    sum += std::fabs(data_stat(i) - model_stat(i));
  }
  return sum / static_cast<double>(data_stat.size());
}

Mape mape(const Eigen::VectorXd& data_stat,
          const Eigen::VectorXd& model_stat) {
  const MapeParts p = mape_parts(data_stat, model_stat);
  if (p.included == 0) {
    throw NumericalError("mape: every reference component is zero");
  }
  return Mape{p.percent, p.excluded};
}

SampleSet paired_set(std::string name, std::vector<std::string> vars,
                     const Eigen::MatrixXd& samples) {
  if (vars.empty() || samples.cols() != static_cast<Eigen::Index>(vars.size())) {
    throw DataError("paired_set: variable names do not match the columns");
  }
  if (samples.rows() < 1) throw DataError("paired_set: empty sample set");
  SampleSet s;
  s.name = std::move(name);
  s.vars = std::move(vars);
  s.paired = true;
  s.columns.reserve(s.vars.size());
  for (Eigen::Index c = 0; c < samples.cols(); ++c) {
    s.columns.push_back(samples.col(c));
  }
  return s;
}

SampleSet unpaired_set(std::string name, std::vector<std::string> vars,
                       std::vector<Eigen::VectorXd> columns) {
  if (vars.empty() || vars.size() != columns.size()) {
    throw DataError("unpaired_set: variable names do not match the columns");
  }
  for (const auto& c : columns) {
    if (c.size() < 1) throw DataError("unpaired_set: empty sample set");
  }
  SampleSet s;
  s.name = std::move(name);
  s.vars = std::move(vars);
  s.columns = std::move(columns);
  s.paired = false;
  return s;
}

ComparisonTable moment_table(const std::vector<SampleSet>& sets,
                             const std::vector<CorrelationRequest>& pairs) {
  if (sets.empty()) throw DataError("moment_table: no sample sets");
  for (const auto& s : sets) {
    if (s.vars.empty() || s.vars.size() != s.columns.size()) {
      throw DataError("moment_table: malformed set '" + s.name + "'");
    }
    for (const auto& c : s.columns) {
      if (c.size() < 1) {
        throw DataError("moment_table: set '" + s.name + "' is empty");
      }
    }
  }

  ComparisonTable table;
  for (const auto& s : sets) {
    for (std::size_t i = 0; i < s.vars.size(); ++i) {
      table.moments.push_back(MomentRow{s.name, s.vars[i],
                                        sample_mean(s.columns[i]),
                                        sample_std(s.columns[i]),
                                        s.columns[i].size()});
    }
  }

  for (const auto& req : pairs) {
    const SampleSet* set = nullptr;
    for (const auto& s : sets) {
      if (s.name == req.set) set = &s;
    }
    if (set == nullptr) {
      throw DataError("moment_table: unknown set '" + req.set + "'");
    }
    if (!set->paired) {
      throw DataError("moment_table: correlation requested on unpaired set '" +
                      req.set + "'");
    }
    const Eigen::VectorXd& a = set_column(*set, req.var_a, "moment_table");
    const Eigen::VectorXd& b = set_column(*set, req.var_b, "moment_table");
    CorrelationEntry e;
    e.set = req.set;
    e.var_a = req.var_a;
    e.var_b = req.var_b;
    e.corr = pearson(a, b, e.defined);
    table.correlations.push_back(e);
  }

  // Moment-error block against the first set, over shared variables.
  const SampleSet& ref = sets.front();
  for (std::size_t s = 1; s < sets.size(); ++s) {
    std::vector<double> rm, rs, mm, ms;
    for (std::size_t i = 0; i < ref.vars.size(); ++i) {
      for (std::size_t j = 0; j < sets[s].vars.size(); ++j) {
        if (ref.vars[i] != sets[s].vars[j]) continue;
        rm.push_back(sample_mean(ref.columns[i]));
        rs.push_back(sample_std(ref.columns[i]));
        mm.push_back(sample_mean(sets[s].columns[j]));
        ms.push_back(sample_std(sets[s].columns[j]));
      }
    }
    if (rm.empty()) continue;
    const auto vec = [](const std::vector<double>& v) {
      return Eigen::Map<const Eigen::VectorXd>(v.data(),
                                               static_cast<Eigen::Index>(
                                                   v.size()));
    };
    ErrorBlockRow row;
    row.set = sets[s].name;
    row.mae_mean = mae(vec(rm), vec(mm));
    row.mae_std = mae(vec(rs), vec(ms));
    const MapeParts pm = mape_parts(vec(rm), vec(mm));
    const MapeParts ps = mape_parts(vec(rs), vec(ms));
    row.mape_mean = pm.percent;
    row.mape_std = ps.percent;
    row.mape_mean_excluded = pm.excluded;
    row.mape_std_excluded = ps.excluded;
    table.errors.push_back(row);
  }
  return table;
}

csv::Table ComparisonTable::moments_csv() const {
  csv::Table t;
  t.header.reserve(moments.size());
  for (const auto& m : moments) t.header.push_back(m.set + ":" + m.var);
  t.rows.resize(3, static_cast<Eigen::Index>(moments.size()));
  for (std::size_t i = 0; i < moments.size(); ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    t.rows(0, c) = moments[i].mean;
    t.rows(1, c) = moments[i].std;
    t.rows(2, c) = static_cast<double>(moments[i].n);
  }
  return t;
}

nlohmann::json ComparisonTable::to_json() const {
  nlohmann::json j;
  j["moments"] = nlohmann::json::array();
  for (const auto& m : moments) {
    j["moments"].push_back({{"set", m.set},
                            {"var", m.var},
                            {"mean", m.mean},
                            {"std", m.std},
                            {"n", m.n}});
  }
  j["correlations"] = nlohmann::json::array();
  for (const auto& c : correlations) {
    j["correlations"].push_back({{"set", c.set},
                                 {"var_a", c.var_a},
                                 {"var_b", c.var_b},
                                 {"corr", c.corr},
                                 {"defined", c.defined}});
  }
  j["errors"] = nlohmann::json::array();
  for (const auto& e : errors) {
    j["errors"].push_back({{"set", e.set},
                           {"mae_mean", e.mae_mean},
                           {"mape_mean", e.mape_mean},
                           {"mae_std", e.mae_std},
                           {"mape_std", e.mape_std},
                           {"mape_mean_excluded", e.mape_mean_excluded},
                           {"mape_std_excluded", e.mape_std_excluded}});
  }
  return j;
}

KernelDensity::KernelDensity(const Eigen::VectorXd& samples)
    : samples_(samples) {
  const Eigen::Index n = samples_.size();
  if (n < 2) throw DataError("KernelDensity: need at least two samples");
  if (!samples_.allFinite()) {
    throw DataError("KernelDensity: samples must be finite");
  }
  Eigen::VectorXd sorted = samples_;
  std::sort(sorted.data(), sorted.data() + n);
  const auto quantile = [&sorted, n](double p) {
    const double idx = p * static_cast<double>(n - 1);
    const auto lo = static_cast<Eigen::Index>(std::floor(idx));
    if (lo + 1 >= n) return sorted(n - 1);
    return sorted(lo) + (idx - static_cast<double>(lo)) * (sorted(lo + 1) -
                                                           sorted(lo));
  };
  const double sd = sample_std(samples_);
  const double iqr = quantile(0.75) - quantile(0.25);
  // Silverman's rule; the interquartile term is dropped when ties collapse it.
  const double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  if (!(spread > 0.0)) throw DataError("KernelDensity: samples have no spread");
  h_ = 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
}

double KernelDensity::pdf(double t) const {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < samples_.size(); ++i) {
    sum += std_normal_pdf((t - samples_(i)) / h_);
  }
  return sum / (static_cast<double>(samples_.size()) * h_);
}

double KernelDensity::log_pdf(double t) const {
  const Eigen::ArrayXd q =
      -0.5 * ((t - samples_.array()) / h_).square();
  const double m = q.maxCoeff();
  const double lse = m + std::log((q - m).exp().sum());
  return lse - std::log(static_cast<double>(samples_.size()) * h_) -
         0.5 * std::log(2.0 * M_PI);
}

double KernelDensity::cdf(double t) const {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < samples_.size(); ++i) {
    sum += std_normal_cdf((t - samples_(i)) / h_);
  }
  const double u = sum / static_cast<double>(samples_.size());
  return std::min(std::max(u, 1e-300), std::nextafter(1.0, 0.0));
}

Eigen::VectorXd KernelDensity::pdf_grid(const Eigen::VectorXd& grid) const {
  Eigen::VectorXd out(grid.size());
  for (Eigen::Index i = 0; i < grid.size(); ++i) out(i) = pdf(grid(i));
  return out;
}

Eigen::VectorXd kde_normal(const Eigen::VectorXd& samples,
                           const Eigen::VectorXd& grid) {
  return KernelDensity(samples).pdf_grid(grid);
}

}  // namespace stochinv
