#include "stochinv/pce.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <utility>

#include "stochinv/batch.hpp"
#include "stochinv/error.hpp"

namespace stochinv {

std::pair<double, double> hermite_eval(int k, double xi) {
  if (k < 0) throw DomainError("hermite_eval: degree must be non-negative");
  if (k == 0) return {1.0, 0.0};
  double prev = 1.0, cur = xi;
  for (int j = 1; j < k; ++j) {
    const double next = xi * cur - j * prev;
    prev = cur;
    cur = next;
  }
  return {cur, k * prev};
}

MultiIndexSet MultiIndexSet::total_degree(Eigen::Index dim, int p) {
  if (dim < 1) throw DomainError("MultiIndexSet: dimension must be positive");
  if (p < 0) throw DomainError("MultiIndexSet: degree must be non-negative");
  MultiIndexSet s;
  s.dim = dim;
  s.degree = p;
  std::vector<int> idx(static_cast<std::size_t>(dim), 0);
  // Enumerate each grade in ascending lexicographic order.
  for (int g = 0; g <= p; ++g) {
    const std::function<void(Eigen::Index, int)> recurse = [&](Eigen::Index j,
                                                               int left) {
      if (j == dim - 1) {
        idx[static_cast<std::size_t>(j)] = left;
        s.indices.push_back(idx);
        return;
      }
      for (int v = 0; v <= left; ++v) {
        idx[static_cast<std::size_t>(j)] = v;
        recurse(j + 1, left - v);
      }
    };
    recurse(0, g);
  }
  return s;
}

namespace {

// Hermite value table He_0..He_p for one standardized point, one dimension
// per column.
void hermite_table(const std::vector<double>& xi, int p,
                   Eigen::MatrixXd& table) {
  const auto dim = static_cast<Eigen::Index>(xi.size());
  table.resize(p + 1, dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    table(0, j) = 1.0;
    if (p >= 1) table(1, j) = xi[static_cast<std::size_t>(j)];
    for (int k = 1; k < p; ++k) {
      table(k + 1, j) =
          xi[static_cast<std::size_t>(j)] * table(k, j) - k * table(k - 1, j);
    }
  }
}

void check_standardization(const Standardization& s, Eigen::Index dim,
                           const char* where) {
  if (s.shift.size() != dim || s.scale.size() != dim) {
    throw DataError(std::string(where) +
                    ": standardization does not match input dimension");
  }
  if (!(s.scale.array() > 0.0).all()) {
    throw DomainError(std::string(where) +
                      ": standardization scales must be positive");
  }
}

void design_row(const MultiIndexSet& indices, const Standardization& std_map,
                const Eigen::MatrixXd& xs, Eigen::MatrixXd& out,
                Eigen::Index i) {
  const Eigen::Index dim = indices.dim;
  std::vector<double> xi(static_cast<std::size_t>(dim));
  for (Eigen::Index j = 0; j < dim; ++j) {
    xi[static_cast<std::size_t>(j)] =
        (xs(j, i) - std_map.shift(j)) / std_map.scale(j);
  }
  Eigen::MatrixXd table;
  hermite_table(xi, indices.degree, table);
  for (std::size_t a = 0; a < indices.size(); ++a) {
    double v = 1.0;
    for (Eigen::Index j = 0; j < dim; ++j) {
      v *= table(indices.indices[a][static_cast<std::size_t>(j)], j);
    }
    out(i, static_cast<Eigen::Index>(a)) = v;
  }
}

}  // namespace

Eigen::MatrixXd pce_design_matrix(const MultiIndexSet& indices,
                                  const Standardization& std_map,
                                  const Eigen::MatrixXd& xs) {
  check_standardization(std_map, indices.dim, "pce_design_matrix");
  if (xs.rows() != indices.dim) {
    throw DataError("pce_design_matrix: points do not match index dimension");
  }
  Eigen::MatrixXd out(xs.cols(), static_cast<Eigen::Index>(indices.size()));
  parallel_for(static_cast<std::size_t>(xs.cols()), [&](std::size_t i) {
    design_row(indices, std_map, xs, out, static_cast<Eigen::Index>(i));
  });
  return out;
}

Eigen::MatrixXd pce_design_matrix_serial(const MultiIndexSet& indices,
                                         const Standardization& std_map,
                                         const Eigen::MatrixXd& xs) {
  check_standardization(std_map, indices.dim, "pce_design_matrix_serial");
  if (xs.rows() != indices.dim) {
    throw DataError(
        "pce_design_matrix_serial: points do not match index dimension");
  }
  Eigen::MatrixXd out(xs.cols(), static_cast<Eigen::Index>(indices.size()));
  for (Eigen::Index i = 0; i < xs.cols(); ++i) {
    design_row(indices, std_map, xs, out, i);
  }
  return out;
}

PCESurrogate::PCESurrogate(MultiIndexSet indices, Eigen::MatrixXd coeffs,
                           Standardization std_map)
    : indices_(std::move(indices)),
      coeffs_(std::move(coeffs)),
      std_map_(std::move(std_map)) {
  check_standardization(std_map_, indices_.dim, "PCESurrogate");
  if (static_cast<std::size_t>(coeffs_.rows()) != indices_.size()) {
    throw DataError("PCESurrogate: coefficient rows must match basis size");
  }
  if (!coeffs_.allFinite()) {
    throw DataError("PCESurrogate: coefficients must be finite");
  }
}

Eigen::VectorXd PCESurrogate::evaluate(const Eigen::VectorXd& x) const {
  if (x.size() != indices_.dim) {
    throw DataError("PCESurrogate::evaluate: input dimension mismatch");
  }
  const Eigen::Index dim = indices_.dim;
  std::vector<double> xi(static_cast<std::size_t>(dim));
  for (Eigen::Index j = 0; j < dim; ++j) {
    xi[static_cast<std::size_t>(j)] = (x(j) - std_map_.shift(j)) /
                                      std_map_.scale(j);
  }
  Eigen::MatrixXd table;
  hermite_table(xi, indices_.degree, table);
  Eigen::VectorXd psi(static_cast<Eigen::Index>(indices_.size()));
  for (std::size_t a = 0; a < indices_.size(); ++a) {
    double v = 1.0;
    for (Eigen::Index j = 0; j < dim; ++j) {
      v *= table(indices_.indices[a][static_cast<std::size_t>(j)], j);
    }
    psi(static_cast<Eigen::Index>(a)) = v;
  }
  return coeffs_.transpose() * psi;
}

Eigen::MatrixXd PCESurrogate::evaluate_batch(const Eigen::MatrixXd& xs) const {
  if (xs.rows() != indices_.dim) {
    throw DataError("PCESurrogate::evaluate_batch: input dimension mismatch");
  }
  Eigen::MatrixXd out(output_dim(), xs.cols());
  parallel_for(static_cast<std::size_t>(xs.cols()), [&](std::size_t i) {
    const auto j = static_cast<Eigen::Index>(i);
    out.col(j) = evaluate(xs.col(j));
  });
  return out;
}

Eigen::MatrixXd PCESurrogate::jacobian(const Eigen::VectorXd& x) const {
  if (x.size() != indices_.dim) {
    throw DataError("PCESurrogate::jacobian: input dimension mismatch");
  }
  const Eigen::Index dim = indices_.dim;
  std::vector<double> xi(static_cast<std::size_t>(dim));
  for (Eigen::Index j = 0; j < dim; ++j) {
    xi[static_cast<std::size_t>(j)] = (x(j) - std_map_.shift(j)) /
                                      std_map_.scale(j);
  }
  Eigen::MatrixXd table;
  hermite_table(xi, indices_.degree, table);
  // dPsi(a, k) = d psi_a / d x_k via the chain rule through xi_k.
  Eigen::MatrixXd dpsi(static_cast<Eigen::Index>(indices_.size()), dim);
  for (std::size_t a = 0; a < indices_.size(); ++a) {
    const auto& alpha = indices_.indices[a];
    for (Eigen::Index k = 0; k < dim; ++k) {
      const int ak = alpha[static_cast<std::size_t>(k)];
      if (ak == 0) {
        dpsi(static_cast<Eigen::Index>(a), k) = 0.0;
        continue;
      }
      double v = ak * table(ak - 1, k) / std_map_.scale(k);
      for (Eigen::Index j = 0; j < dim; ++j) {
        if (j != k) v *= table(alpha[static_cast<std::size_t>(j)], j);
      }
      dpsi(static_cast<Eigen::Index>(a), k) = v;
    }
  }
  return coeffs_.transpose() * dpsi;
}

nlohmann::json PCESurrogate::to_json() const {
  nlohmann::json j;
  j["dim"] = indices_.dim;
  j["degree"] = indices_.degree;
  j["shift"] = std::vector<double>(std_map_.shift.begin(),
                                   std_map_.shift.end());
  j["scale"] = std::vector<double>(std_map_.scale.begin(),
                                   std_map_.scale.end());
  j["indices"] = indices_.indices;
  j["n_z"] = coeffs_.cols();
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(coeffs_.size()));
  for (Eigen::Index r = 0; r < coeffs_.rows(); ++r) {
    for (Eigen::Index c = 0; c < coeffs_.cols(); ++c) {
      flat.push_back(coeffs_(r, c));
    }
  }
  j["coeffs"] = flat;
  return j;
}

PCESurrogate PCESurrogate::parse(const nlohmann::json& j) {
  try {
    const auto dim = j.at("dim").get<Eigen::Index>();
    const int degree = j.at("degree").get<int>();
    const auto shift = j.at("shift").get<std::vector<double>>();
    const auto scale = j.at("scale").get<std::vector<double>>();
    const auto idx = j.at("indices").get<std::vector<std::vector<int>>>();
    const auto n_z = j.at("n_z").get<Eigen::Index>();
    const auto flat = j.at("coeffs").get<std::vector<double>>();

    MultiIndexSet indices = MultiIndexSet::total_degree(dim, degree);
    if (idx != indices.indices) {
      throw DataError(
          "PCESurrogate::parse: stored index list is not the graded "
          "lexicographic total-degree set");
    }
    if (static_cast<std::size_t>(dim) != shift.size() ||
        static_cast<std::size_t>(dim) != scale.size()) {
      throw DataError("PCESurrogate::parse: standardization length mismatch");
    }
    if (flat.size() != indices.size() * static_cast<std::size_t>(n_z)) {
      throw DataError("PCESurrogate::parse: coefficient count mismatch");
    }
    Standardization std_map;
    std_map.shift = Eigen::Map<const Eigen::VectorXd>(
        shift.data(), static_cast<Eigen::Index>(shift.size()));
    std_map.scale = Eigen::Map<const Eigen::VectorXd>(
        scale.data(), static_cast<Eigen::Index>(scale.size()));
    Eigen::MatrixXd coeffs(static_cast<Eigen::Index>(indices.size()), n_z);
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < coeffs.rows(); ++r) {
      for (Eigen::Index c = 0; c < coeffs.cols(); ++c) {
        coeffs(r, c) = flat[k++];
      }
    }
    return PCESurrogate(std::move(indices), std::move(coeffs),
                        std::move(std_map));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("PCESurrogate::parse: malformed JSON: ") +
                    e.what());
  }
}

namespace {

// LHS in probability space, conditioned to the slice of each marginal that
// lies inside the model's feasible box.
Eigen::MatrixXd lhs_design_in_box(const std::vector<DistributionSpec>& dists,
                                  const Box& box, std::size_t n,
                                  RandomSource& rng) {
  const auto dim = static_cast<Eigen::Index>(dists.size());
  Eigen::MatrixXd xs(dim, static_cast<Eigen::Index>(n));
  std::vector<std::size_t> perm(n);
  for (Eigen::Index j = 0; j < dim; ++j) {
    const double u_lo = dists[static_cast<std::size_t>(j)].cdf(box.lo(j));
    const double u_hi = dists[static_cast<std::size_t>(j)].cdf(box.hi(j));
    if (!(u_hi - u_lo > 1e-12)) {
      throw NumericalError(
          "fit_regression: marginal " + std::to_string(j + 1) +
          " places almost no mass inside the model's feasible box");
    }
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t i = n; i > 1; --i) {
      std::swap(perm[i - 1], perm[rng.uniform_below(i)]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double u = (static_cast<double>(perm[i]) + rng.uniform01()) /
                       static_cast<double>(n);
      xs(j, static_cast<Eigen::Index>(i)) =
          dists[static_cast<std::size_t>(j)].quantile(u_lo +
                                                      u * (u_hi - u_lo));
    }
  }
  return xs;
}

Standardization standardization_from(const std::vector<DistributionSpec>& d) {
  Standardization s;
  s.shift.resize(static_cast<Eigen::Index>(d.size()));
  s.scale.resize(static_cast<Eigen::Index>(d.size()));
  for (std::size_t j = 0; j < d.size(); ++j) {
    s.shift(static_cast<Eigen::Index>(j)) = d[j].mean();
    s.scale(static_cast<Eigen::Index>(j)) = d[j].stddev();
  }
  return s;
}

double response_rms(const Eigen::MatrixXd& ys) {
  return std::sqrt(ys.array().square().mean());
}

}  // namespace

FitResult fit_regression_data(const Eigen::MatrixXd& xs,
                              const Eigen::MatrixXd& ys, int degree,
                              const Standardization& std_map) {
  if (xs.cols() != ys.cols()) {
    throw DataError("fit_regression: inputs and responses disagree on the "
                    "number of points");
  }
  MultiIndexSet indices = MultiIndexSet::total_degree(xs.rows(), degree);
  const auto basis = static_cast<Eigen::Index>(indices.size());
  if (xs.cols() < basis) {
    throw DataError("fit_regression: degree " + std::to_string(degree) +
                    " needs at least " + std::to_string(basis) +
                    " training points, got " + std::to_string(xs.cols()));
  }
  const Eigen::MatrixXd psi = pce_design_matrix(indices, std_map, xs);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(psi);
  if (qr.rank() < basis) {
    throw NumericalError(
        "fit_regression: design matrix is rank deficient at degree " +
        std::to_string(degree) + " with " + std::to_string(xs.cols()) +
        " training points");
  }
  Eigen::MatrixXd coeffs = qr.solve(ys.transpose());
  FitResult out{
      PCESurrogate(std::move(indices), std::move(coeffs), std_map),
      FitReport{}};
  const Eigen::MatrixXd resid =
      psi * out.surrogate.coeffs() - ys.transpose();
  out.report.rmse = std::sqrt(resid.array().square().mean());
  const double scale = response_rms(ys);
  out.report.rel_rmse = scale > 0.0 ? out.report.rmse / scale
                                    : out.report.rmse;
  out.report.undersampled = xs.cols() < 2 * basis;
  return out;
}

FitResult fit_regression(const ForwardModel& model,
                         const std::vector<DistributionSpec>& dists,
                         int degree, std::size_t n_train, RandomSource& rng) {
  if (static_cast<Eigen::Index>(dists.size()) != model.input_dim()) {
    throw DataError("fit_regression: got " + std::to_string(dists.size()) +
                    " marginals for model '" + model.name() + "' with " +
                    std::to_string(model.input_dim()) + " inputs");
  }
  const Eigen::MatrixXd xs =
      lhs_design_in_box(dists, model.feasible_domain(), n_train, rng);
  const Eigen::MatrixXd ys = eval_batch(model, xs);
  return fit_regression_data(xs, ys, degree, standardization_from(dists));
}

CVResult cross_validate_degree(const ForwardModel& model,
                               const std::vector<DistributionSpec>& dists,
                               const std::vector<int>& degrees,
                               std::size_t n_train, std::size_t k_folds,
                               RandomSource& rng) {
  if (degrees.empty()) {
    throw DataError("cross_validate_degree: no candidate degrees");
  }
  if (k_folds < 2 || k_folds > n_train) {
    throw DomainError(
        "cross_validate_degree: fold count must lie in [2, n_train]");
  }
  if (static_cast<Eigen::Index>(dists.size()) != model.input_dim()) {
    throw DataError("cross_validate_degree: marginals do not match model");
  }
  const Eigen::MatrixXd xs =
      lhs_design_in_box(dists, model.feasible_domain(), n_train, rng);
  const Eigen::MatrixXd ys = eval_batch(model, xs);
  const Standardization std_map = standardization_from(dists);
  const double scale = response_rms(ys);

  CVResult result;
  for (int degree : degrees) {
    CVEntry entry;
    entry.degree = degree;
    try {
      double sq_sum = 0.0;
      std::size_t sq_count = 0;
      for (std::size_t fold = 0; fold < k_folds; ++fold) {
        std::vector<Eigen::Index> train_idx, val_idx;
        for (std::size_t i = 0; i < n_train; ++i) {
          (i % k_folds == fold ? val_idx : train_idx)
              .push_back(static_cast<Eigen::Index>(i));
        }
        Eigen::MatrixXd xt(xs.rows(),
                           static_cast<Eigen::Index>(train_idx.size()));
        Eigen::MatrixXd yt(ys.rows(),
                           static_cast<Eigen::Index>(train_idx.size()));
        for (std::size_t i = 0; i < train_idx.size(); ++i) {
          xt.col(static_cast<Eigen::Index>(i)) = xs.col(train_idx[i]);
          yt.col(static_cast<Eigen::Index>(i)) = ys.col(train_idx[i]);
        }
        const FitResult fit = fit_regression_data(xt, yt, degree, std_map);
        double fold_sq = 0.0;
        for (Eigen::Index i : val_idx) {
          fold_sq += (fit.surrogate.evaluate(xs.col(i)) - ys.col(i))
                         .squaredNorm();
        }
        const std::size_t fold_n = val_idx.size() *
                                   static_cast<std::size_t>(ys.rows());
        entry.fold_rmse.push_back(
            std::sqrt(fold_sq / static_cast<double>(fold_n)));
        sq_sum += fold_sq;
        sq_count += fold_n;
      }
      entry.mean_rmse = std::sqrt(sq_sum / static_cast<double>(sq_count));
    } catch (const Error& e) {
      entry.failed = true;
      entry.error = e.what();
      entry.mean_rmse = std::numeric_limits<double>::infinity();
    }
    result.table.push_back(std::move(entry));
  }

  double best = std::numeric_limits<double>::infinity();
  for (const auto& e : result.table) {
    if (!e.failed) best = std::min(best, e.mean_rmse);
  }
  if (!std::isfinite(best)) {
    std::string msg = "cross_validate_degree: every candidate failed:";
    for (const auto& e : result.table) {
      msg += " [degree " + std::to_string(e.degree) + ": " + e.error + "]";
    }
    throw NumericalError(msg);
  }
  // Lowest degree within 1% of the best score; the floor keeps exact fits
  // from losing the tie to noise-level differences.
  const double threshold = 1.01 * best + 1e-12 * scale;
  int selected = -1;
  for (const auto& e : result.table) {
    if (e.failed || e.mean_rmse > threshold) continue;
    if (selected < 0 || e.degree < selected) selected = e.degree;
  }
  result.selected_degree = selected;
  return result;
}

}  // namespace stochinv
