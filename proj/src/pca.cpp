#include "stochinv/pca.hpp"

#include <cmath>
#include <limits>

#include "stochinv/error.hpp"

namespace stochinv {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

// Flip each column so its largest-magnitude coordinate is positive.
void apply_sign_convention(Eigen::MatrixXd& components) {
  for (Eigen::Index k = 0; k < components.cols(); ++k) {
    Eigen::Index imax = 0;
    components.col(k).cwiseAbs().maxCoeff(&imax);
    if (components(imax, k) < 0.0) components.col(k) = -components.col(k);
  }
}

void validate_basis(const PCABasis& b, const char* where) {
  if (b.components.rows() != b.mean.size() ||
      b.eigenvalues.size() != b.components.cols()) {
    throw DataError(std::string(where) + ": inconsistent basis shapes");
  }
  const Eigen::MatrixXd gram =
      b.components.transpose() * b.components -
      Eigen::MatrixXd::Identity(b.r(), b.r());
  if (gram.cwiseAbs().maxCoeff() > 1e-10) {
    throw DataError(std::string(where) + ": components are not orthonormal");
  }
  for (Eigen::Index k = 0; k < b.eigenvalues.size(); ++k) {
    if (!(b.eigenvalues(k) >= 0.0)) {
      throw DataError(std::string(where) + ": negative eigenvalue");
    }
    if (k > 0 && b.eigenvalues(k) > b.eigenvalues(k - 1)) {
      throw DataError(std::string(where) + ": eigenvalues not sorted");
    }
  }
}

}  // namespace

double PCABasis::discarded_fraction() const {
  if (!(total_variance > 0.0)) return 0.0;
  return 1.0 - eigenvalues.sum() / total_variance;
}

PCABasis fit_pca(const Eigen::MatrixXd& data, Eigen::Index r) {
  const Eigen::Index n = data.cols();
  const Eigen::Index n_z = data.rows();
  if (n < 2) throw DataError("fit_pca: need at least two specimens");
  if (r < 1 || r > std::min(n_z, n - 1)) {
    throw DataError("fit_pca: retained count " + std::to_string(r) +
                    " must lie in [1, min(n_z, n-1)] = [1, " +
                    std::to_string(std::min(n_z, n - 1)) + "]");
  }
  PCABasis b;
  b.mean = data.rowwise().mean();
  const Eigen::MatrixXd centered = data.colwise() - b.mean;
  const double denom = static_cast<double>(n - 1);
  b.total_variance = centered.squaredNorm() / denom;
  const double mean_sq = data.array().square().mean();
  if (b.total_variance <= 1e-28 * mean_sq || b.total_variance == 0.0) {
    throw DataError("fit_pca: ensemble has zero variance");
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinU);
  b.components = svd.matrixU().leftCols(r);
  apply_sign_convention(b.components);
  b.eigenvalues.resize(r);
  for (Eigen::Index k = 0; k < r; ++k) {
    const double s = svd.singularValues()(k);
    b.eigenvalues(k) = s * s / denom;
  }
  b.explained = b.eigenvalues / b.total_variance;
  return b;
}

PCABasis fit_pca(const ObservationEnsemble& ensemble, Eigen::Index r) {
  return fit_pca(ensemble.data, r);
}

Eigen::VectorXd project(const PCABasis& basis, const Eigen::VectorXd& y) {
  if (y.size() != basis.n_z()) {
    throw DataError("project: vector length does not match the basis");
  }
  return basis.components.transpose() * (y - basis.mean);
}

Eigen::MatrixXd project_batch(const PCABasis& basis,
                              const Eigen::MatrixXd& ys) {
  if (ys.rows() != basis.n_z()) {
    throw DataError("project_batch: rows do not match the basis");
  }
  return basis.components.transpose() * (ys.colwise() - basis.mean);
}

Eigen::VectorXd reconstruct(const PCABasis& basis, const Eigen::VectorXd& q) {
  if (q.size() != basis.r()) {
    throw DataError("reconstruct: vector length does not match the basis");
  }
  return basis.mean + basis.components * q;
}

ReducedJacobian reduced_jacobian(const PCABasis& basis,
                                 const Eigen::MatrixXd& model_jacobian) {
  if (model_jacobian.rows() != basis.n_z()) {
    throw DataError("reduced_jacobian: Jacobian rows do not match the basis");
  }
  if (model_jacobian.cols() != basis.r()) {
    throw DataError(
        "reduced_jacobian: need r = n_x; basis retains " +
        std::to_string(basis.r()) + " components but the model has " +
        std::to_string(model_jacobian.cols()) + " inputs");
  }
  ReducedJacobian out;
  out.jq = basis.components.transpose() * model_jacobian;
  const double det = out.jq.determinant();
  out.abs_det = std::fabs(det);
  out.singular = !(out.abs_det > 0.0) || !std::isfinite(out.abs_det);
  return out;
}

double ComponentMarginals::joint_log_pdf(const Eigen::VectorXd& q) const {
  if (q.size() != mean.size()) {
    throw DataError("ComponentMarginals: vector length mismatch");
  }
  double lp = 0.0;
  for (Eigen::Index k = 0; k < q.size(); ++k) {
    const double z = (q(k) - mean(k)) / std(k);
    lp += -0.5 * z * z - kLogSqrt2Pi - std::log(std(k));
  }
  return lp;
}

ComponentMarginals fit_component_marginals(const PCABasis& basis,
                                           const Eigen::MatrixXd& data) {
  const Eigen::MatrixXd q = project_batch(basis, data);
  const Eigen::Index n = q.cols();
  if (n < 2) {
    throw DataError("fit_component_marginals: need at least two specimens");
  }
  ComponentMarginals m;
  m.mean = q.rowwise().mean();
  m.std.resize(q.rows());
  const double scale = std::sqrt(basis.total_variance);
  for (Eigen::Index k = 0; k < q.rows(); ++k) {
    const double ss = (q.row(k).array() - m.mean(k)).square().sum();
    m.std(k) = std::sqrt(ss / static_cast<double>(n - 1));
    if (m.std(k) <= 1e-14 * scale) {
      throw DataError("fit_component_marginals: component " +
                      std::to_string(k + 1) +
                      " of the projected data has zero spread");
    }
  }
  return m;
}

ComponentMarginals fit_component_marginals(const PCABasis& basis,
                                           const ObservationEnsemble& e) {
  return fit_component_marginals(basis, e.data);
}

nlohmann::json PCABasis::to_json() const {
  nlohmann::json j;
  j["r"] = r();
  j["mean"] = std::vector<double>(mean.begin(), mean.end());
  j["eigenvalues"] =
      std::vector<double>(eigenvalues.begin(), eigenvalues.end());
  j["explained"] = std::vector<double>(explained.begin(), explained.end());
  j["total_variance"] = total_variance;
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(components.size()));
  for (Eigen::Index i = 0; i < components.rows(); ++i) {
    for (Eigen::Index k = 0; k < components.cols(); ++k) {
      flat.push_back(components(i, k));
    }
  }
  j["components"] = flat;
  return j;
}

PCABasis PCABasis::parse(const nlohmann::json& j) {
  try {
    PCABasis b;
    const auto r = j.at("r").get<Eigen::Index>();
    const auto mean = j.at("mean").get<std::vector<double>>();
    const auto eig = j.at("eigenvalues").get<std::vector<double>>();
    const auto expl = j.at("explained").get<std::vector<double>>();
    const auto flat = j.at("components").get<std::vector<double>>();
    b.total_variance = j.at("total_variance").get<double>();
    if (static_cast<Eigen::Index>(eig.size()) != r ||
        static_cast<Eigen::Index>(expl.size()) != r ||
        flat.size() != mean.size() * static_cast<std::size_t>(r)) {
      throw DataError("PCABasis::parse: inconsistent stored shapes");
    }
    b.mean = Eigen::Map<const Eigen::VectorXd>(
        mean.data(), static_cast<Eigen::Index>(mean.size()));
    b.eigenvalues = Eigen::Map<const Eigen::VectorXd>(
        eig.data(), static_cast<Eigen::Index>(eig.size()));
    b.explained = Eigen::Map<const Eigen::VectorXd>(
        expl.data(), static_cast<Eigen::Index>(expl.size()));
    b.components.resize(static_cast<Eigen::Index>(mean.size()), r);
    std::size_t p = 0;
    for (Eigen::Index i = 0; i < b.components.rows(); ++i) {
      for (Eigen::Index k = 0; k < r; ++k) b.components(i, k) = flat[p++];
    }
    validate_basis(b, "PCABasis::parse");
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("PCABasis::parse: malformed JSON: ") +
                    e.what());
  }
}

}  // namespace stochinv
