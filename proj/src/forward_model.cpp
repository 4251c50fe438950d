#include "stochinv/forward_model.hpp"

#include <cmath>
#include <utility>

#include "stochinv/batch.hpp"
#include "stochinv/csv.hpp"
#include "stochinv/error.hpp"

namespace stochinv {

bool Box::contains(const Eigen::VectorXd& x) const {
  if (x.size() != lo.size()) return false;
  return (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all();
}

void ForwardModel::check_input(const Eigen::VectorXd& x) const {
  if (x.size() != input_dim()) {
    throw DomainError("model '" + name() + "': input has dimension " +
                      std::to_string(x.size()) + ", expected " +
                      std::to_string(input_dim()));
  }
  if (!feasible_domain().contains(x)) {
    throw DomainError("model '" + name() +
                      "': input lies outside the feasible box");
  }
}

double landgraf_morrow(double S, double s, double delta_eps) {
  if (!(S > 0.0)) throw DomainError("landgraf_morrow: S must be positive");
  if (!(delta_eps > 0.0)) {
    throw DomainError("landgraf_morrow: delta_eps must be positive");
  }
  return std::pow(delta_eps / S, -s);
}

double tensile_observable(double S) { return S; }

LandgrafMorrowModel::LandgrafMorrowModel(double delta_eps)
    : delta_eps_(delta_eps) {
  if (!(delta_eps > 0.0)) {
    throw DomainError("LandgrafMorrowModel: delta_eps must be positive");
  }
  box_.lo = Eigen::Vector2d(0.1, 1.0);
  box_.hi = Eigen::Vector2d(1.2, 2.8);
}

Eigen::VectorXd LandgrafMorrowModel::eval(const Eigen::VectorXd& x) const {
  check_input(x);
  Eigen::VectorXd y(2);
  y(0) = tensile_observable(x(0));
  y(1) = landgraf_morrow(x(0), x(1), delta_eps_);
  return y;
}

Eigen::MatrixXd LandgrafMorrowModel::jacobian(const Eigen::VectorXd& x) const {
  check_input(x);
  const double S = x(0), s = x(1);
  const double nf = landgraf_morrow(S, s, delta_eps_);
  Eigen::MatrixXd j(2, 2);
  j(0, 0) = 1.0;
  j(0, 1) = 0.0;
  j(1, 0) = s * nf / S;
  j(1, 1) = nf * std::log(S / delta_eps_);
  return j;
}

ToyCyclicModel::ToyCyclicModel(Eigen::Index n_t) : n_t_(n_t) {
  if (n_t < 2) {
    throw DomainError("ToyCyclicModel: need at least two grid points");
  }
  t_ = Eigen::VectorXd::LinSpaced(n_t, 0.0, 1.0);
  box_.lo = Eigen::VectorXd::Zero(6);
  box_.hi = Eigen::VectorXd::Ones(6);
}

Eigen::VectorXd ToyCyclicModel::eval(const Eigen::VectorXd& x) const {
  check_input(x);
  const double amp = 0.5 + 0.5 * x(0);
  const double rate = 1.0 + 4.0 * x(1);
  const double drift = 0.2 * x(2);
  const double phase = M_PI * x(3);
  const double omega = 2.0 * M_PI * (2.0 + 2.0 * x(4));
  Eigen::VectorXd y(n_t_);
  for (Eigen::Index k = 0; k < n_t_; ++k) {
    const double t = t_(k);
    y(k) = amp * (1.0 - std::exp(-rate * t)) * std::sin(omega * t + phase) +
           drift * t;
  }
  return y;
}

NoiseSpec::NoiseSpec(double sigma) : scalar_(true), sigma_(1) {
  if (!(sigma >= 0.0)) {
    throw DomainError("NoiseSpec: sigma must be non-negative");
  }
  sigma_(0) = sigma;
}

NoiseSpec::NoiseSpec(Eigen::VectorXd sigma)
    : scalar_(false), sigma_(std::move(sigma)) {
  if (sigma_.size() == 0) {
    throw DomainError("NoiseSpec: sigma vector must not be empty");
  }
  if (!(sigma_.array() >= 0.0).all()) {
    throw DomainError("NoiseSpec: sigma must be non-negative");
  }
}

double NoiseSpec::sigma_for(Eigen::Index component) const {
  if (scalar_) return sigma_(0);
  if (component < 0 || component >= sigma_.size()) {
    throw DataError("NoiseSpec: component index out of range");
  }
  return sigma_(component);
}

namespace {

void check_noise_width(const NoiseSpec& noise, Eigen::Index n_z,
                       const char* where) {
  if (!noise.is_scalar() && noise.sigma().size() != n_z) {
    throw DataError(std::string(where) + ": sigma has length " +
                    std::to_string(noise.sigma().size()) + " but data has " +
                    std::to_string(n_z) + " components");
  }
}

}  // namespace

Eigen::VectorXd add_noise(const Eigen::VectorXd& response,
                          const NoiseSpec& noise, RandomSource& rng) {
  check_noise_width(noise, response.size(), "add_noise");
  Eigen::VectorXd out = response;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    out(i) += noise.sigma_for(i) * rng.normal();
  }
  return out;
}

Eigen::MatrixXd add_noise(const Eigen::MatrixXd& data, const NoiseSpec& noise,
                          RandomSource& rng) {
  check_noise_width(noise, data.rows(), "add_noise");
  Eigen::MatrixXd out = data;
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      out(i, j) += noise.sigma_for(i) * rng.normal();
    }
  }
  return out;
}

namespace {

// Shared generator core: draw_one produces a candidate input; draws that
// miss the feasible box are discarded and redrawn so the kept inputs follow
// the law truncated to the box.
ObservationEnsemble generate_core(
    const ForwardModel& model,
    const std::function<Eigen::VectorXd(RandomSource&)>& draw_one,
    std::size_t n, const NoiseSpec& noise, RandomSource& rng) {
  if (n == 0) {
    throw DataError("generate_synthetic_ensemble: need at least one specimen");
  }
  constexpr std::size_t kMaxAttempts = 1000000;
  ObservationEnsemble out;
  out.noise = noise;
  Eigen::MatrixXd xs(model.input_dim(), static_cast<Eigen::Index>(n));
  const Box& box = model.feasible_domain();
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t attempts = 0;
    for (;;) {
      const Eigen::VectorXd x = draw_one(rng);
      if (box.contains(x)) {
        xs.col(static_cast<Eigen::Index>(i)) = x;
        break;
      }
      ++out.resample_count;
      if (++attempts >= kMaxAttempts) {
        throw NumericalError(
            "generate_synthetic_ensemble: input law places negligible mass "
            "in the feasible box of model '" +
            model.name() + "'");
      }
    }
  }
  out.data = add_noise(eval_batch(model, xs), noise, rng);
  out.provenance = xs;
  return out;
}

}  // namespace

ObservationEnsemble generate_synthetic_ensemble(
    const ForwardModel& model, const std::vector<DistributionSpec>& input_dists,
    std::size_t n, const NoiseSpec& noise, RandomSource& rng) {
  if (static_cast<Eigen::Index>(input_dists.size()) != model.input_dim()) {
    throw DataError("generate_synthetic_ensemble: got " +
                    std::to_string(input_dists.size()) +
                    " marginals for model '" + model.name() + "' with " +
                    std::to_string(model.input_dim()) + " inputs");
  }
  auto draw_one = [&input_dists](RandomSource& r) {
    Eigen::VectorXd x(static_cast<Eigen::Index>(input_dists.size()));
    for (std::size_t j = 0; j < input_dists.size(); ++j) {
      x(static_cast<Eigen::Index>(j)) = input_dists[j].sample(r);
    }
    return x;
  };
  return generate_core(model, draw_one, n, noise, rng);
}

ObservationEnsemble generate_synthetic_ensemble(
    const ForwardModel& model, const std::vector<DistributionSpec>& input_dists,
    const GaussianCopula& copula, std::size_t n, const NoiseSpec& noise,
    RandomSource& rng) {
  if (input_dists.size() != 2 || model.input_dim() != 2) {
    throw DataError(
        "generate_synthetic_ensemble: the copula-coupled form needs a "
        "two-input model with two marginals");
  }
  auto draw_one = [&input_dists, &copula](RandomSource& r) {
    const auto [u1, u2] = copula.sample(r);
    return Eigen::Vector2d(input_dists[0].quantile(u1),
                           input_dists[1].quantile(u2));
  };
  return generate_core(model, draw_one, n, noise, rng);
}

void write_ensemble_csv(const std::string& path,
                        const ObservationEnsemble& ensemble) {
  if (ensemble.n() < 1) {
    throw DataError("write_ensemble_csv: ensemble has no specimens");
  }
  std::vector<std::string> header;
  header.reserve(static_cast<std::size_t>(ensemble.n()));
  for (Eigen::Index j = 0; j < ensemble.n(); ++j) {
    header.push_back("specimen_" + std::to_string(j + 1));
  }
  csv::write(path, header, ensemble.data);
}

void write_provenance_csv(const std::string& path,
                          const ObservationEnsemble& ensemble) {
  if (!ensemble.has_provenance()) {
    throw DataError("write_provenance_csv: ensemble has no provenance inputs");
  }
  std::vector<std::string> header;
  header.reserve(static_cast<std::size_t>(ensemble.provenance.rows()));
  for (Eigen::Index j = 0; j < ensemble.provenance.rows(); ++j) {
    header.push_back("x_" + std::to_string(j + 1));
  }
  csv::write(path, header, ensemble.provenance.transpose());
}

Eigen::MatrixXd read_ensemble_csv(const std::string& path) {
  const csv::Table t = csv::read(path);
  if (t.header.empty() || t.header[0].rfind("specimen_", 0) != 0) {
    throw DataError("read_ensemble_csv: '" + path +
                    "' does not look like an ensemble file (header should "
                    "start with specimen_1)");
  }
  if (t.rows.rows() < 1 || t.rows.cols() < 1) {
    throw DataError("read_ensemble_csv: '" + path + "' holds no data");
  }
  return t.rows;
}

Eigen::MatrixXd read_provenance_csv(const std::string& path) {
  const csv::Table t = csv::read(path);
  if (t.header.empty() || t.header[0].rfind("x_", 0) != 0) {
    throw DataError("read_provenance_csv: '" + path +
                    "' does not look like a provenance file (header should "
                    "start with x_1)");
  }
  if (t.rows.rows() < 1) {
    throw DataError("read_provenance_csv: '" + path + "' holds no data");
  }
  return t.rows.transpose();
}

}  // namespace stochinv
