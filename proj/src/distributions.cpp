#include "stochinv/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "stochinv/error.hpp"
#include "stochinv/special.hpp"

namespace stochinv {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLogSqrt2Pi = 0.91893853320467274178;

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw DomainError(std::string("distribution: ") + what +
                      " must be finite");
  }
}

}  // namespace

std::string family_name(Family f) {
  switch (f) {
    case Family::Uniform: return "uniform";
    case Family::Normal: return "normal";
    case Family::Lognormal: return "lognormal";
    case Family::Beta: return "beta";
  }
  return "?";
}

DistributionSpec DistributionSpec::uniform(double a, double b) {
  require_finite(a, "uniform lower bound");
  require_finite(b, "uniform upper bound");
  if (!(a < b)) throw DomainError("uniform: need a < b");
  DistributionSpec d;
  d.family_ = Family::Uniform;
  d.a_ = a;
  d.b_ = b;
  return d;
}

DistributionSpec DistributionSpec::normal(double mean, double stddev) {
  require_finite(mean, "normal mean");
  require_finite(stddev, "normal stddev");
  if (!(stddev > 0.0)) throw DomainError("normal: stddev must be positive");
  DistributionSpec d;
  d.family_ = Family::Normal;
  d.m_ = mean;
  d.s_ = stddev;
  return d;
}

DistributionSpec DistributionSpec::lognormal(double mean, double stddev) {
  require_finite(mean, "lognormal mean");
  require_finite(stddev, "lognormal stddev");
  if (!(mean > 0.0)) throw DomainError("lognormal: mean must be positive");
  if (!(stddev > 0.0)) throw DomainError("lognormal: stddev must be positive");
  DistributionSpec d;
  d.family_ = Family::Lognormal;
  d.m_ = mean;
  d.s_ = stddev;
  const double cv2 = (stddev / mean) * (stddev / mean);
  const double sig2 = std::log1p(cv2);
  d.sig_ln_ = std::sqrt(sig2);
  d.mu_ln_ = std::log(mean) - 0.5 * sig2;
  return d;
}

DistributionSpec DistributionSpec::beta(double alpha, double beta, double a,
                                        double b) {
  require_finite(alpha, "beta shape alpha");
  require_finite(beta, "beta shape beta");
  require_finite(a, "beta lower bound");
  require_finite(b, "beta upper bound");
  if (!(alpha > 0.0) || !(beta > 0.0)) {
    throw DomainError("beta: shapes must be positive");
  }
  if (!(a < b)) throw DomainError("beta: need a < b");
  DistributionSpec d;
  d.family_ = Family::Beta;
  d.alpha_ = alpha;
  d.beta_ = beta;
  d.a_ = a;
  d.b_ = b;
  d.log_bnorm_ = log_beta_fn(alpha, beta) + std::log(b - a);
  return d;
}

double DistributionSpec::log_pdf(double x) const {
  switch (family_) {
    case Family::Uniform:
      if (x < a_ || x > b_) return -kInf;
      return -std::log(b_ - a_);
    case Family::Normal: {
      const double z = (x - m_) / s_;
      return -0.5 * z * z - kLogSqrt2Pi - std::log(s_);
    }
    case Family::Lognormal: {
      if (!(x > 0.0)) return -kInf;
      const double lx = std::log(x);
      const double z = (lx - mu_ln_) / sig_ln_;
      return -0.5 * z * z - kLogSqrt2Pi - std::log(sig_ln_) - lx;
    }
    case Family::Beta: {
      if (x < a_ || x > b_) return -kInf;
      const double t = (x - a_) / (b_ - a_);
      if (t == 0.0) {
        if (alpha_ > 1.0) return -kInf;
        if (alpha_ < 1.0) return kInf;
        return (beta_ - 1.0) * std::log1p(-t) - log_bnorm_;
      }
      if (t == 1.0) {
        if (beta_ > 1.0) return -kInf;
        if (beta_ < 1.0) return kInf;
        return (alpha_ - 1.0) * std::log(t) - log_bnorm_;
      }
      return (alpha_ - 1.0) * std::log(t) + (beta_ - 1.0) * std::log1p(-t) -
             log_bnorm_;
    }
  }
  return -kInf;
}

double DistributionSpec::pdf(double x) const { return std::exp(log_pdf(x)); }

double DistributionSpec::cdf(double x) const {
  switch (family_) {
    case Family::Uniform:
      if (x <= a_) return 0.0;
      if (x >= b_) return 1.0;
      return (x - a_) / (b_ - a_);
    case Family::Normal:
      return std_normal_cdf((x - m_) / s_);
    case Family::Lognormal:
      if (!(x > 0.0)) return 0.0;
      return std_normal_cdf((std::log(x) - mu_ln_) / sig_ln_);
    case Family::Beta: {
      if (x <= a_) return 0.0;
      if (x >= b_) return 1.0;
      return ibeta_reg(alpha_, beta_, (x - a_) / (b_ - a_));
    }
  }
  return 0.0;
}

double DistributionSpec::quantile(double p) const {
  if (!(p > 0.0 && p < 1.0)) {
    throw DomainError("quantile: probability must lie in (0,1)");
  }
  switch (family_) {
    case Family::Uniform:
      return a_ + p * (b_ - a_);
    case Family::Normal:
      return m_ + s_ * std_normal_quantile(p);
    case Family::Lognormal:
      return std::exp(mu_ln_ + sig_ln_ * std_normal_quantile(p));
    case Family::Beta: {
      // Newton on the regularized incomplete beta, kept inside a bracket.
      double lo = 0.0, hi = 1.0;
      double t = alpha_ / (alpha_ + beta_);
      const double log_norm = log_beta_fn(alpha_, beta_);
      for (int it = 0; it < 200; ++it) {
        const double f = ibeta_reg(alpha_, beta_, t) - p;
        if (f > 0.0) {
          hi = t;
        } else {
          lo = t;
        }
        double step_to = 0.5 * (lo + hi);
        if (t > 0.0 && t < 1.0) {
          const double lpdf = (alpha_ - 1.0) * std::log(t) +
                              (beta_ - 1.0) * std::log1p(-t) - log_norm;
          const double cand = t - f * std::exp(-lpdf);
          if (cand > lo && cand < hi && std::isfinite(cand)) step_to = cand;
        }
        if (std::fabs(step_to - t) <= 1e-16 * std::max(1.0, std::fabs(t))) {
          t = step_to;
          break;
        }
        t = step_to;
      }
      return a_ + t * (b_ - a_);
    }
  }
  return 0.0;
}

double DistributionSpec::mean() const {
  switch (family_) {
    case Family::Uniform: return 0.5 * (a_ + b_);
    case Family::Normal: return m_;
    case Family::Lognormal: return m_;
    case Family::Beta: return a_ + (b_ - a_) * alpha_ / (alpha_ + beta_);
  }
  return 0.0;
}

double DistributionSpec::stddev() const {
  switch (family_) {
    case Family::Uniform: return (b_ - a_) / std::sqrt(12.0);
    case Family::Normal: return s_;
    case Family::Lognormal: return s_;
    case Family::Beta: {
      const double ab = alpha_ + beta_;
      return (b_ - a_) * std::sqrt(alpha_ * beta_ / (ab * ab * (ab + 1.0)));
    }
  }
  return 0.0;
}

std::pair<double, double> DistributionSpec::support() const {
  switch (family_) {
    case Family::Uniform: return {a_, b_};
    case Family::Normal: return {-kInf, kInf};
    case Family::Lognormal: return {0.0, kInf};
    case Family::Beta: return {a_, b_};
  }
  return {-kInf, kInf};
}

double DistributionSpec::sample(RandomSource& rng) const {
  return quantile(rng.uniform01());
}

nlohmann::json DistributionSpec::to_json() const {
  nlohmann::json j;
  j["family"] = family_name(family_);
  switch (family_) {
    case Family::Uniform:
      j["a"] = a_;
      j["b"] = b_;
      break;
    case Family::Normal:
    case Family::Lognormal:
      j["mean"] = m_;
      j["std"] = s_;
      break;
    case Family::Beta:
      j["alpha"] = alpha_;
      j["beta"] = beta_;
      j["a"] = a_;
      j["b"] = b_;
      break;
  }
  return j;
}

DistributionSpec DistributionSpec::parse(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("family") || !j["family"].is_string()) {
    throw ConfigError("distribution: expected an object with a 'family' key");
  }
  const std::string fam = j["family"].get<std::string>();
  auto need = [&](const char* key) -> double {
    if (!j.contains(key) || !j[key].is_number()) {
      throw ConfigError("distribution '" + fam + "': missing numeric field '" +
                        key + "'");
    }
    return j[key].get<double>();
  };
  if (fam == "uniform") return uniform(need("a"), need("b"));
  if (fam == "normal") return normal(need("mean"), need("std"));
  if (fam == "lognormal") return lognormal(need("mean"), need("std"));
  if (fam == "beta") {
    return beta(need("alpha"), need("beta"), need("a"), need("b"));
  }
  throw ConfigError("distribution: unknown family '" + fam + "'");
}

Eigen::VectorXd sample_iid(const DistributionSpec& spec, std::size_t n,
                           RandomSource& rng) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    out(static_cast<Eigen::Index>(i)) = spec.sample(rng);
  }
  return out;
}

Eigen::MatrixXd lhs_sample(const std::vector<DistributionSpec>& marginals,
                           std::size_t n, RandomSource& rng) {
  const auto d = static_cast<Eigen::Index>(marginals.size());
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), d);
  std::vector<std::size_t> perm(n);
  for (Eigen::Index j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t i = n; i > 1; --i) {
      std::swap(perm[i - 1], perm[rng.uniform_below(i)]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double u = (static_cast<double>(perm[i]) + rng.uniform01()) /
                       static_cast<double>(n);
      out(static_cast<Eigen::Index>(i), j) = marginals[j].quantile(u);
    }
  }
  return out;
}

GaussianCopula::GaussianCopula(double rho) : rho_(rho) {
  if (!std::isfinite(rho) || !(std::fabs(rho) < 1.0)) {
    throw DomainError("GaussianCopula: correlation must lie in (-1,1)");
  }
}

double GaussianCopula::log_density_z(double z1, double z2) const {
  const double r2 = rho_ * rho_;
  return -0.5 * std::log1p(-r2) -
         (r2 * (z1 * z1 + z2 * z2) - 2.0 * rho_ * z1 * z2) /
             (2.0 * (1.0 - r2));
}

double GaussianCopula::density(double u1, double u2) const {
  if (!(u1 > 0.0 && u1 < 1.0) || !(u2 > 0.0 && u2 < 1.0)) {
    throw DomainError("GaussianCopula::density: arguments must lie in (0,1)");
  }
  if (rho_ == 0.0) return 1.0;
  return std::exp(
      log_density_z(std_normal_quantile(u1), std_normal_quantile(u2)));
}

double GaussianCopula::log_density(double u1, double u2) const {
  if (rho_ == 0.0) return 0.0;
  const double hi = std::nextafter(1.0, 0.0);
  const double v1 = std::clamp(u1, 1e-300, hi);
  const double v2 = std::clamp(u2, 1e-300, hi);
  return log_density_z(std_normal_quantile(v1), std_normal_quantile(v2));
}

std::pair<double, double> GaussianCopula::sample(RandomSource& rng) const {
  const double n1 = rng.normal();
  const double n2 = rng.normal();
  const double z2 = rho_ * n1 + std::sqrt(1.0 - rho_ * rho_) * n2;
  return {std_normal_cdf(n1), std_normal_cdf(z2)};
}

double GaussianCopula::joint_log_pdf(const DistributionSpec& m1,
                                     const DistributionSpec& m2, double x1,
                                     double x2) const {
  const double lp = m1.log_pdf(x1) + m2.log_pdf(x2);
  if (!(lp > -std::numeric_limits<double>::infinity())) return lp;
  return lp + log_density(m1.cdf(x1), m2.cdf(x2));
}

}  // namespace stochinv
