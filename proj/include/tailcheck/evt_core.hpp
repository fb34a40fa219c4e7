#pragma once

// Generalized extreme value primitives and the densities of the top-k
// order statistics in the fixed-k limit.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tailcheck/error.hpp"
#include "tailcheck/quadrature.hpp"

namespace tailcheck {

// Shape parameter of a GEV domain of attraction; 0 is the Gumbel (thin
// tailed) case, positive values are Frechet (power-law) tails.
class TailIndex {
 public:
  constexpr TailIndex() = default;
  explicit TailIndex(double value) : value_(value) {
    if (!std::isfinite(value) || value < 0.0)
      throw DomainError("tail index must be finite and >= 0, got " + std::to_string(value));
  }

  constexpr double value() const noexcept { return value_; }
  constexpr bool is_gumbel() const noexcept { return value_ == 0.0; }

 private:
  double value_ = 0.0;
};

// The k largest observations of a subsample, largest first.
class TopKSample {
 public:
  TopKSample(std::vector<double> values, std::size_t source_size)
      : values_(std::move(values)), source_size_(source_size) {
    if (values_.empty()) throw ConfigError("top-k sample needs k >= 1");
    if (source_size_ < values_.size())
      throw ConfigError("top-k sample larger than its source subsample");
    for (std::size_t j = 0; j < values_.size(); ++j) {
      if (!std::isfinite(values_[j])) throw DomainError("top-k sample contains a non-finite value");
      if (j > 0 && values_[j] > values_[j - 1]) throw DomainError("top-k sample must be sorted nonincreasing");
    }
  }

  std::span<const double> values() const noexcept { return values_; }
  std::size_t k() const noexcept { return values_.size(); }
  std::size_t source_size() const noexcept { return source_size_; }

 private:
  std::vector<double> values_;
  std::size_t source_size_;
};

// V*: top-k values shifted by the k-th and divided by the range, so the first
// entry is exactly 1 and the last exactly 0.
class SelfNormalizedSpacings {
 public:
  static constexpr std::size_t kMinK = 3;

  static SelfNormalizedSpacings from_values(std::vector<double> vstar) {
    if (vstar.size() < kMinK)
      throw ConfigError("self-normalized spacings need k >= 3, got k=" + std::to_string(vstar.size()));
    if (vstar.front() != 1.0 || vstar.back() != 0.0)
      throw DomainError("self-normalized spacings must start at 1 and end at 0");
    for (std::size_t j = 1; j < vstar.size(); ++j) {
      if (!(vstar[j] <= vstar[j - 1]) || !(vstar[j] >= 0.0))
        throw DomainError("self-normalized spacings must be nonincreasing within [0, 1]");
    }
    return SelfNormalizedSpacings(std::move(vstar));
  }

  std::span<const double> values() const noexcept { return values_; }
  std::size_t k() const noexcept { return values_.size(); }
  double operator[](std::size_t j) const { return values_[j]; }

  // Sum of the entries; at least 1.
  double sum() const noexcept { return std::accumulate(values_.begin(), values_.end(), 0.0); }

  friend bool operator==(const SelfNormalizedSpacings&, const SelfNormalizedSpacings&) = default;

 private:
  explicit SelfNormalizedSpacings(std::vector<double> v) : values_(std::move(v)) {}
  std::vector<double> values_;
};

namespace detail {
inline void require_finite(double x, const char* what) {
  if (!std::isfinite(x)) throw DomainError(std::string(what) + ": argument must be finite");
}

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log G_gamma(x) = -(1 + gamma x)^(-1/gamma), or -exp(-x) when gamma = 0.
inline double log_gev_cdf(double gamma, double x) {
  if (gamma == 0.0) return -std::exp(-x);
  const double z = gamma * x;
  if (z <= -1.0) return kNegInf;
  return -std::exp(-std::log1p(z) / gamma);
}
}  // namespace detail

inline double gev_cdf(TailIndex gamma, double x) {
  detail::require_finite(x, "gev_cdf");
  return std::exp(detail::log_gev_cdf(gamma.value(), x));
}

inline double log_gev_pdf(TailIndex gamma, double x) {
  detail::require_finite(x, "gev_pdf");
  const double g = gamma.value();
  if (g == 0.0) return -x - std::exp(-x);
  const double z = g * x;
  if (z <= -1.0) return detail::kNegInf;
  const double t = std::log1p(z);
  return -(1.0 + 1.0 / g) * t - std::exp(-t / g);
}

inline double gev_pdf(TailIndex gamma, double x) { return std::exp(log_gev_pdf(gamma, x)); }

// Joint limiting density of the k largest normalized order statistics,
// G(v_k) * prod_j g(v_j) / G(v_j) on v_1 >= ... >= v_k, zero elsewhere.
inline double log_joint_topk_density(TailIndex gamma, std::span<const double> v) {
  if (v.empty()) throw ConfigError("joint top-k density needs k >= 1");
  for (double x : v) detail::require_finite(x, "joint_topk_density");
  for (std::size_t j = 1; j < v.size(); ++j)
    if (v[j] > v[j - 1]) return detail::kNegInf;
  const double g = gamma.value();
  double log_density = detail::log_gev_cdf(g, v.back());
  for (double x : v) {
    const double log_pdf = log_gev_pdf(gamma, x);
    if (log_pdf == detail::kNegInf) return detail::kNegInf;
    log_density += log_pdf - detail::log_gev_cdf(g, x);
  }
  return log_density;
}

inline double joint_topk_density(TailIndex gamma, std::span<const double> v) {
  return std::exp(log_joint_topk_density(gamma, v));
}

inline SelfNormalizedSpacings self_normalize(const TopKSample& sample) {
  const auto x = sample.values();
  const std::size_t k = x.size();
  if (k < SelfNormalizedSpacings::kMinK)
    throw ConfigError("self-normalization needs k >= 3, got k=" + std::to_string(k));
  const double top = x.front();
  const double bottom = x.back();
  if (!(top > bottom)) {
    throw DegenerateSpacingsError("largest and k-th largest of the top-" + std::to_string(k) +
                                  " sample are equal (" + std::to_string(top) +
                                  "); the tail has heavy ties and the spacings are undefined");
  }
  const double range = top - bottom;
  std::vector<double> vstar(k);
  vstar.front() = 1.0;
  vstar.back() = 0.0;
  for (std::size_t j = 1; j + 1 < k; ++j) vstar[j] = std::clamp((x[j] - bottom) / range, 0.0, 1.0);
  return SelfNormalizedSpacings::from_values(std::move(vstar));
}

// Below this index the density of V* is evaluated by its gamma -> 0 limit.
inline constexpr double kNullBranchThreshold = 1e-6;

// log f(V* | gamma = 0) = log Gamma(k) + log Gamma(k-1) - (k-1) log(sum_j v*_j).
inline double log_vstar_density_null(const SelfNormalizedSpacings& spacings) {
  const double k = static_cast<double>(spacings.k());
  return std::lgamma(k) + std::lgamma(k - 1.0) - (k - 1.0) * std::log(spacings.sum());
}

namespace detail {

// log of  int_0^inf u^(k-2) exp(-(1 + 1/gamma) sum_j log1p(gamma v_j u)) du.
//
// Entries at or near zero leave the integrand with a long s^(-1-r) tail,
// r = (1 + 1/gamma) * #positive - (k - 1), that the folded map cannot reach.
// Here the integral runs over z = log(s / c), where every factor stays finite,
// and z is folded onto (-1, 1) by z = 4t / (1 - t^2).
inline double log_vstar_integral_wide(double gamma, const SelfNormalizedSpacings& spacings,
                                      const quadrature::Tolerance& tol) {
  const std::size_t k = spacings.k();
  const double total = spacings.sum();
  const double exponent = 1.0 + 1.0 / gamma;
  const double c = std::max(1.0, static_cast<double>(k) - 2.0);
  std::vector<double> log_scaled;
  for (double v : spacings.values())
    if (v > 0.0) log_scaled.push_back(std::log(gamma * v / total * c));
  const double rate = exponent * static_cast<double>(log_scaled.size()) - (static_cast<double>(k) - 1.0);
  if (!(rate > 0.0))
    throw NumericError("V* density diverges: too many top-k values tie with the k-th", INFINITY);

  auto softplus = [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); };
  auto log_g = [&](double z) {
    double acc = 0.0;
    for (double a : log_scaled) acc += softplus(z + a);
    return (static_cast<double>(k) - 1.0) * (z + std::log(c)) - exponent * acc;
  };
  constexpr double kScale = 4.0;
  const double offset = log_g(0.0);
  auto integrand = [&](double t) {
    const double q = 1.0 - t * t;
    const double z = kScale * t / q;
    return std::exp(log_g(z) - offset) * kScale * (1.0 + t * t) / (q * q);
  };
  const std::vector<double> breaks{-0.5, 0.0, 0.5, 0.9, 0.99};
  const auto result = quadrature::integrate_adaptive(integrand, -1.0, 1.0, tol, breaks);
  if (!(result.value > 0.0) || !std::isfinite(result.value))
    throw NumericError("V* density integral is not positive and finite", result.error);
  return offset + std::log(result.value) - (static_cast<double>(k) - 1.0) * std::log(total);
}

// With S = sum v_j and u = s / S the integrand becomes a Gamma(k-1)-like bump
// in s around c = k - 2; the half line is folded onto [0, 1) by
// s = c t / (1 - t) and the integrand is scaled by its value at t = 1/2.
inline double log_vstar_integral(double gamma, const SelfNormalizedSpacings& spacings,
                                 const quadrature::Tolerance& tol) {
  const std::size_t k = spacings.k();
  const double total = spacings.sum();
  std::vector<double> scaled;
  scaled.reserve(k);
  for (double v : spacings.values())
    if (v > 0.0) scaled.push_back(gamma * v / total);

  const double power = static_cast<double>(k) - 2.0;
  const double exponent = 1.0 + 1.0 / gamma;
  const double c = std::max(1.0, power);
  auto log_h = [&](double s) {
    double acc = 0.0;
    for (double w : scaled) acc += std::log1p(w * s);
    return power * std::log(s) - exponent * acc;
  };

  const double offset = log_h(c) + std::log(4.0 * c);
  auto integrand = [&](double t) {
    const double one_minus = 1.0 - t;
    const double s = c * t / one_minus;
    const double log_value = log_h(s) + std::log(c) - 2.0 * std::log(one_minus) - offset;
    return std::exp(log_value);
  };

  // Breakpoints bracket the bump, whose relative width in s is about 1/sqrt(c).
  const double width = 1.0 / std::sqrt(c);
  std::vector<double> breaks;
  for (double z : {-3.0, -1.5, 0.0, 1.5, 3.0}) {
    const double s = c * std::exp(z * width);
    breaks.push_back(s / (s + c));
  }
  try {
    const auto result = quadrature::integrate_adaptive(integrand, 0.0, 1.0, tol, breaks);
    if (result.value > 0.0 && std::isfinite(result.value))
      return offset + std::log(result.value) - (static_cast<double>(k) - 1.0) * std::log(total);
  } catch (const NumericError&) {
  }
  return log_vstar_integral_wide(gamma, spacings, tol);
}

}  // namespace detail

// log f(V* | gamma): Gamma(k) times a one-dimensional integral over the
// common scale, or the closed-form limit when gamma is below
// kNullBranchThreshold.
inline double log_vstar_density(TailIndex gamma, const SelfNormalizedSpacings& spacings,
                                const quadrature::Tolerance& tol = {}) {
  if (gamma.value() < kNullBranchThreshold) return log_vstar_density_null(spacings);
  return std::lgamma(static_cast<double>(spacings.k())) + detail::log_vstar_integral(gamma.value(), spacings, tol);
}

inline double vstar_density(TailIndex gamma, const SelfNormalizedSpacings& spacings,
                            const quadrature::Tolerance& tol = {}) {
  return std::exp(log_vstar_density(gamma, spacings, tol));
}

}  // namespace tailcheck
