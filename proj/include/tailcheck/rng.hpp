#pragma once

// Counter-based random streams (Philox4x32-10) and the handful of variate
// recipes used by the simulations. Every stream is addressed by
// (seed, stream, substream), so replication i of a study draws the same
// numbers no matter which thread runs it or in what order.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

#include "tailcheck/error.hpp"

namespace tailcheck {

namespace detail {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline constexpr void mulhilo32(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                                std::uint32_t& lo) {
  const std::uint64_t product = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(product >> 32);
  lo = static_cast<std::uint32_t>(product);
}

}  // namespace detail

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

// Philox4x32 with 10 rounds (Salmon et al., SC'11).
inline constexpr PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key) {
  constexpr std::uint32_t kMul0 = 0xD2511F53u;
  constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    std::uint32_t hi0 = 0, lo0 = 0, hi1 = 0, lo1 = 0;
    detail::mulhilo32(kMul0, ctr[0], hi0, lo0);
    detail::mulhilo32(kMul1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

// A 64-bit UniformRandomBitGenerator over one Philox stream. The key is
// derived from (seed, stream); the substream occupies the upper half of the
// counter and the lower half counts blocks.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream = 0) {
    const std::uint64_t k = detail::splitmix64(seed ^ detail::splitmix64(stream + 0x632BE59BD9B4E019ull));
    key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
    substream_ = substream;
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    if (buffered_ == 0) refill();
    const result_type out = buffer_[2 - buffered_];
    --buffered_;
    return out;
  }

  // Uniform on the open interval (0, 1), 53 random bits.
  double uniform_open() { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

 private:
  void refill() {
    const PhiloxCounter ctr{static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
                            static_cast<std::uint32_t>(substream_),
                            static_cast<std::uint32_t>(substream_ >> 32)};
    const PhiloxCounter out = philox4x32_10(ctr, key_);
    buffer_[0] = (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
    buffer_[1] = (static_cast<std::uint64_t>(out[3]) << 32) | out[2];
    buffered_ = 2;
    ++block_;
  }

  PhiloxKey key_{};
  std::uint64_t substream_ = 0;
  std::uint64_t block_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int buffered_ = 0;
};

// Variate recipes. These are written out rather than taken from <random>
// because the standard distributions are implementation-defined, and the
// simulation tables must reproduce bit for bit on any toolchain.
namespace variates {

inline double standard_exponential(RngStream& rng) { return -std::log(rng.uniform_open()); }

// Box-Muller, cosine branch only; two uniforms per draw.
inline double standard_normal(RngStream& rng) {
  const double radius = std::sqrt(-2.0 * std::log(rng.uniform_open()));
  const double angle = 2.0 * std::numbers::pi * rng.uniform_open();
  return radius * std::cos(angle);
}

inline double standard_logistic(RngStream& rng) {
  const double u = rng.uniform_open();
  return std::log(u) - std::log1p(-u);
}

// Gamma(shape, 1) by Marsaglia-Tsang; shapes below one are boosted with
// G(a) = G(a + 1) * U^(1/a).
inline double gamma(RngStream& rng, double shape) {
  if (!(shape > 0.0)) throw DomainError("gamma variate requires shape > 0");
  if (shape < 1.0) {
    const double boosted = gamma(rng, shape + 1.0);
    return boosted * std::pow(rng.uniform_open(), 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double z = 0.0;
    double v = 0.0;
    do {
      z = standard_normal(rng);
      v = 1.0 + c * z;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform_open();
    if (u < 1.0 - 0.0331 * z * z * z * z) return d * v;
    if (std::log(u) < 0.5 * z * z + d * (1.0 - v + std::log(v))) return d * v;
  }
}

// Student-t(df) = Z / sqrt(W / df), W ~ chi-square(df) = 2 * Gamma(df / 2).
inline double student_t(RngStream& rng, double df) {
  if (!(df > 0.0)) throw DomainError("Student-t variate requires df > 0");
  const double z = standard_normal(rng);
  const double chi2 = 2.0 * gamma(rng, 0.5 * df);
  return z / std::sqrt(chi2 / df);
}

// Pareto on [1, inf) with P(X > x) = x^(-1/tail_index).
inline double pareto(RngStream& rng, double tail_index) {
  if (!(tail_index > 0.0)) throw DomainError("Pareto variate requires tail index > 0");
  return std::pow(rng.uniform_open(), -tail_index);
}

inline int bernoulli(RngStream& rng, double p) { return rng.uniform_open() < p ? 1 : 0; }

inline double uniform(RngStream& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform_open(); }

}  // namespace variates

}  // namespace tailcheck
