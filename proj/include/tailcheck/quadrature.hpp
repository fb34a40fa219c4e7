#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "tailcheck/error.hpp"

namespace tailcheck::quadrature {

struct Tolerance {
  double absolute = 1e-10;
  double relative = 1e-10;
  std::size_t max_panels = 400;
};

struct Integral {
  double value = 0.0;
  double error = 0.0;
  std::size_t evaluations = 0;
  std::size_t panels = 0;
};

namespace detail {

// 15-point Kronrod abscissae with the embedded 7-point Gauss rule on odd indices.
inline constexpr double kKronrodNodes[8] = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr double kKronrodWeights[8] = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr double kGaussWeights[4] = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
  double lo;
  double hi;
  double value;
  double error;
  bool operator<(const Panel& other) const { return error < other.error; }
};

// One G7-K15 panel with the QUADPACK error heuristic.
template <class F>
Panel gauss_kronrod_15(F& f, double lo, double hi) {
  const double center = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  const double abs_half = std::abs(half);
  double f_lo[7];
  double f_hi[7];

  const double f_center = f(center);
  double gauss = f_center * kGaussWeights[3];
  double kronrod = f_center * kKronrodWeights[7];
  double abs_sum = std::abs(kronrod);
  for (int j = 0; j < 7; ++j) {
    const double dx = half * kKronrodNodes[j];
    f_lo[j] = f(center - dx);
    f_hi[j] = f(center + dx);
    const double pair = f_lo[j] + f_hi[j];
    kronrod += kKronrodWeights[j] * pair;
    abs_sum += kKronrodWeights[j] * (std::abs(f_lo[j]) + std::abs(f_hi[j]));
    if (j % 2 == 1) gauss += kGaussWeights[j / 2] * pair;
  }
  const double mean = 0.5 * kronrod;
  double spread = kKronrodWeights[7] * std::abs(f_center - mean);
  for (int j = 0; j < 7; ++j)
    spread += kKronrodWeights[j] * (std::abs(f_lo[j] - mean) + std::abs(f_hi[j] - mean));

  const double result = kronrod * half;
  abs_sum *= abs_half;
  spread *= abs_half;
  double error = std::abs((kronrod - gauss) * half);
  if (spread != 0.0 && error != 0.0) error = spread * std::min(1.0, std::pow(200.0 * error / spread, 1.5));
  constexpr double eps = std::numeric_limits<double>::epsilon();
  if (abs_sum > std::numeric_limits<double>::min() / (50.0 * eps)) error = std::max(50.0 * eps * abs_sum, error);
  return {lo, hi, result, error};
}

}  // namespace detail

// Globally adaptive G7-K15 integration over [lo, hi] starting from the given
// interior breakpoints. The panel with the largest error estimate is bisected
// until the summed estimate meets max(absolute, relative * |value|).
template <class F>
Integral integrate_adaptive(F&& f, double lo, double hi, const Tolerance& tol,
                            std::span<const double> breakpoints = {}) {
  std::vector<double> edges;
  edges.reserve(breakpoints.size() + 2);
  edges.push_back(lo);
  for (double b : breakpoints)
    if (b > lo && b < hi) edges.push_back(b);
  edges.push_back(hi);
  std::sort(edges.begin(), edges.end());

  std::priority_queue<detail::Panel> queue;
  Integral out;
  double value = 0.0;
  double error = 0.0;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    const auto panel = detail::gauss_kronrod_15(f, edges[i], edges[i + 1]);
    value += panel.value;
    error += panel.error;
    out.evaluations += 15;
    queue.push(panel);
  }

  while (error > std::max(tol.absolute, tol.relative * std::abs(value))) {
    if (queue.size() >= tol.max_panels) {
      throw NumericError("adaptive quadrature did not converge: error estimate " + std::to_string(error) +
                             " on value " + std::to_string(value) + " after " + std::to_string(queue.size()) +
                             " panels",
                         error);
    }
    const detail::Panel worst = queue.top();
    queue.pop();
    const double mid = 0.5 * (worst.lo + worst.hi);
    const auto left = detail::gauss_kronrod_15(f, worst.lo, mid);
    const auto right = detail::gauss_kronrod_15(f, mid, worst.hi);
    out.evaluations += 30;
    value += left.value + right.value - worst.value;
    error += left.error + right.error - worst.error;
    queue.push(left);
    queue.push(right);
  }

  // Re-sum to avoid the drift of the running updates.
  out.panels = queue.size();
  out.value = 0.0;
  out.error = 0.0;
  std::vector<detail::Panel> panels;
  panels.reserve(queue.size());
  while (!queue.empty()) {
    panels.push_back(queue.top());
    queue.pop();
  }
  std::sort(panels.begin(), panels.end(), [](const auto& a, const auto& b) { return a.lo < b.lo; });
  for (const auto& p : panels) {
    out.value += p.value;
    out.error += p.error;
  }
  return out;
}

struct GaussLegendreRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// n-point Gauss-Legendre rule mapped to [lo, hi]; nodes by Newton iteration on P_n.
inline GaussLegendreRule gauss_legendre(std::size_t n, double lo, double hi) {
  if (n < 1) throw ConfigError("Gauss-Legendre rule needs at least one node");
  GaussLegendreRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const double mid = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  const std::size_t m = (n + 1) / 2;
  for (std::size_t i = 0; i < m; ++i) {
    double z = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (static_cast<double>(n) + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p1 = 1.0;
      double p2 = 0.0;
      for (std::size_t j = 1; j <= n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * static_cast<double>(j) - 1.0) * z * p2 - (static_cast<double>(j) - 1.0) * p3) /
             static_cast<double>(j);
      }
      dp = static_cast<double>(n) * (z * p1 - p2) / (z * z - 1.0);
      const double step = p1 / dp;
      z -= step;
      if (std::abs(step) < 1e-15) break;
    }
    // Recompute the derivative at the converged root for the weight.
    double p1 = 1.0;
    double p2 = 0.0;
    for (std::size_t j = 1; j <= n; ++j) {
      const double p3 = p2;
      p2 = p1;
      p1 = ((2.0 * static_cast<double>(j) - 1.0) * z * p2 - (static_cast<double>(j) - 1.0) * p3) /
           static_cast<double>(j);
    }
    dp = static_cast<double>(n) * (z * p1 - p2) / (z * z - 1.0);
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    rule.nodes[i] = mid - half * z;
    rule.nodes[n - 1 - i] = mid + half * z;
    rule.weights[i] = half * w;
    rule.weights[n - 1 - i] = half * w;
  }
  return rule;
}

}  // namespace tailcheck::quadrature
