#pragma once

// Dataset-level orchestration: subsample extraction, one- and two-sided tail
// tests, per-period panel tests with a Bonferroni combination, the fitted
// index path, and Hill / Pareto tail fits.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "tailcheck/error.hpp"
#include "tailcheck/evt_core.hpp"
#include "tailcheck/lr_test.hpp"

namespace tailcheck {

// Outcome y in {0, 1} with its dominating covariate x; panels add unit and
// period labels, the plug-in path adds a fitted linear index.
struct BinaryDataset {
  std::vector<int> y;
  std::vector<double> x;
  std::vector<std::string> unit;
  std::vector<std::int64_t> period;
  std::optional<std::vector<double>> fitted_index;

  std::size_t size() const noexcept { return y.size(); }
  bool has_periods() const noexcept { return !period.empty(); }

  void validate() const {
    if (x.size() != y.size())
      throw DimensionError("x has " + std::to_string(x.size()) + " rows but y has " + std::to_string(y.size()));
    if (!unit.empty() && unit.size() != y.size()) throw DimensionError("unit labels do not match the row count");
    if (!period.empty() && period.size() != y.size()) throw DimensionError("period labels do not match the row count");
    if (fitted_index && fitted_index->size() != y.size())
      throw DimensionError("fitted index has " + std::to_string(fitted_index->size()) + " rows but y has " +
                           std::to_string(y.size()));
    for (int v : y)
      if (v != 0 && v != 1) throw DomainError("outcome must be 0 or 1");
  }

  friend bool operator==(const BinaryDataset&, const BinaryDataset&) = default;
};

enum class TailSelection { right, left, both };

inline const char* to_string(TailSelection tail) {
  switch (tail) {
    case TailSelection::right: return "right";
    case TailSelection::left: return "left";
    case TailSelection::both: return "both";
  }
  return "?";
}

struct TailTestRequest {
  TailSelection tail = TailSelection::both;
  TestConfig config{};
};

namespace detail {

inline const char* describe(Tail tail) {
  return tail == Tail::right ? "right tail (Y=0 subsample)" : "left tail (Y=1 subsample)";
}

// Right tail: top k of {x : y = 0}. Left tail: top k of {-x : y = 1}.
inline TopKSample extract_topk(std::span<const double> values, std::span<const int> y, Tail tail, std::size_t k,
                               std::span<const std::size_t> rows = {}) {
  if (k < 1) throw ConfigError("k must be >= 1");
  const int outcome = tail == Tail::right ? 0 : 1;
  const double sign = tail == Tail::right ? 1.0 : -1.0;
  std::vector<double> candidates;
  auto take = [&](std::size_t i) {
    if (y[i] == outcome) candidates.push_back(sign * values[i]);
  };
  if (rows.empty()) {
    for (std::size_t i = 0; i < y.size(); ++i) take(i);
  } else {
    for (std::size_t i : rows) take(i);
  }
  const std::size_t n0 = candidates.size();
  if (n0 < k) throw InsufficientTailError(n0, k, describe(tail));
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k), candidates.end(),
                    std::greater<>());
  candidates.resize(k);
  return TopKSample(std::move(candidates), n0);
}

}  // namespace detail

inline TopKSample extract_topk(const BinaryDataset& data, Tail tail, std::size_t k) {
  data.validate();
  return detail::extract_topk(data.x, data.y, tail, k);
}

// LR statistic of one tail together with the subsample size it came from.
struct TailStatistic {
  double statistic = 0.0;
  std::size_t n_subsample = 0;
};

inline TailStatistic compute_tail_statistic(std::span<const double> values, std::span<const int> y, Tail tail,
                                            std::size_t k, const LrStatistic& statistic,
                                            std::span<const std::size_t> rows = {}) {
  const auto top = detail::extract_topk(values, y, tail, k, rows);
  return {statistic(self_normalize(top)), top.source_size()};
}

struct TailTestOutcome {
  TailSelection tail = TailSelection::both;
  std::optional<TestResult> right;
  std::optional<TestResult> left;
  // Single tail: that tail's p-value. Both: min(1, 2 min(p_R, p_L)).
  double combined_p = 1.0;
  bool reject = false;
  bool plug_in = false;
};

// Shared by run_tail_test and the simulation harness. With both tails each
// side is held to cv(alpha / 2, k) and the global null is rejected when
// either statistic exceeds it.
inline TailTestOutcome assemble_tail_outcome(TailSelection selection, const std::optional<TailStatistic>& right,
                                             const std::optional<TailStatistic>& left, const NullDistribution& null,
                                             double alpha) {
  TailTestOutcome out;
  out.tail = selection;
  const double level = selection == TailSelection::both ? alpha / 2.0 : alpha;
  if (right) out.right = make_result(right->statistic, null, level, Tail::right, right->n_subsample);
  if (left) out.left = make_result(left->statistic, null, level, Tail::left, left->n_subsample);
  switch (selection) {
    case TailSelection::right:
      out.combined_p = out.right.value().p_value;
      out.reject = out.right->reject;
      break;
    case TailSelection::left:
      out.combined_p = out.left.value().p_value;
      out.reject = out.left->reject;
      break;
    case TailSelection::both:
      out.combined_p = std::min(1.0, 2.0 * std::min(out.right.value().p_value, out.left.value().p_value));
      out.reject = out.right->reject || out.left->reject;
      break;
  }
  return out;
}

namespace detail {

inline TailTestOutcome run_tail_test_on(std::span<const double> values, std::span<const int> y,
                                        const TailTestRequest& request, bool plug_in) {
  request.config.validate();
  const auto& cfg = request.config;
  const LrStatistic statistic(cfg.weight);
  std::optional<TailStatistic> right, left;
  if (request.tail != TailSelection::left) right = compute_tail_statistic(values, y, Tail::right, cfg.k, statistic);
  if (request.tail != TailSelection::right) left = compute_tail_statistic(values, y, Tail::left, cfg.k, statistic);
  const auto null = null_distribution(cfg.k, cfg.null_draws, cfg.seed, cfg.weight);
  auto out = assemble_tail_outcome(request.tail, right, left, *null, cfg.alpha);
  if (plug_in) {
    out.plug_in = true;
    if (out.right) out.right->plug_in = true;
    if (out.left) out.left->plug_in = true;
  }
  return out;
}

}  // namespace detail

inline TailTestOutcome run_tail_test(const BinaryDataset& data, const TailTestRequest& request) {
  data.validate();
  return detail::run_tail_test_on(data.x, data.y, request, false);
}

// Same pipeline on a fitted linear index in place of the dominating covariate.
inline TailTestOutcome run_fitted_index_test(const BinaryDataset& data, const TailTestRequest& request) {
  if (!data.fitted_index) throw ConfigError("dataset has no fitted index");
  data.validate();
  return detail::run_tail_test_on(*data.fitted_index, data.y, request, true);
}

struct PeriodOutcome {
  std::optional<TestResult> right;
  std::optional<TestResult> left;
};

struct SkippedTest {
  std::int64_t period = 0;
  Tail tail = Tail::right;
  std::size_t n_subsample = 0;
  std::size_t k = 0;
};

struct PanelTestResult {
  TailSelection tail = TailSelection::both;
  std::map<std::int64_t, PeriodOutcome> per_period;
  std::vector<SkippedTest> skipped;
  std::size_t n_tests = 0;
  // min(1, n_tests * smallest component p-value).
  double combined_p = 1.0;
  bool reject = false;
};

// Per-period statistics; a missing entry means the period had too few
// subsample observations for that tail.
struct PeriodStatistics {
  std::int64_t period = 0;
  std::optional<TailStatistic> right;
  std::optional<TailStatistic> left;
  std::size_t right_n0 = 0;
  std::size_t left_n0 = 0;
};

// Bonferroni over every component test that could be run. Components carry
// cv(alpha / n_tests, k); the panel rejects when some component p-value falls
// below alpha / n_tests.
inline PanelTestResult assemble_panel_outcome(TailSelection selection, const std::vector<PeriodStatistics>& periods,
                                              const NullDistribution& null, double alpha) {
  PanelTestResult out;
  out.tail = selection;
  const bool want_right = selection != TailSelection::left;
  const bool want_left = selection != TailSelection::right;
  for (const auto& p : periods) {
    if (want_right) {
      if (p.right) ++out.n_tests;
      else out.skipped.push_back({p.period, Tail::right, p.right_n0, null.k()});
    }
    if (want_left) {
      if (p.left) ++out.n_tests;
      else out.skipped.push_back({p.period, Tail::left, p.left_n0, null.k()});
    }
  }
  if (out.n_tests == 0) {
    throw Error(ErrorCode::insufficient_tail,
                "panel test: no period has at least k=" + std::to_string(null.k()) + " subsample observations");
  }
  const double level = alpha / static_cast<double>(out.n_tests);
  double min_p = 1.0;
  for (const auto& p : periods) {
    PeriodOutcome po;
    if (want_right && p.right) {
      po.right = make_result(p.right->statistic, null, level, Tail::right, p.right->n_subsample);
      min_p = std::min(min_p, po.right->p_value);
    }
    if (want_left && p.left) {
      po.left = make_result(p.left->statistic, null, level, Tail::left, p.left->n_subsample);
      min_p = std::min(min_p, po.left->p_value);
    }
    out.per_period.emplace(p.period, po);
  }
  out.combined_p = std::min(1.0, static_cast<double>(out.n_tests) * min_p);
  out.reject = min_p < level;
  return out;
}

namespace detail {

inline std::map<std::int64_t, std::vector<std::size_t>> rows_by_period(const BinaryDataset& data) {
  std::map<std::int64_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < data.period.size(); ++i) groups[data.period[i]].push_back(i);
  return groups;
}

inline std::size_t count_outcome(std::span<const int> y, std::span<const std::size_t> rows, int outcome) {
  std::size_t n = 0;
  for (std::size_t i : rows) n += y[i] == outcome ? 1 : 0;
  return n;
}

inline std::vector<PeriodStatistics> period_statistics(const BinaryDataset& data, TailSelection selection,
                                                       std::size_t k, const LrStatistic& statistic) {
  std::vector<PeriodStatistics> out;
  for (const auto& [period, rows] : rows_by_period(data)) {
    PeriodStatistics ps;
    ps.period = period;
    ps.right_n0 = count_outcome(data.y, rows, 0);
    ps.left_n0 = count_outcome(data.y, rows, 1);
    if (selection != TailSelection::left && ps.right_n0 >= k)
      ps.right = compute_tail_statistic(data.x, data.y, Tail::right, k, statistic, rows);
    if (selection != TailSelection::right && ps.left_n0 >= k)
      ps.left = compute_tail_statistic(data.x, data.y, Tail::left, k, statistic, rows);
    out.push_back(ps);
  }
  return out;
}

}  // namespace detail

// Tests each period separately and combines all component tests with one
// Bonferroni correction. Periods whose subsample is smaller than k are
// reported in `skipped` and excluded from n_tests.
inline PanelTestResult run_panel_test(const BinaryDataset& data, const TailTestRequest& request) {
  data.validate();
  if (!data.has_periods()) throw ConfigError("panel test needs period labels");
  request.config.validate();
  const auto& cfg = request.config;
  const LrStatistic statistic(cfg.weight);
  const auto stats = detail::period_statistics(data, request.tail, cfg.k, statistic);
  const auto null = null_distribution(cfg.k, cfg.null_draws, cfg.seed, cfg.weight);
  return assemble_panel_outcome(request.tail, stats, *null, cfg.alpha);
}

// Hill estimator over the k largest values with the (k+1)-th largest as
// threshold: (1/k) sum_i log(X_(n-i+1) / X_(n-k)).
inline double hill_estimator(std::span<const double> sample, std::size_t k) {
  if (k < 2) throw ConfigError("Hill estimator needs k >= 2");
  if (sample.size() <= k)
    throw ConfigError("Hill estimator needs more than k=" + std::to_string(k) + " observations, got " +
                      std::to_string(sample.size()));
  std::vector<double> v(sample.begin(), sample.end());
  for (double x : v)
    if (!std::isfinite(x)) throw DomainError("Hill estimator: sample contains a non-finite value");
  const auto pivot = v.begin() + static_cast<std::ptrdiff_t>(v.size() - k - 1);
  std::nth_element(v.begin(), pivot, v.end());
  const double threshold = *pivot;
  if (!(threshold > 0.0)) {
    throw DomainError("Hill estimator: threshold (the (k+1)-th largest value) is " + std::to_string(threshold) +
                      " <= 0; shift the sample to positive values or use a smaller k");
  }
  double acc = 0.0;
  for (auto it = pivot + 1; it != v.end(); ++it) acc += std::log(*it / threshold);
  return acc / static_cast<double>(k);
}

struct CdfPoint {
  double x = 0.0;
  double empirical_cdf = 0.0;
  double fitted_cdf = 0.0;
};

struct TailFitReport {
  double hill_index = 0.0;
  double threshold = 0.0;
  double top_fraction = 0.0;
  std::size_t n_exceedances = 0;
  std::vector<CdfPoint> points;

  // Fitted Pareto CDF above the threshold, 1 - (x / threshold)^(-1 / hill_index).
  double fitted_cdf(double x) const {
    if (x <= threshold) return 0.0;
    return -std::expm1(-std::log(x / threshold) / hill_index);
  }

  double max_cdf_gap() const {
    double gap = 0.0;
    for (const auto& p : points) gap = std::max(gap, std::abs(p.empirical_cdf - p.fitted_cdf));
    return gap;
  }
};

// Pareto fit to the top `top_fraction` of the sample. The threshold is the
// (m+1)-th largest value with m = floor(top_fraction * n), the index is the
// Hill estimate over those m exceedances, and the report pairs the empirical
// CDF of the exceedances with the fitted one at each exceedance.
inline TailFitReport pareto_tail_fit(std::span<const double> sample, double top_fraction) {
  if (!(top_fraction > 0.0 && top_fraction < 1.0)) throw ConfigError("top fraction must lie in (0, 1)");
  const std::size_t n = sample.size();
  const auto m = static_cast<std::size_t>(std::floor(top_fraction * static_cast<double>(n)));
  if (m < 10)
    throw ConfigError("Pareto fit needs at least 10 exceedances; top " + std::to_string(top_fraction) + " of n=" +
                      std::to_string(n) + " gives " + std::to_string(m));
  TailFitReport report;
  report.top_fraction = top_fraction;
  report.n_exceedances = m;
  report.hill_index = hill_estimator(sample, m);
  if (!(report.hill_index > 0.0)) throw DegenerateSpacingsError("Pareto fit: all exceedances equal the threshold");

  std::vector<double> sorted(sample.begin(), sample.end());
  std::sort(sorted.begin(), sorted.end());
  report.threshold = sorted[n - m - 1];
  report.points.reserve(m + 1);
  report.points.push_back({report.threshold, 0.0, 0.0});
  for (std::size_t i = 1; i <= m; ++i) {
    const double x = sorted[n - m - 1 + i];
    report.points.push_back({x, static_cast<double>(i) / static_cast<double>(m), report.fitted_cdf(x)});
  }
  return report;
}

inline void write_tailfit_csv(std::ostream& out, const TailFitReport& report) {
  out << "x,empirical_cdf,fitted_cdf\n";
  for (const auto& p : report.points)
    out << format_double(p.x) << ',' << format_double(p.empirical_cdf) << ',' << format_double(p.fitted_cdf) << '\n';
}

}  // namespace tailcheck
