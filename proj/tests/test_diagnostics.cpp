#include <catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "tailcheck/diagnostics.hpp"
#include "tailcheck/mc_harness.hpp"
#include "tailcheck/parallel.hpp"

using namespace tailcheck;
using Catch::Approx;

namespace {

constexpr std::size_t kDraws = 1999;

std::vector<double> values_of(const TopKSample& s) { return {s.values().begin(), s.values().end()}; }

// Statistic whose p-value against `null` is exactly (1 + count) / (N + 1).
double statistic_with_count(const NullDistribution& null, std::size_t count) {
  const auto sorted = null.sorted_sample();
  return sorted[sorted.size() - count];
}

std::vector<double> pareto_sample(std::size_t n, double index, std::uint64_t seed) {
  RngStream rng(seed, 0);
  std::vector<double> out(n);
  for (auto& x : out) x = variates::pareto(rng, index);
  return out;
}

BinaryDataset small_dataset() {
  BinaryDataset d;
  d.y = {0, 0, 0, 1};
  d.x = {3.0, 1.0, 2.0, 9.0};
  return d;
}

}  // namespace

TEST_CASE("extract_topk picks the right subsample") {
  const auto d = small_dataset();
  CHECK(values_of(extract_topk(d, Tail::right, 3)) == std::vector<double>{3.0, 2.0, 1.0});
  CHECK(extract_topk(d, Tail::right, 3).source_size() == 3);
  CHECK(values_of(extract_topk(d, Tail::left, 1)) == std::vector<double>{-9.0});

  BinaryDataset ones;
  ones.y = {1, 1, 1};
  ones.x = {1.0, 2.0, 3.0};
  try {
    extract_topk(ones, Tail::right, 2);
    FAIL("expected an insufficient-tail error");
  } catch (const InsufficientTailError& e) {
    CHECK(e.subsample_size() == 0);
    CHECK(e.k() == 2);
    CHECK(std::string(e.what()).find("n0=0") != std::string::npos);
  }
}

TEST_CASE("dataset validation") {
  auto d = small_dataset();
  d.x.pop_back();
  CHECK_THROWS_AS(d.validate(), DimensionError);
  d = small_dataset();
  d.y[0] = 2;
  CHECK_THROWS_AS(d.validate(), DomainError);
  d = small_dataset();
  d.fitted_index = std::vector<double>{1.0, 2.0};
  CHECK_THROWS_AS(run_fitted_index_test(d, {TailSelection::right, {3}}), DimensionError);
}

TEST_CASE("two-sided combination") {
  const NullDistribution null(10, kDraws, 21);
  const std::size_t n = 100;

  SECTION("2 min p") {
    const TailStatistic right{statistic_with_count(null, 599), n}, left{statistic_with_count(null, 19), n};
    const auto out = assemble_tail_outcome(TailSelection::both, right, left, null, 0.05);
    CHECK(out.right->p_value == Approx(0.30));
    CHECK(out.left->p_value == Approx(0.01));
    CHECK(out.combined_p == Approx(0.02));
    // Each side is held to cv(alpha / 2).
    CHECK(out.right->critical_value == null.critical_value(0.025));
    CHECK(out.reject == (out.left->statistic > null.critical_value(0.025)));
  }
  SECTION("capped at one") {
    const TailStatistic s{statistic_with_count(null, 1799), n};
    const auto out = assemble_tail_outcome(TailSelection::both, s, s, null, 0.05);
    CHECK(out.combined_p == 1.0);
    CHECK_FALSE(out.reject);
  }
  SECTION("single tail") {
    const TailStatistic s{statistic_with_count(null, 99), n};
    const auto out = assemble_tail_outcome(TailSelection::right, s, std::nullopt, null, 0.05);
    CHECK_FALSE(out.left);
    CHECK(out.combined_p == out.right->p_value);
    CHECK(out.right->critical_value == null.critical_value(0.05));
  }
}

TEST_CASE("panel Bonferroni arithmetic") {
  const NullDistribution null(10, kDraws, 22);
  SECTION("two periods, right tail") {
    std::vector<PeriodStatistics> periods(2);
    periods[0].period = 1;
    periods[0].right = TailStatistic{statistic_with_count(null, 799), 50};
    periods[1].period = 2;
    periods[1].right = TailStatistic{statistic_with_count(null, 7), 50};
    const auto out = assemble_panel_outcome(TailSelection::right, periods, null, 0.05);
    CHECK(out.n_tests == 2);
    CHECK(out.per_period.at(1).right->p_value == Approx(0.4));
    CHECK(out.per_period.at(2).right->p_value == Approx(0.004));
    CHECK(out.combined_p == Approx(0.008));
    CHECK(out.reject);
    CHECK(out.per_period.at(1).right->critical_value == null.critical_value(0.025));
  }
  SECTION("equal components, both tails, one skipped") {
    std::vector<PeriodStatistics> periods(3);
    const TailStatistic s{statistic_with_count(null, 59), 50};
    for (int t = 0; t < 3; ++t) {
      periods[t].period = t + 1;
      periods[t].right = s;
      periods[t].left = s;
    }
    periods[2].left.reset();
    periods[2].left_n0 = 4;
    const auto out = assemble_panel_outcome(TailSelection::both, periods, null, 0.05);
    CHECK(out.n_tests == 5);
    CHECK(out.combined_p == Approx(std::min(1.0, 5 * 0.03)));
    REQUIRE(out.skipped.size() == 1);
    CHECK(out.skipped[0].period == 3);
    CHECK(out.skipped[0].tail == Tail::left);
    CHECK(out.skipped[0].n_subsample == 4);
    CHECK_FALSE(out.reject);
  }
  SECTION("nothing testable") {
    std::vector<PeriodStatistics> periods(1);
    CHECK_THROWS_AS(assemble_panel_outcome(TailSelection::both, periods, null, 0.05), Error);
  }
}

TEST_CASE("panel test end to end") {
  DgpSpec spec;
  spec.design = Design::static_panel;
  spec.n = 600;
  spec.periods = 3;
  auto data = generate(spec);
  const TailTestRequest request{TailSelection::both, {10, 0.05, {}, kDraws, 5}};
  const auto out = run_panel_test(data, request);
  CHECK(out.per_period.size() == 3);
  CHECK(out.n_tests == 6);
  double min_p = 1.0;
  for (const auto& [t, po] : out.per_period) min_p = std::min({min_p, po.right->p_value, po.left->p_value});
  CHECK(out.combined_p == std::min(1.0, 6.0 * min_p));

  // Each period matches a cross-sectional test on that period's rows.
  BinaryDataset second;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data.period[i] == 2) {
      second.y.push_back(data.y[i]);
      second.x.push_back(data.x[i]);
    }
  const auto cross = run_tail_test(second, request);
  CHECK(cross.right->statistic == out.per_period.at(2).right->statistic);
  CHECK(cross.left->p_value == out.per_period.at(2).left->p_value);

  data.period.clear();
  CHECK_THROWS_AS(run_panel_test(data, request), ConfigError);
}

TEST_CASE("fitted index equal to x reproduces the covariate test") {
  DgpSpec spec;
  spec.n = 3000;
  auto data = generate(spec);
  data.fitted_index = data.x;
  const TailTestRequest request{TailSelection::both, {25, 0.05, {}, kDraws, 6}};
  const auto direct = run_tail_test(data, request);
  const auto plug = run_fitted_index_test(data, request);
  CHECK(plug.plug_in);
  CHECK(plug.right->plug_in);
  CHECK(plug.right->statistic == direct.right->statistic);
  CHECK(plug.left->statistic == direct.left->statistic);
  CHECK(plug.right->p_value == direct.right->p_value);
  CHECK(plug.left->p_value == direct.left->p_value);
  CHECK(plug.combined_p == direct.combined_p);
  CHECK(plug.reject == direct.reject);
  data.fitted_index.reset();
  CHECK_THROWS_AS(run_fitted_index_test(data, request), ConfigError);
}

TEST_CASE("swapping outcome and sign swaps the tails") {
  DgpSpec spec;
  spec.n = 4000;
  spec.error = ErrorDist::student_t(1.0);
  const auto data = generate(spec);
  BinaryDataset mirror = data;
  for (std::size_t i = 0; i < data.size(); ++i) {
    mirror.y[i] = 1 - data.y[i];
    mirror.x[i] = -data.x[i];
  }
  const TailTestRequest request{TailSelection::both, {25, 0.05, {}, kDraws, 8}};
  const auto a = run_tail_test(data, request), b = run_tail_test(mirror, request);
  CHECK(a.right->statistic == b.left->statistic);
  CHECK(a.left->statistic == b.right->statistic);
  CHECK(a.right->p_value == b.left->p_value);
  CHECK(a.right->n_subsample == b.left->n_subsample);
  CHECK(a.combined_p == b.combined_p);
}

TEST_CASE("Hill estimator") {
  // Descending powers of e with k = 2 and threshold e^2.
  std::vector<double> v;
  for (int p = 4; p >= -5; --p) v.push_back(std::exp(static_cast<double>(p)));
  CHECK(hill_estimator(v, 2) == Approx(1.5).epsilon(1e-12));
  CHECK(hill_estimator(pareto_sample(100000, 0.5, 1), 1000) == Approx(0.5).margin(0.05));
  CHECK_THROWS_AS(hill_estimator(std::vector<double>{-3.0, -2.0, -1.0, 5.0}, 2), DomainError);
  CHECK_THROWS_AS(hill_estimator(v, 10), ConfigError);
}

TEST_CASE("Pareto tail fit") {
  const auto big = pareto_sample(1000000, 0.8, 2);
  const auto fit = pareto_tail_fit(big, 0.001);
  CHECK(fit.n_exceedances == 1000);
  CHECK(fit.hill_index == Approx(0.8).margin(0.1));
  CHECK(fit.fitted_cdf(fit.threshold) == 0.0);
  CHECK(fit.fitted_cdf(fit.threshold * 1e12) == Approx(1.0).margin(1e-6));
  CHECK(fit.points.front().empirical_cdf == 0.0);
  CHECK(fit.points.back().empirical_cdf == 1.0);

  const auto gof = pareto_tail_fit(pareto_sample(100000, 0.5, 3), 0.01);
  CHECK(gof.max_cdf_gap() < 0.05);

  std::ostringstream csv;
  write_tailfit_csv(csv, gof);
  const std::string text = csv.str();
  CHECK(text.rfind("x,empirical_cdf,fitted_cdf\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == static_cast<long>(gof.points.size() + 1));

  CHECK_THROWS_AS(pareto_tail_fit(big, 0.0), ConfigError);
  CHECK_THROWS_AS(pareto_tail_fit(pareto_sample(500, 0.5, 4), 0.01), ConfigError);
}

TEST_CASE("conditional tail index follows the product-over-sum mapping") {
  DgpSpec spec;
  spec.n = 1000000;
  spec.dominating = CovariateDist::pareto(1.0);
  spec.error = ErrorDist::pareto(1.0);
  spec.auxiliaries = false;
  const auto data = generate(spec);
  std::vector<double> zero;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data.y[i] == 0) zero.push_back(data.x[i]);
  CHECK(hill_estimator(zero, 2000) == Approx(0.5).margin(0.05));
}

TEST_CASE("thin error with a Pareto covariate is rarely rejected") {
  DgpSpec spec;
  spec.n = 1000000;
  spec.dominating = CovariateDist::pareto(1.0);
  spec.error = ErrorDist::normal();
  spec.auxiliaries = false;
  const TailTestRequest request{TailSelection::both, {50, 0.05, {}, 10000, kDefaultSeed}};
  std::vector<int> reject(500);
  parallel_for(reject.size(), [&](std::size_t i) {
    RngStream rng(31337, 1, i);
    reject[i] = run_tail_test(generate(spec, rng), request).reject ? 1 : 0;
  });
  const double rate = std::accumulate(reject.begin(), reject.end(), 0.0) / 500.0;
  INFO("rate=" << rate);
  CHECK(rate <= 0.08);
}

TEST_CASE("per-period size under a period-varying error scale") {
  // Static panel with logistic errors scaled by 0.5 in period 1 and 1 in period 2.
  constexpr std::size_t n = 2000, reps = 1000, k = 25;
  const TailTestRequest request{TailSelection::right, {k, 0.05, {}, 10000, kDefaultSeed}};
  std::vector<std::array<int, 2>> reject(reps);
  parallel_for(reps, [&](std::size_t r) {
    RngStream rng(4242, 2, r);
    BinaryDataset d;
    for (std::size_t i = 0; i < n; ++i) {
      const double effect = variates::uniform(rng, 0.0, 1.0);
      for (int t = 1; t <= 2; ++t) {
        const double x = variates::student_t(rng, 2.0);
        const double index = x + variates::standard_normal(rng) + variates::bernoulli(rng, 0.5) + effect;
        const double scale = t == 1 ? 0.5 : 1.0;
        d.x.push_back(x);
        d.y.push_back(index - scale * variates::standard_logistic(rng) >= 0.0 ? 1 : 0);
        d.period.push_back(t);
      }
    }
    const auto out = run_panel_test(d, request);
    for (int t = 1; t <= 2; ++t) reject[r][t - 1] = out.per_period.at(t).right->p_value <= 0.05 ? 1 : 0;
  });
  for (int t = 0; t < 2; ++t) {
    double rate = 0.0;
    for (const auto& r : reject) rate += r[t];
    rate /= reps;
    INFO("period " << t + 1 << " rate=" << rate);
    CHECK(rate >= 0.02);
    CHECK(rate <= 0.08);
  }
}
