#pragma once

// Data-generating processes for the size/power study and the rejection-rate
// driver built on them.
//
// Cross section:  Y = 1{X + A1 + A2 - e >= 0}
// Static panel:   Y_t = 1{X_t + A1_t + A2_t + a_i - e_t >= 0},  a_i ~ U(0, 1)
// Dynamic panel:  Y_t = 1{X_t + Y_{t-1} + A1_t + A2_t + a_i - e_t >= 0},
//                 with Y_0 drawn from the static equation.
// X is the dominating covariate, A1 ~ N(0, 1), A2 ~ Bernoulli(p).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tailcheck/diagnostics.hpp"
#include "tailcheck/error.hpp"
#include "tailcheck/lr_test.hpp"
#include "tailcheck/parallel.hpp"
#include "tailcheck/rng.hpp"

namespace tailcheck {

enum class Design { cross_section, static_panel, dynamic_panel };

inline const char* to_string(Design d) {
  switch (d) {
    case Design::cross_section: return "cross_section";
    case Design::static_panel: return "static_panel";
    case Design::dynamic_panel: return "dynamic_panel";
  }
  return "?";
}

struct ErrorDist {
  enum class Kind { normal, logistic, student_t, pareto, constant };
  Kind kind = Kind::normal;
  // Degrees of freedom, Pareto tail index, or the constant value.
  double param = 0.0;

  static ErrorDist normal() { return {Kind::normal, 0.0}; }
  static ErrorDist logistic() { return {Kind::logistic, 0.0}; }
  static ErrorDist student_t(double df) { return {Kind::student_t, df}; }
  static ErrorDist pareto(double tail_index) { return {Kind::pareto, tail_index}; }
  static ErrorDist constant(double value) { return {Kind::constant, value}; }

  void validate() const {
    if ((kind == Kind::student_t || kind == Kind::pareto) && !(param > 0.0))
      throw ConfigError("error distribution parameter must be > 0");
    if (kind == Kind::constant && !std::isfinite(param)) throw ConfigError("constant error must be finite");
  }

  double draw(RngStream& rng) const {
    switch (kind) {
      case Kind::normal: return variates::standard_normal(rng);
      case Kind::logistic: return variates::standard_logistic(rng);
      case Kind::student_t: return variates::student_t(rng, param);
      case Kind::pareto: return variates::pareto(rng, param);
      case Kind::constant: return param;
    }
    return 0.0;
  }

  std::string name() const {
    std::ostringstream os;
    switch (kind) {
      case Kind::normal: return "Normal";
      case Kind::logistic: return "Logistic";
      case Kind::student_t: os << "t(" << param << ")"; return os.str();
      case Kind::pareto: os << "Pareto(" << param << ")"; return os.str();
      case Kind::constant: os << "Const(" << param << ")"; return os.str();
    }
    return "?";
  }
};

struct CovariateDist {
  enum class Kind { student_t, pareto };
  Kind kind = Kind::student_t;
  double param = 2.0;

  static CovariateDist student_t(double df) { return {Kind::student_t, df}; }
  static CovariateDist pareto(double tail_index) { return {Kind::pareto, tail_index}; }

  void validate() const {
    if (!(param > 0.0)) throw ConfigError("dominating covariate parameter must be > 0");
  }

  double draw(RngStream& rng) const {
    return kind == Kind::student_t ? variates::student_t(rng, param) : variates::pareto(rng, param);
  }
};

struct DgpSpec {
  Design design = Design::cross_section;
  std::size_t n = 1000;
  std::size_t periods = 1;
  ErrorDist error = ErrorDist::normal();
  CovariateDist dominating = CovariateDist::student_t(2.0);
  // Adds Y_{t-1} to the index; implied by the dynamic design.
  bool include_lag = false;
  // When false the index is the dominating covariate alone.
  bool auxiliaries = true;
  double binary_p = 0.5;
  std::uint64_t seed = kDefaultSeed;

  bool is_panel() const noexcept { return design != Design::cross_section; }
  bool has_lag() const noexcept { return design == Design::dynamic_panel || (is_panel() && include_lag); }

  void validate() const {
    if (n < 1) throw ConfigError("DGP needs n >= 1");
    if (periods < 1) throw ConfigError("DGP needs T >= 1");
    if (design == Design::cross_section && periods != 1) throw ConfigError("cross-sectional DGP must have T = 1");
    if (!(binary_p >= 0.0 && binary_p <= 1.0)) throw ConfigError("Bernoulli parameter must lie in [0, 1]");
    error.validate();
    dominating.validate();
  }
};

// Rows are unit-major: unit i contributes periods 1..T in order.
inline BinaryDataset generate(const DgpSpec& spec, RngStream& rng) {
  spec.validate();
  BinaryDataset data;
  const std::size_t rows = spec.n * spec.periods;
  data.y.reserve(rows);
  data.x.reserve(rows);

  auto auxiliary = [&] {
    if (!spec.auxiliaries) return 0.0;
    const double a1 = variates::standard_normal(rng);
    const double a2 = variates::bernoulli(rng, spec.binary_p);
    return a1 + a2;
  };

  if (!spec.is_panel()) {
    for (std::size_t i = 0; i < spec.n; ++i) {
      const double x = spec.dominating.draw(rng);
      const double index = x + auxiliary();
      const double e = spec.error.draw(rng);
      data.x.push_back(x);
      data.y.push_back(index - e >= 0.0 ? 1 : 0);
    }
    return data;
  }

  data.unit.reserve(rows);
  data.period.reserve(rows);
  for (std::size_t i = 0; i < spec.n; ++i) {
    const double effect = variates::uniform(rng, 0.0, 1.0);
    int lag = 0;
    if (spec.has_lag()) {
      const double x0 = spec.dominating.draw(rng);
      const double index0 = x0 + auxiliary() + effect;
      lag = index0 - spec.error.draw(rng) >= 0.0 ? 1 : 0;
    }
    const std::string unit = std::to_string(i);
    for (std::size_t t = 1; t <= spec.periods; ++t) {
      const double x = spec.dominating.draw(rng);
      double index = x + auxiliary() + effect;
      if (spec.has_lag()) index += lag;
      const int y = index - spec.error.draw(rng) >= 0.0 ? 1 : 0;
      data.x.push_back(x);
      data.y.push_back(y);
      data.unit.push_back(unit);
      data.period.push_back(static_cast<std::int64_t>(t));
      lag = y;
    }
  }
  return data;
}

inline BinaryDataset generate(const DgpSpec& spec) {
  RngStream rng(spec.seed, 0, 0);
  return generate(spec, rng);
}

struct ExperimentGrid {
  std::vector<DgpSpec> dgps;
  std::vector<std::size_t> k_values;
  double alpha = 0.05;
  std::size_t replications = 2000;
  std::vector<TailSelection> tails{TailSelection::left, TailSelection::right, TailSelection::both};
  std::uint64_t seed = kDefaultSeed;
  std::size_t null_draws = kDefaultNullDraws;
  WeightSpec weight{};

  void validate() const {
    if (dgps.empty()) throw ConfigError("experiment grid has no DGPs");
    if (k_values.empty()) throw ConfigError("experiment grid has no k values");
    if (tails.empty()) throw ConfigError("experiment grid has no tails");
    if (replications < 100) throw ConfigError("experiment grid needs at least 100 replications");
    TestConfig probe{k_values.front(), alpha, weight, null_draws, seed};
    for (std::size_t k : k_values) {
      probe.k = k;
      probe.validate();
    }
    for (const auto& d : dgps) d.validate();
  }
};

struct RejectionCell {
  std::size_t dgp_index = 0;
  Design design = Design::cross_section;
  std::string error_name;
  std::size_t n = 0;
  std::size_t periods = 1;
  std::size_t k = 0;
  TailSelection tail = TailSelection::both;
  std::size_t rejections = 0;
  std::size_t completed = 0;
  // Replications where the tail could not be tested (too few subsample
  // observations or tied extremes); these are excluded from the rate.
  std::size_t failures = 0;
  double rate = 0.0;
  bool flagged = false;
};

struct RejectionTable {
  std::vector<RejectionCell> cells;
  std::size_t replications = 0;
  std::uint64_t seed = 0;
  double alpha = 0.0;

  const RejectionCell& at(std::size_t dgp_index, std::size_t k, TailSelection tail) const {
    for (const auto& c : cells)
      if (c.dgp_index == dgp_index && c.k == k && c.tail == tail) return c;
    throw ConfigError("no such cell in the rejection table");
  }

  friend bool operator==(const RejectionTable& a, const RejectionTable& b) {
    if (a.replications != b.replications || a.seed != b.seed || a.alpha != b.alpha ||
        a.cells.size() != b.cells.size())
      return false;
    for (std::size_t i = 0; i < a.cells.size(); ++i) {
      const auto& x = a.cells[i];
      const auto& y = b.cells[i];
      if (x.dgp_index != y.dgp_index || x.k != y.k || x.tail != y.tail || x.rejections != y.rejections ||
          x.completed != y.completed || x.failures != y.failures || x.rate != y.rate || x.flagged != y.flagged)
        return false;
    }
    return true;
  }
};

namespace detail {

enum class Verdict : std::uint8_t { accept, reject, failed };

// Replication streams: (grid seed, DGP index, replication index).
inline constexpr std::uint64_t kStudyStream = 0x4D43000000000000ull;

inline std::optional<TailStatistic> try_tail_statistic(std::span<const double> x, std::span<const int> y, Tail tail,
                                                       std::size_t k, const LrStatistic& statistic) {
  try {
    return compute_tail_statistic(x, y, tail, k, statistic);
  } catch (const InsufficientTailError&) {
    return std::nullopt;
  } catch (const DegenerateSpacingsError&) {
    return std::nullopt;
  }
}

}  // namespace detail

// Runs `replications` generate -> test cycles per DGP. One dataset per
// replication serves every k and tail; cross sections go through the
// two-sided assembly of run_tail_test, panels through the Bonferroni
// assembly of run_panel_test.
inline RejectionTable rejection_study(const ExperimentGrid& grid) {
  grid.validate();
  const LrStatistic statistic(grid.weight);
  std::map<std::size_t, std::shared_ptr<const NullDistribution>> nulls;
  for (std::size_t k : grid.k_values) nulls[k] = null_distribution(k, grid.null_draws, grid.seed, grid.weight);

  const std::size_t n_k = grid.k_values.size();
  const std::size_t n_tails = grid.tails.size();
  RejectionTable table;
  table.replications = grid.replications;
  table.seed = grid.seed;
  table.alpha = grid.alpha;

  for (std::size_t d = 0; d < grid.dgps.size(); ++d) {
    const DgpSpec& spec = grid.dgps[d];
    std::vector<detail::Verdict> verdicts(grid.replications * n_k * n_tails, detail::Verdict::failed);

    parallel_for(grid.replications, [&](std::size_t r) {
      RngStream rng(grid.seed, detail::kStudyStream + d, r);
      const BinaryDataset data = generate(spec, rng);
      for (std::size_t ki = 0; ki < n_k; ++ki) {
        const std::size_t k = grid.k_values[ki];
        const NullDistribution& null = *nulls.at(k);
        for (std::size_t ti = 0; ti < n_tails; ++ti) {
          const TailSelection sel = grid.tails[ti];
          auto& slot = verdicts[(r * n_k + ki) * n_tails + ti];
          try {
            bool reject = false;
            if (!spec.is_panel()) {
              std::optional<TailStatistic> right, left;
              if (sel != TailSelection::left) {
                right = detail::try_tail_statistic(data.x, data.y, Tail::right, k, statistic);
                if (!right) continue;
              }
              if (sel != TailSelection::right) {
                left = detail::try_tail_statistic(data.x, data.y, Tail::left, k, statistic);
                if (!left) continue;
              }
              reject = assemble_tail_outcome(sel, right, left, null, grid.alpha).reject;
            } else {
              const auto stats = detail::period_statistics(data, sel, k, statistic);
              reject = assemble_panel_outcome(sel, stats, null, grid.alpha).reject;
            }
            slot = reject ? detail::Verdict::reject : detail::Verdict::accept;
          } catch (const Error& e) {
            if (e.code() != ErrorCode::insufficient_tail && e.code() != ErrorCode::degenerate_spacings) throw;
          }
        }
      }
    });

    for (std::size_t ki = 0; ki < n_k; ++ki) {
      for (std::size_t ti = 0; ti < n_tails; ++ti) {
        RejectionCell cell;
        cell.dgp_index = d;
        cell.design = spec.design;
        cell.error_name = spec.error.name();
        cell.n = spec.n;
        cell.periods = spec.periods;
        cell.k = grid.k_values[ki];
        cell.tail = grid.tails[ti];
        for (std::size_t r = 0; r < grid.replications; ++r) {
          switch (verdicts[(r * n_k + ki) * n_tails + ti]) {
            case detail::Verdict::reject: ++cell.rejections; ++cell.completed; break;
            case detail::Verdict::accept: ++cell.completed; break;
            case detail::Verdict::failed: ++cell.failures; break;
          }
        }
        cell.rate = cell.completed > 0 ? static_cast<double>(cell.rejections) / static_cast<double>(cell.completed) : 0.0;
        cell.flagged = cell.failures > 0;
        table.cells.push_back(cell);
      }
    }
  }
  return table;
}

inline void write_rejection_csv(std::ostream& out, const RejectionTable& table) {
  out << "dgp,design,error,n,T,k,tail,rate,rejections,completed,failures,flagged,replications,seed,alpha\n";
  for (const auto& c : table.cells) {
    out << c.dgp_index << ',' << to_string(c.design) << ',' << c.error_name << ',' << c.n << ',' << c.periods << ','
        << c.k << ',' << to_string(c.tail) << ',' << format_double(c.rate) << ',' << c.rejections << ','
        << c.completed << ',' << c.failures << ',' << (c.flagged ? "true" : "false") << ',' << table.replications
        << ',' << table.seed << ',' << format_double(table.alpha) << '\n';
  }
}

// Aligned layout: one row per DGP, Left/Right/Both under each k. Flagged
// cells carry a trailing '*'.
inline void write_rejection_text(std::ostream& out, const RejectionTable& table) {
  std::vector<std::size_t> ks;
  std::vector<TailSelection> tails;
  std::map<std::size_t, const RejectionCell*> first_of_dgp;
  for (const auto& c : table.cells) {
    if (std::find(ks.begin(), ks.end(), c.k) == ks.end()) ks.push_back(c.k);
    if (std::find(tails.begin(), tails.end(), c.tail) == tails.end()) tails.push_back(c.tail);
    first_of_dgp.emplace(c.dgp_index, &c);
  }
  auto tail_label = [](TailSelection t) {
    return t == TailSelection::left ? "Left" : t == TailSelection::right ? "Right" : "Both";
  };
  constexpr int kLabel = 14, kN = 7, kCol = 7;
  out << std::left << std::setw(kLabel) << "Dist. of e" << std::right << std::setw(kN) << "n";
  for (std::size_t k : ks) {
    std::ostringstream head;
    head << "k=" << k;
    const int width = kCol * static_cast<int>(tails.size());
    out << std::setw(width) << head.str();
  }
  out << '\n' << std::setw(kLabel + kN) << "";
  for (std::size_t i = 0; i < ks.size(); ++i)
    for (auto t : tails) out << std::setw(kCol) << tail_label(t);
  out << '\n';
  for (const auto& [d, first] : first_of_dgp) {
    std::string label = first->error_name;
    if (first->design != Design::cross_section) label += " T=" + std::to_string(first->periods);
    out << std::left << std::setw(kLabel) << label << std::right << std::setw(kN) << first->n;
    for (std::size_t k : ks) {
      for (auto t : tails) {
        const auto& c = table.at(d, k, t);
        std::ostringstream cell;
        cell << std::fixed << std::setprecision(2) << c.rate << (c.flagged ? "*" : "");
        out << std::setw(kCol) << cell.str();
      }
    }
    out << '\n';
  }
  out << "Entries are rejection rates at alpha=" << table.alpha << " over " << table.replications
      << " replications (seed " << table.seed << ").\n";
}

}  // namespace tailcheck
