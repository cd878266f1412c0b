#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "delphi/benchdata.hpp"
#include "delphi/errors.hpp"

namespace delphi::metrics {

// Evaluation statistics used by the experiment harness. Accumulation runs in
// extended precision; constant series raise ZeroVariance instead of returning
// a silent 0 that would corrupt sweep summaries.

struct PairedSeries {
  std::vector<double> predicted;
  std::vector<double> actual;
  std::vector<std::string> labels;
};

namespace detail {

inline void require_same_length(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw LengthMismatchError(std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
}

inline bool is_constant(std::span<const double> v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return *lo == *hi;
}

inline long double mean_ld(std::span<const double> v) {
  long double sum = 0.0L;
  for (double x : v) sum += x;
  return sum / static_cast<long double>(v.size());
}

}  // namespace detail

/// Pearson product-moment correlation coefficient.
inline double pearson(std::span<const double> x, std::span<const double> y) {
  detail::require_same_length(x, y);
  if (x.size() < 2) throw LengthMismatchError("correlation needs at least 2 pairs");
  if (detail::is_constant(x)) throw ZeroVarianceError("first");
  if (detail::is_constant(y)) throw ZeroVarianceError("second");
  const long double mx = detail::mean_ld(x);
  const long double my = detail::mean_ld(y);
  long double sxx = 0.0L, syy = 0.0L, sxy = 0.0L;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const long double dx = x[i] - mx;
    const long double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  const long double r = sxy / std::sqrt(sxx * syy);
  return static_cast<double>(std::clamp(r, -1.0L, 1.0L));
}

/// Fractional (average) ranks, 1-based; ties receive the mean of the rank
/// positions they occupy.
inline std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double shared = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
    i = j + 1;
  }
  return ranks;
}

/// Spearman rank correlation: Pearson on average ranks.
inline double spearman(std::span<const double> x, std::span<const double> y) {
  detail::require_same_length(x, y);
  if (x.size() < 2) throw LengthMismatchError("correlation needs at least 2 pairs");
  const std::vector<double> rx = average_ranks(x);
  const std::vector<double> ry = average_ranks(y);
  return pearson(rx, ry);
}

/// Mean absolute error between predictions and actuals.
inline double mae(std::span<const double> predicted, std::span<const double> actual) {
  detail::require_same_length(predicted, actual);
  if (predicted.empty()) throw LengthMismatchError("mae needs at least 1 pair");
  long double sum = 0.0L;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    sum += std::abs(static_cast<long double>(predicted[i]) - actual[i]);
  }
  return static_cast<double>(sum / static_cast<long double>(predicted.size()));
}

/// Mean absolute difference between two panels' aligned per-task estimates,
/// in percentage points.
inline double mad(std::span<const double> panel_a, std::span<const double> panel_b) {
  return mae(panel_a, panel_b);
}

// ---- baseline heuristics -----------------------------------------------------------
//
// All three baselines are leave-one-out: the held-out value never informs its
// own prediction.

/// Mean of all other agents' rates on a single-task-type table.
inline double baseline_global_mean(const benchdata::BenchmarkTable& table,
                                   benchdata::HoldoutSpec holdout) {
  if (table.task_types.size() != 1) {
    throw TableShapeError("global mean baseline needs a single-task-type table");
  }
  benchdata::check_holdout(table, holdout);
  if (table.agents.size() < 2) throw TableShapeError("global mean needs at least 2 agents");
  long double sum = 0.0L;
  for (std::size_t a = 0; a < table.agents.size(); ++a) {
    if (static_cast<int>(a) == holdout.agent_index) continue;
    sum += table.agents[a].rates[0];
  }
  return static_cast<double>(sum / static_cast<long double>(table.agents.size() - 1));
}

/// Mean of the held-out cell's column over the other agents (same task type).
inline double baseline_task_mean(const benchdata::BenchmarkTable& table,
                                 benchdata::HoldoutSpec holdout) {
  if (table.task_types.size() < 2) {
    throw TableShapeError("task mean baseline needs a multi-task-type table");
  }
  benchdata::check_holdout(table, holdout);
  if (table.agents.size() < 2) throw TableShapeError("task mean needs at least 2 agents");
  long double sum = 0.0L;
  for (std::size_t a = 0; a < table.agents.size(); ++a) {
    if (static_cast<int>(a) == holdout.agent_index) continue;
    sum += table.agents[a].rates[holdout.task_index];
  }
  return static_cast<double>(sum / static_cast<long double>(table.agents.size() - 1));
}

/// Mean of the held-out agent's other task-type cells.
inline double baseline_agent_mean(const benchdata::BenchmarkTable& table,
                                  benchdata::HoldoutSpec holdout) {
  if (table.task_types.size() < 2) {
    throw TableShapeError("agent mean baseline needs a multi-task-type table");
  }
  benchdata::check_holdout(table, holdout);
  const std::vector<double>& row = table.agents[holdout.agent_index].rates;
  long double sum = 0.0L;
  for (std::size_t t = 0; t < row.size(); ++t) {
    if (static_cast<int>(t) == holdout.task_index) continue;
    sum += row[t];
  }
  return static_cast<double>(sum / static_cast<long double>(row.size() - 1));
}

// ---- baseline sweeps -----------------------------------------------------------------

enum class BaselineKind { global_mean, task_mean, agent_mean };

inline std::string to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::global_mean: return "global_mean";
    case BaselineKind::task_mean: return "task_mean";
    case BaselineKind::agent_mean: return "agent_mean";
  }
  throw Error("invalid baseline kind");
}

struct SweepResult {
  BaselineKind kind = BaselineKind::global_mean;
  bool leave_one_out = true;
  PairedSeries series;
  double r = 0.0;
  double rho = 0.0;
  double mae = 0.0;
};

namespace detail {

inline double inclusive_prediction(const benchdata::BenchmarkTable& table,
                                   benchdata::HoldoutSpec holdout, BaselineKind kind) {
  long double sum = 0.0L;
  switch (kind) {
    case BaselineKind::global_mean:
    case BaselineKind::task_mean:
      for (const benchdata::BenchAgent& a : table.agents) sum += a.rates[holdout.task_index];
      return static_cast<double>(sum / static_cast<long double>(table.agents.size()));
    case BaselineKind::agent_mean: {
      const std::vector<double>& row = table.agents[holdout.agent_index].rates;
      for (double v : row) sum += v;
      return static_cast<double>(sum / static_cast<long double>(row.size()));
    }
  }
  throw Error("invalid baseline kind");
}

}  // namespace detail

/// Evaluates one baseline over every holdout of the table. The inclusive
/// variant (held-out value included in its own prediction) exists for
/// transparency next to the leave-one-out interpretation.
inline SweepResult sweep_baseline(const benchdata::BenchmarkTable& table, BaselineKind kind,
                                  bool leave_one_out = true) {
  SweepResult result;
  result.kind = kind;
  result.leave_one_out = leave_one_out;
  for (const benchdata::HoldoutSpec& holdout : benchdata::enumerate_holdouts(table)) {
    double prediction;
    if (!leave_one_out) {
      prediction = detail::inclusive_prediction(table, holdout, kind);
    } else if (kind == BaselineKind::global_mean) {
      prediction = baseline_global_mean(table, holdout);
    } else if (kind == BaselineKind::task_mean) {
      prediction = baseline_task_mean(table, holdout);
    } else {
      prediction = baseline_agent_mean(table, holdout);
    }
    result.series.predicted.push_back(prediction);
    result.series.actual.push_back(table.agents[holdout.agent_index].rates[holdout.task_index]);
    result.series.labels.push_back(benchdata::holdout_label(table, holdout));
  }
  result.r = pearson(result.series.predicted, result.series.actual);
  result.rho = spearman(result.series.predicted, result.series.actual);
  result.mae = mae(result.series.predicted, result.series.actual);
  return result;
}

}  // namespace delphi::metrics
