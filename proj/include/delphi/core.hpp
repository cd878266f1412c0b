#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "delphi/errors.hpp"
#include "delphi/util.hpp"

namespace delphi {

// ---- domain types -------------------------------------------------------------
//
// Values are percentages on a 0-100 scale throughout. All types here are plain
// immutable-by-convention values; they can be copied and shared across threads
// freely.

enum class Scale { percent_0_100 };

/// The quantity a panel is asked to estimate.
struct Quantity {
  std::string id;
  std::string description;
  Scale scale = Scale::percent_0_100;
  std::string baseline_note;  // optional, e.g. the no-assistance base rate
};

enum class EvidenceTag { benchmark_info, agent_info, numeric_only };

/// One labelled block of briefing material shown to the experts.
struct EvidenceItem {
  std::string label;
  std::string content;
  std::set<EvidenceTag> tags;
};

/// A constructed expert identity used to diversify the panel.
struct Persona {
  std::string id;
  std::string role;
  std::string background;
  std::string analytical_approach;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// One expert's answer for one round.
struct Estimate {
  std::string expert_id;
  int round = 1;
  double value = 0.0;
  std::optional<Interval> interval;
  std::string rationale;
};

struct FeedbackStats {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double median = 0.0;
  double spread = 0.0;  // max - min
};

/// The mediator's anonymized synthesis of one round. Must never name a
/// panelist or persona role.
struct FeedbackSummary {
  int round = 0;  // the round being summarized
  FeedbackStats stats;
  std::vector<std::string> arguments_higher;
  std::vector<std::string> arguments_lower;
  std::string agreement_notes;
};

enum class Aggregation { mean, median };
enum class HistoryMode { fresh_context, sequential };

struct PanelConfig {
  int k = 5;
  int rounds = 1;
  std::vector<Persona> personas;
  Aggregation aggregation = Aggregation::mean;
  double ci_level = 0.95;
  std::uint64_t seed = 0;
  HistoryMode history_mode = HistoryMode::fresh_context;

  void validate() const {
    if (k < 1) throw ConfigError("panel size k must be >= 1");
    if (rounds < 1) throw ConfigError("rounds must be >= 1");
    if (static_cast<int>(personas.size()) != k) {
      throw ConfigError("panel has " + std::to_string(personas.size()) + " personas, expected k=" +
                        std::to_string(k));
    }
    if (!(ci_level > 0.0 && ci_level < 1.0)) throw ConfigError("ci_level must be in (0, 1)");
    std::set<std::string> ids;
    for (const Persona& p : personas) {
      if (p.id.empty()) throw ConfigError("persona id must be non-empty");
      if (!ids.insert(p.id).second) throw ConfigError("duplicate persona id '" + p.id + "'");
    }
  }
};

/// One provider call as seen by the protocol engine.
struct TranscriptEntry {
  std::string role;  // "expert" or "mediator"
  int round = 0;
  std::string persona_id;  // empty for mediator calls
  std::string prompt;
  std::string response;
  std::int64_t started_ms = 0;
  std::int64_t finished_ms = 0;
};

struct PanelResult {
  double final_estimate = 0.0;
  Interval ci;
  std::vector<std::vector<Estimate>> per_round;  // exactly `rounds` entries
  std::vector<FeedbackSummary> feedback;         // rounds - 1 entries
  std::vector<TranscriptEntry> transcript;
};

// ---- operations ---------------------------------------------------------------

/// Panel aggregation: linear opinion pool (mean) or median. Values are summed
/// in sorted order with extended precision, so the result is exactly
/// permutation-invariant.
inline double aggregate_panel(std::span<const double> values, Aggregation method) {
  if (values.empty()) throw EmptyPanelError();
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  if (method == Aggregation::median) {
    const std::size_t n = sorted.size();
    if (n % 2 == 1) return sorted[n / 2];
    return (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0;
  }
  long double sum = 0.0L;
  for (double v : sorted) sum += v;
  return static_cast<double>(sum / static_cast<long double>(sorted.size()));
}

/// Two-sided Student-t confidence interval for the panel mean, clamped to
/// [0, 100]. Requires at least two panelists.
inline Interval confidence_interval(std::span<const double> values, double level) {
  if (values.size() < 2) throw InsufficientPanelError(values.size());
  if (!(level > 0.0 && level < 1.0)) throw Error("confidence level must be in (0, 1)");
  const double mean = aggregate_panel(values, Aggregation::mean);
  long double ss = 0.0L;
  for (double v : values) {
    const long double d = static_cast<long double>(v) - mean;
    ss += d * d;
  }
  const double n = static_cast<double>(values.size());
  const double sd = std::sqrt(static_cast<double>(ss / (n - 1.0L)));
  const boost::math::students_t_distribution<double> dist(n - 1.0);
  const double t = boost::math::quantile(dist, (1.0 + level) / 2.0);
  const double margin = t * sd / std::sqrt(n);
  return Interval{util::clamp_pct(mean - margin), util::clamp_pct(mean + margin)};
}

/// Checks Estimate invariants and returns the estimate unchanged. Out-of-range
/// values are rejected, never clamped.
inline Estimate validate_estimate(Estimate raw) {
  if (!(raw.value >= 0.0 && raw.value <= 100.0)) throw OutOfRangeError(raw.value);
  if (raw.interval) {
    const Interval& iv = *raw.interval;
    if (!(iv.lo >= 0.0 && iv.hi <= 100.0 && iv.lo <= raw.value && raw.value <= iv.hi)) {
      throw MalformedIntervalError("need 0 <= lo <= value <= hi <= 100, got lo=" +
                                   util::fmt_pct(iv.lo) + " value=" + util::fmt_pct(raw.value) +
                                   " hi=" + util::fmt_pct(iv.hi));
    }
  }
  return raw;
}

inline FeedbackStats compute_stats(std::span<const double> values) {
  if (values.empty()) throw EmptyPanelError();
  FeedbackStats s;
  s.min = *std::min_element(values.begin(), values.end());
  s.max = *std::max_element(values.begin(), values.end());
  s.mean = aggregate_panel(values, Aggregation::mean);
  s.median = aggregate_panel(values, Aggregation::median);
  s.spread = s.max - s.min;
  return s;
}

namespace detail {

inline std::string summary_text(const FeedbackSummary& summary) {
  std::string text;
  for (const std::string& a : summary.arguments_higher) {
    text += a;
    text += '\n';
  }
  for (const std::string& a : summary.arguments_lower) {
    text += a;
    text += '\n';
  }
  text += summary.agreement_notes;
  return text;
}

/// True if `text` attributes content to persona `id`, i.e. contains
/// "expert <id>" or "persona <id>" followed by a non-alphanumeric boundary.
/// Bare single-letter ids are not scanned; they collide with ordinary prose.
inline bool has_attribution(std::string_view text, std::string_view id) {
  const std::string lower = util::to_lower(text);
  const std::string lower_id = util::to_lower(id);
  for (const char* prefix : {"expert ", "panelist ", "persona "}) {
    std::string needle = std::string(prefix) + lower_id;
    std::size_t pos = 0;
    while ((pos = lower.find(needle, pos)) != std::string::npos) {
      const std::size_t end = pos + needle.size();
      if (end == lower.size() || !std::isalnum(static_cast<unsigned char>(lower[end]))) {
        return true;
      }
      pos = end;
    }
  }
  if (lower_id.size() > 1) {
    std::size_t pos = 0;
    while ((pos = lower.find(lower_id, pos)) != std::string::npos) {
      const bool left_ok = pos == 0 || !std::isalnum(static_cast<unsigned char>(lower[pos - 1]));
      const std::size_t end = pos + lower_id.size();
      const bool right_ok =
          end == lower.size() || !std::isalnum(static_cast<unsigned char>(lower[end]));
      if (left_ok && right_ok) return true;
      pos = end;
    }
  }
  return false;
}

}  // namespace detail

/// Enforces the FeedbackSummary anonymity invariant: no persona id attribution
/// and no persona role substring anywhere in the summary.
inline void check_summary_anonymity(const FeedbackSummary& summary,
                                    std::span<const Persona> personas) {
  const std::string text = detail::summary_text(summary);
  for (const Persona& p : personas) {
    if (!p.role.empty() && util::contains_ci(text, p.role)) {
      throw AnonymityViolationError("role '" + p.role + "'");
    }
    if (detail::has_attribution(text, p.id)) {
      throw AnonymityViolationError("persona id '" + p.id + "'");
    }
  }
}

}  // namespace delphi
