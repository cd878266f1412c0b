#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "delphi/core.hpp"
#include "delphi/errors.hpp"
#include "delphi/util.hpp"

namespace delphi::prompts {

// Every builder in this header is a pure function: identical inputs (including
// seeds) produce byte-identical text.

struct PromptBundle {
  std::string system;
  std::string user;
};

/// Parsed expert reply. Same numeric invariants as Estimate.
struct ResponseDoc {
  double point_estimate = 0.0;
  std::optional<Interval> interval;
  std::string rationale;
  std::string raw;
};

/// Parsed mediator reply (stats are computed locally by the engine and are
/// ignored if the model echoes them back).
struct MediatorDoc {
  std::vector<std::string> arguments_higher;
  std::vector<std::string> arguments_lower;
  std::string agreement_notes;
  std::string raw;
};

// ---- wire format ----------------------------------------------------------------
//
// Experts and mediator answer with a single JSON object. Key names are part of
// the external contract:
//   expert:   {"estimate": <number>, "low": <number>, "high": <number>,
//              "rationale": "<text>"}            (low/high optional, paired)
//   mediator: {"stats": "<text>", "arguments_higher": ["<text>", ...],
//              "arguments_lower": ["<text>", ...], "agreement_notes": "<text>"}

inline std::string default_output_spec() {
  return "Respond with exactly one JSON object and no other text:\n"
         "{\"estimate\": <number>, \"low\": <number>, \"high\": <number>, "
         "\"rationale\": \"<text>\"}\n"
         "\"estimate\" is your point estimate as a percentage between 0 and 100.\n"
         "\"low\" and \"high\" are an optional credible interval in the same units; "
         "include both or omit both.\n"
         "\"rationale\" is a brief plain-text justification for your estimate.";
}

/// System prompt: protocol context, then (optional) scenario, then exactly one
/// persona block, then the output-format block.
inline std::string build_system_prompt(const Persona& persona, std::string_view scenario,
                                       std::string_view output_spec) {
  std::string text;
  text += "## Delphi protocol\n";
  text +=
      "You are an expert panelist in a structured Delphi elicitation. The protocol runs in "
      "rounds: in round 1 you provide an independent estimate based only on the briefing and "
      "evidence; in later rounds a neutral mediator shares anonymized panel feedback and you may "
      "revise or confirm your estimate. Your identity is never revealed to the other panelists. "
      "Reason from the evidence and state your uncertainty honestly.\n";
  if (!scenario.empty()) {
    text += "\n## Scenario\n";
    text += scenario;
    text += '\n';
  }
  text += "\n## Your persona\n";
  text += "Role: " + persona.role + "\n";
  text += "Background: " + persona.background + "\n";
  text += "Analytical approach: " + persona.analytical_approach + "\n";
  text += "\n## Output format\n";
  text += output_spec;
  text += '\n';
  return text;
}

/// Round 1 user prompt: the quantity, its baseline note, then evidence items in
/// the given order.
inline std::string build_round1_prompt(const Quantity& quantity,
                                       std::span<const EvidenceItem> evidence) {
  if (quantity.description.empty()) throw Error("quantity description must be non-empty");
  std::string text;
  text += "## Estimation task\n";
  text += quantity.description;
  text += '\n';
  if (!quantity.baseline_note.empty()) {
    text += "Baseline: " + quantity.baseline_note + "\n";
  }
  text += "\n## Evidence\n";
  if (evidence.empty()) {
    text += "No additional evidence is provided for this task.\n";
  } else {
    for (const EvidenceItem& item : evidence) {
      text += "### " + item.label + "\n";
      text += item.content;
      text += "\n\n";
    }
  }
  text += "Give your round 1 estimate now, following the required output format.\n";
  return text;
}

/// Feedback prompt for rounds >= 2. Rejects summaries that fail the anonymity
/// scan rather than forwarding a leak to the panel.
inline std::string build_feedback_prompt(const FeedbackSummary& summary,
                                         std::span<const Persona> personas) {
  check_summary_anonymity(summary, personas);
  const FeedbackStats& s = summary.stats;
  std::string text;
  text += "## Panel feedback (round " + std::to_string(summary.round) + ")\n";
  text += "Panel statistics, in percent: min " + util::fmt_pct(s.min) + ", max " +
          util::fmt_pct(s.max) + ", mean " + util::fmt_pct(s.mean) + ", median " +
          util::fmt_pct(s.median) + ", spread " + util::fmt_pct(s.spread) + ".\n";
  if (summary.arguments_higher.empty() && summary.arguments_lower.empty()) {
    text += "\nThe panel was in broad agreement; no opposing arguments were recorded.\n";
  } else {
    text += "\nArguments made for a higher estimate:\n";
    if (summary.arguments_higher.empty()) text += "- (none recorded)\n";
    for (const std::string& a : summary.arguments_higher) text += "- " + a + "\n";
    text += "\nArguments made for a lower estimate:\n";
    if (summary.arguments_lower.empty()) text += "- (none recorded)\n";
    for (const std::string& a : summary.arguments_lower) text += "- " + a + "\n";
  }
  if (!summary.agreement_notes.empty()) {
    text += "\nAgreement notes: " + summary.agreement_notes + "\n";
  }
  text +=
      "\nReview this anonymized feedback, then revise or confirm your estimate with a brief "
      "justification, following the required output format.\n";
  return text;
}

inline std::string build_mediator_system_prompt() {
  return "## Mediator role\n"
         "You are the neutral mediator of a Delphi expert panel. Synthesize the round's "
         "estimates and rationales into feedback for the next round:\n"
         "- describe the spread and where the panel agrees or disagrees,\n"
         "- list the key arguments given for higher and for lower values,\n"
         "- never recommend a value of your own,\n"
         "- never attribute any statement to a specific expert; use only the anonymized labels "
         "you were given.\n"
         "\n## Output format\n"
         "Respond with exactly one JSON object and no other text:\n"
         "{\"stats\": \"<one sentence on the spread>\", \"arguments_higher\": [\"<text>\", ...], "
         "\"arguments_lower\": [\"<text>\", ...], \"agreement_notes\": \"<text>\"}\n";
}

/// Mediator user prompt. Estimates are relabeled "Expert 1..n" in an order
/// shuffled by `seed`, so positional anchoring cannot follow a persona across
/// rounds.
inline std::string build_mediator_prompt(std::span<const Estimate> estimates,
                                         std::uint64_t seed) {
  if (estimates.empty()) throw EmptyPanelError();
  std::vector<std::size_t> order(estimates.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  util::Rng rng(seed);
  rng.shuffle(order);

  std::string text;
  text += "## Round " + std::to_string(estimates.front().round) + " estimates\n";
  for (std::size_t slot = 0; slot < order.size(); ++slot) {
    const Estimate& e = estimates[order[slot]];
    text += "### Expert " + std::to_string(slot + 1) + "\n";
    text += "Estimate: " + util::fmt_pct(e.value) + "\n";
    if (e.interval) {
      text += "Interval: [" + util::fmt_pct(e.interval->lo) + ", " +
              util::fmt_pct(e.interval->hi) + "]\n";
    }
    text += "Rationale: " + e.rationale + "\n\n";
  }
  text += "Produce your neutral summary now, following the required output format.\n";
  return text;
}

/// Single repair re-prompt used after an unparseable or invalid reply.
inline std::string build_repair_prompt() {
  return "Your previous reply could not be used. Respond again with exactly one JSON object in "
         "the required output format, with \"estimate\" between 0 and 100, and no text outside "
         "the object.\n";
}

inline std::string build_mediator_repair_prompt() {
  return "Your previous reply could not be used. Respond again with exactly one JSON object in "
         "the required mediator output format, and no text outside the object.\n";
}

inline std::string build_anonymity_repair_prompt() {
  return "Your summary referred to identifiable experts. Rewrite it without any names, roles, or "
         "other identifying references, as one JSON object in the required mediator output "
         "format.\n";
}

// ---- response parsing -------------------------------------------------------------

namespace detail {

/// Finds the first balanced {...} span starting at or after `from`, honoring
/// string literals and escapes. Returns {start, length}.
inline std::optional<std::pair<std::size_t, std::size_t>> balanced_object(std::string_view text,
                                                                          std::size_t from) {
  const std::size_t start = text.find('{', from);
  if (start == std::string_view::npos) return std::nullopt;
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return std::make_pair(start, i - start + 1);
    }
  }
  return std::nullopt;
}

/// Extracts the first well-formed JSON object embedded in free text.
inline std::optional<nlohmann::json> first_json_object(std::string_view text) {
  std::size_t from = 0;
  while (true) {
    const auto span = balanced_object(text, from);
    if (!span) return std::nullopt;
    nlohmann::json parsed =
        nlohmann::json::parse(text.substr(span->first, span->second), nullptr, false);
    if (!parsed.is_discarded() && parsed.is_object()) return parsed;
    from = span->first + 1;
  }
}

}  // namespace detail

/// Parses an expert reply: extracts the first well-formed JSON object (experts
/// may wrap it in prose), maps the wire keys, and validates ranges.
inline ResponseDoc parse_response(std::string_view raw) {
  const auto object = detail::first_json_object(raw);
  if (!object) throw ParseFailureError("no JSON object found in response");
  const nlohmann::json& j = *object;
  if (!j.contains("estimate") || !j["estimate"].is_number()) {
    throw ParseFailureError("object has no numeric \"estimate\" field");
  }
  ResponseDoc doc;
  doc.raw = std::string(raw);
  doc.point_estimate = j["estimate"].get<double>();
  const bool has_low = j.contains("low") && !j["low"].is_null();
  const bool has_high = j.contains("high") && !j["high"].is_null();
  if (has_low != has_high) throw MalformedIntervalError("\"low\" and \"high\" must be paired");
  if (has_low) {
    if (!j["low"].is_number() || !j["high"].is_number()) {
      throw MalformedIntervalError("\"low\"/\"high\" must be numbers");
    }
    doc.interval = Interval{j["low"].get<double>(), j["high"].get<double>()};
  }
  if (j.contains("rationale") && !j["rationale"].is_null()) {
    if (!j["rationale"].is_string()) throw ParseFailureError("\"rationale\" must be a string");
    doc.rationale = j["rationale"].get<std::string>();
  }
  // Range validation mirrors validate_estimate.
  Estimate probe;
  probe.value = doc.point_estimate;
  probe.interval = doc.interval;
  validate_estimate(probe);
  return doc;
}

/// Canonical renderer for the expert wire format; inverse of parse_response.
inline std::string render_response(const ResponseDoc& doc) {
  nlohmann::json j;
  j["estimate"] = doc.point_estimate;
  if (doc.interval) {
    j["low"] = doc.interval->lo;
    j["high"] = doc.interval->hi;
  }
  j["rationale"] = doc.rationale;
  return j.dump();
}

inline MediatorDoc parse_mediator_response(std::string_view raw) {
  const auto object = detail::first_json_object(raw);
  if (!object) throw ParseFailureError("no JSON object found in mediator response");
  const nlohmann::json& j = *object;
  if (!j.contains("arguments_higher") || !j.contains("arguments_lower")) {
    throw ParseFailureError("mediator object missing argument lists");
  }
  MediatorDoc doc;
  doc.raw = std::string(raw);
  for (const char* key : {"arguments_higher", "arguments_lower"}) {
    if (!j[key].is_array()) throw ParseFailureError(std::string("\"") + key + "\" must be a list");
    auto& target = std::string_view(key) == "arguments_higher" ? doc.arguments_higher
                                                               : doc.arguments_lower;
    for (const nlohmann::json& entry : j[key]) {
      if (!entry.is_string()) throw ParseFailureError(std::string(key) + " entries must be text");
      target.push_back(entry.get<std::string>());
    }
  }
  if (j.contains("agreement_notes") && j["agreement_notes"].is_string()) {
    doc.agreement_notes = j["agreement_notes"].get<std::string>();
  }
  return doc;
}

inline std::string render_mediator_response(const MediatorDoc& doc) {
  nlohmann::json j;
  j["stats"] = "";
  j["arguments_higher"] = doc.arguments_higher;
  j["arguments_lower"] = doc.arguments_lower;
  j["agreement_notes"] = doc.agreement_notes;
  return j.dump();
}

}  // namespace delphi::prompts
