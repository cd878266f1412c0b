#pragma once

#include <algorithm>
#include <exception>
#include <future>
#include <map>
#include <memory>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "delphi/core.hpp"
#include "delphi/errors.hpp"
#include "delphi/prompts.hpp"
#include "delphi/providers.hpp"
#include "delphi/util.hpp"

namespace delphi::protocol {

/// State for eliciting one quantity (or, in sequential mode, a series of
/// quantities sharing per-expert conversation history).
struct ElicitationSession {
  PanelConfig config;
  Quantity quantity;
  std::vector<EvidenceItem> evidence;
  std::string scenario;  // rendered into each expert's system prompt
  // Conversation per persona id. In fresh_context mode this is cleared at the
  // start of every quantity; in sequential mode it threads across quantities.
  std::map<std::string, std::vector<providers::ChatMessage>> per_expert_history;
};

struct SequenceItem {
  Quantity quantity;
  std::vector<EvidenceItem> evidence;
};

struct EngineOptions {
  int max_concurrency = 4;  // provider fan-out within a round
  std::string model_name = "expert-model";
  double temperature = 0.7;
  int max_tokens = 2048;
};

/// The Delphi round engine. Round structure: round 1 is independent
/// estimation; before each later round a mediator synthesizes the previous
/// round into anonymized feedback which every expert then sees. Experts within
/// a round never see each other's current-round output. Each failure site gets
/// exactly one repair re-prompt, then the round aborts; silent dropout would
/// change the panel size mid-run.
class Engine {
 public:
  explicit Engine(providers::Provider& provider, EngineOptions options = {})
      : provider_(provider), options_(options) {
    if (options_.max_concurrency < 1) options_.max_concurrency = 1;
  }

  /// Runs one round for every panelist and returns k validated estimates in
  /// panel order. `feedback` must be present iff round >= 2.
  std::vector<Estimate> run_round(ElicitationSession& session, int round,
                                  const std::optional<FeedbackSummary>& feedback,
                                  std::vector<TranscriptEntry>* transcript = nullptr) {
    session.config.validate();
    if (round < 1) throw Error("round must be >= 1");
    if (feedback.has_value() != (round >= 2)) {
      throw Error("feedback must be present exactly for rounds >= 2");
    }

    // Conversations are created up front so concurrent experts never touch
    // the map structure, only their own message vector.
    for (const Persona& persona : session.config.personas) {
      session.per_expert_history.try_emplace(persona.id);
    }

    struct Slot {
      Estimate estimate;
      std::vector<TranscriptEntry> entries;
    };
    const int k = session.config.k;
    std::vector<std::future<Slot>> futures;
    futures.reserve(k);
    std::counting_semaphore<> gate(options_.max_concurrency);
    for (int j = 0; j < k; ++j) {
      const Persona& persona = session.config.personas[j];
      auto& conversation = session.per_expert_history[persona.id];
      futures.push_back(std::async(std::launch::async, [&, j]() {
        gate.acquire();
        struct Release {
          std::counting_semaphore<>* s;
          ~Release() { s->release(); }
        } release{&gate};
        Slot slot;
        slot.estimate = query_expert(session, session.config.personas[j], round, feedback,
                                     conversation, slot.entries);
        return slot;
      }));
    }

    std::vector<Estimate> estimates;
    estimates.reserve(k);
    std::exception_ptr first_failure;
    for (auto& future : futures) {
      try {
        Slot slot = future.get();
        if (!first_failure) {
          estimates.push_back(std::move(slot.estimate));
          if (transcript != nullptr) {
            for (TranscriptEntry& e : slot.entries) transcript->push_back(std::move(e));
          }
        }
      } catch (...) {
        if (!first_failure) first_failure = std::current_exception();
      }
    }
    if (first_failure) std::rethrow_exception(first_failure);
    return estimates;
  }

  /// Synthesizes one round into anonymized feedback. Numeric statistics are
  /// computed locally; the model contributes only the qualitative parts.
  FeedbackSummary mediate(std::span<const Estimate> estimates, const ElicitationSession& session,
                          std::vector<TranscriptEntry>* transcript = nullptr) {
    if (estimates.empty()) throw EmptyPanelError();
    const int round = estimates.front().round;
    std::vector<double> values;
    values.reserve(estimates.size());
    for (const Estimate& e : estimates) values.push_back(e.value);

    FeedbackSummary summary;
    summary.round = round;
    summary.stats = compute_stats(values);

    const std::uint64_t shuffle_seed = util::key_hash(
        session.config.seed, {session.quantity.id, "mediator", std::to_string(round)});
    std::vector<providers::ChatMessage> messages;
    messages.push_back({"system", prompts::build_mediator_system_prompt()});
    messages.push_back({"user", prompts::build_mediator_prompt(estimates, shuffle_seed)});
    providers::CallContext context{"mediator", "", session.quantity.id, round, std::nullopt};

    prompts::MediatorDoc doc = mediator_exchange(messages, context, round, transcript);
    summary.arguments_higher = doc.arguments_higher;
    summary.arguments_lower = doc.arguments_lower;
    summary.agreement_notes = doc.agreement_notes;

    try {
      check_summary_anonymity(summary, session.config.personas);
    } catch (const AnonymityViolationError&) {
      // One corrective re-request, then give up.
      messages.push_back({"assistant", doc.raw});
      messages.push_back({"user", prompts::build_anonymity_repair_prompt()});
      doc = mediator_exchange(messages, context, round, transcript);
      summary.arguments_higher = doc.arguments_higher;
      summary.arguments_lower = doc.arguments_lower;
      summary.agreement_notes = doc.agreement_notes;
      check_summary_anonymity(summary, session.config.personas);
    }
    return summary;
  }

  /// Full protocol for one quantity: round 1, then mediate/revise cycles, then
  /// aggregation of the final round.
  PanelResult run_elicitation(ElicitationSession& session) {
    session.config.validate();
    if (session.config.history_mode == HistoryMode::fresh_context) {
      session.per_expert_history.clear();
    }
    PanelResult result;
    std::optional<FeedbackSummary> feedback;
    for (int round = 1; round <= session.config.rounds; ++round) {
      if (round >= 2) {
        feedback = mediate(result.per_round.back(), session, &result.transcript);
        result.feedback.push_back(*feedback);
      }
      result.per_round.push_back(run_round(session, round, feedback, &result.transcript));
    }

    std::vector<double> final_values;
    for (const Estimate& e : result.per_round.back()) final_values.push_back(e.value);
    result.final_estimate = aggregate_panel(final_values, session.config.aggregation);
    result.ci = final_values.size() >= 2
                    ? confidence_interval(final_values, session.config.ci_level)
                    : Interval{result.final_estimate, result.final_estimate};
    return result;
  }

  /// Sequential-history mode: runs the full protocol for each quantity in
  /// order while each expert's conversation threads through the whole series.
  std::vector<PanelResult> run_sequence(const PanelConfig& config,
                                        std::span<const SequenceItem> items,
                                        std::string_view scenario = {}) {
    if (config.history_mode != HistoryMode::sequential) {
      throw ModeMismatchError("run_sequence requires history_mode=sequential");
    }
    ElicitationSession session;
    session.config = config;
    session.scenario = std::string(scenario);
    std::vector<PanelResult> results;
    results.reserve(items.size());
    for (const SequenceItem& item : items) {
      session.quantity = item.quantity;
      session.evidence = item.evidence;
      results.push_back(run_elicitation(session));
    }
    return results;
  }

 private:
  Estimate query_expert(const ElicitationSession& session, const Persona& persona, int round,
                        const std::optional<FeedbackSummary>& feedback,
                        std::vector<providers::ChatMessage>& conversation,
                        std::vector<TranscriptEntry>& entries) {
    if (conversation.empty()) {
      conversation.push_back({"system", prompts::build_system_prompt(
                                            persona, session.scenario,
                                            prompts::default_output_spec())});
    }
    const std::string user_prompt =
        round == 1 ? prompts::build_round1_prompt(session.quantity, session.evidence)
                   : prompts::build_feedback_prompt(*feedback, session.config.personas);
    conversation.push_back({"user", user_prompt});

    providers::CallContext context{"expert", persona.id, session.quantity.id, round,
                                   feedback ? std::optional<double>(feedback->stats.mean)
                                            : std::nullopt};
    providers::ChatResponse response = call(conversation, context, round, persona.id, entries);
    std::string failure;
    try {
      return accept(persona, round, response, conversation);
    } catch (const Error& e) {
      failure = e.what();
    }
    // One repair re-prompt with the bad reply kept in context.
    conversation.push_back({"assistant", response.content});
    conversation.push_back({"user", prompts::build_repair_prompt()});
    response = call(conversation, context, round, persona.id, entries);
    try {
      return accept(persona, round, response, conversation);
    } catch (const Error& e) {
      throw ExpertFailureError(persona.id, round, failure + "; then: " + e.what());
    }
  }

  Estimate accept(const Persona& persona, int round, const providers::ChatResponse& response,
                  std::vector<providers::ChatMessage>& conversation) {
    const prompts::ResponseDoc doc = prompts::parse_response(response.content);
    Estimate estimate;
    estimate.expert_id = persona.id;
    estimate.round = round;
    estimate.value = doc.point_estimate;
    estimate.interval = doc.interval;
    estimate.rationale = doc.rationale;
    estimate = validate_estimate(std::move(estimate));
    conversation.push_back({"assistant", response.content});
    return estimate;
  }

  providers::ChatResponse call(const std::vector<providers::ChatMessage>& messages,
                               const providers::CallContext& context, int round,
                               const std::string& persona_id,
                               std::vector<TranscriptEntry>& entries) {
    providers::ChatRequest request{messages, options_.model_name, options_.temperature,
                                   options_.max_tokens};
    TranscriptEntry entry;
    entry.role = context.role;
    entry.round = round;
    entry.persona_id = persona_id;
    entry.prompt = messages.back().content;
    entry.started_ms = util::now_ms();
    providers::ChatResponse response = provider_.complete(request, context);
    entry.finished_ms = util::now_ms();
    entry.response = response.content;
    entries.push_back(std::move(entry));
    return response;
  }

  prompts::MediatorDoc mediator_exchange(std::vector<providers::ChatMessage>& messages,
                                         const providers::CallContext& context, int round,
                                         std::vector<TranscriptEntry>* transcript) {
    std::vector<TranscriptEntry> entries;
    providers::ChatResponse response = call(messages, context, round, "", entries);
    prompts::MediatorDoc doc;
    bool parsed = false;
    std::string failure;
    try {
      doc = prompts::parse_mediator_response(response.content);
      parsed = true;
    } catch (const Error& e) {
      failure = e.what();
    }
    if (!parsed) {
      messages.push_back({"assistant", response.content});
      messages.push_back({"user", prompts::build_mediator_repair_prompt()});
      response = call(messages, context, round, "", entries);
      try {
        doc = prompts::parse_mediator_response(response.content);
      } catch (const Error& e) {
        if (transcript != nullptr) {
          for (TranscriptEntry& t : entries) transcript->push_back(std::move(t));
        }
        throw MediatorFailureError(round, failure + "; then: " + e.what());
      }
    }
    if (transcript != nullptr) {
      for (TranscriptEntry& t : entries) transcript->push_back(std::move(t));
    }
    return doc;
  }

  providers::Provider& provider_;
  EngineOptions options_;
};

// ---- serialization -----------------------------------------------------------------

inline nlohmann::json estimate_to_json(const Estimate& e) {
  nlohmann::json j{{"expert_id", e.expert_id},
                   {"round", e.round},
                   {"value", e.value},
                   {"rationale", e.rationale}};
  if (e.interval) j["interval"] = {{"lo", e.interval->lo}, {"hi", e.interval->hi}};
  return j;
}

inline nlohmann::json summary_to_json(const FeedbackSummary& s) {
  return {{"round", s.round},
          {"stats",
           {{"min", s.stats.min},
            {"max", s.stats.max},
            {"mean", s.stats.mean},
            {"median", s.stats.median},
            {"spread", s.stats.spread}}},
          {"arguments_higher", s.arguments_higher},
          {"arguments_lower", s.arguments_lower},
          {"agreement_notes", s.agreement_notes}};
}

inline nlohmann::json transcript_entry_to_json(const TranscriptEntry& e, bool with_timestamps) {
  nlohmann::json j{{"role", e.role},
                   {"round", e.round},
                   {"persona_id", e.persona_id},
                   {"prompt", e.prompt},
                   {"response", e.response}};
  if (with_timestamps) {
    j["started_ms"] = e.started_ms;
    j["finished_ms"] = e.finished_ms;
  }
  return j;
}

/// Deterministic result payload: timestamps are deliberately excluded so two
/// identically-seeded runs serialize byte-identically.
inline nlohmann::json result_to_json(const PanelResult& r) {
  nlohmann::json rounds = nlohmann::json::array();
  for (const auto& round : r.per_round) {
    nlohmann::json list = nlohmann::json::array();
    for (const Estimate& e : round) list.push_back(estimate_to_json(e));
    rounds.push_back(list);
  }
  nlohmann::json feedback = nlohmann::json::array();
  for (const FeedbackSummary& s : r.feedback) feedback.push_back(summary_to_json(s));
  nlohmann::json transcript = nlohmann::json::array();
  for (const TranscriptEntry& e : r.transcript) {
    transcript.push_back(transcript_entry_to_json(e, false));
  }
  return {{"final_estimate", r.final_estimate},
          {"ci", {{"lo", r.ci.lo}, {"hi", r.ci.hi}}},
          {"per_round", rounds},
          {"feedback", feedback},
          {"transcript", transcript}};
}

/// Transcript export: JSON lines, one record per provider call, with
/// timestamps.
inline std::string transcript_to_jsonl(std::span<const TranscriptEntry> entries) {
  std::string out;
  for (const TranscriptEntry& e : entries) {
    out += transcript_entry_to_json(e, true).dump();
    out += '\n';
  }
  return out;
}

}  // namespace delphi::protocol
