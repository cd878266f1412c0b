#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <string>
#include <vector>

#include "delphi/personas.hpp"
#include "delphi/prompts.hpp"
#include "support/reference.hpp"

using namespace delphi;
using namespace delphi::prompts;

namespace {

Persona defensive_specialist() { return builtin_personas("diverse_security").front(); }

std::vector<Estimate> sample_estimates(int n, int round = 1) {
  std::vector<Estimate> estimates;
  for (int i = 0; i < n; ++i) {
    Estimate e;
    e.expert_id = std::string(1, static_cast<char>('A' + i));
    e.round = round;
    e.value = 30.0 + 5.0 * i;
    e.rationale = "Distinct rationale number " + std::to_string(i) + ".";
    estimates.push_back(e);
  }
  return estimates;
}

// Splits a mediator prompt into its "### Expert i" blocks with headers removed.
std::vector<std::string> expert_blocks(const std::string& prompt) {
  std::vector<std::string> blocks;
  std::size_t pos = prompt.find("### Expert ");
  while (pos != std::string::npos) {
    std::size_t next = prompt.find("### Expert ", pos + 1);
    std::size_t end = next == std::string::npos ? prompt.find("\nProduce your", pos) : next;
    std::string block = prompt.substr(pos, end - pos);
    block.erase(0, block.find('\n') + 1);  // drop the numbered header line
    while (!block.empty() && block.back() == '\n') block.pop_back();
    blocks.push_back(block);
    pos = next;
  }
  return blocks;
}

}  // namespace

TEST_CASE("system prompt has context, persona, and format blocks in order") {
  const std::string text =
      build_system_prompt(defensive_specialist(), "Assess the scenario.", default_output_spec());
  const std::size_t context = text.find("## Delphi protocol");
  const std::size_t scenario = text.find("## Scenario");
  const std::size_t persona = text.find("## Your persona");
  const std::size_t format = text.find("## Output format");
  REQUIRE(context != std::string::npos);
  REQUIRE(scenario != std::string::npos);
  REQUIRE(persona != std::string::npos);
  REQUIRE(format != std::string::npos);
  CHECK(context < scenario);
  CHECK(scenario < persona);
  CHECK(persona < format);
  CHECK(text.find("Defensive Security Specialist") != std::string::npos);
  CHECK(text.find("\"estimate\"") != std::string::npos);
}

TEST_CASE("system prompt is deterministic and tolerates an empty scenario") {
  const Persona persona = defensive_specialist();
  const std::string a = build_system_prompt(persona, "scenario text", default_output_spec());
  const std::string b = build_system_prompt(persona, "scenario text", default_output_spec());
  CHECK(a == b);

  const std::string bare = build_system_prompt(persona, "", default_output_spec());
  CHECK(bare.find("## Scenario") == std::string::npos);
  CHECK(bare.find("## Delphi protocol") != std::string::npos);
  CHECK(bare.find("## Your persona") != std::string::npos);
  CHECK(bare.find("## Output format") != std::string::npos);
}

TEST_CASE("round 1 prompt renders quantity, baseline, and ordered evidence") {
  Quantity quantity;
  quantity.id = "q";
  quantity.description = "Estimate the thing.";
  quantity.baseline_note = "Historical base rate is 25%.";
  std::vector<EvidenceItem> evidence{{"First item", "alpha content", {}},
                                     {"Second item", "beta content", {}}};
  const std::string text = build_round1_prompt(quantity, evidence);
  CHECK(text.find("Estimate the thing.") != std::string::npos);
  CHECK(text.find("Baseline: Historical base rate is 25%.") != std::string::npos);
  const std::size_t first = text.find("### First item");
  const std::size_t second = text.find("### Second item");
  REQUIRE(first != std::string::npos);
  REQUIRE(second != std::string::npos);
  CHECK(first < second);
  CHECK(text.find("alpha content") < text.find("beta content"));

  const std::string bare = build_round1_prompt(quantity, {});
  CHECK(bare.find("No additional evidence") != std::string::npos);
}

TEST_CASE("feedback prompt embeds stats and argument lists") {
  const std::vector<Persona> personas = builtin_personas("diverse_security");
  FeedbackSummary summary;
  summary.round = 1;
  summary.stats = {30.0, 50.0, 40.0, 40.0, 20.0};
  summary.arguments_higher = {"Capability is trending upward."};
  summary.arguments_lower = {"Defenses were underweighted."};
  summary.agreement_notes = "Panel clusters near the median.";

  const std::string text = build_feedback_prompt(summary, personas);
  CHECK(text.find("40") != std::string::npos);
  CHECK(text.find("20") != std::string::npos);
  CHECK(text.find("Capability is trending upward.") != std::string::npos);
  CHECK(text.find("Defenses were underweighted.") != std::string::npos);
  CHECK(text.find("revise or confirm") != std::string::npos);
}

TEST_CASE("feedback prompt rejects summaries that leak identity") {
  const std::vector<Persona> personas = builtin_personas("diverse_security");
  FeedbackSummary summary;
  summary.round = 1;
  summary.stats = {30.0, 50.0, 40.0, 40.0, 20.0};
  summary.agreement_notes = "Expert C pushed the panel higher.";
  CHECK_THROWS_AS(build_feedback_prompt(summary, personas), AnonymityViolationError);
}

TEST_CASE("feedback prompt notes consensus when argument lists are empty") {
  const std::vector<Persona> personas = builtin_personas("diverse_security");
  FeedbackSummary summary;
  summary.round = 1;
  summary.stats = {40.0, 40.0, 40.0, 40.0, 0.0};
  const std::string text = build_feedback_prompt(summary, personas);
  CHECK(text.find("broad agreement") != std::string::npos);
}

TEST_CASE("mediator prompt relabels experts and shuffles deterministically") {
  const std::vector<Estimate> estimates = sample_estimates(5);
  const std::string a = build_mediator_prompt(estimates, 42);
  const std::string b = build_mediator_prompt(estimates, 42);
  CHECK(a == b);

  for (int i = 1; i <= 5; ++i) {
    CHECK(a.find("### Expert " + std::to_string(i) + "\n") != std::string::npos);
  }
  CHECK(a.find("### Expert 6") == std::string::npos);
  // No persona ids anywhere: the only labels are the anonymized numbers.
  CHECK(a.find("Expert A") == std::string::npos);

  const std::string c = build_mediator_prompt(estimates, 43);
  std::vector<std::string> blocks_a = expert_blocks(a);
  std::vector<std::string> blocks_c = expert_blocks(c);
  REQUIRE(blocks_a.size() == 5);
  REQUIRE(blocks_c.size() == 5);
  std::sort(blocks_a.begin(), blocks_a.end());
  std::sort(blocks_c.begin(), blocks_c.end());
  CHECK(blocks_a == blocks_c);

  CHECK_THROWS_AS(build_mediator_prompt({}, 1), EmptyPanelError);
}

TEST_CASE("parse_response extracts the wire object") {
  const ResponseDoc simple = parse_response(R"({"estimate": 42.5, "rationale": "solid"})");
  CHECK(simple.point_estimate == 42.5);
  CHECK(simple.rationale == "solid");
  CHECK_FALSE(simple.interval.has_value());

  const ResponseDoc embedded = parse_response(
      "I considered the options carefully...\n"
      R"({"estimate": 30, "low": 20, "high": 45, "rationale": "x"})"
      "\nand that is my answer.");
  CHECK(embedded.point_estimate == 30.0);
  REQUIRE(embedded.interval.has_value());
  CHECK(embedded.interval->lo == 20.0);
  CHECK(embedded.interval->hi == 45.0);

  CHECK_THROWS_AS(parse_response("around forty percent"), ParseFailureError);
  CHECK_THROWS_AS(parse_response(R"({"estimate": 105, "rationale": "x"})"), OutOfRangeError);
  CHECK_THROWS_AS(parse_response(R"({"estimate": 40, "low": 45, "high": 50})"),
                  MalformedIntervalError);
  CHECK_THROWS_AS(parse_response(R"({"estimate": 40, "low": 35})"), MalformedIntervalError);
  CHECK_THROWS_AS(parse_response(R"({"value": 40})"), ParseFailureError);
}

TEST_CASE("parse_response skips non-JSON brace groups") {
  const ResponseDoc doc = parse_response(
      "Set notation {like this} is not JSON. {\"estimate\": 12.5, \"rationale\": \"ok\"}");
  CHECK(doc.point_estimate == 12.5);
}

TEST_CASE("render and parse round-trip") {
  util::Rng rng(555);
  const std::vector<std::string> rationales{
      "",
      "plain text",
      "quotes \" and braces { } inside",
      "newlines\nand\ttabs",
      "unicode: naive resume",
      R"(nested {"not": "the object"} fragment)"};
  for (int iter = 0; iter < 300; ++iter) {
    ResponseDoc doc;
    doc.point_estimate = rng.next_unit() * 100.0;
    if (iter % 3 == 0) {
      const double lo = doc.point_estimate * rng.next_unit();
      const double hi = doc.point_estimate + (100.0 - doc.point_estimate) * rng.next_unit();
      doc.interval = Interval{lo, hi};
    }
    doc.rationale = rationales[iter % rationales.size()];
    const ResponseDoc back = parse_response(render_response(doc));
    CHECK(back.point_estimate == doc.point_estimate);
    CHECK(back.interval.has_value() == doc.interval.has_value());
    if (doc.interval) {
      CHECK(back.interval->lo == doc.interval->lo);
      CHECK(back.interval->hi == doc.interval->hi);
    }
    CHECK(back.rationale == doc.rationale);
  }
}

TEST_CASE("mediator responses parse and render") {
  MediatorDoc doc;
  doc.arguments_higher = {"higher one"};
  doc.arguments_lower = {"lower one", "lower two"};
  doc.agreement_notes = "notes";
  const MediatorDoc back = parse_mediator_response(render_mediator_response(doc));
  CHECK(back.arguments_higher == doc.arguments_higher);
  CHECK(back.arguments_lower == doc.arguments_lower);
  CHECK(back.agreement_notes == doc.agreement_notes);

  CHECK_THROWS_AS(parse_mediator_response("no object here"), ParseFailureError);
  CHECK_THROWS_AS(parse_mediator_response(R"({"estimate": 40})"), ParseFailureError);
}
