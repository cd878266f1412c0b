#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "delphi/benchdata.hpp"
#include "support/doubles.hpp"

using namespace delphi;
using namespace delphi::benchdata;
using Catch::Matchers::WithinAbs;
using testing_support::TempDir;

namespace {

// Multiset of the rate tokens rendered in a results matrix ("x.y" strings).
std::multiset<std::string> matrix_rate_tokens(const std::string& matrix) {
  std::multiset<std::string> tokens;
  static const std::regex kCell(R"(\| (\?|[0-9]+\.[0-9]))");
  for (std::sregex_iterator it(matrix.begin(), matrix.end(), kCell), end; it != end; ++it) {
    tokens.insert((*it)[1].str());
  }
  return tokens;
}

std::multiset<std::string> table_rate_tokens(const BenchmarkTable& table) {
  std::multiset<std::string> tokens;
  for (const BenchAgent& agent : table.agents) {
    for (double rate : agent.rates) tokens.insert(util::fmt_fixed(rate, 1));
  }
  return tokens;
}

std::multiset<double> rate_multiset(const BenchmarkTable& table) {
  std::multiset<double> rates;
  for (const BenchAgent& agent : table.agents) {
    for (double rate : agent.rates) rates.insert(rate);
  }
  return rates;
}

const EvidenceItem& item_labeled(const std::vector<EvidenceItem>& evidence,
                                 const std::string& label) {
  for (const EvidenceItem& item : evidence) {
    if (item.label == label) return item;
  }
  throw std::runtime_error("missing evidence item " + label);
}

}  // namespace

TEST_CASE("bundled tables load with the published values") {
  const BenchmarkTable cybench = load_table(BenchmarkId::cybench);
  REQUIRE(cybench.agents.size() == 16);
  bool found = false;
  for (const BenchAgent& agent : cybench.agents) {
    if (agent.name == "Claude 4.5 Sonnet") {
      found = true;
      CHECK(agent.rates[0] == 55.0);
    }
  }
  CHECK(found);

  const BenchmarkTable bountybench = load_table(BenchmarkId::bountybench);
  REQUIRE(bountybench.agents.size() == 10);
  CHECK(bountybench.task_types == std::vector<std::string>{"detect", "exploit", "patch"});
  CHECK(bountybench.agents[0].name == "Claude Code");
  CHECK(bountybench.agents[0].rates == std::vector<double>{5.0, 57.5, 87.5});

  const BenchmarkTable cybergym = load_table(BenchmarkId::cybergym);
  REQUIRE(cybergym.agents.size() == 12);
  CHECK(cybergym.agents.back().name == "SWE-Gym-32B");
  CHECK(cybergym.agents.back().rates[0] == 0.1);
}

TEST_CASE("table checksums guard against data drift") {
  const BenchmarkTable cybench = load_table(BenchmarkId::cybench);
  long double sum = 0.0L;
  for (const BenchAgent& a : cybench.agents) sum += a.rates[0];
  CHECK_THAT(static_cast<double>(sum), WithinAbs(313.5, 1e-9));

  const BenchmarkTable cybergym = load_table(BenchmarkId::cybergym);
  sum = 0.0L;
  for (const BenchAgent& a : cybergym.agents) sum += a.rates[0];
  CHECK_THAT(static_cast<double>(sum), WithinAbs(61.1, 1e-9));
}

TEST_CASE("unknown benchmark ids are rejected") {
  CHECK_THROWS_AS(parse_benchmark_id("weightlifting"), UnknownBenchmarkError);
  CHECK_THROWS_AS(load_table("weightlifting"), UnknownBenchmarkError);
}

TEST_CASE("anonymize hides exactly what each condition says") {
  const BenchmarkTable cybench = load_table(BenchmarkId::cybench);

  SECTION("none strips agents and benchmark identity") {
    const BenchmarkTable anon = anonymize(cybench, InfoCondition::none);
    const std::string serialized = table_to_json(anon).dump();
    CHECK(serialized.find("Claude") == std::string::npos);
    CHECK(serialized.find("Cybench") == std::string::npos);
    CHECK(serialized.find("cybench") == std::string::npos);
    CHECK(anon.agents[0].name == "Model A");
    CHECK(anon.agents[15].name == "Model P");
    CHECK(anon.agents[0].description.empty());
    CHECK(rate_multiset(anon) == rate_multiset(cybench));
  }

  SECTION("benchmark keeps the benchmark description but anonymizes agents") {
    const BenchmarkTable anon = anonymize(cybench, InfoCondition::benchmark);
    CHECK(anon.benchmark_description == cybench.benchmark_description);
    const std::string serialized = table_to_json(anon).dump();
    CHECK(serialized.find("Claude") == std::string::npos);
    CHECK(anon.agents[6].name == "Model G");
  }

  SECTION("model keeps agents but stubs the benchmark") {
    const BenchmarkTable anon = anonymize(cybench, InfoCondition::model);
    const std::string serialized = table_to_json(anon).dump();
    CHECK(serialized.find("GPT-4o") != std::string::npos);
    CHECK(serialized.find(cybench.benchmark_description) == std::string::npos);
    CHECK(anon.benchmark_description == std::string(kBenchmarkStub));
    CHECK(anon.benchmark_id == "benchmark");
  }

  SECTION("full is the identity transform") {
    const BenchmarkTable anon = anonymize(cybench, InfoCondition::full);
    CHECK(table_to_json(anon) == table_to_json(cybench));
  }

  SECTION("rates survive every condition, including shuffled labels") {
    for (InfoCondition condition : kAllConditions) {
      CHECK(rate_multiset(anonymize(cybench, condition)) == rate_multiset(cybench));
      CHECK(rate_multiset(anonymize(cybench, condition, 99, true)) == rate_multiset(cybench));
    }
  }

  SECTION("label shuffling permutes letters but keeps row order") {
    const BenchmarkTable anon = anonymize(cybench, InfoCondition::none, 5, true);
    std::set<std::string> names;
    for (const BenchAgent& agent : anon.agents) names.insert(agent.name);
    CHECK(names.size() == 16);
    CHECK(names.count("Model A") == 1);
    bool moved = false;
    const BenchmarkTable plain = anonymize(cybench, InfoCondition::none);
    for (std::size_t i = 0; i < anon.agents.size(); ++i) {
      moved = moved || anon.agents[i].name != plain.agents[i].name;
      CHECK(anon.agents[i].rates == cybench.agents[i].rates);
    }
    CHECK(moved);
  }
}

TEST_CASE("letter labels extend past Z") {
  CHECK(letter_label(0) == "A");
  CHECK(letter_label(25) == "Z");
  CHECK(letter_label(26) == "AA");
  CHECK(letter_label(27) == "AB");
}

TEST_CASE("leave-one-out instance for a single-task-type table") {
  const BenchmarkTable cybench = load_table(BenchmarkId::cybench);
  int target = -1;
  for (std::size_t i = 0; i < cybench.agents.size(); ++i) {
    if (cybench.agents[i].name == "Claude 4.5 Sonnet") target = static_cast<int>(i);
  }
  REQUIRE(target >= 0);

  const LooInstance inst = make_loo_instance(cybench, {target, 0}, InfoCondition::full);
  CHECK(inst.ground_truth == 55.0);
  CHECK(inst.label == "Claude 4.5 Sonnet");
  CHECK(inst.quantity.id == "cybench/Claude 4.5 Sonnet");

  const EvidenceItem& results = item_labeled(inst.evidence, "Observed results");
  // 15 other agents, the target excluded from the matrix entirely.
  CHECK(matrix_rate_tokens(results.content).size() == 15);
  CHECK(results.content.find("Claude 4.5 Sonnet") == std::string::npos);
  CHECK(results.content.find("55.0") == std::string::npos);

  const EvidenceItem& who = item_labeled(inst.evidence, "Target agent");
  CHECK(who.content.find("Claude 4.5 Sonnet") != std::string::npos);
  CHECK(who.content.find("55") == std::string::npos);
  CHECK(who.tags.count(EvidenceTag::agent_info) == 1);
}

TEST_CASE("leave-one-out instance for the multi-task-type table") {
  const BenchmarkTable bountybench = load_table(BenchmarkId::bountybench);
  const LooInstance inst = make_loo_instance(bountybench, {0, 1}, InfoCondition::full);
  CHECK(inst.ground_truth == 57.5);
  CHECK(inst.label == "Claude Code/exploit");

  const EvidenceItem& results = item_labeled(inst.evidence, "Observed results");
  // The held-out agent's row stays, with only the exploit cell masked.
  CHECK(results.content.find("Claude Code | 5.0 | ? | 87.5") != std::string::npos);
  const std::multiset<std::string> tokens = matrix_rate_tokens(results.content);
  CHECK(tokens.size() == 30);
  CHECK(tokens.count("?") == 1);
}

TEST_CASE("out-of-range holdouts are rejected") {
  const BenchmarkTable cybench = load_table(BenchmarkId::cybench);
  CHECK_THROWS_AS(make_loo_instance(cybench, {16, 0}, InfoCondition::full), IndexOutOfRangeError);
  CHECK_THROWS_AS(make_loo_instance(cybench, {0, 1}, InfoCondition::full), IndexOutOfRangeError);
  CHECK_THROWS_AS(make_loo_instance(cybench, {-1, 0}, InfoCondition::full), IndexOutOfRangeError);
}

TEST_CASE("masking removes exactly one value for every holdout and condition") {
  for (BenchmarkId id : {BenchmarkId::bountybench, BenchmarkId::cybench, BenchmarkId::cybergym}) {
    const BenchmarkTable table = load_table(id);
    const std::multiset<std::string> all_tokens = table_rate_tokens(table);
    for (const HoldoutSpec& holdout : enumerate_holdouts(table)) {
      for (InfoCondition condition : kAllConditions) {
        const LooInstance inst = make_loo_instance(table, holdout, condition);
        const EvidenceItem& results = item_labeled(inst.evidence, "Observed results");
        std::multiset<std::string> shown = matrix_rate_tokens(results.content);

        std::multiset<std::string> expected = all_tokens;
        expected.erase(expected.find(util::fmt_fixed(inst.ground_truth, 1)));
        if (table.task_types.size() > 1) {
          // the masked cell renders as "?"
          REQUIRE(shown.count("?") == 1);
          shown.erase(shown.find("?"));
        }
        CHECK(shown == expected);
      }
    }
  }
}

TEST_CASE("target agent visibility follows the condition") {
  const BenchmarkTable cybench = load_table(BenchmarkId::cybench);
  const LooInstance anonymous = make_loo_instance(cybench, {6, 0}, InfoCondition::none);
  const EvidenceItem& hidden = item_labeled(anonymous.evidence, "Target agent");
  CHECK(hidden.content.find("Claude") == std::string::npos);
  CHECK(hidden.content.find("Model G") != std::string::npos);
  CHECK(hidden.content.find("Description:") == std::string::npos);

  const LooInstance described = make_loo_instance(cybench, {6, 0}, InfoCondition::model);
  const EvidenceItem& visible = item_labeled(described.evidence, "Target agent");
  CHECK(visible.content.find("Claude 4.5 Sonnet") != std::string::npos);
  CHECK(visible.content.find("Description:") != std::string::npos);

  const EvidenceItem& benchmark = item_labeled(described.evidence, "Benchmark");
  CHECK(benchmark.content == std::string(kBenchmarkStub));
}

TEST_CASE("validate_tables passes on pristine data and names corrupted tables") {
  const std::vector<DataCheck> pristine = validate_tables();
  CHECK_FALSE(pristine.empty());
  for (const DataCheck& check : pristine) {
    INFO(check.name << ": " << check.detail);
    CHECK(check.passed);
  }

  TempDir dir;
  for (BenchmarkId id : {BenchmarkId::bountybench, BenchmarkId::cybench, BenchmarkId::cybergym}) {
    const std::string name = to_string(id) + ".json";
    std::filesystem::copy_file(default_data_dir() / name, dir.path() / name);
  }

  SECTION("a perturbed rate fails the checksum for that table") {
    nlohmann::json j = util::load_json_file(dir.path() / "cybench.json");
    j["agents"][0]["rates"]["overall"] = 11.0;  // was 10.0
    util::save_json_file(dir.path() / "cybench.json", j);
    bool cybench_failed = false;
    for (const DataCheck& check : validate_tables(dir.path())) {
      if (!check.passed) {
        CHECK(check.name.find("cybench") != std::string::npos);
        cybench_failed = true;
      }
    }
    CHECK(cybench_failed);
  }

  SECTION("a missing agent row fails the shape check") {
    nlohmann::json j = util::load_json_file(dir.path() / "cybergym.json");
    j["agents"].erase(0);
    util::save_json_file(dir.path() / "cybergym.json", j);
    bool shape_failed = false;
    for (const DataCheck& check : validate_tables(dir.path())) {
      if (!check.passed && check.name == "cybergym shape") shape_failed = true;
    }
    CHECK(shape_failed);
  }

  SECTION("an out-of-range rate fails to load") {
    nlohmann::json j = util::load_json_file(dir.path() / "cybergym.json");
    j["agents"][0]["rates"]["overall"] = 130.0;
    util::save_json_file(dir.path() / "cybergym.json", j);
    bool load_failed = false;
    for (const DataCheck& check : validate_tables(dir.path())) {
      if (!check.passed && check.name == "cybergym loads") load_failed = true;
    }
    CHECK(load_failed);
  }
}

TEST_CASE("table json round-trips") {
  const BenchmarkTable table = load_table(BenchmarkId::bountybench);
  const BenchmarkTable back = table_from_json(table_to_json(table));
  CHECK(table_to_json(back) == table_to_json(table));
}
