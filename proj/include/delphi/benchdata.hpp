#pragma once

#include <cstdlib>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "delphi/core.hpp"
#include "delphi/errors.hpp"
#include "delphi/util.hpp"

namespace delphi::benchdata {

enum class BenchmarkId { bountybench, cybench, cybergym };

inline std::string to_string(BenchmarkId id) {
  switch (id) {
    case BenchmarkId::bountybench: return "bountybench";
    case BenchmarkId::cybench: return "cybench";
    case BenchmarkId::cybergym: return "cybergym";
  }
  throw UnknownBenchmarkError("<invalid enum>");
}

inline BenchmarkId parse_benchmark_id(std::string_view text) {
  if (text == "bountybench") return BenchmarkId::bountybench;
  if (text == "cybench") return BenchmarkId::cybench;
  if (text == "cybergym") return BenchmarkId::cybergym;
  throw UnknownBenchmarkError(std::string(text));
}

/// The four evidence-visibility conditions, ordered least to most informed.
enum class InfoCondition { none, benchmark, model, full };

inline constexpr InfoCondition kAllConditions[] = {InfoCondition::none, InfoCondition::benchmark,
                                                   InfoCondition::model, InfoCondition::full};

inline std::string to_string(InfoCondition c) {
  switch (c) {
    case InfoCondition::none: return "none";
    case InfoCondition::benchmark: return "benchmark";
    case InfoCondition::model: return "model";
    case InfoCondition::full: return "full";
  }
  throw Error("invalid condition enum");
}

inline InfoCondition parse_condition(std::string_view text) {
  if (text == "none") return InfoCondition::none;
  if (text == "benchmark") return InfoCondition::benchmark;
  if (text == "model") return InfoCondition::model;
  if (text == "full") return InfoCondition::full;
  throw ConfigError("unknown info condition '" + std::string(text) + "'");
}

struct BenchAgent {
  std::string name;
  std::string description;
  std::vector<double> rates;  // parallel to BenchmarkTable::task_types
};

struct BenchmarkTable {
  std::string benchmark_id;
  std::string benchmark_description;
  std::vector<std::string> task_types;
  std::vector<BenchAgent> agents;
};

/// One held-out cell. For single-task-type tables task_index is 0.
struct HoldoutSpec {
  int agent_index = 0;
  int task_index = 0;
};

// ---- loading -------------------------------------------------------------------

inline BenchmarkTable table_from_json(const nlohmann::json& j) {
  BenchmarkTable table;
  table.benchmark_id = j.at("benchmark_id").get<std::string>();
  table.benchmark_description = j.at("benchmark_description").get<std::string>();
  table.task_types = j.at("task_types").get<std::vector<std::string>>();
  if (table.task_types.empty()) throw TableShapeError("table has no task types");
  std::set<std::string> names;
  for (const nlohmann::json& a : j.at("agents")) {
    BenchAgent agent;
    agent.name = a.at("name").get<std::string>();
    agent.description = a.value("description", std::string());
    if (!names.insert(agent.name).second) {
      throw TableShapeError("duplicate agent name '" + agent.name + "'");
    }
    const nlohmann::json& rates = a.at("rates");
    for (const std::string& task : table.task_types) {
      if (!rates.contains(task)) {
        throw TableShapeError("agent '" + agent.name + "' missing rate for '" + task + "'");
      }
      const double rate = rates.at(task).get<double>();
      if (!(rate >= 0.0 && rate <= 100.0)) {
        throw TableShapeError("agent '" + agent.name + "' rate " + util::fmt_pct(rate) +
                              " outside [0, 100]");
      }
      agent.rates.push_back(rate);
    }
    table.agents.push_back(std::move(agent));
  }
  if (table.agents.empty()) throw TableShapeError("table has no agents");
  return table;
}

inline nlohmann::json table_to_json(const BenchmarkTable& table) {
  nlohmann::json agents = nlohmann::json::array();
  for (const BenchAgent& a : table.agents) {
    nlohmann::json rates;
    for (std::size_t t = 0; t < table.task_types.size(); ++t) {
      rates[table.task_types[t]] = a.rates[t];
    }
    agents.push_back({{"name", a.name}, {"description", a.description}, {"rates", rates}});
  }
  return {{"benchmark_id", table.benchmark_id},
          {"benchmark_description", table.benchmark_description},
          {"task_types", table.task_types},
          {"agents", agents}};
}

/// Resolves the bundled-data directory: $DELPHI_DATA_DIR if set, else the
/// source-tree data directory baked in at configure time, else ./data.
inline std::filesystem::path default_data_dir() {
  if (const char* env = std::getenv("DELPHI_DATA_DIR"); env != nullptr && *env != '\0') {
    return env;
  }
#ifdef DELPHI_SOURCE_DATA_DIR
  if (std::filesystem::exists(DELPHI_SOURCE_DATA_DIR)) return DELPHI_SOURCE_DATA_DIR;
#endif
  return "data";
}

inline BenchmarkTable load_table(BenchmarkId id,
                                 const std::filesystem::path& data_dir = default_data_dir()) {
  const std::filesystem::path file = data_dir / (to_string(id) + ".json");
  if (!std::filesystem::exists(file)) {
    throw ConfigError("benchmark data file not found: " + file.string());
  }
  BenchmarkTable table = table_from_json(util::load_json_file(file));
  if (table.benchmark_id != to_string(id)) {
    throw TableShapeError("file " + file.string() + " declares benchmark_id '" +
                          table.benchmark_id + "'");
  }
  return table;
}

inline BenchmarkTable load_table(std::string_view id,
                                 const std::filesystem::path& data_dir = default_data_dir()) {
  return load_table(parse_benchmark_id(id), data_dir);
}

// ---- anonymization ------------------------------------------------------------------

inline constexpr const char* kBenchmarkStub =
    "A benchmark measuring the task success rates of automated agents. Further details about "
    "the benchmark are withheld.";

inline std::string letter_label(std::size_t index) {
  std::string label;
  do {
    label.insert(label.begin(), static_cast<char>('A' + index % 26));
    index = index / 26;
  } while (index-- > 0);
  return label;
}

/// Applies an information condition. Rates are never altered; only names,
/// descriptions, and the benchmark identity are hidden or kept. With
/// shuffle_labels the anonymous letter assignment is permuted by `seed`
/// (default off so runs stay comparable).
inline BenchmarkTable anonymize(const BenchmarkTable& table, InfoCondition condition,
                                std::uint64_t seed = 0, bool shuffle_labels = false) {
  BenchmarkTable out = table;
  const bool hide_agents =
      condition == InfoCondition::none || condition == InfoCondition::benchmark;
  const bool hide_benchmark =
      condition == InfoCondition::none || condition == InfoCondition::model;
  if (hide_agents) {
    std::vector<std::size_t> labels(out.agents.size());
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i;
    if (shuffle_labels) {
      util::Rng rng(util::key_hash(seed, {table.benchmark_id, "labels"}));
      rng.shuffle(labels);
    }
    for (std::size_t i = 0; i < out.agents.size(); ++i) {
      out.agents[i].name = "Model " + letter_label(labels[i]);
      out.agents[i].description.clear();
    }
  }
  if (hide_benchmark) {
    out.benchmark_id = "benchmark";
    out.benchmark_description = kBenchmarkStub;
  }
  return out;
}

// ---- leave-one-out instances -----------------------------------------------------------

struct LooInstance {
  Quantity quantity;
  std::vector<EvidenceItem> evidence;
  double ground_truth = 0.0;
  std::string label;  // original agent name [+ "/" + task type]
};

inline void check_holdout(const BenchmarkTable& table, HoldoutSpec holdout) {
  if (holdout.agent_index < 0 || holdout.agent_index >= static_cast<int>(table.agents.size())) {
    throw IndexOutOfRangeError("agent index " + std::to_string(holdout.agent_index) + " of " +
                               std::to_string(table.agents.size()));
  }
  if (holdout.task_index < 0 || holdout.task_index >= static_cast<int>(table.task_types.size())) {
    throw IndexOutOfRangeError("task index " + std::to_string(holdout.task_index) + " of " +
                               std::to_string(table.task_types.size()));
  }
}

/// Stable per-holdout label and quantity id, shared by experiment reports and
/// mock-oracle keying.
inline std::string holdout_label(const BenchmarkTable& table, HoldoutSpec holdout) {
  check_holdout(table, holdout);
  std::string label = table.agents[holdout.agent_index].name;
  if (table.task_types.size() > 1) label += "/" + table.task_types[holdout.task_index];
  return label;
}

inline std::string loo_quantity_id(const BenchmarkTable& table, HoldoutSpec holdout) {
  return table.benchmark_id + "/" + holdout_label(table, holdout);
}

/// Fixed tabular text layout for the results matrix. The layout is part of the
/// external prompt contract: "name | rate | rate ...", one agent per line,
/// rates rendered with one decimal, the held-out cell rendered as "?".
inline std::string render_results_matrix(const BenchmarkTable& table,
                                         std::optional<HoldoutSpec> masked,
                                         bool skip_masked_agent_row) {
  std::string text = "agent";
  for (const std::string& task : table.task_types) text += " | " + task;
  text += '\n';
  for (std::size_t i = 0; i < table.agents.size(); ++i) {
    const bool is_masked_agent =
        masked && static_cast<std::size_t>(masked->agent_index) == i;
    if (is_masked_agent && skip_masked_agent_row) continue;
    text += table.agents[i].name;
    for (std::size_t t = 0; t < table.agents[i].rates.size(); ++t) {
      const bool is_masked_cell =
          is_masked_agent && static_cast<std::size_t>(masked->task_index) == t;
      text += " | ";
      text += is_masked_cell ? "?" : util::fmt_fixed(table.agents[i].rates[t], 1);
    }
    text += '\n';
  }
  return text;
}

/// Builds one leave-one-out calibration instance: the quantity asks for the
/// held-out rate, the evidence shows the anonymized table with that one value
/// masked, and the ground truth never appears in the rendered evidence.
inline LooInstance make_loo_instance(const BenchmarkTable& table, HoldoutSpec holdout,
                                     InfoCondition condition) {
  check_holdout(table, holdout);
  const BenchmarkTable anon = anonymize(table, condition);
  const bool single = table.task_types.size() == 1;
  const BenchAgent& target = anon.agents[holdout.agent_index];
  const std::string& task = table.task_types[holdout.task_index];

  LooInstance inst;
  inst.label = holdout_label(table, holdout);
  inst.ground_truth = table.agents[holdout.agent_index].rates[holdout.task_index];
  inst.quantity.id = loo_quantity_id(table, holdout);
  inst.quantity.description =
      single ? "Estimate the overall success rate, in percent (0-100), of the agent \"" +
                   target.name + "\" on this benchmark."
             : "Estimate the success rate, in percent (0-100), of the agent \"" + target.name +
                   "\" on the \"" + task + "\" task type of this benchmark.";

  inst.evidence.push_back(
      {"Benchmark", anon.benchmark_description, {EvidenceTag::benchmark_info}});
  inst.evidence.push_back({"Observed results",
                           render_results_matrix(anon, holdout, /*skip_masked_agent_row=*/single),
                           {EvidenceTag::numeric_only}});

  std::string target_block = "Name: " + target.name + "\n";
  if (!target.description.empty()) target_block += "Description: " + target.description + "\n";
  target_block += single ? "This agent's overall success rate on the benchmark is withheld; "
                           "that is the quantity to estimate."
                         : "This agent's \"" + task +
                               "\" success rate is shown as \"?\" in the observed results; that "
                               "is the quantity to estimate.";
  inst.evidence.push_back({"Target agent", target_block, {EvidenceTag::agent_info}});
  return inst;
}

/// All holdouts of a table in row-major order (every cell for multi-task
/// tables, every agent otherwise).
inline std::vector<HoldoutSpec> enumerate_holdouts(const BenchmarkTable& table) {
  std::vector<HoldoutSpec> holdouts;
  for (int a = 0; a < static_cast<int>(table.agents.size()); ++a) {
    for (int t = 0; t < static_cast<int>(table.task_types.size()); ++t) {
      holdouts.push_back({a, t});
    }
  }
  return holdouts;
}

// ---- integrity checks ------------------------------------------------------------------

struct DataCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace detail {

inline double column_sum(const BenchmarkTable& table, std::size_t task_index) {
  long double sum = 0.0L;
  for (const BenchAgent& a : table.agents) sum += a.rates[task_index];
  return static_cast<double>(sum);
}

inline void check_sum(std::vector<DataCheck>& checks, const std::string& name, double actual,
                      double expected) {
  const bool ok = std::abs(actual - expected) < 1e-6;
  checks.push_back({name, ok,
                    ok ? util::fmt_pct(actual)
                       : "expected " + util::fmt_pct(expected) + ", got " +
                             util::fmt_pct(actual)});
}

inline void check_shape(std::vector<DataCheck>& checks, const BenchmarkTable& table,
                        std::size_t agents, const std::vector<std::string>& task_types) {
  const bool ok = table.agents.size() == agents && table.task_types == task_types;
  checks.push_back({table.benchmark_id + " shape", ok,
                    ok ? std::to_string(agents) + " agents x " +
                             std::to_string(task_types.size()) + " task types"
                       : "unexpected table shape: " + std::to_string(table.agents.size()) +
                             " agents x " + std::to_string(table.task_types.size()) +
                             " task types"});
}

}  // namespace detail

/// Guards the bundled tables against data-entry drift: shapes, ranges, and
/// fixed checksums of every column.
inline std::vector<DataCheck> validate_tables(
    const std::filesystem::path& data_dir = default_data_dir()) {
  std::vector<DataCheck> checks;
  const auto guarded_load = [&](BenchmarkId id) -> std::optional<BenchmarkTable> {
    try {
      BenchmarkTable table = load_table(id, data_dir);
      checks.push_back({to_string(id) + " loads", true, ""});
      return table;
    } catch (const Error& e) {
      checks.push_back({to_string(id) + " loads", false, e.what()});
      return std::nullopt;
    }
  };

  if (const auto bb = guarded_load(BenchmarkId::bountybench)) {
    detail::check_shape(checks, *bb, 10, {"detect", "exploit", "patch"});
    if (bb->task_types.size() == 3 && bb->agents.size() == 10) {
      detail::check_sum(checks, "bountybench detect column sum", detail::column_sum(*bb, 0), 32.5);
      detail::check_sum(checks, "bountybench exploit column sum", detail::column_sum(*bb, 1),
                        435.0);
      detail::check_sum(checks, "bountybench patch column sum", detail::column_sum(*bb, 2), 575.0);
    }
  }
  if (const auto cy = guarded_load(BenchmarkId::cybench)) {
    detail::check_shape(checks, *cy, 16, {"overall"});
    if (cy->task_types.size() == 1) {
      detail::check_sum(checks, "cybench rate sum", detail::column_sum(*cy, 0), 313.5);
    }
  }
  if (const auto cg = guarded_load(BenchmarkId::cybergym)) {
    detail::check_shape(checks, *cg, 12, {"overall"});
    if (cg->task_types.size() == 1) {
      detail::check_sum(checks, "cybergym rate sum", detail::column_sum(*cg, 0), 61.1);
    }
  }
  return checks;
}

}  // namespace delphi::benchdata
