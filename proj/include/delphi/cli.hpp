#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "delphi/benchdata.hpp"
#include "delphi/config.hpp"
#include "delphi/core.hpp"
#include "delphi/errors.hpp"
#include "delphi/experiments.hpp"
#include "delphi/metrics.hpp"
#include "delphi/protocol.hpp"
#include "delphi/util.hpp"

namespace delphi::cli {

// Exit codes (stable, documented in the README):
//   0 success, 2 configuration error, 3 provider failure, 4 protocol or
//   experiment failure, 5 data validation failure. Unexpected non-library
//   exceptions map to 1 in the binary's main().

inline int classify_error(const Error& e) {
  if (const auto* sweep = dynamic_cast<const ExperimentError*>(&e)) {
    return sweep->provider_side() ? 3 : 4;
  }
  if (dynamic_cast<const ConfigError*>(&e) != nullptr ||
      dynamic_cast<const UnknownBenchmarkError*>(&e) != nullptr ||
      dynamic_cast<const ConfigMismatchError*>(&e) != nullptr) {
    return 2;
  }
  if (dynamic_cast<const TransportError*>(&e) != nullptr ||
      dynamic_cast<const TimeoutError*>(&e) != nullptr ||
      dynamic_cast<const AuthMissingError*>(&e) != nullptr ||
      dynamic_cast<const CassetteMissError*>(&e) != nullptr ||
      dynamic_cast<const UnknownQuantityError*>(&e) != nullptr) {
    return 3;
  }
  return 4;
}

/// Flag overrides; anything set here wins over the config file.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> output_dir;
  std::optional<std::filesystem::path> data_dir;
};

namespace detail {

inline void apply_overrides(config::RunConfig& cfg, const Overrides& overrides) {
  if (overrides.seed) cfg.panel.seed = *overrides.seed;
  if (overrides.output_dir) cfg.output.directory = *overrides.output_dir;
  if (overrides.data_dir) cfg.data_dir = *overrides.data_dir;
}

/// Result files carry a deterministic payload plus a separate metadata block
/// for timestamps and timing, so payloads diff cleanly across runs.
inline nlohmann::json wrap_payload(nlohmann::json payload, const std::string& command,
                                   std::int64_t started_ms) {
  return {{"payload", std::move(payload)},
          {"metadata",
           {{"command", command},
            {"created_at", util::iso8601_utc(started_ms)},
            {"elapsed_ms", util::now_ms() - started_ms}}}};
}

inline Quantity quantity_from_json(const nlohmann::json& j) {
  Quantity q;
  q.id = j.at("id").get<std::string>();
  q.description = j.at("description").get<std::string>();
  q.baseline_note = j.value("baseline_note", std::string());
  if (q.id.empty() || q.description.empty()) {
    throw ConfigError("quantity needs non-empty id and description");
  }
  const std::string scale = j.value("scale", "percent_0_100");
  if (scale != "percent_0_100") throw ConfigError("unsupported scale '" + scale + "'");
  return q;
}

inline EvidenceTag parse_tag(const std::string& tag) {
  if (tag == "benchmark_info") return EvidenceTag::benchmark_info;
  if (tag == "agent_info") return EvidenceTag::agent_info;
  if (tag == "numeric_only") return EvidenceTag::numeric_only;
  throw ConfigError("unknown evidence tag '" + tag + "'");
}

inline std::vector<EvidenceItem> evidence_from_json(const nlohmann::json& list) {
  std::vector<EvidenceItem> evidence;
  for (const nlohmann::json& e : list) {
    EvidenceItem item;
    item.label = e.at("label").get<std::string>();
    item.content = e.at("content").get<std::string>();
    if (item.content.empty()) throw ConfigError("evidence content must be non-empty");
    if (e.contains("tags")) {
      for (const nlohmann::json& tag : e.at("tags")) {
        item.tags.insert(parse_tag(tag.get<std::string>()));
      }
    }
    evidence.push_back(std::move(item));
  }
  return evidence;
}

/// Resolves experiment.benchmark_id: either a bundled benchmark name or a
/// path to a user-supplied table JSON (relative to the config file).
inline benchdata::BenchmarkTable load_experiment_table(const config::RunConfig& cfg) {
  const std::string& id = cfg.experiment.benchmark_id;
  if (id.empty()) throw ConfigError("experiment needs experiment.benchmark_id");
  const std::filesystem::path as_path = config::detail::resolve(cfg.base_dir, id);
  if (as_path.extension() == ".json") {
    config::detail::require_exists(as_path, "benchmark table file");
    return benchdata::table_from_json(util::load_json_file(as_path));
  }
  return benchdata::load_table(id, cfg.resolved_data_dir());
}

inline std::map<std::string, double> truth_oracle_for(const benchdata::BenchmarkTable& table) {
  std::map<std::string, double> oracle;
  for (const benchdata::HoldoutSpec& holdout : benchdata::enumerate_holdouts(table)) {
    oracle[benchdata::loo_quantity_id(table, holdout)] =
        table.agents[holdout.agent_index].rates[holdout.task_index];
  }
  return oracle;
}

inline void write_transcript(const config::RunConfig& cfg,
                             std::span<const TranscriptEntry> entries) {
  if (entries.empty()) return;
  util::write_text_file(cfg.output.directory / "transcript.jsonl",
                        protocol::transcript_to_jsonl(entries));
}

inline void write_report_files(const config::RunConfig& cfg,
                               const experiments::ExperimentReport& report,
                               const nlohmann::json& payload, const std::string& command,
                               std::int64_t started_ms) {
  if (cfg.output.json) {
    util::save_json_file(cfg.output.directory / "report.json",
                         wrap_payload(payload, command, started_ms));
  }
  if (cfg.output.csv) {
    util::write_text_file(cfg.output.directory / "report.csv",
                          experiments::report_csv(report));
  }
  write_transcript(cfg, report.transcript);
}

inline std::string metric_kv(const std::string& key, double value) {
  return key + "=" + util::fmt_fixed(value, 2);
}

// ---- experiment runners -------------------------------------------------------------

inline int run_baselines(const config::RunConfig& cfg, std::ostream& out,
                         std::int64_t started_ms) {
  const benchdata::BenchmarkTable table = load_experiment_table(cfg);

  std::vector<metrics::BaselineKind> kinds;
  if (table.task_types.size() == 1) {
    kinds = {metrics::BaselineKind::global_mean};
  } else {
    kinds = {metrics::BaselineKind::task_mean, metrics::BaselineKind::agent_mean};
  }

  experiments::ExperimentReport report;
  report.experiment_id = "baselines";
  report.provider_identity = "none";
  report.config_snapshot = {{"benchmark_id", table.benchmark_id}};
  nlohmann::json sweeps = nlohmann::json::array();
  for (metrics::BaselineKind kind : kinds) {
    // Leave-one-out is the primary interpretation; the inclusive variant is
    // reported alongside it for multi-task tables (for a single-task table the
    // inclusive prediction is constant and has no defined correlation).
    std::vector<bool> variants = table.task_types.size() == 1
                                     ? std::vector<bool>{true}
                                     : std::vector<bool>{true, false};
    for (bool leave_one_out : variants) {
      const metrics::SweepResult sweep = metrics::sweep_baseline(table, kind, leave_one_out);
      const std::string name =
          metrics::to_string(kind) + (leave_one_out ? "" : "_inclusive");
      sweeps.push_back({{"baseline", name},
                        {"r", sweep.r},
                        {"rho", sweep.rho},
                        {"mae", sweep.mae}});
      for (std::size_t i = 0; i < sweep.series.predicted.size(); ++i) {
        report.records.push_back({sweep.series.labels[i], name, sweep.series.predicted[i],
                                  sweep.series.actual[i],
                                  Interval{sweep.series.predicted[i], sweep.series.predicted[i]}});
      }
      if (leave_one_out) {
        out << name << ": " << metric_kv("r", sweep.r);
        if (table.task_types.size() > 1) out << " " << metric_kv("rho", sweep.rho);
        out << " " << metric_kv("mae", sweep.mae) << "\n";
      } else {
        out << name << ": " << metric_kv("r", sweep.r) << " " << metric_kv("rho", sweep.rho)
            << " " << metric_kv("mae", sweep.mae) << "\n";
      }
    }
  }
  nlohmann::json payload = experiments::report_payload_json(report);
  payload["extra"] = {{"sweeps", sweeps}};
  write_report_files(cfg, report, payload, "experiment:baselines", started_ms);
  return 0;
}

inline int run_calibration_cmd(const config::RunConfig& cfg, std::ostream& out,
                               std::int64_t started_ms) {
  const benchdata::BenchmarkTable table = load_experiment_table(cfg);
  const benchdata::InfoCondition condition =
      benchdata::parse_condition(cfg.experiment.condition);
  auto provider = config::make_provider(cfg, detail::truth_oracle_for(table));
  const experiments::ExperimentReport report = experiments::run_calibration(
      table, condition, cfg.panel, *provider, cfg.engine_options());
  write_report_files(cfg, report, experiments::report_payload_json(report),
                     "experiment:calibration", started_ms);
  out << metric_kv("r", *report.summary.r) << " " << metric_kv("rho", *report.summary.rho)
      << " " << metric_kv("mae", *report.summary.mae) << "\n";
  return 0;
}

inline int run_sensitivity_cmd(const config::RunConfig& cfg, std::ostream& out,
                               std::int64_t started_ms) {
  const benchdata::BenchmarkTable table = load_experiment_table(cfg);
  auto provider = config::make_provider(cfg, detail::truth_oracle_for(table));
  const auto reports =
      experiments::run_sensitivity(table, cfg.panel, *provider, cfg.engine_options());

  experiments::ExperimentReport combined;
  combined.experiment_id = "sensitivity";
  combined.provider_identity = provider->identity();
  combined.seed = cfg.panel.seed;
  nlohmann::json payload_reports = nlohmann::json::array();
  nlohmann::json r_by_condition = nlohmann::json::object();
  std::string line;
  for (const auto& [condition, report] : reports) {
    payload_reports.push_back(experiments::report_payload_json(report));
    r_by_condition[benchdata::to_string(condition)] = *report.summary.r;
    for (const experiments::InstanceRecord& rec : report.records) {
      combined.records.push_back(rec);
    }
    for (const TranscriptEntry& e : report.transcript) combined.transcript.push_back(e);
    if (!line.empty()) line += " ";
    line += metric_kv("r_" + benchdata::to_string(condition), *report.summary.r);
  }
  nlohmann::json payload = {{"experiment_id", "sensitivity"},
                            {"r_by_condition", r_by_condition},
                            {"reports", payload_reports}};
  write_report_files(cfg, combined, payload, "experiment:sensitivity", started_ms);
  out << line << "\n";
  return 0;
}

inline int run_alignment_cmd(const config::RunConfig& cfg, std::ostream& out,
                             std::int64_t started_ms) {
  if (cfg.experiment.task_set.empty()) {
    throw ConfigError("alignment experiment needs experiment.task_set");
  }
  const experiments::AlignmentTaskSet set = experiments::load_task_set(cfg.experiment.task_set);
  auto provider = config::make_provider(cfg);
  const experiments::ExperimentReport report =
      experiments::run_alignment(set, cfg.panel, *provider, cfg.engine_options());
  write_report_files(cfg, report, experiments::report_payload_json(report),
                     "experiment:alignment", started_ms);
  out << "tasks=" << set.tasks.size();
  for (const auto& [name, value] : report.extra.at("mad").items()) {
    out << " " << metric_kv("mad_" + name, value.get<double>());
  }
  out << "\n";
  return 0;
}

inline int run_ablation_cmd(const config::RunConfig& cfg, std::ostream& out,
                            std::int64_t started_ms) {
  if (cfg.experiment.task_set.empty()) {
    throw ConfigError("persona_ablation experiment needs experiment.task_set");
  }
  const experiments::AlignmentTaskSet set = experiments::load_task_set(cfg.experiment.task_set);
  auto provider = config::make_provider(cfg);
  PanelConfig panel_b = cfg.panel;
  panel_b.personas = builtin_personas(cfg.experiment.ablation_personas);
  panel_b.k = static_cast<int>(panel_b.personas.size());
  const experiments::AblationResult result = experiments::run_persona_ablation(
      set, cfg.panel, panel_b, *provider, cfg.engine_options());

  experiments::ExperimentReport combined;
  combined.experiment_id = "persona_ablation";
  combined.provider_identity = provider->identity();
  combined.seed = cfg.panel.seed;
  for (experiments::InstanceRecord rec : result.report_a.records) {
    rec.condition = "panel_a:" + rec.condition;
    combined.records.push_back(std::move(rec));
  }
  for (experiments::InstanceRecord rec : result.report_b.records) {
    rec.condition = "panel_b:" + rec.condition;
    combined.records.push_back(std::move(rec));
  }
  for (const TranscriptEntry& e : result.report_a.transcript) {
    combined.transcript.push_back(e);
  }
  for (const TranscriptEntry& e : result.report_b.transcript) {
    combined.transcript.push_back(e);
  }
  nlohmann::json payload = {{"experiment_id", "persona_ablation"},
                            {"mad_between", result.mad_between},
                            {"panel_a", experiments::report_payload_json(result.report_a)},
                            {"panel_b", experiments::report_payload_json(result.report_b)}};
  write_report_files(cfg, combined, payload, "experiment:persona_ablation", started_ms);
  out << metric_kv("mad_between", result.mad_between) << "\n";
  return 0;
}

}  // namespace detail

/// Runs one elicitation described by a config, quantity file, and optional
/// evidence file; writes the panel result and transcript into the output
/// directory and prints "estimate=... ci=[...]".
inline int cmd_elicit(const std::filesystem::path& config_path,
                      const std::filesystem::path& quantity_file,
                      const std::optional<std::filesystem::path>& evidence_file,
                      std::ostream& out, std::ostream& err, const Overrides& overrides = {}) {
  const std::int64_t started_ms = util::now_ms();
  try {
    config::RunConfig cfg = config::load_run_config(config_path);
    detail::apply_overrides(cfg, overrides);
    config::detail::require_exists(quantity_file, "quantity file");
    const Quantity quantity =
        detail::quantity_from_json(util::load_json_file(quantity_file));
    std::vector<EvidenceItem> evidence;
    if (evidence_file) {
      config::detail::require_exists(*evidence_file, "evidence file");
      evidence = detail::evidence_from_json(util::load_json_file(*evidence_file));
    }

    auto provider = config::make_provider(cfg);
    protocol::Engine engine(*provider, cfg.engine_options());
    protocol::ElicitationSession session;
    session.config = cfg.panel;
    session.quantity = quantity;
    session.evidence = evidence;
    session.scenario = cfg.scenario;
    const PanelResult result = engine.run_elicitation(session);

    if (cfg.output.json) {
      util::save_json_file(
          cfg.output.directory / "panel_result.json",
          detail::wrap_payload(protocol::result_to_json(result), "elicit", started_ms));
    }
    detail::write_transcript(cfg, result.transcript);
    out << "estimate=" << util::fmt_pct(result.final_estimate) << " ci=["
        << util::fmt_pct(result.ci.lo) << "," << util::fmt_pct(result.ci.hi) << "]\n";
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return classify_error(e);
  }
}

/// Dispatches the experiment named in the config: calibration, sensitivity,
/// alignment, persona_ablation, or baselines.
inline int cmd_experiment(const std::filesystem::path& config_path, std::ostream& out,
                          std::ostream& err, const Overrides& overrides = {}) {
  const std::int64_t started_ms = util::now_ms();
  try {
    config::RunConfig cfg = config::load_run_config(config_path);
    detail::apply_overrides(cfg, overrides);
    const std::string& id = cfg.experiment.id;
    if (id == "baselines") return detail::run_baselines(cfg, out, started_ms);
    if (id == "calibration") return detail::run_calibration_cmd(cfg, out, started_ms);
    if (id == "sensitivity") return detail::run_sensitivity_cmd(cfg, out, started_ms);
    if (id == "alignment") return detail::run_alignment_cmd(cfg, out, started_ms);
    if (id == "persona_ablation") return detail::run_ablation_cmd(cfg, out, started_ms);
    throw ConfigError("unknown experiment id '" + id + "'");
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return classify_error(e);
  }
}

/// Checks the bundled benchmark tables (shapes, ranges, checksums); prints one
/// line per check and exits 5 if any fail.
inline int cmd_validate_data(const std::optional<std::filesystem::path>& data_dir,
                             std::ostream& out, std::ostream& err) {
  try {
    const std::vector<benchdata::DataCheck> checks =
        benchdata::validate_tables(data_dir.value_or(benchdata::default_data_dir()));
    bool all_passed = true;
    for (const benchdata::DataCheck& check : checks) {
      if (check.passed) {
        out << "ok " << check.name << (check.detail.empty() ? "" : ": " + check.detail) << "\n";
      } else {
        all_passed = false;
        out << "FAIL " << check.name << ": " << check.detail << "\n";
      }
    }
    return all_passed ? 0 : 5;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return classify_error(e);
  }
}

}  // namespace delphi::cli
