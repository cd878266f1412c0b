#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "delphi/benchdata.hpp"
#include "delphi/core.hpp"
#include "delphi/errors.hpp"
#include "delphi/personas.hpp"
#include "delphi/protocol.hpp"
#include "delphi/providers.hpp"
#include "delphi/util.hpp"

namespace delphi::config {

// One declarative run configuration drives every command; flags may override
// individual fields but nothing is flag-only, so a config file fully captures
// a run's provenance. Relative paths are resolved against the config file's
// directory.

enum class ProviderKind { mock, live, replay };

struct MockSettings {
  bool gated = false;
  std::map<std::string, double> oracle;
  bool oracle_from_benchmark = false;  // "oracle": "benchmark_truth"
  std::map<std::string, double> bias;
  double noise_sd = 0.0;
  double anchor_weight = 0.0;
  std::optional<std::uint64_t> seed;  // defaults to the panel seed
  double fallback_center = 30.0;
  double fallback_sd = 15.0;
};

struct ProviderSection {
  ProviderKind kind = ProviderKind::mock;
  std::string endpoint;
  std::string model_name = "expert-model";
  double temperature = 0.7;
  int max_tokens = 2048;
  std::string api_key_env;
  int timeout_ms = 60000;
  int max_retries = 3;
  int backoff_base_ms = 500;
  std::filesystem::path cassette_path;  // live: record when set; replay: required
  MockSettings mock;
};

struct ExperimentSection {
  std::string id;
  std::string benchmark_id;
  std::string condition = "full";
  std::filesystem::path task_set;
  std::string ablation_personas = "uniform_superforecaster";
};

struct OutputSection {
  std::filesystem::path directory = "out";
  bool json = true;
  bool csv = true;
};

struct RunConfig {
  ProviderSection provider;
  PanelConfig panel;
  ExperimentSection experiment;
  OutputSection output;
  std::filesystem::path base_dir;  // directory of the config file
  std::filesystem::path data_dir;  // empty -> benchdata::default_data_dir()
  int parallelism = 4;
  std::string scenario;

  std::filesystem::path resolved_data_dir() const {
    return data_dir.empty() ? benchdata::default_data_dir() : data_dir;
  }

  protocol::EngineOptions engine_options() const {
    protocol::EngineOptions options;
    options.max_concurrency = parallelism;
    options.model_name = provider.model_name;
    options.temperature = provider.temperature;
    options.max_tokens = provider.max_tokens;
    return options;
  }
};

namespace detail {

inline std::filesystem::path resolve(const std::filesystem::path& base,
                                     const std::filesystem::path& path) {
  if (path.empty() || path.is_absolute()) return path;
  return base / path;
}

inline void require_exists(const std::filesystem::path& path, const std::string& what) {
  if (!std::filesystem::exists(path)) {
    throw ConfigError(what + " does not exist: " + path.string());
  }
}

inline std::map<std::string, double> number_map(const nlohmann::json& j, const std::string& key) {
  std::map<std::string, double> out;
  for (const auto& [name, value] : j.at(key).items()) {
    if (!value.is_number()) throw ConfigError(key + " entries must be numbers");
    out[name] = value.get<double>();
  }
  return out;
}

}  // namespace detail

inline std::vector<Persona> personas_from_json(const nlohmann::json& list) {
  std::vector<Persona> personas;
  for (const nlohmann::json& p : list) {
    personas.push_back({p.at("id").get<std::string>(), p.at("role").get<std::string>(),
                        p.value("background", std::string()),
                        p.value("analytical_approach", std::string())});
  }
  return personas;
}

inline PanelConfig panel_from_json(const nlohmann::json& j,
                                   const std::filesystem::path& base_dir) {
  PanelConfig panel;
  if (j.contains("personas_file")) {
    const std::filesystem::path path =
        detail::resolve(base_dir, j.at("personas_file").get<std::string>());
    detail::require_exists(path, "personas file");
    panel.personas = personas_from_json(util::load_json_file(path));
  } else {
    panel.personas = builtin_personas(j.value("personas", "diverse_security"));
  }
  panel.k = j.value("k", static_cast<int>(panel.personas.size()));
  panel.rounds = j.value("rounds", 1);
  const std::string aggregation = j.value("aggregation", "mean");
  if (aggregation == "mean") panel.aggregation = Aggregation::mean;
  else if (aggregation == "median") panel.aggregation = Aggregation::median;
  else throw ConfigError("aggregation must be 'mean' or 'median'");
  panel.ci_level = j.value("ci_level", 0.95);
  panel.seed = j.value("seed", std::uint64_t{0});
  const std::string mode = j.value("history_mode", "fresh_context");
  if (mode == "fresh_context") panel.history_mode = HistoryMode::fresh_context;
  else if (mode == "sequential") panel.history_mode = HistoryMode::sequential;
  else throw ConfigError("history_mode must be 'fresh_context' or 'sequential'");
  panel.validate();
  return panel;
}

inline RunConfig load_run_config(const std::filesystem::path& config_path) {
  detail::require_exists(config_path, "config file");
  const nlohmann::json j = util::load_json_file(config_path);
  const std::filesystem::path base_dir = config_path.parent_path();
  RunConfig cfg;
  cfg.base_dir = base_dir;

  const nlohmann::json provider = j.value("provider", nlohmann::json::object());
  const std::string kind = provider.value("kind", "mock");
  if (kind == "mock") cfg.provider.kind = ProviderKind::mock;
  else if (kind == "live") cfg.provider.kind = ProviderKind::live;
  else if (kind == "replay") cfg.provider.kind = ProviderKind::replay;
  else throw ConfigError("provider kind must be one of mock|live|replay, got '" + kind + "'");
  cfg.provider.endpoint = provider.value("endpoint", std::string());
  cfg.provider.model_name = provider.value("model_name", std::string("expert-model"));
  cfg.provider.temperature = provider.value("temperature", 0.7);
  cfg.provider.max_tokens = provider.value("max_tokens", 2048);
  cfg.provider.api_key_env = provider.value("api_key_env", std::string());
  cfg.provider.timeout_ms = provider.value("timeout_ms", 60000);
  cfg.provider.max_retries = provider.value("max_retries", 3);
  cfg.provider.backoff_base_ms = provider.value("backoff_base_ms", 500);
  if (provider.contains("cassette_path")) {
    cfg.provider.cassette_path =
        detail::resolve(base_dir, provider.at("cassette_path").get<std::string>());
  }
  if (cfg.provider.kind == ProviderKind::live && cfg.provider.endpoint.empty()) {
    throw ConfigError("live provider requires an endpoint");
  }
  if (cfg.provider.kind == ProviderKind::replay) {
    if (cfg.provider.cassette_path.empty()) {
      throw ConfigError("replay provider requires cassette_path");
    }
    detail::require_exists(cfg.provider.cassette_path, "replay cassette");
  }

  if (provider.contains("mock")) {
    const nlohmann::json& mock = provider.at("mock");
    cfg.provider.mock.gated = mock.value("gated", false);
    if (mock.contains("oracle")) {
      if (mock.at("oracle").is_string()) {
        if (mock.at("oracle").get<std::string>() != "benchmark_truth") {
          throw ConfigError("mock oracle must be a map or the string 'benchmark_truth'");
        }
        cfg.provider.mock.oracle_from_benchmark = true;
      } else {
        cfg.provider.mock.oracle = detail::number_map(mock, "oracle");
      }
    }
    if (mock.contains("bias")) cfg.provider.mock.bias = detail::number_map(mock, "bias");
    cfg.provider.mock.noise_sd = mock.value("noise_sd", 0.0);
    cfg.provider.mock.anchor_weight = mock.value("anchor_weight", 0.0);
    if (mock.contains("seed")) cfg.provider.mock.seed = mock.at("seed").get<std::uint64_t>();
    cfg.provider.mock.fallback_center = mock.value("fallback_center", 30.0);
    cfg.provider.mock.fallback_sd = mock.value("fallback_sd", 15.0);
  }

  cfg.panel = panel_from_json(j.value("panel", nlohmann::json::object()), base_dir);

  if (j.contains("experiment")) {
    const nlohmann::json& experiment = j.at("experiment");
    cfg.experiment.id = experiment.value("id", std::string());
    cfg.experiment.benchmark_id = experiment.value("benchmark_id", std::string());
    cfg.experiment.condition = experiment.value("condition", "full");
    if (experiment.contains("task_set")) {
      cfg.experiment.task_set =
          detail::resolve(base_dir, experiment.at("task_set").get<std::string>());
      detail::require_exists(cfg.experiment.task_set, "task set file");
    }
    cfg.experiment.ablation_personas =
        experiment.value("ablation_personas", "uniform_superforecaster");
  }

  if (j.contains("output")) {
    const nlohmann::json& output = j.at("output");
    cfg.output.directory = detail::resolve(base_dir, output.value("directory", "out"));
    if (output.contains("formats")) {
      cfg.output.json = false;
      cfg.output.csv = false;
      for (const nlohmann::json& f : output.at("formats")) {
        const std::string format = f.get<std::string>();
        if (format == "json") cfg.output.json = true;
        else if (format == "csv") cfg.output.csv = true;
        else throw ConfigError("unknown output format '" + format + "'");
      }
    }
  } else {
    cfg.output.directory = detail::resolve(base_dir, "out");
  }

  if (j.contains("data_dir")) {
    cfg.data_dir = detail::resolve(base_dir, j.at("data_dir").get<std::string>());
    detail::require_exists(cfg.data_dir, "data directory");
  }
  cfg.parallelism = j.value("parallelism", 4);
  cfg.scenario = j.value("scenario", std::string());
  return cfg;
}

/// Builds the provider described by the config. `truth_oracle` supplies the
/// quantity->value map when the mock oracle is declared as "benchmark_truth".
inline std::unique_ptr<providers::Provider> make_provider(
    const RunConfig& cfg, const std::map<std::string, double>& truth_oracle = {}) {
  const ProviderSection& p = cfg.provider;
  switch (p.kind) {
    case ProviderKind::mock: {
      const std::uint64_t seed = p.mock.seed.value_or(cfg.panel.seed);
      if (p.mock.gated) {
        providers::InfoGatedMockProvider::Settings settings;
        settings.fallback_center = p.mock.fallback_center;
        settings.fallback_sd = p.mock.fallback_sd;
        settings.seed = seed;
        return std::make_unique<providers::InfoGatedMockProvider>(settings);
      }
      providers::MockExpertModel model;
      model.oracle = p.mock.oracle_from_benchmark ? truth_oracle : p.mock.oracle;
      model.bias = p.mock.bias;
      model.noise_sd = p.mock.noise_sd;
      model.anchor_weight = p.mock.anchor_weight;
      model.seed = seed;
      return std::make_unique<providers::MockProvider>(std::move(model));
    }
    case ProviderKind::live: {
      providers::ProviderConfig live;
      live.endpoint = p.endpoint;
      live.api_key_env = p.api_key_env;
      live.timeout_ms = p.timeout_ms;
      live.max_retries = p.max_retries;
      live.backoff_base_ms = p.backoff_base_ms;
      auto http = std::make_shared<providers::HttpProvider>(live);
      if (!p.cassette_path.empty()) {
        return std::make_unique<providers::RecordReplayProvider>(
            http, p.cassette_path, providers::CassetteMode::record);
      }
      return std::make_unique<providers::HttpProvider>(live);
    }
    case ProviderKind::replay:
      // No inner provider at all: replay cannot touch the network.
      return std::make_unique<providers::RecordReplayProvider>(
          nullptr, p.cassette_path, providers::CassetteMode::replay);
  }
  throw ConfigError("invalid provider kind");
}

}  // namespace delphi::config
