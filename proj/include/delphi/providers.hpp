#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "delphi/core.hpp"
#include "delphi/errors.hpp"
#include "delphi/prompts.hpp"
#include "delphi/util.hpp"

namespace delphi::providers {

// ---- chat interface -----------------------------------------------------------

struct ChatMessage {
  std::string role;  // "system" | "user" | "assistant"
  std::string content;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  std::string model_name;
  double temperature = 0.7;
  int max_tokens = 2048;

  void validate() const {
    if (messages.empty()) throw Error("chat request has no messages");
    for (std::size_t i = 1; i < messages.size(); ++i) {
      if (messages[i].role == "system") {
        throw Error("system message must come first in a chat request");
      }
    }
    if (temperature < 0.0) throw Error("temperature must be >= 0");
  }
};

struct ChatResponse {
  std::string content;
  std::map<std::string, std::string> provider_meta;
};

/// Engine-supplied call metadata. Live providers ignore it; mocks use it to
/// key their deterministic behaviour.
struct CallContext {
  std::string role;  // "expert" | "mediator"
  std::string persona_id;
  std::string quantity_id;
  int round = 1;
  std::optional<double> feedback_mean;
};

class Provider {
 public:
  virtual ~Provider() = default;
  virtual ChatResponse complete(const ChatRequest& request, const CallContext& context) = 0;
  virtual std::string identity() const = 0;
};

// ---- canonical request fingerprint ---------------------------------------------
//
// Cassette keys hash only the semantic request content (messages, model,
// sampling settings); volatile headers and timing never enter the hash, so
// cassettes stay stable across runs.

inline nlohmann::json canonical_request_json(const ChatRequest& request) {
  nlohmann::json messages = nlohmann::json::array();
  for (const ChatMessage& m : request.messages) {
    messages.push_back({{"role", m.role}, {"content", m.content}});
  }
  return {{"messages", messages},
          {"model", request.model_name},
          {"temperature", request.temperature},
          {"max_tokens", request.max_tokens}};
}

inline std::string request_fingerprint(const ChatRequest& request) {
  const std::uint64_t h = util::fnv1a64(canonical_request_json(request).dump());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---- live HTTP provider ---------------------------------------------------------

struct ProviderConfig {
  std::string endpoint;  // e.g. "https://api.openai.com/v1"
  std::string api_key_env;
  int timeout_ms = 60000;
  int max_retries = 3;
  int backoff_base_ms = 500;
  int backoff_max_ms = 10000;
};

/// Chat-completions client over an OpenAI-style HTTP endpoint. Transient
/// failures (HTTP 429/5xx, timeouts, connection errors) are retried with
/// exponential backoff and jitter up to max_retries.
class HttpProvider : public Provider {
 public:
  explicit HttpProvider(ProviderConfig config)
      : config_(std::move(config)), jitter_state_(util::fnv1a64(config_.endpoint)) {
    if (config_.endpoint.empty()) throw ConfigError("live provider needs an endpoint");
    const std::size_t scheme = config_.endpoint.find("://");
    const std::size_t path_start =
        config_.endpoint.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    if (path_start == std::string::npos) {
      base_url_ = config_.endpoint;
    } else {
      base_url_ = config_.endpoint.substr(0, path_start);
      path_prefix_ = config_.endpoint.substr(path_start);
      while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
    }
  }

  ChatResponse complete(const ChatRequest& request, const CallContext&) override {
    request.validate();
    std::string api_key;
    if (!config_.api_key_env.empty()) {
      const char* value = std::getenv(config_.api_key_env.c_str());
      if (value == nullptr || *value == '\0') throw AuthMissingError(config_.api_key_env);
      api_key = value;
    }

    const std::string payload = canonical_request_json(request).dump();

    const auto started = std::chrono::steady_clock::now();
    int attempt = 0;
    bool last_was_timeout = false;
    int last_status = -1;
    std::string last_detail;
    while (true) {
      httplib::Client client(base_url_);
      client.set_connection_timeout(std::chrono::milliseconds(config_.timeout_ms));
      client.set_read_timeout(std::chrono::milliseconds(config_.timeout_ms));
      client.set_write_timeout(std::chrono::milliseconds(config_.timeout_ms));
      httplib::Headers headers;
      if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);

      const httplib::Result result =
          client.Post(path_prefix_ + "/chat/completions", headers, payload, "application/json");

      if (result) {
        last_status = result->status;
        if (result->status == 200) {
          return make_response(result->body, attempt, started);
        }
        last_detail = "HTTP " + std::to_string(result->status);
        last_was_timeout = false;
        if (!retryable_status(result->status)) {
          throw TransportError(result->status, last_detail + " from " + base_url_);
        }
      } else {
        const httplib::Error err = result.error();
        last_detail = httplib::to_string(err);
        last_was_timeout = err == httplib::Error::ConnectionTimeout ||
                           err == httplib::Error::Read || err == httplib::Error::Write;
        last_status = -1;
      }

      if (attempt >= config_.max_retries) break;
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff_delay_ms(attempt)));
      ++attempt;
    }
    if (last_was_timeout) throw TimeoutError(last_detail + " after " + retries_label(attempt));
    throw TransportError(last_status, last_detail + " after " + retries_label(attempt));
  }

  std::string identity() const override { return "live(" + config_.endpoint + ")"; }

 private:
  static bool retryable_status(int status) { return status == 429 || status >= 500; }

  static std::string retries_label(int attempts) {
    return std::to_string(attempts) + (attempts == 1 ? " retry" : " retries");
  }

  int backoff_delay_ms(int attempt) {
    const long long base = static_cast<long long>(config_.backoff_base_ms) << std::min(attempt, 16);
    std::uint64_t state = jitter_state_.fetch_add(0x9e3779b97f4a7c15ull);
    const long long jitter =
        static_cast<long long>(util::splitmix64(state) % (config_.backoff_base_ms / 2 + 1));
    return static_cast<int>(std::min<long long>(base + jitter, config_.backoff_max_ms));
  }

  ChatResponse make_response(const std::string& body, int retries,
                             std::chrono::steady_clock::time_point started) const {
    nlohmann::json parsed = nlohmann::json::parse(body, nullptr, false);
    if (parsed.is_discarded()) throw TransportError(200, "response body is not valid JSON");
    std::string content;
    try {
      content = parsed.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& ex) {
      throw TransportError(200, std::string("unexpected response shape: ") + ex.what());
    }
    if (content.empty()) throw TransportError(200, "empty completion content");
    ChatResponse response;
    response.content = std::move(content);
    const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - started);
    response.provider_meta["latency_ms"] = std::to_string(elapsed.count());
    response.provider_meta["retries"] = std::to_string(retries);
    if (parsed.contains("usage") && parsed["usage"].is_object()) {
      for (const auto& [key, value] : parsed["usage"].items()) {
        if (value.is_number_integer()) {
          response.provider_meta["usage." + key] = std::to_string(value.get<long long>());
        }
      }
    }
    return response;
  }

  ProviderConfig config_;
  std::string base_url_;
  std::string path_prefix_;
  std::atomic<std::uint64_t> jitter_state_;
};

// ---- deterministic mock expert ---------------------------------------------------

/// Desk-scale stand-in for a panel of experts. Each expert draws
///   value = clamp( (1-w) * (oracle + bias + eps) + w * feedback_mean )
/// where w = anchor_weight for rounds >= 2 (0 in round 1) and eps is seeded
/// Normal(0, noise_sd) keyed on (seed, persona, quantity, round).
struct MockExpertModel {
  std::map<std::string, double> oracle;  // quantity id -> percent
  std::map<std::string, double> bias;    // persona id -> percent offset
  double noise_sd = 0.0;
  double anchor_weight = 0.0;  // fraction of weight given to feedback mean
  std::uint64_t seed = 0;

  void validate() const {
    if (noise_sd < 0.0) throw ConfigError("mock noise_sd must be >= 0");
    if (anchor_weight < 0.0 || anchor_weight > 1.0) {
      throw ConfigError("mock anchor_weight must be in [0, 1]");
    }
  }
};

inline std::string mock_mediator_content() {
  prompts::MediatorDoc doc;
  doc.arguments_higher = {"Higher estimates weighted the strongest capability signals in the "
                          "evidence more heavily."};
  doc.arguments_lower = {"Lower estimates stressed execution risk and gaps in the observed "
                         "results."};
  doc.agreement_notes = "Estimates cluster around the panel median with moderate spread.";
  return prompts::render_mediator_response(doc);
}

inline ChatResponse mock_complete(const ChatRequest& request, const MockExpertModel& model,
                                  const std::string& persona_id, const std::string& quantity_id,
                                  int round, std::optional<double> feedback_mean) {
  request.validate();
  model.validate();
  const auto found = model.oracle.find(quantity_id);
  if (found == model.oracle.end()) throw UnknownQuantityError(quantity_id);

  double base = found->second;
  if (const auto bias = model.bias.find(persona_id); bias != model.bias.end()) {
    base += bias->second;
  }
  const std::uint64_t key = util::key_hash(
      model.seed, {persona_id, quantity_id, std::to_string(round)});
  util::Rng rng(key);
  const double eps = rng.normal(0.0, model.noise_sd);
  const double w = (round >= 2 && feedback_mean.has_value()) ? model.anchor_weight : 0.0;
  const double value =
      util::clamp_pct((1.0 - w) * (base + eps) + w * feedback_mean.value_or(0.0));

  char ref[17];
  std::snprintf(ref, sizeof(ref), "%016llx", static_cast<unsigned long long>(key));
  prompts::ResponseDoc doc;
  doc.point_estimate = value;
  doc.rationale = "Round " + std::to_string(round) + " assessment: roughly " +
                  util::fmt_pct(value) + " percent given the available evidence (ref " +
                  std::string(ref) + ").";
  ChatResponse response;
  response.content = prompts::render_response(doc);
  response.provider_meta["mock"] = "expert";
  return response;
}

class MockProvider : public Provider {
 public:
  explicit MockProvider(MockExpertModel model) : model_(std::move(model)) { model_.validate(); }

  ChatResponse complete(const ChatRequest& request, const CallContext& context) override {
    if (context.role == "mediator") {
      request.validate();
      ChatResponse response;
      response.content = mock_mediator_content();
      response.provider_meta["mock"] = "mediator";
      return response;
    }
    return mock_complete(request, model_, context.persona_id, context.quantity_id, context.round,
                         context.feedback_mean);
  }

  std::string identity() const override {
    return "mock(noise_sd=" + util::fmt_pct(model_.noise_sd) +
           ",anchor=" + util::fmt_pct(model_.anchor_weight) + ")";
  }

  const MockExpertModel& model() const { return model_; }

 private:
  MockExpertModel model_;
};

/// Mock whose knowledge is gated on the evidence actually shown to it: it can
/// answer accurately only when the target agent's description (carrying a
/// "capability index <value>" tag) is visible in the prompt; otherwise it
/// falls back to seeded noise around an uninformed prior.
class InfoGatedMockProvider : public Provider {
 public:
  struct Settings {
    double fallback_center = 30.0;
    double fallback_sd = 15.0;
    std::uint64_t seed = 0;
  };

  explicit InfoGatedMockProvider(Settings settings) : settings_(settings) {}

  ChatResponse complete(const ChatRequest& request, const CallContext& context) override {
    request.validate();
    if (context.role == "mediator") {
      ChatResponse response;
      response.content = mock_mediator_content();
      response.provider_meta["mock"] = "mediator";
      return response;
    }
    const std::string prompt = last_user_content(request);
    double value;
    std::string basis;
    if (const auto tag = target_capability_tag(prompt)) {
      value = util::clamp_pct(*tag);
      basis = "target description";
    } else {
      const std::uint64_t key = util::key_hash(
          settings_.seed, {context.persona_id, context.quantity_id, "fallback"});
      util::Rng rng(key);
      value = util::clamp_pct(rng.normal(settings_.fallback_center, settings_.fallback_sd));
      basis = "uninformed prior";
    }
    prompts::ResponseDoc doc;
    doc.point_estimate = value;
    doc.rationale = "Estimate derived from " + basis + ".";
    ChatResponse response;
    response.content = prompts::render_response(doc);
    response.provider_meta["mock"] = "gated-expert";
    return response;
  }

  std::string identity() const override { return "mock-gated"; }

 private:
  static std::string last_user_content(const ChatRequest& request) {
    for (auto it = request.messages.rbegin(); it != request.messages.rend(); ++it) {
      if (it->role == "user") return it->content;
    }
    return {};
  }

  static std::optional<double> target_capability_tag(const std::string& prompt) {
    const std::size_t section = prompt.find("### Target agent");
    if (section == std::string::npos) return std::nullopt;
    std::size_t end = prompt.find("\n### ", section + 1);
    if (end == std::string::npos) end = prompt.size();
    const std::string block = prompt.substr(section, end - section);
    static const std::regex kTag(R"(capability index ([0-9]+(?:\.[0-9]+)?))");
    std::smatch match;
    if (!std::regex_search(block, match, kTag)) return std::nullopt;
    return std::stod(match[1].str());
  }

  Settings settings_;
};

// ---- record / replay --------------------------------------------------------------

enum class CassetteMode { record, replay };

/// Wraps another provider with a request-fingerprint cassette. Record mode
/// persists every successful call; replay mode answers purely from the
/// cassette and needs no inner provider at all, so it can run with networking
/// disabled.
class RecordReplayProvider : public Provider {
 public:
  RecordReplayProvider(std::shared_ptr<Provider> inner, std::filesystem::path cassette_path,
                       CassetteMode mode)
      : inner_(std::move(inner)), path_(std::move(cassette_path)), mode_(mode) {
    if (mode_ == CassetteMode::record && !inner_) {
      throw ConfigError("record mode needs an inner provider");
    }
    if (mode_ == CassetteMode::replay) {
      if (!std::filesystem::exists(path_)) {
        throw ConfigError("replay cassette does not exist: " + path_.string());
      }
      cassette_ = util::load_json_file(path_);
    } else if (std::filesystem::exists(path_)) {
      cassette_ = util::load_json_file(path_);  // resume an existing recording
    } else {
      cassette_ = nlohmann::json::object();
    }
  }

  ChatResponse complete(const ChatRequest& request, const CallContext& context) override {
    const std::string key = request_fingerprint(request);
    if (mode_ == CassetteMode::replay) {
      std::lock_guard<std::mutex> lock(mutex_);
      if (!cassette_.contains(key)) throw CassetteMissError(key);
      const nlohmann::json& entry = cassette_[key];
      ChatResponse response;
      response.content = entry.at("content").get<std::string>();
      if (entry.contains("meta")) {
        for (const auto& [k, v] : entry["meta"].items()) {
          response.provider_meta[k] = v.get<std::string>();
        }
      }
      response.provider_meta["replayed"] = "true";
      return response;
    }

    ChatResponse response = inner_->complete(request, context);
    nlohmann::json meta = nlohmann::json::object();
    for (const auto& [k, v] : response.provider_meta) meta[k] = v;
    {
      std::lock_guard<std::mutex> lock(mutex_);
      cassette_[key] = {{"content", response.content}, {"meta", meta}};
      util::save_json_file(path_, cassette_);
    }
    return response;
  }

  std::string identity() const override {
    if (mode_ == CassetteMode::replay) return "replay(" + path_.filename().string() + ")";
    return "record(" + inner_->identity() + ")";
  }

 private:
  std::shared_ptr<Provider> inner_;
  std::filesystem::path path_;
  CassetteMode mode_;
  std::mutex mutex_;
  nlohmann::json cassette_;
};

}  // namespace delphi::providers
