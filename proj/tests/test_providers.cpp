#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <filesystem>
#include <memory>
#include <thread>

#include <httplib.h>

#include "delphi/prompts.hpp"
#include "delphi/providers.hpp"
#include "support/doubles.hpp"

using namespace delphi;
using namespace delphi::providers;
using Catch::Matchers::WithinAbs;
using testing_support::PoisonProvider;
using testing_support::ScriptedProvider;
using testing_support::TempDir;
using testing_support::text_response;

namespace {

ChatRequest simple_request(const std::string& user_text = "hello") {
  ChatRequest request;
  request.messages = {{"system", "be brief"}, {"user", user_text}};
  request.model_name = "test-model";
  request.temperature = 0.0;
  request.max_tokens = 128;
  return request;
}

CallContext expert_context(const std::string& quantity_id = "q/demo", int round = 1,
                           std::optional<double> feedback_mean = std::nullopt) {
  return CallContext{"expert", "A", quantity_id, round, feedback_mean};
}

std::string completion_body(const std::string& content) {
  nlohmann::json j = {{"choices", {{{"message", {{"content", content}}}}}},
                      {"usage", {{"prompt_tokens", 7}, {"completion_tokens", 3}}}};
  return j.dump();
}

/// Loopback chat-completions stub with a scriptable status sequence.
class StubServer {
 public:
  explicit StubServer(std::vector<int> statuses, std::string content = "ok")
      : statuses_(std::move(statuses)), content_(std::move(content)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request&, httplib::Response& res) {
      const std::size_t call = calls_.fetch_add(1);
      const int status = call < statuses_.size() ? statuses_[call] : statuses_.back();
      if (status == 200) {
        res.set_content(completion_body(content_), "application/json");
      } else {
        res.status = status;
        res.set_content("busy", "text/plain");
      }
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~StubServer() {
    server_.stop();
    thread_.join();
  }

  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
  int calls() const { return static_cast<int>(calls_.load()); }

 private:
  httplib::Server server_;
  std::vector<int> statuses_;
  std::string content_;
  std::atomic<std::size_t> calls_{0};
  int port_ = 0;
  std::thread thread_;
};

ProviderConfig fast_config(const std::string& endpoint, int max_retries = 3) {
  ProviderConfig config;
  config.endpoint = endpoint;
  config.max_retries = max_retries;
  config.backoff_base_ms = 1;
  config.backoff_max_ms = 5;
  config.timeout_ms = 2000;
  return config;
}

}  // namespace

TEST_CASE("mock expert follows the oracle and update rule") {
  MockExpertModel model;
  model.oracle["q/demo"] = 40.0;
  model.bias["A"] = 2.0;

  SECTION("round 1 is oracle plus bias") {
    const ChatResponse response =
        mock_complete(simple_request(), model, "A", "q/demo", 1, std::nullopt);
    CHECK(prompts::parse_response(response.content).point_estimate == 42.0);
  }

  SECTION("round 2 blends toward the feedback mean") {
    model.anchor_weight = 0.5;
    const ChatResponse response = mock_complete(simple_request(), model, "A", "q/demo", 2, 50.0);
    CHECK(prompts::parse_response(response.content).point_estimate == 46.0);
  }

  SECTION("anchor weight one reproduces the feedback mean") {
    model.anchor_weight = 1.0;
    const ChatResponse response = mock_complete(simple_request(), model, "A", "q/demo", 2, 50.0);
    CHECK(prompts::parse_response(response.content).point_estimate == 50.0);
  }

  SECTION("identical inputs give identical content") {
    model.noise_sd = 5.0;
    model.seed = 99;
    const ChatResponse a = mock_complete(simple_request(), model, "A", "q/demo", 1, std::nullopt);
    const ChatResponse b = mock_complete(simple_request(), model, "A", "q/demo", 1, std::nullopt);
    CHECK(a.content == b.content);
  }

  SECTION("noise is keyed on persona, quantity, and round") {
    model.noise_sd = 5.0;
    model.bias.clear();
    const auto value = [&](const std::string& persona, const std::string& quantity, int round) {
      model.oracle[quantity] = 40.0;
      const ChatResponse r = mock_complete(simple_request(), model, persona, quantity, round,
                                           round >= 2 ? std::optional<double>(40.0) : std::nullopt);
      return prompts::parse_response(r.content).point_estimate;
    };
    CHECK(value("A", "q/demo", 1) != value("B", "q/demo", 1));
    CHECK(value("A", "q/demo", 1) != value("A", "q/other", 1));
    CHECK(value("A", "q/demo", 1) != value("A", "q/demo", 2));
  }

  SECTION("unknown quantity is an error") {
    CHECK_THROWS_AS(mock_complete(simple_request(), model, "A", "q/unknown", 1, std::nullopt),
                    UnknownQuantityError);
  }
}

TEST_CASE("mock provider answers mediator calls with neutral structured output") {
  MockProvider provider{MockExpertModel{}};
  CallContext mediator{"mediator", "", "q/demo", 1, std::nullopt};
  const ChatResponse response = provider.complete(simple_request(), mediator);
  const prompts::MediatorDoc doc = prompts::parse_mediator_response(response.content);
  CHECK_FALSE(doc.arguments_higher.empty());
  CHECK_FALSE(doc.arguments_lower.empty());
}

TEST_CASE("http provider returns content from a healthy endpoint") {
  StubServer server({200});
  HttpProvider provider(fast_config(server.endpoint()));
  const ChatResponse response = provider.complete(simple_request(), expert_context());
  CHECK(response.content == "ok");
  CHECK(response.provider_meta.at("retries") == "0");
  CHECK(response.provider_meta.at("usage.prompt_tokens") == "7");
}

TEST_CASE("http provider retries transient failures with backoff") {
  StubServer server({429, 429, 200});
  HttpProvider provider(fast_config(server.endpoint()));
  const ChatResponse response = provider.complete(simple_request(), expert_context());
  CHECK(response.content == "ok");
  CHECK(response.provider_meta.at("retries") == "2");
  CHECK(server.calls() == 3);
}

TEST_CASE("http provider surfaces persistent server errors") {
  StubServer server({500});
  HttpProvider provider(fast_config(server.endpoint(), /*max_retries=*/2));
  try {
    provider.complete(simple_request(), expert_context());
    FAIL("expected TransportError");
  } catch (const TransportError& e) {
    CHECK(e.status() == 500);
  }
  CHECK(server.calls() == 3);  // initial try + 2 retries
}

TEST_CASE("http provider does not retry non-transient client errors") {
  StubServer server({404});
  HttpProvider provider(fast_config(server.endpoint()));
  CHECK_THROWS_AS(provider.complete(simple_request(), expert_context()), TransportError);
  CHECK(server.calls() == 1);
}

TEST_CASE("http provider requires the configured api key variable") {
  ProviderConfig config = fast_config("http://127.0.0.1:1/v1");
  config.api_key_env = "DELPHI_TEST_KEY_THAT_DOES_NOT_EXIST";
  HttpProvider provider(config);
  CHECK_THROWS_AS(provider.complete(simple_request(), expert_context()), AuthMissingError);
}

TEST_CASE("record then replay reproduces responses without the inner provider") {
  TempDir dir;
  const std::filesystem::path cassette = dir.path() / "cassette.json";

  auto scripted = std::make_shared<ScriptedProvider>(
      [](const ChatRequest&, const CallContext&, int) { return text_response("recorded!"); });
  {
    RecordReplayProvider recorder(scripted, cassette, CassetteMode::record);
    const ChatResponse live = recorder.complete(simple_request(), expert_context());
    CHECK(live.content == "recorded!");
  }
  REQUIRE(std::filesystem::exists(cassette));

  RecordReplayProvider replayer(nullptr, cassette, CassetteMode::replay);
  const ChatResponse replayed = replayer.complete(simple_request(), expert_context());
  CHECK(replayed.content == "recorded!");
  CHECK(replayed.provider_meta.at("replayed") == "true");

  SECTION("unseen requests miss") {
    CHECK_THROWS_AS(replayer.complete(simple_request("different"), expert_context()),
                    CassetteMissError);
  }
}

TEST_CASE("replay mode never touches the wrapped provider") {
  TempDir dir;
  const std::filesystem::path cassette = dir.path() / "cassette.json";
  auto scripted = std::make_shared<ScriptedProvider>(
      [](const ChatRequest&, const CallContext&, int) { return text_response("x"); });
  {
    RecordReplayProvider recorder(scripted, cassette, CassetteMode::record);
    recorder.complete(simple_request(), expert_context());
  }

  auto poison = std::make_shared<PoisonProvider>();
  RecordReplayProvider replayer(poison, cassette, CassetteMode::replay);
  const ChatResponse response = replayer.complete(simple_request(), expert_context());
  CHECK(response.content == "x");
  CHECK(poison->calls() == 0);
}

TEST_CASE("record mode persists nothing when the inner provider fails") {
  TempDir dir;
  const std::filesystem::path cassette = dir.path() / "cassette.json";
  auto unreachable =
      std::make_shared<HttpProvider>(fast_config("http://127.0.0.1:9/v1", /*max_retries=*/0));
  RecordReplayProvider recorder(unreachable, cassette, CassetteMode::record);
  CHECK_THROWS_AS(recorder.complete(simple_request(), expert_context()), Error);
  CHECK_FALSE(std::filesystem::exists(cassette));
}

TEST_CASE("replay mode requires an existing cassette") {
  TempDir dir;
  CHECK_THROWS_AS(
      RecordReplayProvider(nullptr, dir.path() / "missing.json", CassetteMode::replay),
      ConfigError);
}

TEST_CASE("request fingerprints ignore nothing semantic") {
  const ChatRequest a = simple_request("one");
  ChatRequest b = a;
  CHECK(request_fingerprint(a) == request_fingerprint(b));
  b.temperature = 0.5;
  CHECK(request_fingerprint(a) != request_fingerprint(b));
  ChatRequest c = a;
  c.messages[1].content = "two";
  CHECK(request_fingerprint(a) != request_fingerprint(c));
}

TEST_CASE("info-gated mock reads the capability tag only from the target block") {
  InfoGatedMockProvider provider({30.0, 15.0, 7});
  ChatRequest visible = simple_request(
      "## Evidence\n### Observed results\nagent | overall\nModel A | 12.0\n\n"
      "### Target agent\nName: Agent-07\nDescription: Prototype agent with capability index 45.0 "
      "from internal drills.\n");
  const ChatResponse tagged = provider.complete(visible, expert_context("q/a"));
  CHECK(prompts::parse_response(tagged.content).point_estimate == 45.0);

  ChatRequest hidden = simple_request(
      "## Evidence\n### Observed results\nagent | overall\nModel A | 12.0\n\n"
      "### Target agent\nName: Model G\nThis agent's overall success rate is withheld.\n");
  const ChatResponse fallback = provider.complete(hidden, expert_context("q/a"));
  const double value = prompts::parse_response(fallback.content).point_estimate;
  CHECK(value >= 0.0);
  CHECK(value <= 100.0);

  // Tags outside the target block must not leak into the estimate.
  ChatRequest decoy = simple_request(
      "### Observed results\nsomething with capability index 99.0 in it\n"
      "### Target agent\nName: Model G\nRate withheld.\n");
  const ChatResponse decoyed = provider.complete(decoy, expert_context("q/b"));
  CHECK(prompts::parse_response(decoyed.content).point_estimate != 99.0);
}
