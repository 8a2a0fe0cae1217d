#include <doctest.h>

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <fstream>
#include <thread>

#include "helpers/oracles.hpp"
#include "prescreen/backend.hpp"

using namespace prescreen;
using nlohmann::json;

namespace {

ChatRequest sample_request(double temperature = 0.0) {
  ChatRequest req;
  req.model_id = "gpt-4";
  req.temperature = temperature;
  req.messages = {{chat_role::system, "be terse"}, {chat_role::user, "score this"}};
  return req;
}

// Minimal loopback server speaking the chat-completions protocol.
struct TestServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> hits{0};

  explicit TestServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    server.Post("/v1/chat/completions",
                [this, handler = std::move(handler)](const httplib::Request& req,
                                                     httplib::Response& res) {
                  ++hits;
                  handler(req, res);
                });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }

  ~TestServer() {
    server.stop();
    thread.join();
  }

  BackendSpec spec() const {
    BackendSpec s;
    s.kind = backend_kind::http_chat;
    s.endpoint_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
    s.timeout_s = 2.0;
    s.max_retries = 2;
    s.retry_backoff_s = 0.01;
    return s;
  }
};

void reply_ok(httplib::Response& res, const std::string& content) {
  json body{{"choices", json::array({json{{"message", {{"role", "assistant"},
                                                       {"content", content}}}}})},
            {"usage", {{"prompt_tokens", 12}, {"completion_tokens", 3}}}};
  res.set_content(body.dump(), "application/json");
}

}  // namespace

TEST_CASE("fingerprints are stable and cover the request identity") {
  const auto a = request_fingerprint(sample_request());
  const auto b = request_fingerprint(sample_request());
  CHECK(a == b);
  CHECK(a.size() == 64);

  CHECK(request_fingerprint(sample_request(0.7)) != a);

  auto renamed = sample_request();
  renamed.model_id = "gpt-4o";
  CHECK(request_fingerprint(renamed) != a);

  auto reordered = sample_request();
  std::swap(reordered.messages[0], reordered.messages[1]);
  CHECK(request_fingerprint(reordered) != a);

  // max_output_tokens is delivery detail, not identity.
  auto capped = sample_request();
  capped.max_output_tokens = 128;
  CHECK(request_fingerprint(capped) == a);
}

TEST_CASE("cassette put/find/save/load round trip") {
  const auto req = sample_request();
  const auto fp = request_fingerprint(req);
  ChatResponse resp;
  resp.content = "Likelihood of Ongoing Mental Health Disorder: 4/7";
  resp.latency_s = 1.25;
  resp.prompt_tokens = 12;

  Cassette cassette;
  cassette.put(fp, req, resp);
  REQUIRE(cassette.find(fp).has_value());
  CHECK(cassette.find(fp)->content == resp.content);
  CHECK(!cassette.find("deadbeef").has_value());

  try {
    cassette.put(fp, req, resp);
    FAIL("expected DuplicateFingerprint");
  } catch (const error& e) {
    CHECK(e.code() == errc::duplicate_fingerprint);
  }
  ChatResponse replaced = resp;
  replaced.content = "revised";
  CHECK_NOTHROW(cassette.put(fp, req, replaced, /*overwrite=*/true));

  const auto dir = oracles::scratch_dir("cassette");
  const auto path = dir / "c.jsonl";
  cassette.save(path);
  const auto loaded = Cassette::load(path);
  REQUIRE(loaded.size() == 1);
  CHECK(loaded.find(fp)->content == "revised");
  CHECK(loaded.find(fp)->latency_s == doctest::Approx(1.25));
  std::filesystem::remove_all(dir);
}

TEST_CASE("replay returns recorded content with zero latency, misses are protocol errors") {
  const auto req = sample_request();
  Cassette cassette;
  ChatResponse resp;
  resp.content = "recorded reply";
  resp.latency_s = 7.5;
  cassette.put(request_fingerprint(req), req, resp);

  ReplayBackend replay(std::move(cassette));
  const auto hit = replay.complete(req);
  REQUIRE(hit.ok());
  CHECK(hit.response.content == "recorded reply");
  CHECK(hit.response.latency_s == 0.0);

  auto other = sample_request(0.5);
  const auto miss = replay.complete(other);
  CHECK(miss.status == completion_status::protocol);
  CHECK(miss.error.find("cassette miss") != std::string::npos);
}

TEST_CASE("record then replay returns byte-identical content") {
  auto scripted = ScriptedBackend::fixed("the canned answer", 1.0);
  Cassette cassette;
  RecordingBackend recorder(*scripted, cassette);

  const auto req = sample_request();
  const auto live = recorder.complete(req);
  REQUIRE(live.ok());

  ReplayBackend replay(std::move(cassette));
  const auto replayed = replay.complete(req);
  REQUIRE(replayed.ok());
  CHECK(replayed.response.content == live.response.content);
}

TEST_CASE("scripted stalls become timeouts; larger budgets succeed") {
  {
    ScriptedBackend slow({{"late reply", 0.2}}, /*timeout_s=*/0.03);
    const auto out = slow.complete(sample_request());
    CHECK(out.status == completion_status::timeout);
  }
  {
    ScriptedBackend fast({{"late reply", 0.02}}, /*timeout_s=*/0.5);
    const auto out = fast.complete(sample_request());
    REQUIRE(out.ok());
    CHECK(out.response.content == "late reply");
  }
  {
    ScriptedBackend exhausted(std::vector<ScriptedReply>{}, 1.0);
    CHECK(exhausted.complete(sample_request()).status == completion_status::protocol);
  }
}

TEST_CASE("timeout monotonicity against the scripted backend") {
  const double delay = 0.02;
  for (double budget : {0.005, 0.01, 0.05, 0.1}) {
    ScriptedBackend backend({{"x", delay}}, budget);
    const auto out = backend.complete(sample_request());
    if (budget > delay) {
      CHECK(out.ok());
    } else {
      CHECK(out.status == completion_status::timeout);
    }
  }
}

TEST_CASE("http backend happy path with usage fields") {
  TestServer server([](const httplib::Request& req, httplib::Response& res) {
    const json body = json::parse(req.body);
    CHECK(body.at("model") == "gpt-4");
    CHECK(body.at("messages").size() == 2);
    CHECK(body.at("temperature") == 0.0);
    reply_ok(res, "assistant says hi");
  });
  auto backend = make_backend(server.spec());
  const auto out = backend->complete(sample_request());
  REQUIRE(out.ok());
  CHECK(out.response.content == "assistant says hi");
  CHECK(out.response.prompt_tokens == 12);
  CHECK(out.response.completion_tokens == 3);
  CHECK(out.response.latency_s >= 0.0);
  CHECK(server.hits == 1);
}

TEST_CASE("http backend retries transport failures with backoff") {
  TestServer server([](const httplib::Request&, httplib::Response& res) {
    static std::atomic<int> calls{0};
    if (++calls < 3) {
      res.status = 503;
      res.set_content("overloaded", "text/plain");
    } else {
      reply_ok(res, "finally");
    }
  });
  auto backend = make_backend(server.spec());
  const auto out = backend->complete(sample_request());
  REQUIRE(out.ok());
  CHECK(out.response.content == "finally");
  CHECK(server.hits == 3);
}

TEST_CASE("http backend classifies auth and protocol failures without retry") {
  {
    TestServer server([](const httplib::Request&, httplib::Response& res) {
      res.status = 401;
      res.set_content("no", "text/plain");
    });
    auto backend = make_backend(server.spec());
    const auto out = backend->complete(sample_request());
    CHECK(out.status == completion_status::auth);
    CHECK(server.hits == 1);
  }
  {
    TestServer server([](const httplib::Request&, httplib::Response& res) {
      res.set_content("not json at all", "text/plain");
    });
    auto backend = make_backend(server.spec());
    const auto out = backend->complete(sample_request());
    CHECK(out.status == completion_status::protocol);
    CHECK(server.hits == 1);
  }
}

TEST_CASE("http backend read timeout is a timeout outcome, never retried") {
  TestServer server([](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(300));
    reply_ok(res, "too late");
  });
  auto spec = server.spec();
  spec.timeout_s = 0.05;
  auto backend = make_backend(spec);
  const auto out = backend->complete(sample_request());
  CHECK(out.status == completion_status::timeout);
  CHECK(server.hits == 1);
}

TEST_CASE("missing auth token is a configuration error") {
  BackendSpec spec;
  spec.kind = backend_kind::http_chat;
  spec.endpoint_url = "http://127.0.0.1:9/v1";
  spec.auth_env_var = "PRESCREEN_TEST_TOKEN_THAT_IS_UNSET";
  try {
    make_backend(spec);
    FAIL("expected ConfigError");
  } catch (const error& e) {
    CHECK(e.code() == errc::config_error);
  }
}

TEST_CASE("backend spec files parse with relative cassette resolution") {
  const auto dir = oracles::scratch_dir("spec");
  {
    std::ofstream out(dir / "backend.json");
    out << R"({"kind":"replay","cassette_path":"tape.jsonl","model_id":"gpt-4","timeout_s":9})";
  }
  const auto spec = BackendSpec::from_json_file(dir / "backend.json");
  CHECK(spec.kind == backend_kind::replay);
  CHECK(spec.model_id == "gpt-4");
  CHECK(spec.timeout_s == 9.0);
  CHECK(std::filesystem::path(spec.cassette_path) == dir / "tape.jsonl");

  // Field order in the file doesn't matter; the fingerprint domain is the
  // canonical request, and spec parsing is key-based.
  {
    std::ofstream out(dir / "backend2.json");
    out << R"({"timeout_s":9,"model_id":"gpt-4","cassette_path":"tape.jsonl","kind":"replay"})";
  }
  const auto spec2 = BackendSpec::from_json_file(dir / "backend2.json");
  CHECK(spec2.cassette_path == spec.cassette_path);
  CHECK(spec2.timeout_s == spec.timeout_s);
  std::filesystem::remove_all(dir);
}

TEST_CASE("latency_summary order statistics") {
  CHECK(latency_summary({}).mean_s == 0.0);
  CHECK(latency_summary({}).n_timeout == 0);

  auto ok = [](double latency) {
    CompletionOutcome o;
    o.status = completion_status::ok;
    o.response.latency_s = latency;
    return o;
  };
  auto timed_out = [] {
    CompletionOutcome o;
    o.status = completion_status::timeout;
    return o;
  };

  std::vector<CompletionOutcome> two = {ok(10), ok(20)};
  auto s = latency_summary(two);
  CHECK(s.mean_s == doctest::Approx(15.0));
  CHECK(s.p50_s == doctest::Approx(15.0));
  CHECK(s.max_s == doctest::Approx(20.0));

  std::vector<CompletionOutcome> mixed = {ok(10), ok(30), ok(20), timed_out(), timed_out()};
  s = latency_summary(mixed);
  CHECK(s.n_timeout == 2);
  CHECK(s.mean_s == doctest::Approx(20.0));
  CHECK(s.p50_s == doctest::Approx(20.0));
  CHECK(s.max_s == doctest::Approx(30.0));
}
