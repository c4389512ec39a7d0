#include <doctest.h>

#include <chrono>
#include <thread>

#include <httplib.h>

#include "polarsim/llmclient.hpp"
#include "support.hpp"

using namespace polarsim;

namespace {

/// Replays a fixed list of responses, then repeats the last one.
class ScriptedTransport : public Transport {
 public:
  explicit ScriptedTransport(std::vector<HttpResponse> script) : script_(std::move(script)) {}
  HttpResponse post(const std::string& body) override {
    std::lock_guard lock(mu_);
    bodies.push_back(body);
    const auto i = std::min(calls++, script_.size() - 1);
    return script_[i];
  }
  std::vector<std::string> bodies;
  std::size_t calls = 0;

 private:
  std::mutex mu_;
  std::vector<HttpResponse> script_;
};

class CountingTransport : public Transport {
 public:
  HttpResponse post(const std::string&) override {
    const int now = ++active_;
    int seen = peak.load();
    while (now > seen && !peak.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
    --active_;
    return {200, test::chat_reply("ok")};
  }
  std::atomic<int> peak{0};

 private:
  std::atomic<int> active_{0};
};

LlmRequest request(const std::string& content, int attempt = 0) {
  LlmRequest r;
  r.model = "m";
  r.content = content;
  r.attempt = attempt;
  r.sample_key = "k";
  return r;
}

}  // namespace

TEST_CASE("request ids cover every field") {
  const auto base = request("hello");
  auto other = base;
  CHECK(base.request_id() == request("hello").request_id());
  CHECK(base.request_id().size() == 64);
  other.attempt = 1;
  CHECK(other.request_id() != base.request_id());
  other = base;
  other.sample_key = "k2";
  CHECK(other.request_id() != base.request_id());
  other = base;
  other.temperature = 0.5;
  CHECK(other.request_id() != base.request_id());
  other = base;
  other.max_tokens = 10;
  CHECK(other.request_id() != base.request_id());
  other = base;
  other.model = "m2";
  CHECK(other.request_id() != base.request_id());

  const auto wire = nlohmann::json::parse(base.wire_body());
  CHECK(wire.at("messages").at(0).at("role") == "user");
  CHECK(wire.at("messages").at(0).at("content") == "hello");
  CHECK(wire.at("model") == "m");
}

TEST_CASE("sha256 known answers") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("completions are cached and replayed without the network") {
  const auto dir = test::scratch_dir("cache_replay");
  auto transport = std::make_shared<ScriptedTransport>(std::vector<HttpResponse>{{200, test::chat_reply("answer")}});
  auto cache = std::make_shared<ResponseCache>(dir);
  LlmClient live({}, transport, std::make_shared<SimulatedClock>(), cache);
  CHECK(live.complete(request("q")) == "answer");
  CHECK(live.complete(request("q")) == "answer");
  CHECK(live.network_calls() == 1);
  CHECK(live.cache_hits() == 1);

  const auto id = request("q").request_id();
  CHECK(std::filesystem::exists(dir / id.substr(0, 2) / (id + ".txt")));
  const auto meta = nlohmann::json::parse(test::slurp(dir / id.substr(0, 2) / (id + ".meta.json")));
  CHECK(meta.at("request_id") == id);
  CHECK(meta.at("sample_key") == "k");

  ClientOptions offline;
  offline.cache_only = true;
  LlmClient replay(offline, nullptr, std::make_shared<SimulatedClock>(), std::make_shared<ResponseCache>(dir));
  CHECK(replay.complete(request("q")) == "answer");
  CHECK(replay.network_calls() == 0);
  CHECK_THROWS_AS(replay.complete(request("never asked")), CacheMiss);
}

TEST_CASE("cache entries are write-once") {
  ResponseCache cache(test::scratch_dir("write_once"));
  cache.put("abcdef", "first", {});
  cache.put("abcdef", "second", {});
  CHECK(cache.get("abcdef") == "first");
  CHECK_FALSE(cache.get("abcdeg"));
}

TEST_CASE("retries back off exponentially on 429 and 5xx") {
  auto transport = std::make_shared<ScriptedTransport>(
      std::vector<HttpResponse>{{429, "slow down"}, {503, "busy"}, {0, "reset"}, {200, test::chat_reply("done")}});
  auto clock = std::make_shared<SimulatedClock>();
  LlmClient client({}, transport, clock, nullptr);
  CHECK(client.complete(request("x")) == "done");
  CHECK(transport->calls == 4);
  CHECK(clock->total_slept() == doctest::Approx(1.0 + 2.0 + 4.0));
}

TEST_CASE("client errors are not retried") {
  auto transport = std::make_shared<ScriptedTransport>(std::vector<HttpResponse>{{400, "bad request"}});
  LlmClient client({}, transport, std::make_shared<SimulatedClock>(), nullptr);
  CHECK_THROWS_AS(client.complete(request("x")), TransportError);
  CHECK(transport->calls == 1);
}

TEST_CASE("persistent failure gives up after max_attempts") {
  auto transport = std::make_shared<ScriptedTransport>(std::vector<HttpResponse>{{500, "down"}});
  auto clock = std::make_shared<SimulatedClock>();
  LlmClient client({}, transport, clock, nullptr);
  CHECK_THROWS_AS(client.complete(request("x")), TransportError);
  CHECK(transport->calls == 5);
  CHECK(clock->total_slept() == doctest::Approx(1.0 + 2.0 + 4.0 + 8.0));
}

TEST_CASE("malformed success bodies are transport errors") {
  auto transport = std::make_shared<ScriptedTransport>(std::vector<HttpResponse>{{200, "{\"choices\": []}"}});
  LlmClient client({}, transport, std::make_shared<SimulatedClock>(), nullptr);
  CHECK_THROWS_AS(client.complete(request("x")), TransportError);
}

TEST_CASE("invalid requests are rejected before any call") {
  auto transport = std::make_shared<ScriptedTransport>(std::vector<HttpResponse>{{200, test::chat_reply("ok")}});
  LlmClient client({}, transport, std::make_shared<SimulatedClock>(), nullptr);
  CHECK_THROWS_AS(client.complete(request("")), Error);
  auto hot = request("x");
  hot.temperature = 2.5;
  CHECK_THROWS_AS(client.complete(hot), Error);
  CHECK(transport->calls == 0);
  LlmClient nowhere({}, nullptr, std::make_shared<SimulatedClock>(), nullptr);
  CHECK_THROWS_AS(nowhere.complete(request("x")), TransportError);
}

TEST_CASE("sliding one-minute request window") {
  auto transport = std::make_shared<ScriptedTransport>(std::vector<HttpResponse>{{200, test::chat_reply("ok")}});
  auto clock = std::make_shared<SimulatedClock>();
  ClientOptions opt;
  opt.requests_per_minute = 3;
  LlmClient client(opt, transport, clock, nullptr);
  for (int i = 0; i < 7; ++i) client.complete(request("q" + std::to_string(i)));
  // Requests 1-3 at t=0, 4-6 at t=60, 7 at t=120.
  CHECK(clock->total_slept() == doctest::Approx(120.0));
  CHECK(client.network_calls() == 7);
}

TEST_CASE("in-flight requests are bounded") {
  auto transport = std::make_shared<CountingTransport>();
  ClientOptions opt;
  opt.max_in_flight = 2;
  LlmClient client(opt, transport, std::make_shared<SimulatedClock>(), nullptr);
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < 5; ++i) client.complete(request("t" + std::to_string(t) + "/" + std::to_string(i)));
    });
  }
  for (auto& th : threads) th.join();
  CHECK(transport->peak.load() <= 2);
  CHECK(transport->peak.load() >= 1);
  CHECK(client.network_calls() == 40);
}

TEST_CASE("JSON extraction from model prose") {
  CHECK(extract_json(R"({"a": 1})", {"a"}).at("a") == 1);
  CHECK(extract_json("Sure! Here you go:\n```json\n{\"will\": \"yes\", \"message\": \"hi\"}\n```\nThanks", {"will"})
            .at("message") == "hi");
  // Braces inside strings do not end the object.
  CHECK(extract_json(R"(x {"m": "a } b {", "n": 2} y)", {"m", "n"}).at("n") == 2);
  // An unparseable first region falls through to the next one.
  CHECK(extract_json(R"({not json} then {"k": true})", {"k"}).at("k") == true);
  CHECK(extract_json(R"({"outer": {"inner": 1}})", {"outer"}).at("outer").at("inner") == 1);
  CHECK_THROWS_AS(extract_json("no object here", {"a"}), ParseFailure);
  CHECK_THROWS_AS(extract_json(R"({"a": 1})", {"b"}), ParseFailure);
  CHECK_THROWS_AS(extract_json(R"({"a": 1)", {"a"}), ParseFailure);
}

TEST_CASE("endpoint settings prefer explicit values") {
  ::setenv("LLM_BASE_URL", "http://env.example/v1", 1);
  ::setenv("LLM_MODEL", "env-model", 1);
  ::setenv("LLM_API_KEY", "secret", 1);
  auto e = endpoint_from_env();
  CHECK(e.base_url == "http://env.example/v1");
  CHECK(e.model == "env-model");
  CHECK(e.api_key == "secret");
  e = endpoint_from_env("http://override/v1", "other");
  CHECK(e.base_url == "http://override/v1");
  CHECK(e.model == "other");
  ::unsetenv("LLM_BASE_URL");
  ::unsetenv("LLM_MODEL");
  ::unsetenv("LLM_API_KEY");
}

TEST_CASE("HTTP transport against a local server") {
  httplib::Server server;
  std::string seen_auth, seen_body;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    seen_body = req.body;
    res.set_content(test::chat_reply("from server"), "application/json");
  });
  server.Post("/broken/chat/completions",
              [](const httplib::Request&, httplib::Response& res) { res.status = 503; });
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  const std::string base = "http://127.0.0.1:" + std::to_string(port);
  auto transport = std::make_shared<HttpTransport>(base + "/v1/", "tok", 5.0);
  LlmClient client({}, transport, std::make_shared<SimulatedClock>(), nullptr);
  CHECK(client.complete(request("ping")) == "from server");
  CHECK(seen_auth == "Bearer tok");
  CHECK(nlohmann::json::parse(seen_body).at("messages").at(0).at("content") == "ping");

  HttpTransport broken(base + "/broken", "", 5.0);
  CHECK(broken.post("{}").status == 503);

  server.stop();
  th.join();

  HttpTransport refused(base + "/v1", "", 1.0);
  CHECK(refused.post("{}").status == 0);
  CHECK_THROWS_AS(HttpTransport("no-scheme", ""), Error);
}
