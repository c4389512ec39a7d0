#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "polarsim/domain.hpp"

namespace polarsim {

/// Endpoint unreachable or still failing after every retry.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// Cache-only mode and the request has never been answered.
class CacheMiss : public Error {
 public:
  using Error::Error;
};

/// Model output did not contain the JSON object a stage asked for.
class ParseFailure : public Error {
 public:
  using Error::Error;
};

struct LlmRequest {
  std::string model;
  std::string content;  // the whole prompt, sent in the user role
  double temperature = 1.0;
  int max_tokens = 512;
  int attempt = 0;         // regeneration index; distinct attempts are distinct samples
  std::string sample_key;  // identifies the calling agent and stage

  /// Hex SHA-256 over every field above.
  std::string request_id() const;
  /// Chat-completions request body.
  std::string wire_body() const;
};

struct HttpResponse {
  int status = 0;  // 0: connection-level failure
  std::string body;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post(const std::string& body) = 0;
};

/// POSTs to <base_url>/chat/completions with a bearer token.
class HttpTransport : public Transport {
 public:
  HttpTransport(std::string base_url, std::string api_key, double timeout_seconds = 120.0);
  HttpResponse post(const std::string& body) override;

 private:
  std::string scheme_host_;
  std::string path_;
  std::string api_key_;
  double timeout_;
};

class Clock {
 public:
  virtual ~Clock() = default;
  virtual double now() = 0;  // seconds
  virtual void sleep_for(double seconds) = 0;
};

class SystemClock : public Clock {
 public:
  double now() override;
  void sleep_for(double seconds) override;
};

/// Time moves only when someone sleeps.
class SimulatedClock : public Clock {
 public:
  double now() override;
  void sleep_for(double seconds) override;
  double total_slept() const { return slept_.load(); }

 private:
  std::mutex mu_;
  double now_ = 0.0;
  std::atomic<double> slept_{0.0};
};

/// Content-addressed completion store: <dir>/<id[0:2]>/<id>.txt plus a
/// <id>.meta.json sidecar. Entries are written once, atomically.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);
  std::optional<std::string> get(const std::string& request_id) const;
  void put(const std::string& request_id, const std::string& text, const nlohmann::json& meta);
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path path_for(const std::string& id, std::string_view ext) const;
  std::filesystem::path dir_;
};

struct ClientOptions {
  int max_in_flight = 8;
  int requests_per_minute = 500;
  bool cache_only = false;
  int max_attempts = 5;
  double backoff_base = 1.0;
  double backoff_factor = 2.0;
  std::string provider = "chat-completions";
};

/// Thread-safe completion client: cache, in-flight bound, sliding one-minute
/// request window, exponential backoff on 429 and 5xx.
class LlmClient {
 public:
  LlmClient(ClientOptions options, std::shared_ptr<Transport> transport, std::shared_ptr<Clock> clock,
            std::shared_ptr<ResponseCache> cache);

  std::string complete(const LlmRequest& req);

  std::uint64_t network_calls() const { return network_calls_.load(); }
  std::uint64_t cache_hits() const { return cache_hits_.load(); }

 private:
  std::string fetch(const LlmRequest& req);
  void acquire_slot();
  void release_slot();
  void wait_for_rate_window();

  ClientOptions opt_;
  std::shared_ptr<Transport> transport_;
  std::shared_ptr<Clock> clock_;
  std::shared_ptr<ResponseCache> cache_;

  std::mutex slot_mu_;
  std::condition_variable slot_cv_;
  int in_flight_ = 0;

  std::mutex rate_mu_;
  std::deque<double> sent_at_;

  std::atomic<std::uint64_t> network_calls_{0};
  std::atomic<std::uint64_t> cache_hits_{0};
};

/// Endpoint settings from LLM_BASE_URL, LLM_API_KEY and LLM_MODEL, with
/// explicit values taking precedence over the environment.
struct Endpoint {
  std::string base_url;
  std::string api_key;
  std::string model;
};
Endpoint endpoint_from_env(std::string_view base_url_override = {}, std::string_view model_override = {});

/// First balanced {...} region that parses as a JSON object, tolerating
/// surrounding prose and code fences. Throws ParseFailure when none parses or
/// a required key is absent.
nlohmann::json extract_json(std::string_view text, std::span<const std::string_view> required_keys);
nlohmann::json extract_json(std::string_view text, std::initializer_list<std::string_view> required_keys);

/// Lower-case hex SHA-256.
std::string sha256_hex(std::string_view data);

}  // namespace polarsim
