#include "polarsim/llmclient.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <openssl/evp.h>

namespace polarsim {

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xF];
  }
  return out;
}

std::string LlmRequest::request_id() const {
  char temp[32];
  std::snprintf(temp, sizeof temp, "%.17g", temperature);
  std::string key;
  key.reserve(content.size() + 128);
  // Unit separators keep field boundaries unambiguous.
  key.append(model).append("\x1f").append(content).append("\x1f").append(temp).append("\x1f");
  key.append(std::to_string(max_tokens)).append("\x1f").append(std::to_string(attempt)).append("\x1f");
  key.append(sample_key);
  return sha256_hex(key);
}

std::string LlmRequest::wire_body() const {
  nlohmann::json body = {
      {"model", model},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", content}}})},
      {"temperature", temperature},
      {"max_tokens", max_tokens},
  };
  return body.dump();
}

// ---------------------------------------------------------------------------

HttpTransport::HttpTransport(std::string base_url, std::string api_key, double timeout_seconds)
    : api_key_(std::move(api_key)), timeout_(timeout_seconds) {
  while (base_url.ends_with('/')) base_url.pop_back();
  const auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) throw Error("LLM base URL must include a scheme: " + base_url);
  const auto path_start = base_url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    scheme_host_ = base_url;
    path_ = "";
  } else {
    scheme_host_ = base_url.substr(0, path_start);
    path_ = base_url.substr(path_start);
  }
  path_ += "/chat/completions";
}

HttpResponse HttpTransport::post(const std::string& body) {
  httplib::Client cli(scheme_host_);
  const auto secs = static_cast<time_t>(timeout_);
  cli.set_connection_timeout(secs, 0);
  cli.set_read_timeout(secs, 0);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  auto res = cli.Post(path_, headers, body, "application/json");
  if (!res) return {0, httplib::to_string(res.error())};
  return {res->status, res->body};
}

// ---------------------------------------------------------------------------

double SystemClock::now() {
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}

void SystemClock::sleep_for(double seconds) {
  if (seconds > 0) std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
}

double SimulatedClock::now() {
  std::lock_guard lock(mu_);
  return now_;
}

void SimulatedClock::sleep_for(double seconds) {
  if (seconds <= 0) return;
  std::lock_guard lock(mu_);
  now_ += seconds;
  slept_.store(slept_.load() + seconds);
}

// ---------------------------------------------------------------------------

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path ResponseCache::path_for(const std::string& id, std::string_view ext) const {
  return dir_ / id.substr(0, 2) / (id + std::string(ext));
}

std::optional<std::string> ResponseCache::get(const std::string& request_id) const {
  std::ifstream in(path_for(request_id, ".txt"), std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

void write_atomically(const std::filesystem::path& path, const std::string& data) {
  static std::atomic<std::uint64_t> counter{0};
  auto tmp = path;
  tmp += ".tmp" + std::to_string(counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << data;
    if (!out.flush()) throw Error("cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

void ResponseCache::put(const std::string& request_id, const std::string& text, const nlohmann::json& meta) {
  const auto txt = path_for(request_id, ".txt");
  std::filesystem::create_directories(txt.parent_path());
  // Immutable once written: a concurrent writer of the same id loses.
  if (std::filesystem::exists(txt)) return;
  write_atomically(path_for(request_id, ".meta.json"), meta.dump(2) + "\n");
  write_atomically(txt, text);
}

// ---------------------------------------------------------------------------

LlmClient::LlmClient(ClientOptions options, std::shared_ptr<Transport> transport, std::shared_ptr<Clock> clock,
                     std::shared_ptr<ResponseCache> cache)
    : opt_(std::move(options)), transport_(std::move(transport)), clock_(std::move(clock)), cache_(std::move(cache)) {
  if (opt_.max_in_flight < 1) throw Error("max_in_flight must be positive");
  if (opt_.requests_per_minute < 1) throw Error("requests_per_minute must be positive");
  if (!clock_) clock_ = std::make_shared<SystemClock>();
}

std::string LlmClient::complete(const LlmRequest& req) {
  if (req.content.empty()) throw Error("empty prompt");
  if (req.temperature < 0.0 || req.temperature > 2.0) throw Error("temperature must lie in [0, 2]");
  const auto id = req.request_id();
  if (cache_) {
    if (auto hit = cache_->get(id)) {
      cache_hits_.fetch_add(1);
      return *hit;
    }
  }
  if (opt_.cache_only) throw CacheMiss("no cached completion for request " + id);
  if (!transport_) throw TransportError("no LLM endpoint configured");

  const double started = clock_->now();
  std::string text = fetch(req);
  if (cache_) {
    nlohmann::json meta = {
        {"request_id", id},
        {"model", req.model},
        {"provider", opt_.provider},
        {"latency_seconds", clock_->now() - started},
        {"timestamp", static_cast<std::int64_t>(std::time(nullptr))},
        {"attempt", req.attempt},
        {"sample_key", req.sample_key},
    };
    cache_->put(id, text, meta);
    // Another thread may have won the race; serve whatever is on disk.
    if (auto stored = cache_->get(id)) return *stored;
  }
  return text;
}

void LlmClient::acquire_slot() {
  std::unique_lock lock(slot_mu_);
  slot_cv_.wait(lock, [&] { return in_flight_ < opt_.max_in_flight; });
  ++in_flight_;
}

void LlmClient::release_slot() {
  {
    std::lock_guard lock(slot_mu_);
    --in_flight_;
  }
  slot_cv_.notify_one();
}

void LlmClient::wait_for_rate_window() {
  std::lock_guard lock(rate_mu_);
  for (;;) {
    const double now = clock_->now();
    while (!sent_at_.empty() && sent_at_.front() <= now - 60.0) sent_at_.pop_front();
    if (sent_at_.size() < static_cast<std::size_t>(opt_.requests_per_minute)) {
      sent_at_.push_back(now);
      return;
    }
    clock_->sleep_for(sent_at_.front() + 60.0 - now);
  }
}

std::string LlmClient::fetch(const LlmRequest& req) {
  const std::string body = req.wire_body();
  std::string last_error;
  for (int attempt = 0; attempt < opt_.max_attempts; ++attempt) {
    if (attempt > 0) clock_->sleep_for(opt_.backoff_base * std::pow(opt_.backoff_factor, attempt - 1));
    wait_for_rate_window();
    acquire_slot();
    HttpResponse res;
    try {
      network_calls_.fetch_add(1);
      res = transport_->post(body);
    } catch (...) {
      release_slot();
      throw;
    }
    release_slot();

    if (res.status == 200) {
      try {
        const auto doc = nlohmann::json::parse(res.body);
        const auto& content = doc.at("choices").at(0).at("message").at("content");
        if (!content.is_string()) throw TransportError("completion content is not a string");
        return content.get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        throw TransportError(std::string("malformed completion response: ") + e.what());
      }
    }
    last_error = "HTTP " + std::to_string(res.status) + ": " + res.body.substr(0, 200);
    const bool retryable = res.status == 0 || res.status == 429 || res.status >= 500;
    if (!retryable) throw TransportError(last_error);
  }
  throw TransportError("giving up after " + std::to_string(opt_.max_attempts) + " attempts; last " + last_error);
}

Endpoint endpoint_from_env(std::string_view base_url_override, std::string_view model_override) {
  auto env = [](const char* name) {
    const char* v = std::getenv(name);
    return v ? std::string(v) : std::string();
  };
  Endpoint e;
  e.base_url = base_url_override.empty() ? env("LLM_BASE_URL") : std::string(base_url_override);
  e.api_key = env("LLM_API_KEY");
  e.model = model_override.empty() ? env("LLM_MODEL") : std::string(model_override);
  return e;
}

// ---------------------------------------------------------------------------

namespace {

/// End of the balanced region starting at text[open] == '{', honouring JSON
/// string literals, or npos.
std::size_t balanced_end(std::string_view text, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = open; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) escaped = false;
      else if (c == '\\') escaped = true;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '{') ++depth;
    else if (c == '}' && --depth == 0) return i;
  }
  return std::string_view::npos;
}

}  // namespace

nlohmann::json extract_json(std::string_view text, std::span<const std::string_view> required_keys) {
  std::size_t from = 0;
  while ((from = text.find('{', from)) != std::string_view::npos) {
    const auto end = balanced_end(text, from);
    if (end == std::string_view::npos) break;
    auto doc = nlohmann::json::parse(text.substr(from, end - from + 1), nullptr, false);
    if (!doc.is_discarded() && doc.is_object()) {
      for (auto key : required_keys) {
        if (!doc.contains(key)) throw ParseFailure("JSON object lacks key '" + std::string(key) + "'");
      }
      return doc;
    }
    ++from;
  }
  throw ParseFailure("no JSON object found in model output");
}

nlohmann::json extract_json(std::string_view text, std::initializer_list<std::string_view> required_keys) {
  return extract_json(text, std::span<const std::string_view>(required_keys.begin(), required_keys.size()));
}

}  // namespace polarsim
