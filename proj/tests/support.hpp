#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "polarsim/config.hpp"
#include "polarsim/llmclient.hpp"

namespace polarsim::test {

namespace fs = std::filesystem;

/// Fresh, empty directory under the per-binary scratch root.
inline fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::path(POLARSIM_SCRATCH) / name;
  fs::remove_all(dir);
  fs::create_directories(dir.parent_path());
  return dir;
}

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline fs::path data_path(const std::string& rel) { return fs::path(POLARSIM_TEST_DATA) / rel; }

/// Small adaptive mock run that sorts into camps within a few dozen steps.
inline SimulationConfig small_config(std::uint64_t seed, std::size_t n = 60, int steps = 12) {
  SimulationConfig c;
  c.n_agents = n;
  c.n_timesteps = steps;
  c.seed = seed;
  c.brain.mock = *mock_preset("homophilic");
  return c;
}

inline std::string chat_reply(const std::string& content) {
  return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump();
}

/// Stand-in chat endpoint. Answers every stage prompt with a well-formed
/// reply chosen by a hash of the request, so different samples differ but
/// the same request always gets the same answer.
class ScriptedModel : public Transport {
 public:
  explicit ScriptedModel(IssueDefinition issue) : issue_(std::move(issue)) {}

  HttpResponse post(const std::string& body) override {
    ++calls_;
    const auto doc = nlohmann::json::parse(body);
    const std::string prompt = doc.at("messages").at(0).at("content");
    const auto h = std::stoull(sha256_hex(body).substr(0, 12), nullptr, 16);
    return {200, chat_reply(answer(prompt, h))};
  }

  std::size_t calls() const { return calls_.load(); }

 private:
  std::string answer(const std::string& prompt, std::uint64_t h) const {
    const auto has = [&](const char* s) { return prompt.find(s) != std::string::npos; };
    if (has("respond 'yes' or 'no' only")) return h % 10 == 0 ? "No." : "Yes";
    if (has("keys: decision and explain")) {
      return std::string("Sure.\n```json\n{\"decision\": \"") + (h % 4 == 0 ? "no" : "yes") +
             "\", \"explain\": \"because\"}\n```";
    }
    if (has("'will' and 'message'")) {
      if (h % 7 == 0) return R"({"will": "no", "message": ""})";
      return R"({"will": "yes", "message": "Here is my view, number )" + std::to_string(h % 1000) + R"("})";
    }
    if (has("tendency and reasons")) {
      const auto& label = issue_.labels[(h >> 8) % Opinion::kLevels];
      const std::string current = current_label(prompt);
      const std::string pick = (h % 3 == 0 || current.empty()) ? label : current;
      return nlohmann::json{{"tendency", pick}, {"reasons", "thinking it over"}}.dump();
    }
    if (has("rate your impression")) {
      return nlohmann::json{{"rating", static_cast<int>(h % 5) + 1},
                            {"adjectives", {"calm", "loud", "kind", "firm", "odd"}}}
          .dump();
    }
    if (has("keys: accept and theory")) {
      return nlohmann::json{{"accept", h % 2 ? "yes" : "no"}, {"theory", "curiosity compounds"}}.dump();
    }
    return "A short tweet about the issue, variant " + std::to_string(h % 97) + ".";
  }

  std::string current_label(const std::string& prompt) const {
    const std::string marker = ": You ";
    const auto a = prompt.find(marker);
    if (a == std::string::npos) return {};
    const auto b = prompt.find(". Your reasons", a);
    if (b == std::string::npos) return {};
    return prompt.substr(a + marker.size(), b - a - marker.size());
  }

  IssueDefinition issue_;
  std::atomic<std::size_t> calls_{0};
};

/// Transport that fails the test run if it is ever used.
class NoNetwork : public Transport {
 public:
  HttpResponse post(const std::string&) override {
    ++calls_;
    return {0, "network disabled"};
  }
  std::size_t calls() const { return calls_.load(); }

 private:
  std::atomic<std::size_t> calls_{0};
};

}  // namespace polarsim::test
