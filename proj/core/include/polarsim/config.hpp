#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "polarsim/domain.hpp"

namespace polarsim {

/// Configuration validation failure. key() names the offending setting.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what) : Error(key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

enum class NetworkModel { WattsStrogatz, ErdosRenyi, BarabasiAlbert };

struct NetworkSpec {
  NetworkModel model = NetworkModel::WattsStrogatz;
  int k = 4;            // WS neighbours per node (even)
  double p = 0.001;     // WS rewiring probability
  double k_avg = 4.0;   // ER expected mean degree
  int m = 2;            // BA edges per new node
};

/// Parameters of the stochastic stand-in brain.
struct MockBrainParams {
  double p0 = 0.9;         // base partner acceptance probability
  double beta = 0.3;       // acceptance penalty per unit of opinion distance
  double q = 0.8;          // probability of stepping toward the inbox mean
  double r = 0.3;          // probability of stepping outward in a like-minded inbox
  double eps_left = 0.0;   // inconsistency jump rate, left camp
  double eps_right = 0.0;  // inconsistency jump rate, right camp

  friend bool operator==(const MockBrainParams&, const MockBrainParams&) = default;
};

/// Named parameter sets: "default" and "homophilic". The homophilic set makes
/// agents drop distant contacts readily, rarely conform, and always step
/// outward in a like-minded but more extreme inbox; small adaptive networks
/// then sort into camps and polarize.
std::optional<MockBrainParams> mock_preset(std::string_view name);

struct LlmSettings {
  std::string model;                 // empty: taken from LLM_MODEL
  std::string base_url;              // empty: taken from LLM_BASE_URL
  int max_tokens = 512;
  std::string cache_dir;             // empty: <run dir>/cache
  bool cache_only = false;
  int max_in_flight = 8;
  int requests_per_minute = 500;
  int parse_retries = 3;
  int workers = 8;

  friend bool operator==(const LlmSettings&, const LlmSettings&) = default;
};

enum class BrainKind { Mock, Llm };

struct BrainConfig {
  BrainKind kind = BrainKind::Mock;
  MockBrainParams mock;
  LlmSettings llm;
};

enum class Strategy {
  RandomInteraction,         // RI
  ModerateOpposing,          // MOI
  NoSelectiveExposure,       // NSE
  NoConfirmationBias,        // NCB
  NeutralElite,              // NES
  OpenMindedness,            // open-mindedness study + persistent trait
  OpposingExposure,          // opposing-camp-only exposure
};

std::string_view to_string(Strategy s);
std::optional<Strategy> parse_strategy(std::string_view text);

struct InterventionSpec {
  Strategy strategy = Strategy::RandomInteraction;
  int start_t = 35;
  int end_t = 40;
  int influencer_opinion = 0;  // NES only

  bool active_at(int step) const { return step >= start_t && step < end_t; }
  friend bool operator==(const InterventionSpec&, const InterventionSpec&) = default;
};

struct DispositionAssignment {
  DispositionKind kind = DispositionKind::SelectiveExposure;
  double fraction = 0.0;
};

struct InfluencerSpec {
  int opinion = 0;
};

enum class PartnerMode { PerEdge, OnePartner };
enum class NetworkMode { Adaptive, Static, Random };
enum class InitMode { ExactCounts, Iid };

struct SimulationConfig {
  std::size_t n_agents = 1000;
  int n_timesteps = 40;
  std::string issue_key = "partisanship";
  IssueDefinition issue = builtin_issue("partisanship");
  OpinionDistribution init_opinions = OpinionDistribution::paper_default();
  InitMode init_mode = InitMode::ExactCounts;
  NetworkSpec network;
  std::uint64_t seed = 0;
  BrainConfig brain;
  bool self_regulation = false;
  int max_retries = 10;
  std::vector<InterventionSpec> interventions;
  std::vector<DispositionAssignment> dispositions;
  std::vector<InfluencerSpec> influencers;
  std::size_t history_cap = 5;
  double temperature = 1.0;
  PartnerMode partner_mode = PartnerMode::PerEdge;
  NetworkMode network_mode = NetworkMode::Adaptive;
  /// Adds the edge (receiver, sender) on every delivery. Off by default: the
  /// communicating sender keeps its own directed link instead.
  bool reverse_links = false;
  int influencer_cap = 2;
  int probe_interval = 0;  // 0 disables the perception probe
  int workers = 1;
};

/// Throws ConfigError naming the first violated constraint.
void validate(const SimulationConfig& config);

/// Parses and validates a TOML configuration. Unknown keys are rejected.
SimulationConfig parse_config(std::string_view toml_text, const std::filesystem::path& base_dir = {});
SimulationConfig load_config(const std::filesystem::path& path);

/// Canonical TOML rendering (stored as config.toml in every run directory).
std::string to_toml(const SimulationConfig& config);

}  // namespace polarsim
