#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "polarsim/brains.hpp"
#include "polarsim/config.hpp"
#include "polarsim/domain.hpp"
#include "polarsim/engine.hpp"
#include "polarsim/metrics.hpp"
#include "polarsim/runstore.hpp"

namespace polarsim {

/// Machine and human renderings of one experiment, written as report.json and
/// report.md.
struct ExperimentReport {
  nlohmann::json json;
  std::string markdown;
};

void write_report(const std::filesystem::path& dir, const ExperimentReport& report);

// ---------------------------------------------------------------------------
// Pairwise bias evaluation

struct PairwiseEvalSpec {
  IssueDefinition issue = builtin_issue("partisanship");
  std::size_t cohort = 100;  // agents per opinion, paired up
  BrainConfig brain;
  double temperature = 1.0;
  bool self_regulation = false;
  int max_retries = 10;
  std::uint64_t seed = 0;
  int workers = 1;
};

/// Throws ConfigError unless cohort >= 2 and even.
void validate(const PairwiseEvalSpec& spec);

/// Stage order in the regeneration tallies.
inline constexpr std::array<Stage, 3> kPairwiseStages{Stage::Expression, Stage::Persuasion, Stage::Update};

struct PairwiseResult {
  std::array<std::array<std::size_t, Opinion::kLevels>, Opinion::kLevels> counts{};  // [from][to], kept pairs
  TransitionMatrix transition;
  double s_si = 0.0;
  std::array<std::size_t, Opinion::kLevels> kept{};
  std::array<std::size_t, Opinion::kLevels> dropped{};  // kept + dropped = cohort / 2 per row
  std::array<std::size_t, 3> calls{};        // regulated calls per stage
  std::array<std::size_t, 3> regenerated{};  // calls needing at least one regeneration
  std::array<std::size_t, 3> regenerations{};
  std::array<std::size_t, 3> exhausted{};
  std::map<int, std::size_t> retry_histogram;  // regenerations per update call -> calls
};

PairwiseResult run_pairwise_eval(const PairwiseEvalSpec& spec, Brain& brain);
ExperimentReport pairwise_report(const PairwiseEvalSpec& spec, const PairwiseResult& result);

// ---------------------------------------------------------------------------
// Forking and interventions

struct BranchResult {
  std::string name;
  std::string label;  // RNG branch label
  std::filesystem::path dir;
  std::vector<MetricsRow> metrics;
  WorldState final_world;
};

/// Copies the base run's state at `from` into out_dir, relabels the RNG
/// branch and steps it to `to` under `config`. The journal, metrics and
/// probe rows up to `from` are copied so the branch directory is complete.
/// Throws SnapshotError when the base run has no snapshot at `from`.
BranchResult fork_branch(const std::filesystem::path& base_run, int from, int to, SimulationConfig config,
                         const std::string& name, const std::string& label, std::shared_ptr<Brain> brain,
                         const std::filesystem::path& out_dir);

struct InteractionCounts {
  std::size_t homophilic = 0;
  std::size_t total = 0;
};

/// Peer deliveries journaled in (from, to].
InteractionCounts count_interactions(const std::vector<Event>& events, int from, int to);

/// Per-agent movement between two opinion vectors: unchanged, toward_neutral,
/// away_from_neutral, crossed (camp sign flipped).
std::map<std::string, std::size_t> change_directions(std::span<const Opinion> before, std::span<const Opinion> after);

struct StrategyComparison {
  std::string name;
  double s_pol_control = 0.0;
  double s_pol_treatment = 0.0;
  double homophilic_control = 0.0;  // share over the whole window
  double homophilic_treatment = 0.0;
  TTest s_pol_test;       // per-agent |opinion| at `to`, treatment vs control
  ZTest homophilic_test;  // homophilic deliveries over the window
  std::map<std::string, std::size_t> directions;
  OpinionDistribution final_distribution;

  double delta_s_pol() const { return s_pol_treatment - s_pol_control; }
  double delta_homophilic() const { return homophilic_treatment - homophilic_control; }
};

StrategyComparison compare_branches(const BranchResult& control, const BranchResult& treatment, int from, int to,
                                    const WorldState& at_fork);

struct InterventionOptions {
  int from = 35;
  int to = 40;
  int influencer_opinion = 0;  // NES broadcasters
  std::shared_ptr<Transport> transport;  // LLM runs; null uses the environment
};

struct InterventionResult {
  BranchResult control;
  std::vector<BranchResult> treatments;
  std::vector<StrategyComparison> comparisons;
  std::filesystem::path dir;  // <base>/branches/<from>-<to>
};

/// Forks the base run into a control branch (same RNG label as the base) and
/// one treatment branch per strategy, under <base>/branches/<from>-<to>/.
InterventionResult run_intervention_experiment(const std::filesystem::path& base_run,
                                               const std::vector<Strategy>& strategies,
                                               const InterventionOptions& options = {});
ExperimentReport intervention_report(const InterventionResult& result, int from, int to);

// ---------------------------------------------------------------------------
// Open-mindedness study

struct OpenMindResult {
  std::array<BranchResult, 4> branches;  // Orig, Oppose, Open, Open+Oppose
  std::array<double, 4> s_pol{};         // at `to`
  std::size_t study_asked = 0;
  std::size_t study_accepted = 0;
  std::filesystem::path dir;
};

inline constexpr std::array<const char*, 4> kOpenMindBranches{"Orig", "Oppose", "Open", "Open+Oppose"};

OpenMindResult run_openmindedness(const std::filesystem::path& base_run, const InterventionOptions& options = {});
ExperimentReport openmind_report(const OpenMindResult& result, int from, int to);

// ---------------------------------------------------------------------------
// Mechanism sweeps

enum class EliteCondition { None, Neutral, Moderate, Extreme };
std::string_view to_string(EliteCondition c);

/// Influencers for one condition: none, a neutral pair, or a symmetric pair
/// at +-1 or +-2.
std::vector<InfluencerSpec> elite_influencers(EliteCondition c);

struct SweepPoint {
  std::string label;
  double fraction = 0.0;  // disposition sweeps; 0 for elite conditions
  std::vector<double> per_seed;  // mean s_pol over the last five steps, per seed
  GroupStat stat;                // over per_seed
  std::vector<std::filesystem::path> runs;
};

struct SweepResult {
  std::string mechanism;
  std::vector<SweepPoint> points;  // in input order, so monotonicity is one comparison per pair
};

struct SweepOptions {
  std::size_t n_agents = 100;
  std::vector<std::uint64_t> seeds;  // empty: the config seed alone
  std::shared_ptr<Transport> transport;
};

/// Mean s_pol over the last five rows (fewer if the run is shorter).
double tail_polarization(const std::vector<MetricsRow>& metrics, std::size_t window = 5);

SweepResult run_mechanism_sweep(const SimulationConfig& base, DispositionKind kind, const std::vector<double>& fractions,
                                const std::filesystem::path& out_dir, const SweepOptions& options = {});
SweepResult run_elite_sweep(const SimulationConfig& base, const std::vector<EliteCondition>& conditions,
                            const std::filesystem::path& out_dir, const SweepOptions& options = {});
ExperimentReport sweep_report(const SweepResult& result);

// ---------------------------------------------------------------------------
// Network ablations

struct AblationRun {
  NetworkMode mode = NetworkMode::Adaptive;
  std::uint64_t seed = 0;
  double dominant_share = 0.0;  // at the final step
  double s_pol = 0.0;
  std::filesystem::path dir;
};

std::vector<AblationRun> run_network_ablation(const SimulationConfig& base, const std::vector<NetworkMode>& modes,
                                              const std::vector<std::uint64_t>& seeds,
                                              const std::filesystem::path& out_dir,
                                              std::shared_ptr<Transport> transport = nullptr);
ExperimentReport ablation_report(const std::vector<AblationRun>& runs);

// ---------------------------------------------------------------------------
// Perception probe

/// Probe rows for every agent on the world as it stands, labelled world.timestep.
std::vector<ProbeRow> run_perception_probe(const Engine& engine, const WorldState& world);

struct PerceptionSummary {
  struct Cell {
    std::size_t rows = 0;
    double mean_rating = 0.0;
  };
  std::map<int, std::map<std::string, Cell>> by_time;  // t -> target class
  std::map<std::string, std::map<std::string, std::size_t>> adjectives;  // class -> adjective -> count
  std::map<int, std::size_t> skipped;  // t -> rows missing for lack of a target
};

PerceptionSummary summarize_probe(const std::vector<ProbeRow>& rows, std::size_t n_agents);
std::vector<ProbeRow> read_probe_csv(const std::filesystem::path& path);
ExperimentReport perception_report(const PerceptionSummary& summary);

}  // namespace polarsim
