#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "polarsim/brains.hpp"
#include "polarsim/config.hpp"
#include "polarsim/domain.hpp"
#include "polarsim/metrics.hpp"
#include "polarsim/socialnet.hpp"

namespace polarsim {

/// Journal entry. t is the timestep the entry belongs to: t = s + 1 for
/// everything produced while stepping from s, 0 for the initial state.
struct Event {
  int t = 0;
  std::string stage;
  std::string kind;
  nlohmann::json payload;
};

struct WorldState {
  int timestep = 0;  // completed steps
  std::vector<AgentState> agents;
  SocialGraph graph;
  std::uint64_t seed = 0;
  std::string branch = "main";  // RNG label; forks diverge by relabelling

  std::vector<Opinion> opinions() const;
  friend bool operator==(const WorldState&, const WorldState&) = default;
};

struct ProbeRow {
  int t = 0;
  AgentId rater = 0;
  std::string target_class;  // similar | opposing | neutral
  AgentId target = 0;
  int rating = 0;
  std::vector<std::string> adjectives;

  friend bool operator==(const ProbeRow&, const ProbeRow&) = default;
};

struct StepReport {
  int t = 0;
  std::vector<Event> events;
  std::vector<InteractionRecord> interactions;
  std::vector<ProbeRow> probe;
  std::array<std::size_t, 4> regenerations{};  // expression, decision, persuasion, update
  std::array<std::size_t, 4> inactive{};
  std::size_t saturated = 0;
  std::size_t influencer_messages = 0;
  std::size_t blocked = 0;
  std::size_t study_asked = 0;
  std::size_t study_accepted = 0;
};

/// Calls fn(i) for i in [0, count) on up to `workers` threads. The first
/// exception thrown by any call is rethrown after all threads join.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn);

/// Which strategies are in force during a given step.
struct ActiveInterventions {
  bool random_interaction = false;
  bool moderate_opposing = false;
  bool no_selective_exposure = false;
  bool no_confirmation_bias = false;
  bool opposing_exposure = false;
  bool study = false;  // open-mindedness study runs at the start of this step
  std::vector<Opinion> influencers;  // all broadcasters in force, config ones first
  std::vector<Strategy> strategies;
};

/// Synchronous three-stage loop. Every stage reads only state fixed at the
/// previous barrier; all mutation happens on the calling thread between
/// stages.
class Engine {
 public:
  Engine(SimulationConfig config, std::shared_ptr<Brain> brain);

  const SimulationConfig& config() const { return config_; }
  Brain& brain() const { return *brain_; }

  /// Timestep-0 world: opinions, graph and assigned dispositions. Reasons
  /// are empty until the first expression stage.
  WorldState initialize() const;
  static Event init_event(const WorldState& world);

  ActiveInterventions active_at(int step) const;

  /// Advances world from s to s + 1.
  StepReport step(WorldState& world) const;

  /// Perception probe on the current state, labelled t.
  std::vector<ProbeRow> probe(const WorldState& world, int t) const;

  /// Effective dispositions of agent i during a step.
  DispositionSet effective_dispositions(const AgentState& agent, const ActiveInterventions& active) const;

  std::uint64_t stream_key(const WorldState& world, int step, std::uint64_t purpose, std::int64_t a = 0,
                           std::int64_t b = 0) const;

 private:
  CallContext context(const WorldState& world, int step, Stage stage, std::uint64_t purpose, std::int64_t a,
                      std::int64_t b = 0) const;

  SimulationConfig config_;
  std::shared_ptr<Brain> brain_;
};

/// Attaches `kind` to round(fraction * n) agents chosen uniformly.
void assign_dispositions(std::vector<AgentState>& agents, DispositionKind kind, double fraction, RandomStream& rng);

}  // namespace polarsim
