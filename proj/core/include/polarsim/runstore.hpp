#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "polarsim/brains.hpp"
#include "polarsim/config.hpp"
#include "polarsim/engine.hpp"
#include "polarsim/metrics.hpp"

namespace polarsim {

/// Snapshot file unreadable or inconsistent.
class SnapshotError : public Error {
 public:
  SnapshotError(const std::string& what, std::optional<int> last_good)
      : Error(what + (last_good ? " (last good snapshot: t=" + std::to_string(*last_good) + ")" : "")),
        last_good_(last_good) {}
  std::optional<int> last_good() const { return last_good_; }

 private:
  std::optional<int> last_good_;
};

nlohmann::json snapshot_to_json(const WorldState& world);
WorldState snapshot_from_json(const nlohmann::json& doc);

std::string event_to_line(const Event& e, std::uint64_t seq);

/// Run directory layout:
///   config.toml, events.jsonl, metrics.csv, probe.csv,
///   snapshots/tNNNN.json, cache/ (LLM runs), reports/, exports/
class RunStore {
 public:
  /// Creates the directory (which must be absent or empty) and writes
  /// config.toml.
  static RunStore create(const std::filesystem::path& dir, const SimulationConfig& config);
  /// Throws Error when dir holds no run.
  static RunStore open(const std::filesystem::path& dir);

  const std::filesystem::path& dir() const { return dir_; }
  SimulationConfig load_config() const;

  void append_events(const std::vector<Event>& events);
  void append_metrics(const MetricsRow& row);
  void append_probe(const std::vector<ProbeRow>& rows);
  void write_snapshot(const WorldState& world);

  std::vector<int> snapshot_times() const;
  std::optional<int> last_snapshot() const;
  WorldState read_snapshot(int t) const;

  std::vector<Event> read_events() const;
  std::vector<MetricsRow> read_metrics() const;

  /// Drops journal and metric rows labelled after t, probe rows labelled t or
  /// later, and snapshots after t.
  void truncate_after(int t);

  /// Replaces this store's journal, metrics and probe log with the rows of
  /// `source` that precede snapshot t (see truncate_after), byte for byte, and
  /// copies snapshot t.
  void copy_prefix(const RunStore& source, int t);

  static std::string snapshot_name(int t);

 private:
  explicit RunStore(std::filesystem::path dir);
  void sync_seq();

  std::filesystem::path dir_;
  std::uint64_t next_seq_ = 0;
};

/// Rebuilds the world at timestep t from the journal alone.
WorldState replay_events(const std::vector<Event>& events, int t, std::uint64_t seed, const std::string& branch,
                         std::size_t history_cap);

using StepObserver = std::function<void(const WorldState&, const StepReport&)>;

struct RunResult {
  std::filesystem::path dir;
  WorldState world;
  std::vector<MetricsRow> metrics;
};

/// Shared client for LLM brains: cache at settings.cache_dir or <run>/cache,
/// endpoint from the environment.
std::shared_ptr<LlmClient> make_llm_client(const LlmSettings& settings, const std::filesystem::path& run_dir,
                                           std::shared_ptr<Transport> transport = nullptr);
std::shared_ptr<Brain> make_run_brain(const SimulationConfig& config, const std::filesystem::path& run_dir,
                                      std::shared_ptr<Transport> transport = nullptr);

/// Fresh run into run_dir, persisting every timestep.
RunResult run_simulation(const SimulationConfig& config, const std::filesystem::path& run_dir,
                         std::shared_ptr<Brain> brain, const StepObserver& observer = {});

/// Continues a run from its last snapshot, discarding partial output beyond
/// it.
RunResult resume_run(const std::filesystem::path& run_dir, std::shared_ptr<Brain> brain,
                     const StepObserver& observer = {});

/// Steps an already-persisted world forward to `until`, writing into store.
RunResult continue_run(RunStore& store, const Engine& engine, WorldState world, int until,
                       const StepObserver& observer = {});

enum class ExportKind { Metrics, Edges, Distributions, Transition, Svg };
std::optional<ExportKind> parse_export_kind(std::string_view s);

/// Writes export files under <run>/exports and returns their paths. Throws
/// Error naming the missing input.
std::vector<std::filesystem::path> export_run(const std::filesystem::path& run_dir, ExportKind what);

/// Empirical transition counts between consecutive snapshots.
TransitionMatrix transition_from_snapshots(const RunStore& store);

/// Minimal polyline chart.
std::string svg_line_chart(const std::string& title, const std::vector<double>& xs, const std::vector<double>& ys);

std::string read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, const std::string& data);

}  // namespace polarsim
