#include <doctest.h>

#include "polarsim/runstore.hpp"
#include "support.hpp"

using namespace polarsim;
namespace fs = std::filesystem;

namespace {

SimulationConfig store_config(std::uint64_t seed) {
  auto c = test::small_config(seed, 40, 8);
  c.probe_interval = 3;
  c.reverse_links = true;
  c.interventions.push_back({Strategy::OpenMindedness, 2, 8, 0});
  c.interventions.push_back({Strategy::NeutralElite, 4, 6, 0});
  return c;
}

RunResult fresh_run(const SimulationConfig& c, const fs::path& dir) {
  return run_simulation(c, dir, std::make_shared<MockBrain>(c.brain.mock));
}

}  // namespace

TEST_CASE("run directories must be empty") {
  const auto dir = test::scratch_dir("occupied");
  fs::create_directories(dir);
  write_file_atomic(dir / "stray.txt", "x");
  CHECK_THROWS_AS(RunStore::create(dir, test::small_config(1)), Error);
  CHECK_THROWS_AS(RunStore::open(test::scratch_dir("nothing")), Error);
}

TEST_CASE("a run writes its full layout") {
  const auto c = store_config(4);
  const auto dir = test::scratch_dir("layout");
  const auto r = fresh_run(c, dir);
  CHECK(r.world.timestep == 8);
  CHECK(r.metrics.size() == 9);
  for (int t = 0; t <= 8; ++t) CHECK(r.metrics[static_cast<std::size_t>(t)].t == t);
  for (const char* name : {"config.toml", "events.jsonl", "metrics.csv", "probe.csv"}) {
    CHECK(fs::exists(dir / name));
  }
  const auto store = RunStore::open(dir);
  CHECK(store.snapshot_times() == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8});
  CHECK(store.read_snapshot(8) == r.world);
  CHECK(to_toml(store.load_config()) == to_toml(c));
  CHECK(RunStore::snapshot_name(7) == "t0007.json");

  const auto events = store.read_events();
  REQUIRE_FALSE(events.empty());
  CHECK(events.front().kind == "init");
  for (std::size_t k = 1; k < events.size(); ++k) CHECK(events[k - 1].t <= events[k].t);
  const auto probe_lines = test::slurp(dir / "probe.csv");
  CHECK(probe_lines.find("\n3,") != std::string::npos);
  CHECK(probe_lines.find("\n6,") != std::string::npos);
}

TEST_CASE("snapshots round-trip through JSON") {
  const auto c = store_config(9);
  Engine engine(c, std::make_shared<MockBrain>(c.brain.mock));
  auto w = engine.initialize();
  for (int s = 0; s < 4; ++s) engine.step(w);
  w.branch = "fork-x";
  const auto back = snapshot_from_json(nlohmann::json::parse(snapshot_to_json(w).dump()));
  CHECK(back == w);
}

TEST_CASE("the journal alone reproduces every snapshot") {
  const auto c = store_config(11);
  const auto dir = test::scratch_dir("replay");
  fresh_run(c, dir);
  const auto store = RunStore::open(dir);
  const auto events = store.read_events();
  for (int t = 0; t <= 8; ++t) {
    CAPTURE(t);
    CHECK(replay_events(events, t, c.seed, "main", c.history_cap) == store.read_snapshot(t));
  }
  CHECK_THROWS_AS(replay_events({}, 0, 0, "main", 5), Error);
}

TEST_CASE("resuming after a crash equals an uninterrupted run") {
  const auto c = store_config(13);
  const auto full_dir = test::scratch_dir("full");
  fresh_run(c, full_dir);

  const auto cut_dir = test::scratch_dir("cut");
  fs::copy(full_dir, cut_dir, fs::copy_options::recursive);
  // Crash after writing step 6 output but before its snapshot.
  {
    auto store = RunStore::open(cut_dir);
    store.truncate_after(6);
    fs::remove(cut_dir / "snapshots" / RunStore::snapshot_name(6));
  }
  const auto resumed = resume_run(cut_dir, std::make_shared<MockBrain>(c.brain.mock));
  CHECK(resumed.world.timestep == 8);
  for (const char* name : {"events.jsonl", "metrics.csv", "probe.csv"}) {
    CAPTURE(name);
    CHECK(test::slurp(cut_dir / name) == test::slurp(full_dir / name));
  }
  for (int t = 0; t <= 8; ++t) {
    const auto f = RunStore::snapshot_name(t);
    CHECK(test::slurp(cut_dir / "snapshots" / f) == test::slurp(full_dir / "snapshots" / f));
  }
}

TEST_CASE("truncation and prefix copies") {
  const auto c = store_config(17);
  const auto dir = test::scratch_dir("source");
  fresh_run(c, dir);
  const auto source = RunStore::open(dir);

  const auto dst_dir = test::scratch_dir("prefix");
  auto dst = RunStore::create(dst_dir, c);
  dst.copy_prefix(source, 5);
  CHECK(dst.snapshot_times() == std::vector<int>{5});
  CHECK(dst.read_snapshot(5) == source.read_snapshot(5));
  const auto metrics = dst.read_metrics();
  CHECK(metrics.size() == 6);
  CHECK(metrics.back() == source.read_metrics()[5]);
  for (const auto& e : dst.read_events()) CHECK(e.t <= 5);

  auto copy = RunStore::open(dst_dir);
  copy.truncate_after(2);
  CHECK(copy.read_metrics().size() == 3);
  CHECK(copy.snapshot_times().empty());
  for (const auto& e : copy.read_events()) CHECK(e.t <= 2);
}

TEST_CASE("missing and corrupt snapshots name the last good one") {
  const auto c = store_config(19);
  const auto dir = test::scratch_dir("corrupt");
  fresh_run(c, dir);
  const auto store = RunStore::open(dir);
  write_file_atomic(dir / "snapshots" / RunStore::snapshot_name(4), "{ not json");
  try {
    (void)store.read_snapshot(4);
    FAIL("expected SnapshotError");
  } catch (const SnapshotError& e) {
    CHECK(e.last_good() == 3);
  }
  fs::remove(dir / "snapshots" / RunStore::snapshot_name(6));
  try {
    (void)store.read_snapshot(6);
    FAIL("expected SnapshotError");
  } catch (const SnapshotError& e) {
    CHECK(e.last_good() == 5);
  }
  try {
    (void)store.read_snapshot(0);
  } catch (...) {
    FAIL("snapshot 0 is intact");
  }
  const auto dst = RunStore::create(test::scratch_dir("corrupt_copy"), c);
  auto target = RunStore::open(dst.dir());
  CHECK_THROWS_AS(target.copy_prefix(store, 6), SnapshotError);
}

TEST_CASE("exports") {
  const auto c = store_config(23);
  const auto dir = test::scratch_dir("exports");
  fresh_run(c, dir);

  auto paths = export_run(dir, ExportKind::Metrics);
  REQUIRE(paths.size() == 1);
  CHECK(test::slurp(paths[0]) == test::slurp(dir / "metrics.csv"));

  paths = export_run(dir, ExportKind::Edges);
  const auto edges = test::slurp(paths.at(0));
  CHECK(edges.starts_with("0,"));
  CHECK(edges.find("\n8,") != std::string::npos);

  paths = export_run(dir, ExportKind::Distributions);
  CHECK(paths.size() == 9);
  const auto d0 = nlohmann::json::parse(test::slurp(paths[0]));
  CHECK(d0.at("t") == 0);
  CHECK(d0.at("s_pol").get<double>() == doctest::Approx(0.8));

  paths = export_run(dir, ExportKind::Transition);
  const auto transition = test::slurp(paths.at(0));
  CHECK(std::count(transition.begin(), transition.end(), '\n') == 5);

  paths = export_run(dir, ExportKind::Svg);
  CHECK(paths.size() == 4);
  for (const auto& p : paths) CHECK(test::slurp(p).starts_with("<svg"));

  CHECK(parse_export_kind("edges") == ExportKind::Edges);
  CHECK_FALSE(parse_export_kind("pdf"));

  const auto empty = test::scratch_dir("empty_export");
  RunStore::create(empty, c);
  CHECK_THROWS_AS(export_run(empty, ExportKind::Edges), Error);
}

TEST_CASE("event lines carry a running sequence number") {
  const Event e{3, "update", "update", {{"agent", 1}}};
  const auto j = nlohmann::json::parse(event_to_line(e, 42));
  CHECK(j.at("seq") == 42);
  CHECK(j.at("t") == 3);
  CHECK(j.at("kind") == "update");
}
