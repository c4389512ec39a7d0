#include <doctest.h>

#include <set>

#include "polarsim/experiments.hpp"
#include "support.hpp"

using namespace polarsim;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> lines_up_to(const fs::path& path, int t, bool csv) {
  std::vector<std::string> out;
  std::istringstream in(test::slurp(path));
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (csv && first) {
      out.push_back(line);
      first = false;
      continue;
    }
    const int label = csv ? std::stoi(line.substr(0, line.find(','))) : nlohmann::json::parse(line).at("t").get<int>();
    if (label <= t) out.push_back(line);
  }
  return out;
}

std::vector<std::string> all_lines(const fs::path& path) { return lines_up_to(path, 1 << 30, false); }

fs::path base_run(const std::string& name, std::uint64_t seed, int steps = 12) {
  const auto dir = test::scratch_dir(name);
  auto c = test::small_config(seed, 60, steps);
  c.probe_interval = 2;
  run_simulation(c, dir, std::make_shared<MockBrain>(c.brain.mock));
  return dir;
}

}  // namespace

TEST_CASE("pairwise evaluation with a consistent mock is the identity") {
  PairwiseEvalSpec spec;
  spec.cohort = 40;
  spec.seed = 3;
  MockBrain brain(spec.brain.mock);
  const auto r = run_pairwise_eval(spec, brain);
  for (std::size_t k = 0; k < Opinion::kLevels; ++k) {
    CHECK(r.kept[k] + r.dropped[k] == 20);
    CHECK(r.counts[k][k] == r.kept[k]);
    CHECK(r.transition.rows()[k][k] == doctest::Approx(1.0));
  }
  CHECK(r.s_si == doctest::Approx(0.0));
  const auto rep = pairwise_report(spec, r);
  CHECK(rep.json.at("experiment") == "pairwise");
  CHECK(rep.json.at("s_si") == 0.0);
  CHECK(rep.markdown.find("s_si = 0.000000") != std::string::npos);

  spec.cohort = 7;
  CHECK_THROWS_AS(run_pairwise_eval(spec, brain), ConfigError);
}

TEST_CASE("pairwise evaluation is reproducible and counts regulation") {
  PairwiseEvalSpec spec;
  spec.cohort = 200;
  spec.seed = 5;
  spec.brain.mock.eps_right = 0.4;
  spec.self_regulation = true;
  spec.max_retries = 2;
  MockBrain brain(spec.brain.mock);
  const auto a = run_pairwise_eval(spec, brain);
  spec.workers = 4;
  const auto b = run_pairwise_eval(spec, brain);
  CHECK(a.counts == b.counts);
  CHECK(a.regenerations == b.regenerations);
  CHECK(a.calls[0] == 1000);
  CHECK(a.calls[2] > 0);
  CHECK(a.regenerated[2] > 0);
  std::size_t histogram_total = 0;
  for (const auto& [retries, calls] : a.retry_histogram) {
    CHECK(retries >= 0);
    CHECK(retries <= 3);
    histogram_total += calls;
  }
  CHECK(histogram_total == a.calls[2]);
  // Left-camp rows never jump.
  CHECK(a.counts[0][0] == a.kept[0]);
  CHECK(a.counts[1][1] == a.kept[1]);
}

TEST_CASE("forked control branch reproduces the base run") {
  const auto base = base_run("fork_base", 41);
  const auto cfg = RunStore::open(base).load_config();
  const auto br = fork_branch(base, 5, 10, cfg, "control", "main", std::make_shared<MockBrain>(cfg.brain.mock),
                              test::scratch_dir("fork_control"));
  CHECK(br.final_world == RunStore::open(base).read_snapshot(10));
  CHECK(all_lines(br.dir / "events.jsonl") == lines_up_to(base / "events.jsonl", 10, false));
  CHECK(lines_up_to(br.dir / "metrics.csv", 99, true) == lines_up_to(base / "metrics.csv", 10, true));
  // Probe rows up to t=9 were produced before snapshot 10.
  CHECK(lines_up_to(br.dir / "probe.csv", 99, true) == lines_up_to(base / "probe.csv", 9, true));

  // A relabelled branch diverges.
  const auto other = fork_branch(base, 5, 10, cfg, "x", "main/x", std::make_shared<MockBrain>(cfg.brain.mock),
                                 test::scratch_dir("fork_other"));
  CHECK_FALSE(other.final_world == br.final_world);
  CHECK(other.final_world.branch == "main/x");

  // Rerunning into a finished branch reuses it; a different config is refused.
  const auto again = fork_branch(base, 5, 10, cfg, "control", "main", std::make_shared<MockBrain>(cfg.brain.mock),
                                 br.dir);
  CHECK(again.final_world == br.final_world);
  auto changed = cfg;
  changed.interventions.push_back({Strategy::RandomInteraction, 5, 10, 0});
  CHECK_THROWS_AS(fork_branch(base, 5, 10, changed, "control", "main", std::make_shared<MockBrain>(cfg.brain.mock),
                              br.dir),
                  Error);
  CHECK_THROWS_AS(fork_branch(base, 5, 5, cfg, "c", "main", std::make_shared<MockBrain>(cfg.brain.mock),
                              test::scratch_dir("fork_empty")),
                  ConfigError);
  fs::remove(base / "snapshots" / RunStore::snapshot_name(4));
  CHECK_THROWS_AS(fork_branch(base, 4, 8, cfg, "c", "main", std::make_shared<MockBrain>(cfg.brain.mock),
                              test::scratch_dir("fork_missing")),
                  SnapshotError);
}

TEST_CASE("intervention experiment layout and comparisons") {
  const auto base = base_run("iv_base", 43);
  InterventionOptions opt;
  opt.from = 6;
  opt.to = 10;
  const std::vector<Strategy> strategies{Strategy::RandomInteraction, Strategy::ModerateOpposing,
                                         Strategy::NoSelectiveExposure, Strategy::NoConfirmationBias,
                                         Strategy::NeutralElite};
  const auto r = run_intervention_experiment(base, strategies, opt);
  CHECK(r.dir == base / "branches" / "6-10");
  CHECK(fs::exists(r.dir / "control" / "events.jsonl"));
  REQUIRE(r.treatments.size() == strategies.size());
  REQUIRE(r.comparisons.size() == strategies.size());
  for (std::size_t i = 0; i < strategies.size(); ++i) {
    CHECK(r.treatments[i].name == to_string(strategies[i]));
    CHECK(r.treatments[i].dir == r.dir / std::string(to_string(strategies[i])));
    CHECK(r.treatments[i].label == "main/" + std::string(to_string(strategies[i])));
    const auto& c = r.comparisons[i];
    std::size_t moved = 0;
    for (const auto& [k, v] : c.directions) moved += v;
    CHECK(moved == 60);
    CHECK(c.s_pol_control == doctest::Approx(polarization_level(r.control.final_world.opinions())));
  }
  CHECK(r.control.final_world == RunStore::open(base).read_snapshot(10));

  // Moderate opposing routing lets no like-minded delivery through.
  const auto moi = count_interactions(RunStore::open(r.treatments[1].dir).read_events(), 6, 10);
  CHECK(moi.total > 0);
  CHECK(moi.homophilic == 0);

  const auto rep = intervention_report(r, 6, 10);
  CHECK(rep.json.at("treatments").size() == strategies.size());
  CHECK(rep.markdown.find("| MOI |") != std::string::npos);
  write_report(r.dir, rep);
  CHECK(fs::exists(r.dir / "report.json"));
  CHECK(fs::exists(r.dir / "report.md"));
}

TEST_CASE("open-mindedness study branches") {
  const auto base = base_run("om_base", 47);
  InterventionOptions opt;
  opt.from = 6;
  opt.to = 9;
  const auto r = run_openmindedness(base, opt);
  for (std::size_t i = 0; i < 4; ++i) CHECK(r.branches[i].dir == r.dir / (i == 0 ? "control" : kOpenMindBranches[i]));
  CHECK(r.study_asked == 60);
  CHECK(r.study_accepted == 60);
  for (const auto& a : r.branches[2].final_world.agents) CHECK(a.dispositions.contains(DispositionKind::OpenMindedness));
  for (const auto& a : r.branches[0].final_world.agents) {
    CHECK_FALSE(a.dispositions.contains(DispositionKind::OpenMindedness));
  }
  const auto rep = openmind_report(r, 6, 9);
  CHECK(rep.json.at("study").at("acceptance_rate") == 1.0);
  CHECK(rep.json.at("branches").size() == 4);
}

TEST_CASE("interaction counting and change directions") {
  std::vector<Event> ev{
      {1, "communication", "delivery", {{"sender_opinion", 2}, {"receiver_opinion", 1}}},
      {2, "communication", "delivery", {{"sender_opinion", -1}, {"receiver_opinion", 1}}},
      {2, "communication", "delivery", {{"sender_opinion", 0}, {"receiver_opinion", 0}}},
      {2, "communication", "delivery", {{"sender_opinion", 0}, {"receiver_opinion", 2}, {"influencer", true}}},
      {3, "communication", "delivery", {{"sender_opinion", -2}, {"receiver_opinion", -2}}},
      {3, "update", "update", {{"agent", 0}}},
  };
  const auto c = count_interactions(ev, 1, 3);
  CHECK(c.total == 3);
  CHECK(c.homophilic == 1);
  CHECK(count_interactions(ev, 0, 3).homophilic == 2);

  const std::vector<Opinion> before{Opinion(2), Opinion(1), Opinion(-1), Opinion(0), Opinion(0)};
  const std::vector<Opinion> after{Opinion(1), Opinion(-1), Opinion(-2), Opinion(0), Opinion(1)};
  const auto d = change_directions(before, after);
  CHECK(d.at("toward_neutral") == 1);
  CHECK(d.at("crossed") == 1);
  CHECK(d.at("away_from_neutral") == 2);
  CHECK(d.at("unchanged") == 1);
  CHECK_THROWS_AS(change_directions(before, std::vector<Opinion>{}), Error);
}

TEST_CASE("elite conditions and tail polarization") {
  CHECK(elite_influencers(EliteCondition::None).empty());
  CHECK(elite_influencers(EliteCondition::Neutral).size() == 2);
  CHECK(elite_influencers(EliteCondition::Extreme)[1].opinion == 2);
  CHECK(elite_influencers(EliteCondition::Moderate)[0].opinion == -1);
  CHECK(to_string(EliteCondition::Moderate) == "moderate");

  std::vector<MetricsRow> rows(8);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].s_pol = static_cast<double>(i);
  CHECK(tail_polarization(rows) == doctest::Approx((3.0 + 4 + 5 + 6 + 7) / 5));
  rows.resize(2);
  CHECK(tail_polarization(rows) == doctest::Approx(0.5));
  CHECK_THROWS_AS(tail_polarization({}), Error);
}

TEST_CASE("mechanism and elite sweeps") {
  auto base = test::small_config(1, 40, 6);
  SweepOptions opt;
  opt.n_agents = 40;
  opt.seeds = {1, 2, 3};
  const auto dir = test::scratch_dir("sweep");
  const auto sweep = run_mechanism_sweep(base, DispositionKind::ConfirmationBias, {0.0, 0.5, 1.0}, dir, opt);
  CHECK(sweep.mechanism == to_string(DispositionKind::ConfirmationBias));
  REQUIRE(sweep.points.size() == 3);
  for (const auto& p : sweep.points) {
    CHECK(p.per_seed.size() == 3);
    CHECK(p.stat.n == 3);
    CHECK(p.stat.defined);
    CHECK(p.runs.size() == 3);
    for (const auto& r : p.runs) CHECK(fs::exists(r / "metrics.csv"));
  }
  CHECK(sweep.points[1].fraction == 0.5);
  const auto rep = sweep_report(sweep);
  CHECK(rep.json.at("points").size() == 3);
  CHECK_THROWS_AS(run_mechanism_sweep(base, DispositionKind::ConfirmationBias, {1.5}, test::scratch_dir("bad"), opt),
                  ConfigError);

  opt.seeds = {4};
  const auto elite = run_elite_sweep(base, {EliteCondition::None, EliteCondition::Extreme}, test::scratch_dir("elite"),
                                     opt);
  REQUIRE(elite.points.size() == 2);
  CHECK(elite.points[1].label == "extreme");
  CHECK_FALSE(elite.points[1].stat.defined);
  const auto cfg = RunStore::open(elite.points[1].runs[0]).load_config();
  CHECK(cfg.influencers.size() == 2);
}

TEST_CASE("network ablation runs every mode and seed") {
  auto base = test::small_config(1, 40, 5);
  const auto runs = run_network_ablation(base, {NetworkMode::Adaptive, NetworkMode::Static, NetworkMode::Random},
                                         {7, 8}, test::scratch_dir("ablation"));
  REQUIRE(runs.size() == 6);
  for (const auto& r : runs) {
    CHECK(r.dominant_share >= 0.0);
    CHECK(r.dominant_share <= 1.0);
    CHECK(fs::exists(r.dir / "events.jsonl"));
  }
  const auto static_run = RunStore::open(runs[2].dir);
  CHECK(static_run.read_snapshot(5).graph == static_run.read_snapshot(0).graph);
  const auto rep = ablation_report(runs);
  CHECK(rep.json.at("runs").size() == 6);
  CHECK(rep.json.at("runs")[4].at("mode") == "random");
}

TEST_CASE("perception summary and probe log round-trip") {
  const auto base = base_run("probe_base", 53, 5);
  const auto rows = read_probe_csv(base / "probe.csv");
  REQUIRE_FALSE(rows.empty());
  std::set<int> times;
  for (const auto& r : rows) times.insert(r.t);
  CHECK(times == std::set<int>{0, 2, 4});

  const auto summary = summarize_probe(rows, 60);
  for (const auto& [t, classes] : summary.by_time) {
    // The mock rates its own camp 5, the opposite camp 1 and across the neutral line 3.
    if (classes.count("opposing")) CHECK(classes.at("opposing").mean_rating == doctest::Approx(1.0));
    CHECK(classes.at("similar").mean_rating > classes.at("neutral").mean_rating - 1e-12);
  }
  CHECK(summary.adjectives.at("similar").at("a1") > 0);

  const auto cfg = RunStore::open(base).load_config();
  Engine engine(cfg, std::make_shared<MockBrain>(cfg.brain.mock));
  const auto w = RunStore::open(base).read_snapshot(4);
  auto live = run_perception_probe(engine, w);
  std::vector<ProbeRow> logged;
  for (const auto& r : rows) {
    if (r.t == 4) logged.push_back(r);
  }
  REQUIRE(live.size() == logged.size());
  for (std::size_t i = 0; i < live.size(); ++i) {
    CHECK(live[i].rater == logged[i].rater);
    CHECK(live[i].rating == logged[i].rating);
    CHECK(live[i].target_class == logged[i].target_class);
    CHECK(live[i].adjectives == logged[i].adjectives);
  }
  const auto rep = perception_report(summary);
  CHECK(rep.json.at("by_time").size() == 3);
  CHECK(rep.markdown.find("a1 (") != std::string::npos);
}
