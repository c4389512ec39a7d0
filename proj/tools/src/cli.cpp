#include "polarsim/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <ostream>

#include <CLI11.hpp>

#include "polarsim/experiments.hpp"
#include "polarsim/runstore.hpp"

namespace polarsim::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config;
  std::string run_dir;
  std::string out;
  std::optional<std::uint64_t> seed;
  // run
  bool resume = false;
  // pairwise
  std::size_t cohort = 100;
  // intervene / openmind
  std::vector<std::string> strategies;
  int from = 35;
  int to = 40;
  int influencer_opinion = 0;
  // mechanisms
  std::string kind;
  bool elite = false;
  std::vector<std::string> ablation;
  std::vector<double> fractions{0.0, 0.5, 1.0};
  std::vector<std::uint64_t> seeds;
  std::size_t n_agents = 100;
  // export
  std::string what = "all";
};

SimulationConfig load(const Options& o) {
  if (o.config.empty()) throw ConfigError("--config", "required");
  auto c = load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  return c;
}

fs::path default_dir(const Options& o, const SimulationConfig& c, const std::string& what) {
  if (!o.out.empty()) return o.out;
  if (!o.run_dir.empty()) return o.run_dir;
  return fs::path("runs") / (fs::path(o.config).stem().string() + "-" + what + "-seed" + std::to_string(c.seed));
}

fs::path require_run_dir(const Options& o) {
  if (o.run_dir.empty()) throw ConfigError("--run-dir", "required");
  return o.run_dir;
}

std::string joined(const std::vector<std::string>& v, char sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? std::string(1, sep) : "") + v[i];
  return s;
}

fs::path cmd_run(const Options& o) {
  if (o.resume) {
    const auto dir = require_run_dir(o);
    auto store = RunStore::open(dir);
    resume_run(dir, make_run_brain(store.load_config(), dir));
    return dir;
  }
  const auto c = load(o);
  const auto dir = default_dir(o, c, "run");
  run_simulation(c, dir, make_run_brain(c, dir));
  return dir;
}

fs::path cmd_validate(const Options& o) {
  load(o);
  return fs::path(o.config);
}

fs::path cmd_pairwise(const Options& o) {
  const auto c = load(o);
  PairwiseEvalSpec spec;
  spec.issue = c.issue;
  spec.cohort = o.cohort;
  spec.brain = c.brain;
  spec.temperature = c.temperature;
  spec.self_regulation = c.self_regulation;
  spec.max_retries = c.max_retries;
  spec.seed = c.seed;
  spec.workers = c.brain.kind == BrainKind::Llm ? c.brain.llm.workers : c.workers;
  validate(spec);
  const auto dir = default_dir(o, c, "pairwise");
  if (fs::exists(dir) && !fs::is_empty(dir)) throw Error("output directory " + dir.string() + " is not empty");
  fs::create_directories(dir);
  std::shared_ptr<Brain> brain;
  if (c.brain.kind == BrainKind::Mock) {
    brain = std::make_shared<MockBrain>(c.brain.mock);
  } else {
    brain = make_brain(c.brain, c.temperature, make_llm_client(c.brain.llm, dir));
  }
  const auto result = run_pairwise_eval(spec, *brain);
  write_report(dir, pairwise_report(spec, result));
  return dir;
}

fs::path cmd_intervene(const Options& o) {
  const auto dir = require_run_dir(o);
  if (o.strategies.empty()) throw ConfigError("--strategy", "at least one strategy is required");
  std::vector<Strategy> strategies;
  for (const auto& s : o.strategies) {
    const auto parsed = parse_strategy(s);
    if (!parsed) throw ConfigError("--strategy", "unknown strategy '" + s + "'");
    strategies.push_back(*parsed);
  }
  InterventionOptions opt;
  opt.from = o.from;
  opt.to = o.to;
  opt.influencer_opinion = o.influencer_opinion;
  const auto result = run_intervention_experiment(dir, strategies, opt);
  const auto report_dir = dir / "reports" /
                          ("intervene-" + std::to_string(o.from) + "-" + std::to_string(o.to) + "-" +
                           joined(o.strategies, '_'));
  write_report(report_dir, intervention_report(result, o.from, o.to));
  return report_dir;
}

fs::path cmd_openmind(const Options& o) {
  const auto dir = require_run_dir(o);
  InterventionOptions opt;
  opt.from = o.from;
  opt.to = o.to;
  const auto result = run_openmindedness(dir, opt);
  const auto report_dir = dir / "reports" / ("openmind-" + std::to_string(o.from) + "-" + std::to_string(o.to));
  write_report(report_dir, openmind_report(result, o.from, o.to));
  return report_dir;
}

fs::path cmd_mechanisms(const Options& o) {
  const auto c = load(o);
  const auto dir = default_dir(o, c, "mechanisms");
  if (fs::exists(dir) && !fs::is_empty(dir)) throw Error("output directory " + dir.string() + " is not empty");
  SweepOptions opt;
  opt.n_agents = o.n_agents;
  opt.seeds = o.seeds;
  if (!o.ablation.empty()) {
    std::vector<NetworkMode> modes;
    for (const auto& m : o.ablation) {
      if (m == "adaptive") modes.push_back(NetworkMode::Adaptive);
      else if (m == "static") modes.push_back(NetworkMode::Static);
      else if (m == "random") modes.push_back(NetworkMode::Random);
      else throw ConfigError("--ablation", "unknown network mode '" + m + "'");
    }
    auto base = c;
    base.n_agents = o.n_agents;
    const auto seeds = o.seeds.empty() ? std::vector<std::uint64_t>{c.seed} : o.seeds;
    write_report(dir, ablation_report(run_network_ablation(base, modes, seeds, dir)));
    return dir;
  }
  if (o.elite) {
    const std::vector<EliteCondition> all{EliteCondition::None, EliteCondition::Neutral, EliteCondition::Moderate,
                                          EliteCondition::Extreme};
    write_report(dir, sweep_report(run_elite_sweep(c, all, dir, opt)));
    return dir;
  }
  if (o.kind.empty()) throw ConfigError("--kind", "give a disposition kind, --elite or --ablation");
  const auto kind = parse_disposition_kind(o.kind);
  if (!kind) throw ConfigError("--kind", "unknown disposition '" + o.kind + "'");
  write_report(dir, sweep_report(run_mechanism_sweep(c, *kind, o.fractions, dir, opt)));
  return dir;
}

fs::path cmd_perception(const Options& o) {
  fs::path dir;
  if (!o.run_dir.empty() && fs::exists(fs::path(o.run_dir) / "config.toml")) {
    dir = o.run_dir;
  } else {
    auto c = load(o);
    if (c.probe_interval == 0) c.probe_interval = 5;
    dir = default_dir(o, c, "perception");
    run_simulation(c, dir, make_run_brain(c, dir));
  }
  const auto store = RunStore::open(dir);
  const auto n = store.load_config().n_agents;
  const auto rows = read_probe_csv(dir / "probe.csv");
  const auto report_dir = dir / "reports" / "perception";
  write_report(report_dir, perception_report(summarize_probe(rows, n)));
  return report_dir;
}

fs::path cmd_export(const Options& o) {
  const auto dir = require_run_dir(o);
  std::vector<ExportKind> kinds;
  if (o.what == "all") {
    kinds = {ExportKind::Metrics, ExportKind::Edges, ExportKind::Distributions, ExportKind::Transition,
             ExportKind::Svg};
  } else {
    const auto k = parse_export_kind(o.what);
    if (!k) throw ConfigError("--what", "unknown export '" + o.what + "'");
    kinds = {*k};
  }
  for (auto k : kinds) export_run(dir, k);
  return dir / "exports";
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Opinion dynamics simulator for networked agents", "polarsim"};
  app.require_subcommand(1);
  Options o;

  auto add_config = [&](CLI::App* sub, bool with_run_dir) {
    sub->add_option("--config", o.config, "Simulation config (TOML)");
    if (with_run_dir) sub->add_option("--run-dir", o.run_dir, "Run directory");
    sub->add_option("--seed", o.seed, "Override the config seed");
  };

  auto* run = app.add_subcommand("run", "Run a simulation");
  add_config(run, true);
  run->add_flag("--resume", o.resume, "Continue the run in --run-dir from its last snapshot");

  auto* pairwise = app.add_subcommand("pairwise", "Pairwise bias evaluation");
  add_config(pairwise, false);
  pairwise->add_option("--cohort", o.cohort, "Agents per opinion (even)");
  pairwise->add_option("--out", o.out, "Output directory");

  auto* intervene = app.add_subcommand("intervene", "Fork a run and apply intervention strategies");
  intervene->add_option("--run-dir", o.run_dir, "Base run")->required();
  intervene->add_option("--strategy", o.strategies, "RI, MOI, NSE, NCB, NES, OpenMindedness or Oppose")->required();
  intervene->add_option("--from", o.from, "Fork timestep");
  intervene->add_option("--to", o.to, "Final timestep");
  intervene->add_option("--influencer-opinion", o.influencer_opinion, "Opinion broadcast under NES");

  auto* mechanisms = app.add_subcommand("mechanisms", "Disposition, elite and network sweeps");
  add_config(mechanisms, false);
  mechanisms->add_option("--kind", o.kind, "Disposition kind to sweep");
  mechanisms->add_flag("--elite", o.elite, "Sweep influencer conditions instead");
  mechanisms->add_option("--ablation", o.ablation, "Network modes to compare: adaptive, static, random")
      ->delimiter(',');
  mechanisms->add_option("--fractions", o.fractions, "Disposition fractions")->delimiter(',');
  mechanisms->add_option("--seeds", o.seeds, "Seeds per condition")->delimiter(',');
  mechanisms->add_option("--n-agents", o.n_agents, "Population size");
  mechanisms->add_option("--out", o.out, "Output directory");

  auto* openmind = app.add_subcommand("openmind", "Open-mindedness study on a run");
  openmind->add_option("--run-dir", o.run_dir, "Base run")->required();
  openmind->add_option("--from", o.from, "Fork timestep");
  openmind->add_option("--to", o.to, "Final timestep");

  auto* perception = app.add_subcommand("perception", "Perception probe report");
  add_config(perception, true);

  auto* exp = app.add_subcommand("export", "Export run data");
  exp->add_option("--run-dir", o.run_dir, "Run directory")->required();
  exp->add_option("--what", o.what, "metrics, edges, distributions, transition, svg or all");

  auto* val = app.add_subcommand("validate", "Check a config file");
  add_config(val, false);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInvalid;
  }

  try {
    fs::path produced;
    if (*run) produced = cmd_run(o);
    else if (*pairwise) produced = cmd_pairwise(o);
    else if (*intervene) produced = cmd_intervene(o);
    else if (*mechanisms) produced = cmd_mechanisms(o);
    else if (*openmind) produced = cmd_openmind(o);
    else if (*perception) produced = cmd_perception(o);
    else if (*exp) produced = cmd_export(o);
    else if (*val) produced = cmd_validate(o);
    out << produced.string() << "\n";
    return kOk;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailed;
  }
}

}  // namespace polarsim::cli
