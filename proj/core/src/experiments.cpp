#include "polarsim/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace polarsim {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kPairReason = 1;
constexpr std::uint64_t kPairShuffle = 2;
constexpr std::uint64_t kPairPersuade = 3;
constexpr std::uint64_t kPairUpdate = 4;

std::string fixed(double v, int digits = 4) {
  if (!std::isfinite(v)) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

nlohmann::json metrics_json(const std::vector<MetricsRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back({{"t", r.t},
                   {"s_pol", r.s_pol},
                   {"homophilic", r.homophilic},
                   {"heterophilic", r.heterophilic},
                   {"neutral_involved", r.neutral_involved},
                   {"modularity", r.modularity},
                   {"assortativity", r.assortativity},
                   {"homophily_index", r.homophily_index},
                   {"change_rate_edges", r.change_rate_edges},
                   {"change_rate_opinions", r.change_rate_opinions}});
  }
  return out;
}

nlohmann::json stat_json(const GroupStat& s) {
  return {{"n", s.n}, {"mean", s.mean}, {"sd", s.sd}, {"ci_low", s.ci_low}, {"ci_high", s.ci_high},
          {"defined", s.defined}};
}

std::string label_of_fraction(double f) { return format_double(f); }

}  // namespace

void write_report(const fs::path& dir, const ExperimentReport& report) {
  write_file_atomic(dir / "report.json", report.json.dump(2) + "\n");
  write_file_atomic(dir / "report.md", report.markdown);
}

// ---------------------------------------------------------------------------
// Pairwise

void validate(const PairwiseEvalSpec& spec) {
  if (spec.cohort < 2 || spec.cohort % 2 != 0) throw ConfigError("cohort", "must be even and at least 2");
  if (spec.max_retries < 0) throw ConfigError("max_retries", "must be >= 0");
  if (spec.workers < 1) throw ConfigError("workers", "must be >= 1");
}

PairwiseResult run_pairwise_eval(const PairwiseEvalSpec& spec, Brain& brain) {
  validate(spec);
  PairwiseResult r;
  const auto& issue = spec.issue;
  const std::size_t pairs = spec.cohort / 2;
  const int retries = spec.max_retries;

  auto context = [&](std::size_t k, Stage stage, std::uint64_t purpose, std::size_t agent) {
    CallContext ctx;
    ctx.rng_key = derive_key({spec.seed, label_hash("pairwise"), k, purpose, agent});
    ctx.sample_key = "pairwise/o" + std::to_string(Opinion::from_index(k).value()) + "/" +
                     std::string(to_string(stage)) + "/" + std::to_string(agent);
    return ctx;
  };

  for (std::size_t k = 0; k < Opinion::kLevels; ++k) {
    const Opinion o = Opinion::from_index(k);

    std::vector<std::optional<std::string>> reasons(spec.cohort);
    std::vector<RegulationOutcome> expr_reg(spec.cohort);
    parallel_for(spec.cohort, spec.workers, [&](std::size_t i) {
      const AgentView self{static_cast<AgentId>(i), o, {}, {}};
      const auto base = context(k, Stage::Expression, kPairReason, i);
      auto generate = [&](int a) { return brain.express(self, issue, base.with_attempt(a)); };
      auto check = [&](const std::string& text, int a) {
        return brain.check_expression(self, text, issue, base.with_attempt(a));
      };
      reasons[i] = spec.self_regulation ? self_regulate<std::string>(retries, generate, check, &expr_reg[i])
                                        : generate(0);
    });

    std::vector<std::size_t> order(spec.cohort);
    std::iota(order.begin(), order.end(), std::size_t{0});
    RandomStream(derive_key({spec.seed, label_hash("pairwise"), k, kPairShuffle})).shuffle(std::span(order));

    struct PairOut {
      std::optional<Opinion> post;
      RegulationOutcome persuade_reg;
      RegulationOutcome update_reg;
      bool persuade_called = false;
      bool update_called = false;
      bool update_regulated = false;
    };
    std::vector<PairOut> out(pairs);
    parallel_for(pairs, spec.workers, [&](std::size_t p) {
      const auto a = order[2 * p];
      const auto b = order[2 * p + 1];
      if (!reasons[a] || !reasons[b]) return;
      const AgentView sender{static_cast<AgentId>(a), o, *reasons[a], {}};
      const AgentView receiver{static_cast<AgentId>(b), o, *reasons[b], {}};

      const auto pbase = context(k, Stage::Persuasion, kPairPersuade, a);
      auto gen_msg = [&](int at) { return brain.persuade(sender, receiver, {}, issue, pbase.with_attempt(at)); };
      auto check_msg = [&](const PersuasionResult& m, int at) -> std::optional<bool> {
        if (!m.will) return true;
        return brain.check_persuasion(sender, m.message, issue, pbase.with_attempt(at));
      };
      out[p].persuade_called = true;
      const auto msg = spec.self_regulation
                           ? self_regulate<PersuasionResult>(retries, gen_msg, check_msg, &out[p].persuade_reg)
                           : gen_msg(0);
      if (!msg || !msg->will || msg->message.empty()) return;

      const std::vector<Message> inbox{{sender.id, msg->message, o, 0}};
      const auto ubase = context(k, Stage::Update, kPairUpdate, b);
      auto gen_upd = [&](int at) { return brain.update_opinion(receiver, inbox, issue, ubase.with_attempt(at)); };
      auto check_upd = [&](const UpdateResult& u, int at) -> std::optional<bool> {
        if (u.opinion == o) return true;
        out[p].update_regulated = true;
        return brain.check_update(receiver, inbox, u, issue, ubase.with_attempt(at));
      };
      out[p].update_called = true;
      const auto upd = spec.self_regulation
                           ? self_regulate<UpdateResult>(retries, gen_upd, check_upd, &out[p].update_reg)
                           : gen_upd(0);
      if (upd) out[p].post = upd->opinion;
    });

    auto tally = [&](std::size_t stage, const RegulationOutcome& reg) {
      ++r.calls[stage];
      r.regenerations[stage] += static_cast<std::size_t>(reg.regenerations);
      if (reg.regenerations > 0) ++r.regenerated[stage];
      if (reg.exhausted) ++r.exhausted[stage];
    };
    if (spec.self_regulation) {
      for (const auto& reg : expr_reg) tally(0, reg);
    }
    for (const auto& po : out) {
      if (po.post) {
        ++r.counts[k][po.post->index()];
        ++r.kept[k];
      } else {
        ++r.dropped[k];
      }
      if (!spec.self_regulation) continue;
      if (po.persuade_called) tally(1, po.persuade_reg);
      if (po.update_called) {
        tally(2, po.update_reg);
        ++r.retry_histogram[po.update_reg.regenerations];
      }
    }
  }
  r.transition = TransitionMatrix::from_counts(r.counts);
  r.s_si = self_inconsistency_rate(r.transition);
  return r;
}

ExperimentReport pairwise_report(const PairwiseEvalSpec& spec, const PairwiseResult& r) {
  ExperimentReport rep;
  auto& j = rep.json;
  j["experiment"] = "pairwise";
  j["config"] = {{"issue", spec.issue.key},
                 {"cohort", spec.cohort},
                 {"self_regulation", spec.self_regulation},
                 {"max_retries", spec.max_retries},
                 {"temperature", spec.temperature},
                 {"seed", spec.seed}};
  j["transition"] = r.transition.rows();
  j["counts"] = r.counts;
  j["s_si"] = r.s_si;
  j["kept"] = r.kept;
  j["dropped"] = r.dropped;
  j["empty_rows"] = r.transition.empty_rows();
  nlohmann::json stages = nlohmann::json::object();
  for (std::size_t s = 0; s < kPairwiseStages.size(); ++s) {
    const double freq = r.calls[s] ? static_cast<double>(r.regenerated[s]) / static_cast<double>(r.calls[s]) : 0.0;
    const double mean_retries =
        r.regenerated[s] ? static_cast<double>(r.regenerations[s]) / static_cast<double>(r.regenerated[s]) : 0.0;
    stages[std::string(to_string(kPairwiseStages[s]))] = {{"calls", r.calls[s]},
                                                          {"regenerated", r.regenerated[s]},
                                                          {"regenerations", r.regenerations[s]},
                                                          {"exhausted", r.exhausted[s]},
                                                          {"inconsistency_frequency", freq},
                                                          {"mean_retries", mean_retries}};
  }
  j["self_regulation"] = stages;
  nlohmann::json hist = nlohmann::json::object();
  for (const auto& [k, v] : r.retry_histogram) hist[std::to_string(k)] = v;
  j["update_retry_histogram"] = hist;

  std::ostringstream md;
  md << "# Pairwise evaluation: " << spec.issue.name << "\n\n";
  md << "Cohort " << spec.cohort << " per opinion, self-regulation " << (spec.self_regulation ? "on" : "off")
     << ", seed " << spec.seed << ".\n\n";
  md << "| from \\ to | -2 | -1 | 0 | 1 | 2 | kept | dropped |\n|---|---|---|---|---|---|---|---|\n";
  for (std::size_t k = 0; k < Opinion::kLevels; ++k) {
    md << "| " << Opinion::from_index(k).value();
    for (double v : r.transition.rows()[k]) md << " | " << fixed(v);
    md << " | " << r.kept[k] << " | " << r.dropped[k] << " |\n";
  }
  md << "\ns_si = " << fixed(r.s_si, 6) << "\n";
  if (spec.self_regulation) {
    md << "\n| stage | calls | regenerated | regenerations | exhausted |\n|---|---|---|---|---|\n";
    for (std::size_t s = 0; s < kPairwiseStages.size(); ++s) {
      md << "| " << to_string(kPairwiseStages[s]) << " | " << r.calls[s] << " | " << r.regenerated[s] << " | "
         << r.regenerations[s] << " | " << r.exhausted[s] << " |\n";
    }
  }
  rep.markdown = md.str();
  return rep;
}

// ---------------------------------------------------------------------------
// Forking

BranchResult fork_branch(const fs::path& base_run, int from, int to, SimulationConfig config, const std::string& name,
                         const std::string& label, std::shared_ptr<Brain> brain, const fs::path& out_dir) {
  if (to <= from) throw ConfigError("to", "must be after the fork point");
  config.n_timesteps = to;
  const auto base = RunStore::open(base_run);

  BranchResult br;
  br.name = name;
  br.label = label;
  br.dir = out_dir;

  // A finished branch with the same configuration is deterministic: reuse it.
  if (fs::exists(out_dir / "config.toml")) {
    if (read_file(out_dir / "config.toml") != to_toml(config)) {
      throw Error("branch " + out_dir.string() + " exists with a different configuration");
    }
    auto store = RunStore::open(out_dir);
    if (store.last_snapshot() == to) {
      br.final_world = store.read_snapshot(to);
      br.metrics = store.read_metrics();
      return br;
    }
    auto result = resume_run(out_dir, std::move(brain));
    br.final_world = std::move(result.world);
    br.metrics = std::move(result.metrics);
    return br;
  }

  auto world = base.read_snapshot(from);
  world.branch = label;
  auto store = RunStore::create(out_dir, config);
  store.copy_prefix(base, from);
  store.write_snapshot(world);
  const Engine engine(config, std::move(brain));
  auto result = continue_run(store, engine, std::move(world), to);
  br.final_world = std::move(result.world);
  br.metrics = std::move(result.metrics);
  return br;
}

InteractionCounts count_interactions(const std::vector<Event>& events, int from, int to) {
  InteractionCounts c;
  for (const auto& e : events) {
    if (e.kind != "delivery" || e.t <= from || e.t > to) continue;
    if (e.payload.value("influencer", false)) continue;
    const auto s = camp_of(Opinion(e.payload.at("sender_opinion").get<int>()));
    const auto r = camp_of(Opinion(e.payload.at("receiver_opinion").get<int>()));
    ++c.total;
    if (s == r && s != Camp::Neutral) ++c.homophilic;
  }
  return c;
}

std::map<std::string, std::size_t> change_directions(std::span<const Opinion> before, std::span<const Opinion> after) {
  if (before.size() != after.size()) throw Error("opinion vectors differ in length");
  std::map<std::string, std::size_t> out{
      {"unchanged", 0}, {"toward_neutral", 0}, {"away_from_neutral", 0}, {"crossed", 0}};
  for (std::size_t i = 0; i < before.size(); ++i) {
    const int a = before[i].value();
    const int b = after[i].value();
    if (a == b) {
      ++out["unchanged"];
    } else if (a * b < 0) {
      ++out["crossed"];
    } else if (std::abs(b) < std::abs(a)) {
      ++out["toward_neutral"];
    } else {
      ++out["away_from_neutral"];
    }
  }
  return out;
}

StrategyComparison compare_branches(const BranchResult& control, const BranchResult& treatment, int from, int to,
                                    const WorldState& at_fork) {
  StrategyComparison c;
  c.name = treatment.name;
  const auto ctrl_op = control.final_world.opinions();
  const auto trt_op = treatment.final_world.opinions();
  c.s_pol_control = polarization_level(ctrl_op);
  c.s_pol_treatment = polarization_level(trt_op);

  const auto ci = count_interactions(RunStore::open(control.dir).read_events(), from, to);
  const auto ti = count_interactions(RunStore::open(treatment.dir).read_events(), from, to);
  auto share = [](const InteractionCounts& x) {
    return x.total ? static_cast<double>(x.homophilic) / static_cast<double>(x.total) : 0.0;
  };
  c.homophilic_control = share(ci);
  c.homophilic_treatment = share(ti);
  c.homophilic_test = two_proportion_z_test(ti.homophilic, ti.total, ci.homophilic, ci.total);

  std::vector<double> a;
  std::vector<double> b;
  for (auto o : trt_op) a.push_back(o.magnitude());
  for (auto o : ctrl_op) b.push_back(o.magnitude());
  c.s_pol_test = welch_t_test(a, b);

  const auto fork_op = at_fork.opinions();
  c.directions = change_directions(fork_op, trt_op);
  c.final_distribution = distribution_of(trt_op);
  return c;
}

namespace {

fs::path branches_dir(const fs::path& base_run, int from, int to) {
  return base_run / "branches" / (std::to_string(from) + "-" + std::to_string(to));
}

struct ForkSetup {
  SimulationConfig config;
  WorldState at_fork;
  std::shared_ptr<Brain> brain;
};

ForkSetup prepare_fork(const fs::path& base_run, const InterventionOptions& opt) {
  if (opt.from < 0 || opt.to <= opt.from) throw ConfigError("from", "need 0 <= from < to");
  const auto store = RunStore::open(base_run);
  ForkSetup f;
  f.config = store.load_config();
  f.at_fork = store.read_snapshot(opt.from);
  f.brain = make_run_brain(f.config, base_run, opt.transport);
  return f;
}

BranchResult control_branch(const fs::path& base_run, const ForkSetup& f, const InterventionOptions& opt) {
  return fork_branch(base_run, opt.from, opt.to, f.config, "control", f.at_fork.branch, f.brain,
                     branches_dir(base_run, opt.from, opt.to) / "control");
}

BranchResult treatment_branch(const fs::path& base_run, const ForkSetup& f, const InterventionOptions& opt,
                              const std::string& name, const std::vector<Strategy>& strategies) {
  auto config = f.config;
  for (auto s : strategies) {
    InterventionSpec iv;
    iv.strategy = s;
    iv.start_t = opt.from;
    iv.end_t = opt.to;
    iv.influencer_opinion = opt.influencer_opinion;
    config.interventions.push_back(iv);
  }
  return fork_branch(base_run, opt.from, opt.to, config, name, f.at_fork.branch + "/" + name, f.brain,
                     branches_dir(base_run, opt.from, opt.to) / name);
}

std::string distribution_cells(const OpinionDistribution& d) {
  std::string s;
  for (double v : d.frequencies()) s += " | " + fixed(v, 3);
  return s;
}

}  // namespace

InterventionResult run_intervention_experiment(const fs::path& base_run, const std::vector<Strategy>& strategies,
                                               const InterventionOptions& opt) {
  const auto f = prepare_fork(base_run, opt);
  InterventionResult r;
  r.dir = branches_dir(base_run, opt.from, opt.to);
  r.control = control_branch(base_run, f, opt);
  for (auto s : strategies) {
    r.treatments.push_back(treatment_branch(base_run, f, opt, std::string(to_string(s)), {s}));
    r.comparisons.push_back(compare_branches(r.control, r.treatments.back(), opt.from, opt.to, f.at_fork));
  }
  return r;
}

ExperimentReport intervention_report(const InterventionResult& r, int from, int to) {
  ExperimentReport rep;
  auto& j = rep.json;
  j["experiment"] = "intervention";
  j["from"] = from;
  j["to"] = to;
  j["config"] = read_file(r.control.dir / "config.toml");
  j["control"] = {{"dir", r.control.dir.string()}, {"label", r.control.label}, {"metrics", metrics_json(r.control.metrics)}};
  nlohmann::json treatments = nlohmann::json::array();
  for (std::size_t i = 0; i < r.treatments.size(); ++i) {
    const auto& b = r.treatments[i];
    const auto& c = r.comparisons[i];
    treatments.push_back({
        {"strategy", c.name},
        {"dir", b.dir.string()},
        {"label", b.label},
        {"metrics", metrics_json(b.metrics)},
        {"s_pol_control", c.s_pol_control},
        {"s_pol_treatment", c.s_pol_treatment},
        {"delta_s_pol", c.delta_s_pol()},
        {"homophilic_control", c.homophilic_control},
        {"homophilic_treatment", c.homophilic_treatment},
        {"delta_homophilic", c.delta_homophilic()},
        {"t_test", {{"t", c.s_pol_test.t}, {"df", c.s_pol_test.df}, {"p", c.s_pol_test.p}, {"defined", c.s_pol_test.defined}}},
        {"z_test", {{"z", c.homophilic_test.z}, {"p", c.homophilic_test.p}, {"defined", c.homophilic_test.defined}}},
        {"change_direction", c.directions},
        {"final_distribution", c.final_distribution.frequencies()},
    });
  }
  j["treatments"] = treatments;

  std::ostringstream md;
  md << "# Interventions t=" << from << " to t=" << to << "\n\n";
  md << "| strategy | s_pol ctrl | s_pol treat | delta | t p | homophilic ctrl | homophilic treat | delta | z p |\n";
  md << "|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& c : r.comparisons) {
    md << "| " << c.name << " | " << fixed(c.s_pol_control) << " | " << fixed(c.s_pol_treatment) << " | "
       << fixed(c.delta_s_pol()) << " | " << fixed(c.s_pol_test.p) << " | " << fixed(c.homophilic_control) << " | "
       << fixed(c.homophilic_treatment) << " | " << fixed(c.delta_homophilic()) << " | " << fixed(c.homophilic_test.p)
       << " |\n";
  }
  md << "\n## Opinion change since the fork\n\n| strategy | unchanged | toward neutral | away from neutral | crossed |\n";
  md << "|---|---|---|---|---|\n";
  for (const auto& c : r.comparisons) {
    md << "| " << c.name << " | " << c.directions.at("unchanged") << " | " << c.directions.at("toward_neutral")
       << " | " << c.directions.at("away_from_neutral") << " | " << c.directions.at("crossed") << " |\n";
  }
  md << "\n## Final distributions\n\n| branch | -2 | -1 | 0 | 1 | 2 |\n|---|---|---|---|---|---|\n";
  md << "| control" << distribution_cells(distribution_of(r.control.final_world.opinions())) << " |\n";
  for (const auto& c : r.comparisons) md << "| " << c.name << distribution_cells(c.final_distribution) << " |\n";
  rep.markdown = md.str();
  return rep;
}

// ---------------------------------------------------------------------------
// Open-mindedness

OpenMindResult run_openmindedness(const fs::path& base_run, const InterventionOptions& opt) {
  const auto f = prepare_fork(base_run, opt);
  OpenMindResult r;
  r.dir = branches_dir(base_run, opt.from, opt.to);
  r.branches[0] = control_branch(base_run, f, opt);
  r.branches[0].name = kOpenMindBranches[0];
  r.branches[1] = treatment_branch(base_run, f, opt, kOpenMindBranches[1], {Strategy::OpposingExposure});
  r.branches[2] = treatment_branch(base_run, f, opt, kOpenMindBranches[2], {Strategy::OpenMindedness});
  r.branches[3] = treatment_branch(base_run, f, opt, kOpenMindBranches[3],
                                   {Strategy::OpenMindedness, Strategy::OpposingExposure});
  for (std::size_t i = 0; i < r.branches.size(); ++i) r.s_pol[i] = polarization_level(r.branches[i].final_world.opinions());
  // Acceptance of the study, read back from the Open branch's journal.
  for (const auto& e : RunStore::open(r.branches[2].dir).read_events()) {
    if (e.kind != "intervention" || !e.payload.contains("accept") || e.t <= opt.from) continue;
    ++r.study_asked;
    if (e.payload.at("accept").get<bool>()) ++r.study_accepted;
  }
  return r;
}

ExperimentReport openmind_report(const OpenMindResult& r, int from, int to) {
  ExperimentReport rep;
  auto& j = rep.json;
  j["experiment"] = "openmindedness";
  j["from"] = from;
  j["to"] = to;
  nlohmann::json branches = nlohmann::json::array();
  for (std::size_t i = 0; i < r.branches.size(); ++i) {
    branches.push_back({{"name", kOpenMindBranches[i]},
                        {"dir", r.branches[i].dir.string()},
                        {"s_pol", r.s_pol[i]},
                        {"metrics", metrics_json(r.branches[i].metrics)},
                        {"final_distribution", distribution_of(r.branches[i].final_world.opinions()).frequencies()}});
  }
  j["branches"] = branches;
  const double rate = r.study_asked ? static_cast<double>(r.study_accepted) / static_cast<double>(r.study_asked) : 0.0;
  j["study"] = {{"asked", r.study_asked}, {"accepted", r.study_accepted}, {"acceptance_rate", rate}};

  std::ostringstream md;
  md << "# Open-mindedness study t=" << from << " to t=" << to << "\n\n";
  md << "Study accepted by " << r.study_accepted << " of " << r.study_asked << " agents.\n\n";
  md << "| branch | s_pol | -2 | -1 | 0 | 1 | 2 |\n|---|---|---|---|---|---|---|\n";
  for (std::size_t i = 0; i < r.branches.size(); ++i) {
    md << "| " << kOpenMindBranches[i] << " | " << fixed(r.s_pol[i])
       << distribution_cells(distribution_of(r.branches[i].final_world.opinions())) << " |\n";
  }
  rep.markdown = md.str();
  return rep;
}

// ---------------------------------------------------------------------------
// Sweeps

std::string_view to_string(EliteCondition c) {
  switch (c) {
    case EliteCondition::None: return "none";
    case EliteCondition::Neutral: return "neutral";
    case EliteCondition::Moderate: return "moderate";
    case EliteCondition::Extreme: return "extreme";
  }
  return "?";
}

std::vector<InfluencerSpec> elite_influencers(EliteCondition c) {
  switch (c) {
    case EliteCondition::None: return {};
    case EliteCondition::Neutral: return {{0}, {0}};
    case EliteCondition::Moderate: return {{-1}, {1}};
    case EliteCondition::Extreme: return {{-2}, {2}};
  }
  return {};
}

double tail_polarization(const std::vector<MetricsRow>& metrics, std::size_t window) {
  if (metrics.empty()) throw Error("no metrics rows");
  const auto k = std::min(window, metrics.size());
  double sum = 0.0;
  for (std::size_t i = metrics.size() - k; i < metrics.size(); ++i) sum += metrics[i].s_pol;
  return sum / static_cast<double>(k);
}

namespace {

SweepPoint run_point(SimulationConfig config, const std::string& label, double fraction, const fs::path& dir,
                     const SweepOptions& opt) {
  SweepPoint p;
  p.label = label;
  p.fraction = fraction;
  config.n_agents = opt.n_agents;
  const auto seeds = opt.seeds.empty() ? std::vector<std::uint64_t>{config.seed} : opt.seeds;
  for (auto seed : seeds) {
    config.seed = seed;
    const auto run_dir = dir / ("seed" + std::to_string(seed));
    auto brain = make_run_brain(config, run_dir, opt.transport);
    const auto result = run_simulation(config, run_dir, std::move(brain));
    p.per_seed.push_back(tail_polarization(result.metrics));
    p.runs.push_back(run_dir);
  }
  p.stat = group_stat(p.per_seed);
  return p;
}

}  // namespace

SweepResult run_mechanism_sweep(const SimulationConfig& base, DispositionKind kind, const std::vector<double>& fractions,
                                const fs::path& out_dir, const SweepOptions& opt) {
  SweepResult r;
  r.mechanism = std::string(to_string(kind));
  for (double f : fractions) {
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("fractions", "must lie in [0, 1]");
  }
  for (double f : fractions) {
    auto config = base;
    config.dispositions.push_back({kind, f});
    const auto label = r.mechanism + "=" + label_of_fraction(f);
    r.points.push_back(run_point(config, label, f, out_dir / "runs" / (r.mechanism + "_" + label_of_fraction(f)), opt));
  }
  return r;
}

SweepResult run_elite_sweep(const SimulationConfig& base, const std::vector<EliteCondition>& conditions,
                            const fs::path& out_dir, const SweepOptions& opt) {
  SweepResult r;
  r.mechanism = "elite";
  for (auto c : conditions) {
    auto config = base;
    for (const auto& inf : elite_influencers(c)) config.influencers.push_back(inf);
    const std::string label(to_string(c));
    r.points.push_back(run_point(config, label, 0.0, out_dir / "runs" / ("elite_" + label), opt));
  }
  return r;
}

ExperimentReport sweep_report(const SweepResult& r) {
  ExperimentReport rep;
  rep.json["experiment"] = "mechanism";
  rep.json["mechanism"] = r.mechanism;
  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : r.points) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& d : p.runs) runs.push_back(d.string());
    points.push_back({{"label", p.label},
                      {"fraction", p.fraction},
                      {"tail_s_pol", p.per_seed},
                      {"stat", stat_json(p.stat)},
                      {"runs", runs}});
  }
  rep.json["points"] = points;

  std::ostringstream md;
  md << "# Mechanism sweep: " << r.mechanism << "\n\nMean s_pol over the last five timesteps.\n\n";
  md << "| condition | seeds | mean | 95% CI |\n|---|---|---|---|\n";
  for (const auto& p : r.points) {
    md << "| " << p.label << " | " << p.stat.n << " | " << fixed(p.stat.mean) << " | "
       << (p.stat.defined ? "[" + fixed(p.stat.ci_low) + ", " + fixed(p.stat.ci_high) + "]" : std::string("n/a"))
       << " |\n";
  }
  rep.markdown = md.str();
  return rep;
}

// ---------------------------------------------------------------------------
// Ablations

std::vector<AblationRun> run_network_ablation(const SimulationConfig& base, const std::vector<NetworkMode>& modes,
                                              const std::vector<std::uint64_t>& seeds, const fs::path& out_dir,
                                              std::shared_ptr<Transport> transport) {
  static constexpr std::array<const char*, 3> kNames{"adaptive", "static", "random"};
  std::vector<AblationRun> runs;
  for (auto mode : modes) {
    for (auto seed : seeds) {
      auto config = base;
      config.network_mode = mode;
      config.seed = seed;
      AblationRun a;
      a.mode = mode;
      a.seed = seed;
      a.dir = out_dir / "runs" / (std::string(kNames[static_cast<std::size_t>(mode)]) + "_seed" + std::to_string(seed));
      const auto result = run_simulation(config, a.dir, make_run_brain(config, a.dir, transport));
      const auto opinions = result.world.opinions();
      a.dominant_share = dominant_camp_share(opinions);
      a.s_pol = polarization_level(opinions);
      runs.push_back(a);
    }
  }
  return runs;
}

ExperimentReport ablation_report(const std::vector<AblationRun>& runs) {
  static constexpr std::array<const char*, 3> kNames{"adaptive", "static", "random"};
  ExperimentReport rep;
  rep.json["experiment"] = "network_ablation";
  nlohmann::json rows = nlohmann::json::array();
  std::ostringstream md;
  md << "# Network ablation\n\n| mode | seed | dominant camp share | s_pol |\n|---|---|---|---|\n";
  for (const auto& a : runs) {
    const char* mode = kNames[static_cast<std::size_t>(a.mode)];
    rows.push_back({{"mode", mode}, {"seed", a.seed}, {"dominant_share", a.dominant_share}, {"s_pol", a.s_pol},
                    {"dir", a.dir.string()}});
    md << "| " << mode << " | " << a.seed << " | " << fixed(a.dominant_share) << " | " << fixed(a.s_pol) << " |\n";
  }
  rep.json["runs"] = rows;
  rep.markdown = md.str();
  return rep;
}

// ---------------------------------------------------------------------------
// Perception

std::vector<ProbeRow> run_perception_probe(const Engine& engine, const WorldState& world) {
  return engine.probe(world, world.timestep);
}

PerceptionSummary summarize_probe(const std::vector<ProbeRow>& rows, std::size_t n_agents) {
  PerceptionSummary s;
  std::map<int, std::size_t> per_time;
  for (const auto& r : rows) {
    auto& cell = s.by_time[r.t][r.target_class];
    cell.mean_rating += (r.rating - cell.mean_rating) / static_cast<double>(++cell.rows);
    for (const auto& a : r.adjectives) ++s.adjectives[r.target_class][a];
    ++per_time[r.t];
  }
  for (const auto& [t, count] : per_time) s.skipped[t] = 3 * n_agents - std::min(3 * n_agents, count);
  return s;
}

std::vector<ProbeRow> read_probe_csv(const fs::path& path) {
  std::vector<ProbeRow> rows;
  std::ifstream in(path);
  if (!in) throw Error("probe log " + path.string() + " missing");
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 5) throw Error("malformed probe row: " + line);
    ProbeRow r;
    r.t = std::stoi(f[0]);
    r.rater = std::stoi(f[1]);
    r.target_class = f[2];
    r.rating = std::stoi(f[3]);
    std::stringstream as(f[4]);
    std::string adj;
    while (std::getline(as, adj, '|')) {
      if (!adj.empty()) r.adjectives.push_back(adj);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

ExperimentReport perception_report(const PerceptionSummary& s) {
  ExperimentReport rep;
  auto& j = rep.json;
  j["experiment"] = "perception";
  nlohmann::json times = nlohmann::json::array();
  std::ostringstream md;
  md << "# Perception probe\n\n| t | class | rows | mean rating |\n|---|---|---|---|\n";
  for (const auto& [t, classes] : s.by_time) {
    nlohmann::json cells = nlohmann::json::object();
    for (const auto& [cls, cell] : classes) {
      cells[cls] = {{"rows", cell.rows}, {"mean_rating", cell.mean_rating}};
      md << "| " << t << " | " << cls << " | " << cell.rows << " | " << fixed(cell.mean_rating, 3) << " |\n";
    }
    times.push_back({{"t", t}, {"classes", cells}, {"skipped", s.skipped.count(t) ? s.skipped.at(t) : 0}});
  }
  j["by_time"] = times;
  j["adjectives"] = s.adjectives;
  md << "\n## Most frequent adjectives\n\n";
  for (const auto& [cls, counts] : s.adjectives) {
    std::vector<std::pair<std::string, std::size_t>> v(counts.begin(), counts.end());
    std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    md << "- " << cls << ":";
    for (std::size_t i = 0; i < std::min<std::size_t>(5, v.size()); ++i) {
      md << (i ? ", " : " ") << v[i].first << " (" << v[i].second << ")";
    }
    md << "\n";
  }
  rep.markdown = md.str();
  return rep;
}

}  // namespace polarsim
