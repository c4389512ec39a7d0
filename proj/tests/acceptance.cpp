// Acceptance run: one line per criterion, nonzero exit if any fails.
// Expected constants come from tests/oracles/*.py.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>

#include "polarsim/experiments.hpp"
#include "polarsim/prompts.hpp"
#include "support.hpp"

using namespace polarsim;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::shared_ptr<Brain> mock_of(const SimulationConfig& c) { return std::make_shared<MockBrain>(c.brain.mock); }

SimulationConfig emergence_config(std::uint64_t seed) {
  SimulationConfig c;
  c.n_agents = 100;
  c.n_timesteps = 40;
  c.seed = seed;
  c.brain.mock = *mock_preset("homophilic");
  return c;
}

TransitionMatrix::Rows mixed_uniform(double eps) {
  TransitionMatrix::Rows p{};
  for (std::size_t a = 0; a < 5; ++a) {
    for (std::size_t b = 0; b < 5; ++b) p[a][b] = (1.0 - eps) * (a == b ? 1.0 : 0.0) + eps / 5.0;
  }
  return p;
}

// ---------------------------------------------------------------------------

Verdict metric_exactness() {
  std::vector<std::string> bad;
  const double s_pol = polarization_level(OpinionDistribution::paper_default());
  if (std::abs(s_pol - 0.8) > 1e-12) bad.push_back(fmt("s_pol=%.17g", s_pol));
  const double s_id = self_inconsistency_rate(TransitionMatrix());
  if (s_id != 0.0) bad.push_back(fmt("s_si(I)=%.17g", s_id));
  for (double eps : {0.1, 0.2, 0.5}) {
    const double v = self_inconsistency_rate(TransitionMatrix(mixed_uniform(eps)));
    if (std::abs(v - 1.6 * eps) > 1e-12) bad.push_back(fmt("s_si(eps=%g)=%.17g", eps, v));
  }
  if (!bad.empty()) {
    std::string d;
    for (const auto& b : bad) d += b + " ";
    return {false, d};
  }
  return {true, "s_pol=0.8, s_si(I)=0, s_si(mix)=1.6*eps for eps in {0.1,0.2,0.5}"};
}

Verdict oracle_graphs() {
  const auto doc = nlohmann::json::parse(test::slurp(test::data_path("graph_cases.json")));
  std::size_t cases = 0, mismatches = 0;
  double worst = 0.0;
  auto cmp = [&](double got, double want) {
    const double d = std::abs(got - want);
    worst = std::max(worst, d);
    if (d > 1e-12) ++mismatches;
  };
  for (const auto& j : doc) {
    ++cases;
    SocialGraph g(j.at("n").get<std::size_t>());
    for (const auto& e : j.at("edges")) g.add_edge(e[0].get<int>(), e[1].get<int>());
    std::vector<Opinion> ops;
    for (const auto& o : j.at("opinions")) ops.emplace_back(o.get<int>());
    std::vector<InteractionRecord> recs;
    int k = 0;
    for (const auto& r : j.at("records")) {
      recs.push_back({1, k, Opinion(r[0].get<int>()), k + 1, Opinion(r[1].get<int>())});
      ++k;
    }
    cmp(modularity_by_camp(g, ops), j.at("modularity").get<double>());
    const auto a = assortativity(g, ops);
    if (j.at("assortativity").is_null()) {
      if (!a.degenerate) ++mismatches;
    } else {
      cmp(a.value, j.at("assortativity").get<double>());
    }
    if (j.at("homophily_index").is_null()) {
      try {
        (void)homophily_index(g, ops);
        ++mismatches;
      } catch (const Error&) {
      }
    } else {
      cmp(homophily_index(g, ops), j.at("homophily_index").get<double>());
    }
    const auto mix = interaction_mix(recs);
    if (mix.empty != j.at("mix").at("empty").get<bool>()) ++mismatches;
    cmp(mix.homophilic, j.at("mix").at("homophilic").get<double>());
    cmp(mix.heterophilic, j.at("mix").at("heterophilic").get<double>());
    cmp(mix.neutral_involved, j.at("mix").at("neutral_involved").get<double>());
    const auto echo = echo_chamber_joint(g, ops);
    if (echo.isolated != j.at("echo_isolated").get<std::size_t>()) ++mismatches;
    for (std::size_t r = 0; r < 5; ++r) {
      for (std::size_t c = 0; c < 5; ++c) cmp(echo.density[r][c], j.at("echo_density")[r][c].get<double>());
    }
  }
  return {cases == 50 && mismatches == 0,
          fmt("%zu cases, %zu mismatches, max |diff| %.3g", cases, mismatches, worst)};
}

Verdict pairwise_protocol() {
  PairwiseEvalSpec spec;
  spec.cohort = 200;
  spec.seed = 1;
  MockBrain clean(spec.brain.mock);
  const auto zero = run_pairwise_eval(spec, clean);
  bool identity = true;
  for (std::size_t k = 0; k < 5; ++k) {
    identity = identity && zero.kept[k] == 100;
    for (std::size_t j = 0; j < 5; ++j) identity = identity && zero.transition.rows()[k][j] == (k == j ? 1.0 : 0.0);
  }

  spec.cohort = 10000;
  spec.brain.mock.eps_right = 0.2;
  spec.brain.mock.eps_left = 0.0;
  MockBrain leaky(spec.brain.mock);
  const auto one = run_pairwise_eval(spec, leaky);
  const auto& rows = one.transition.rows();
  bool left_exact = true;
  for (std::size_t k = 0; k < 2; ++k) left_exact = left_exact && rows[k][k] == 1.0 && one.kept[k] == 5000;
  const double leak_p1 = 1.0 - rows[3][3];
  const double leak_p2 = 1.0 - rows[4][4];
  const bool right_ok = std::abs(leak_p1 - 0.2) <= 0.02 && std::abs(leak_p2 - 0.2) <= 0.02 && one.kept[3] == 5000 &&
                        one.kept[4] == 5000;
  return {identity && left_exact && right_ok,
          fmt("eps=0 identity %s; eps_R=0.2: leak(+1)=%.4f leak(+2)=%.4f, rows -2,-1 identity %s",
              identity ? "yes" : "no", leak_p1, leak_p2, left_exact ? "yes" : "no")};
}

Verdict self_regulation() {
  PairwiseEvalSpec spec;
  spec.cohort = 4000;
  spec.seed = 2;
  spec.max_retries = 10;
  auto eval = [&](double eps_l, double eps_r, bool wrapped) {
    spec.brain.mock.eps_left = eps_l;
    spec.brain.mock.eps_right = eps_r;
    spec.self_regulation = wrapped;
    MockBrain brain(spec.brain.mock);
    return run_pairwise_eval(spec, brain).s_si;
  };
  const double one_sided_raw = eval(0.0, 0.2, false);
  const double one_sided_wrapped = eval(0.0, 0.2, true);
  const double both_raw = eval(0.2, 0.2, false);
  const double both_wrapped = eval(0.2, 0.2, true);
  // Off-diagonal jumps at rate 0.2 in every row: 0.2 * 40 / (4 * 5).
  const double analytic_jumps = 0.4;
  const double analytic_mix = 1.6 * 0.2;
  const bool pass = one_sided_wrapped < 0.02 && both_wrapped < 0.02 && std::abs(both_raw - analytic_jumps) < 0.03 &&
                    one_sided_raw > 0.15;
  return {pass, fmt("eps_R=0.2: s_si %.4f unwrapped -> %.4f wrapped; eps=0.2 both camps: %.4f (analytic %.2f) -> "
                    "%.4f; full-U mixing analytic %.2f",
                    one_sided_raw, one_sided_wrapped, both_raw, analytic_jumps, both_wrapped, analytic_mix)};
}

Verdict emergence(const fs::path& scratch) {
  int homophilic = 0, modular = 0, polarized = 0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto c = emergence_config(seed);
    const auto r = run_simulation(c, scratch / ("seed" + std::to_string(seed)), mock_of(c));
    const auto& m = r.metrics;
    homophilic += m[40].homophilic > m[1].homophilic;
    modular += m[40].modularity > m[0].modularity;
    polarized += m[40].s_pol > m[0].s_pol;
    per_seed += fmt(" [%llu: hom %.2f->%.2f, Q %.2f->%.2f, s_pol %.2f->%.2f]", static_cast<unsigned long long>(seed),
                    m[1].homophilic, m[40].homophilic, m[0].modularity, m[40].modularity, m[0].s_pol, m[40].s_pol);
  }
  return {homophilic >= 9 && modular >= 9 && polarized >= 9,
          fmt("homophilic share up %d/10, modularity up %d/10, s_pol up %d/10;", homophilic, modular, polarized) +
              per_seed};
}

std::string lines_through(const fs::path& path, int t) {
  std::istringstream in(test::slurp(path));
  std::string line, out;
  while (std::getline(in, line)) {
    if (nlohmann::json::parse(line).at("t").get<int>() <= t) out += line + "\n";
  }
  return out;
}

Verdict intervention_harness(const fs::path& scratch) {
  const auto c = emergence_config(101);
  const auto base = scratch / "base";
  run_simulation(c, base, mock_of(c));
  InterventionOptions opt;
  opt.from = 35;
  opt.to = 40;
  const auto r = run_intervention_experiment(base, {Strategy::RandomInteraction, Strategy::ModerateOpposing}, opt);

  // (a) control branch against the uninterrupted base run.
  const bool control_same = test::slurp(r.control.dir / "events.jsonl") == lines_through(base / "events.jsonl", 40) &&
                            test::slurp(r.control.dir / "metrics.csv") == test::slurp(base / "metrics.csv") &&
                            r.control.final_world == RunStore::open(base).read_snapshot(40);

  // (b) RI homophilic share against random mixing. Each sender i with d_i
  // contacts draws d_i distinct recipients uniformly from the other n - 1
  // agents, so its expected same-camp share is (n_c - 1) / (n - 1).
  const auto ri_store = RunStore::open(r.treatments[0].dir);
  double expected_hits = 0.0, expected_total = 0.0, sum_p2 = 0.0;
  for (int s = opt.from; s < opt.to; ++s) {
    const auto w = ri_store.read_snapshot(s);
    const auto n = static_cast<double>(w.agents.size());
    std::array<double, 3> camp_size{};
    for (const auto& a : w.agents) camp_size[static_cast<std::size_t>(sign_of(camp_of(a.opinion)) + 1)] += 1;
    if (s == opt.from) sum_p2 = (camp_size[0] * camp_size[0] + camp_size[2] * camp_size[2]) / (n * n);
    for (const auto& a : w.agents) {
      const auto d = static_cast<double>(w.graph.out_degree(a.id));
      expected_total += d;
      const int camp = sign_of(camp_of(a.opinion));
      if (camp != 0) expected_hits += d * (camp_size[static_cast<std::size_t>(camp + 1)] - 1) / (n - 1);
    }
  }
  const double null_share = expected_hits / expected_total;
  const auto ri = count_interactions(ri_store.read_events(), opt.from, opt.to);
  const double ri_share = static_cast<double>(ri.homophilic) / static_cast<double>(ri.total);
  const bool ri_ok = ri.total > 0 && std::abs(ri_share - null_share) <= 0.05 &&
                     static_cast<double>(ri.total) == expected_total;

  // (c) exhaustive MOI audit.
  std::size_t audited = 0, violations = 0;
  for (const auto& e : RunStore::open(r.treatments[1].dir).read_events()) {
    if (e.kind != "delivery" || e.t <= opt.from || e.t > opt.to || e.payload.value("influencer", false)) continue;
    ++audited;
    const Opinion so(e.payload.at("sender_opinion").get<int>());
    const Opinion ro(e.payload.at("receiver_opinion").get<int>());
    const bool opposite = ro.value() == 0 || sign_of(camp_of(so)) == -sign_of(camp_of(ro));
    if (so.magnitude() != 1 || !opposite) ++violations;
  }
  const bool moi_ok = audited > 0 && violations == 0;
  return {control_same && ri_ok && moi_ok,
          fmt("control identical %s; RI share %.4f vs null %.4f (sum p_c^2 %.4f) over %zu messages; MOI %zu "
              "deliveries audited, %zu violations",
              control_same ? "yes" : "no", ri_share, null_share, sum_p2, ri.total, audited, violations)};
}

Verdict determinism(const fs::path& scratch) {
  // Mock: two executions and a resume.
  auto c = emergence_config(7);
  c.probe_interval = 5;
  c.interventions.push_back({Strategy::NeutralElite, 20, 25, 0});
  run_simulation(c, scratch / "a", mock_of(c));
  c.workers = 4;
  run_simulation(c, scratch / "b", mock_of(c));
  bool same = true;
  for (const char* f : {"metrics.csv", "events.jsonl", "probe.csv"}) {
    same = same && test::slurp(scratch / "a" / f) == test::slurp(scratch / "b" / f);
  }
  fs::copy(scratch / "a", scratch / "resumed", fs::copy_options::recursive);
  {
    auto store = RunStore::open(scratch / "resumed");
    store.truncate_after(23);
    // A partial step 23 -> 24 left on disk without its snapshot.
    const auto events = RunStore::open(scratch / "a").read_events();
    std::vector<Event> partial;
    for (const auto& e : events) {
      if (e.t == 24 && partial.size() < 50) partial.push_back(e);
    }
    store.append_events(partial);
  }
  resume_run(scratch / "resumed", mock_of(c));
  bool resumed = true;
  for (const char* f : {"metrics.csv", "events.jsonl", "probe.csv"}) {
    resumed = resumed && test::slurp(scratch / "a" / f) == test::slurp(scratch / "resumed" / f);
  }

  // LLM brain: live run through a scripted endpoint, then an offline replay.
  SimulationConfig l;
  l.n_agents = 16;
  l.n_timesteps = 3;
  l.seed = 5;
  l.self_regulation = true;
  l.max_retries = 2;
  l.probe_interval = 2;
  l.brain.kind = BrainKind::Llm;
  l.brain.llm.model = "scripted";
  l.brain.llm.cache_dir = (scratch / "llm_cache").string();
  l.brain.llm.requests_per_minute = 100000;  // the scripted endpoint has no quota
  auto live_transport = std::make_shared<test::ScriptedModel>(l.issue);
  run_simulation(l, scratch / "llm_live", make_run_brain(l, scratch / "llm_live", live_transport));
  auto offline = l;
  offline.brain.llm.cache_only = true;
  auto no_network = std::make_shared<test::NoNetwork>();
  run_simulation(offline, scratch / "llm_replay", make_run_brain(offline, scratch / "llm_replay", no_network));
  bool replay = live_transport->calls() > 0 && no_network->calls() == 0;
  for (const char* f : {"metrics.csv", "events.jsonl", "probe.csv"}) {
    replay = replay && test::slurp(scratch / "llm_live" / f) == test::slurp(scratch / "llm_replay" / f);
  }
  return {same && resumed && replay,
          fmt("mock reruns identical %s; resume identical %s; LLM replay identical %s with %zu live calls and %zu "
              "replay network calls",
              same ? "yes" : "no", resumed ? "yes" : "no", replay ? "yes" : "no", live_transport->calls(),
              no_network->calls())};
}

Verdict prompt_fidelity() {
  const auto cases = nlohmann::json::parse(test::slurp(test::data_path("golden/cases.json")));
  auto msgs = [](const nlohmann::json& texts) {
    std::vector<Message> out;
    int sender = 10;
    for (const auto& t : texts) out.push_back({sender++, t.get<std::string>(), Opinion(0), 0});
    return out;
  };
  auto traits = [](const nlohmann::json& names) {
    std::vector<DispositionKind> out;
    for (const auto& n : names) out.push_back(*parse_disposition_kind(n.get<std::string>()));
    return out;
  };
  std::size_t compared = 0, matched = 0;
  std::string first_miss;
  for (const auto& c : cases) {
    const int no = c.at("case").get<int>();
    const auto issue = builtin_issue(c.at("issue").get<std::string>());
    const Opinion self(c.at("self").get<int>());
    const Opinion partner(c.at("partner").get<int>());
    const std::string sr = c.at("self_reason");
    const std::string pr = c.at("partner_reason");
    const auto history = msgs(c.at("history"));
    const auto inbox = msgs(c.at("inbox"));
    const std::vector<std::pair<std::string, std::string>> rendered{
        {"expression", render_expression_prompt(issue, self)},
        {"decision", render_decision_prompt(issue, self, sr, partner, pr, traits(c.at("decision_traits")))},
        {"persuasion", render_persuasion_prompt(issue, sr, history, pr)},
        {"update", render_update_prompt(issue, self, sr, inbox, traits(c.at("update_traits")))},
        {"perception", render_perception_prompt(issue, self, sr, partner, pr)},
        {"check_expression", render_check_expression_prompt(issue, self, sr)},
        {"check_persuasion", render_check_persuasion_prompt(issue, self, pr)},
        {"check_update", render_check_update_prompt(issue, self, partner, sr, inbox)},
    };
    for (const auto& [stage, text] : rendered) {
      ++compared;
      const auto golden = test::slurp(test::data_path("golden/" + stage + "_" + std::to_string(no) + ".txt"));
      if (text == golden) {
        ++matched;
      } else if (first_miss.empty()) {
        first_miss = stage + "_" + std::to_string(no);
      }
    }
  }
  return {compared == 40 && matched == compared,
          fmt("%zu/%zu prompts byte-identical (5 stages + 3 checks x 5 cases)", matched, compared) +
              (first_miss.empty() ? "" : ", first mismatch " + first_miss)};
}

Verdict ablation(const fs::path& scratch) {
  auto base = emergence_config(0);
  base.brain.mock.eps_right = 0.2;
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 1; s <= 10; ++s) seeds.push_back(s);
  const auto runs = run_network_ablation(base, {NetworkMode::Static, NetworkMode::Random}, seeds, scratch);
  int static_dominant = 0, random_dominant = 0;
  double static_min = 1.0, random_min = 1.0;
  for (const auto& r : runs) {
    const bool dom = r.dominant_share > 0.6;
    if (r.mode == NetworkMode::Static) {
      static_dominant += dom;
      static_min = std::min(static_min, r.dominant_share);
    } else {
      random_dominant += dom;
      random_min = std::min(random_min, r.dominant_share);
    }
  }
  return {runs.size() == 20 && static_dominant >= 9 && random_dominant >= 9,
          fmt("%zu runs; dominance > 0.6 in static %d/10 (min %.2f), random %d/10 (min %.2f)", runs.size(),
              static_dominant, static_min, random_dominant, random_min)};
}

}  // namespace

int main() {
  const fs::path scratch(POLARSIM_SCRATCH);
  fs::remove_all(scratch);
  fs::create_directories(scratch);

  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Verdict()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "metric exactness", 1, metric_exactness},
      {2, "oracle equivalence on small graphs", 10, oracle_graphs},
      {3, "pairwise protocol", 30, pairwise_protocol},
      {4, "self-regulation efficacy", 60, self_regulation},
      {5, "emergence property run", 300, [&] { return emergence(scratch / "c5"); }},
      {6, "intervention harness", 300, [&] { return intervention_harness(scratch / "c6"); }},
      {7, "determinism and replay", 300, [&] { return determinism(scratch / "c7"); }},
      {8, "prompt fidelity", 10, prompt_fidelity},
      {9, "network ablations", 300, [&] { return ablation(scratch / "c9"); }},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_budget = secs < c.budget_s;
    const bool pass = v.pass && in_budget;
    failed += !pass;
    std::cout << "[PRIMARY] criterion " << c.id << " " << c.name << ": " << (pass ? "PASS" : "FAIL") << " ("
              << v.detail << "; " << fmt("%.2f s of %.0f s budget", secs, c.budget_s) << ")" << std::endl;
  }
  std::cout << (failed ? "acceptance: FAIL" : "acceptance: PASS") << " (" << 9 - failed << "/9)" << std::endl;
  return failed ? 1 : 0;
}
