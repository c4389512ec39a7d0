#include "polarsim/engine.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace polarsim {

namespace {

// Stream purposes. Values are part of the reproducibility contract.
enum Purpose : std::uint64_t {
  kInitOpinions = 1,
  kInitGraph = 2,
  kDispositions = 3,
  kExpression = 10,
  kDecision = 11,
  kRewire = 12,
  kPersuasion = 13,
  kRecipients = 14,
  kOnePartner = 15,
  kReplace = 16,
  kUpdate = 17,
  kProbe = 18,
  kStudy = 19,
  kInfluencer = 20,
};

constexpr std::size_t kExpr = 0;
constexpr std::size_t kDec = 1;
constexpr std::size_t kPers = 2;
constexpr std::size_t kUpd = 3;

AgentView view_of(const AgentState& a, DispositionSet d) { return {a.id, a.opinion, a.reason, d}; }

nlohmann::json message_payload(const Message& m, AgentId receiver, Opinion receiver_opinion) {
  return {{"sender", m.sender},
          {"receiver", receiver},
          {"sender_opinion", m.sender_opinion.value()},
          {"receiver_opinion", receiver_opinion.value()},
          {"text", m.text}};
}

struct Outgoing {
  AgentId sender = 0;
  AgentId receiver = 0;
  std::string text;
};

}  // namespace

std::vector<Opinion> WorldState::opinions() const {
  std::vector<Opinion> out;
  out.reserve(agents.size());
  for (const auto& a : agents) out.push_back(a.opinion);
  return out;
}

void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn) {
  const auto threads = static_cast<std::size_t>(std::max(1, workers));
  if (threads == 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&] {
    for (;;) {
      const auto i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
        next.store(count);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const auto n = std::min(threads, count);
  pool.reserve(n);
  for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

void assign_dispositions(std::vector<AgentState>& agents, DispositionKind kind, double fraction, RandomStream& rng) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw std::invalid_argument("disposition fraction must lie in [0, 1]");
  std::vector<std::size_t> idx(agents.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  rng.shuffle(std::span<std::size_t>(idx));
  const auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(agents.size())));
  for (std::size_t i = 0; i < take; ++i) agents[idx[i]].dispositions.insert(kind);
}

Engine::Engine(SimulationConfig config, std::shared_ptr<Brain> brain)
    : config_(std::move(config)), brain_(std::move(brain)) {
  validate(config_);
  if (!brain_) throw Error("engine needs a brain");
}

std::uint64_t Engine::stream_key(const WorldState& world, int step, std::uint64_t purpose, std::int64_t a,
                                 std::int64_t b) const {
  return derive_key({world.seed, label_hash(world.branch), static_cast<std::uint64_t>(step), purpose,
                     static_cast<std::uint64_t>(a), static_cast<std::uint64_t>(b)});
}

CallContext Engine::context(const WorldState& world, int step, Stage stage, std::uint64_t purpose, std::int64_t a,
                            std::int64_t b) const {
  CallContext ctx;
  ctx.timestep = step;
  ctx.attempt = 0;
  ctx.rng_key = stream_key(world, step, purpose, a, b);
  ctx.sample_key = world.branch + "/t" + std::to_string(step) + "/" + std::string(to_string(stage)) + "/" +
                   std::to_string(purpose) + "/" + std::to_string(a) + "/" + std::to_string(b);
  return ctx;
}

WorldState Engine::initialize() const {
  WorldState w;
  w.seed = config_.seed;
  w.timestep = 0;
  const auto n = config_.n_agents;
  auto opinion_rng = RandomStream(derive_key({config_.seed, label_hash("init"), kInitOpinions}));
  const auto opinions = config_.init_mode == InitMode::Iid
                            ? sample_iid_opinions(config_.init_opinions, n, opinion_rng)
                            : sample_initial_opinions(config_.init_opinions, n, opinion_rng);
  w.agents.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    w.agents[i].id = static_cast<AgentId>(i);
    w.agents[i].opinion = opinions[i];
  }
  auto graph_rng = RandomStream(derive_key({config_.seed, label_hash("init"), kInitGraph}));
  w.graph = make_initial_graph(config_.network, n, graph_rng);
  w.graph.clear_journal();
  for (std::size_t k = 0; k < config_.dispositions.size(); ++k) {
    auto rng = RandomStream(derive_key({config_.seed, label_hash("init"), kDispositions, k}));
    assign_dispositions(w.agents, config_.dispositions[k].kind, config_.dispositions[k].fraction, rng);
  }
  return w;
}

Event Engine::init_event(const WorldState& world) {
  nlohmann::json opinions = nlohmann::json::array();
  nlohmann::json dispositions = nlohmann::json::array();
  for (const auto& a : world.agents) {
    opinions.push_back(a.opinion.value());
    dispositions.push_back(a.dispositions.bits());
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [i, j] : world.graph.edges()) edges.push_back({i, j});
  return {world.timestep, "init", "init",
          {{"opinions", opinions}, {"dispositions", dispositions}, {"edges", edges}}};
}

ActiveInterventions Engine::active_at(int step) const {
  ActiveInterventions a;
  for (const auto& inf : config_.influencers) a.influencers.emplace_back(inf.opinion);
  a.random_interaction = config_.network_mode == NetworkMode::Random;
  for (const auto& iv : config_.interventions) {
    if (!iv.active_at(step)) continue;
    a.strategies.push_back(iv.strategy);
    switch (iv.strategy) {
      case Strategy::RandomInteraction: a.random_interaction = true; break;
      case Strategy::ModerateOpposing: a.moderate_opposing = true; break;
      case Strategy::NoSelectiveExposure: a.no_selective_exposure = true; break;
      case Strategy::NoConfirmationBias: a.no_confirmation_bias = true; break;
      case Strategy::NeutralElite: a.influencers.emplace_back(iv.influencer_opinion); break;
      case Strategy::OpenMindedness: a.study = a.study || step == iv.start_t; break;
      case Strategy::OpposingExposure: a.opposing_exposure = true; break;
    }
  }
  return a;
}

DispositionSet Engine::effective_dispositions(const AgentState& agent, const ActiveInterventions& active) const {
  DispositionSet d = agent.dispositions;
  if (active.no_selective_exposure) d.insert(DispositionKind::NoSelectiveExposure);
  if (active.no_confirmation_bias) d.insert(DispositionKind::NoConfirmationBias);
  return d;
}

std::vector<ProbeRow> Engine::probe(const WorldState& world, int t) const {
  const auto n = world.agents.size();
  std::array<std::vector<AgentId>, 3> by_camp;
  for (const auto& a : world.agents) by_camp[static_cast<std::size_t>(sign_of(camp_of(a.opinion)) + 1)].push_back(a.id);

  std::vector<std::vector<ProbeRow>> rows(n);
  parallel_for(n, config_.workers, [&](std::size_t i) {
    const auto& self = world.agents[i];
    const int own = sign_of(camp_of(self.opinion));
    RandomStream rng(stream_key(world, t, kProbe, static_cast<std::int64_t>(i)));
    const std::array<std::pair<const char*, int>, 3> classes = {
        std::pair{"similar", own}, std::pair{"opposing", -own}, std::pair{"neutral", 0}};
    for (const auto& [name, camp] : classes) {
      if (std::string_view(name) == "opposing" && own == 0) continue;
      const auto& pool = by_camp[static_cast<std::size_t>(camp + 1)];
      // Exclude the rater from its own class by drawing from pool minus self.
      const bool self_in_pool = camp == own;
      const std::size_t size = pool.size() - (self_in_pool ? 1 : 0);
      if (size == 0) continue;
      auto pick = static_cast<std::size_t>(rng.below(size));
      if (self_in_pool) {
        const auto pos = static_cast<std::size_t>(std::lower_bound(pool.begin(), pool.end(), self.id) - pool.begin());
        if (pick >= pos) ++pick;
      }
      const auto& target = world.agents[static_cast<std::size_t>(pool[pick])];
      auto ctx = context(world, t, Stage::Probe, kProbe, static_cast<std::int64_t>(i), target.id);
      auto imp = brain_->rate_impression(view_of(self, self.dispositions), view_of(target, target.dispositions),
                                         config_.issue, ctx);
      if (!imp) continue;
      rows[i].push_back({t, self.id, name, target.id, imp->rating, imp->adjectives});
    }
  });
  std::vector<ProbeRow> out;
  for (auto& r : rows) out.insert(out.end(), std::make_move_iterator(r.begin()), std::make_move_iterator(r.end()));
  return out;
}

StepReport Engine::step(WorldState& world) const {
  const int s = world.timestep;
  const int t = s + 1;
  const auto n = world.agents.size();
  const auto active = active_at(s);
  const bool regulate = config_.self_regulation;
  const int retries = config_.max_retries;
  const auto& issue = config_.issue;
  StepReport report;
  report.t = t;
  auto emit = [&](std::string stage, std::string kind, nlohmann::json payload) {
    report.events.push_back({t, std::move(stage), std::move(kind), std::move(payload)});
  };
  world.graph.clear_journal();

  for (auto strategy : active.strategies) {
    emit("intervention", "intervention", {{"strategy", std::string(to_string(strategy))}, {"step", s}});
  }

  // Open-mindedness study: accepted agents keep the trait for the rest of the run.
  if (active.study) {
    std::vector<std::optional<StudyResult>> results(n);
    parallel_for(n, config_.workers, [&](std::size_t i) {
      const auto& a = world.agents[i];
      results[i] = brain_->consider_study(view_of(a, a.dispositions), issue,
                                          context(world, s, Stage::Study, kStudy, static_cast<std::int64_t>(i)));
    });
    for (std::size_t i = 0; i < n; ++i) {
      ++report.study_asked;
      const bool accept = results[i] && results[i]->accept;
      if (accept) {
        ++report.study_accepted;
        world.agents[i].dispositions.insert(DispositionKind::OpenMindedness);
      }
      emit("study", "intervention",
           {{"strategy", "OpenMindedness"}, {"step", s}, {"agent", i}, {"accept", accept},
            {"theory", results[i] ? results[i]->theory : ""}});
    }
  }

  std::vector<DispositionSet> effective(n);
  for (std::size_t i = 0; i < n; ++i) effective[i] = effective_dispositions(world.agents[i], active);

  // ---- Stage 1: expression ------------------------------------------------
  {
    struct ExprOut {
      std::optional<std::string> reason;  // set when the reason changes
      RegulationOutcome reg;
      bool inactive = false;
    };
    std::vector<ExprOut> out(n);
    parallel_for(n, config_.workers, [&](std::size_t i) {
      const auto& a = world.agents[i];
      const auto self = view_of(a, effective[i]);
      const auto base = context(world, s, Stage::Expression, kExpression, static_cast<std::int64_t>(i));
      auto generate = [&](int attempt) { return brain_->express(self, issue, base.with_attempt(attempt)); };
      auto check = [&](const std::string& reason, int attempt) {
        return brain_->check_expression(self, reason, issue, base.with_attempt(attempt));
      };
      const bool fresh = s == 0 || a.reason.empty();
      if (fresh) {
        out[i].reason = regulate ? self_regulate<std::string>(retries, generate, check, &out[i].reg) : generate(0);
        out[i].inactive = !out[i].reason;
      } else if (regulate) {
        // The reason carried over from the last update must still express
        // the current opinion; otherwise it is rewritten from scratch.
        auto ok = brain_->check_expression(self, a.reason, issue, base.with_attempt(1000));
        if (!ok.value_or(false)) {
          out[i].reg.regenerations = 1;
          RegulationOutcome again;
          out[i].reason = self_regulate<std::string>(retries, generate, check, &again);
          out[i].reg.regenerations += again.regenerations;
          out[i].reg.exhausted = again.exhausted;
          out[i].inactive = !out[i].reason;
        }
      }
    });
    for (std::size_t i = 0; i < n; ++i) {
      report.regenerations[kExpr] += static_cast<std::size_t>(out[i].reg.regenerations);
      if (out[i].reg.regenerations > 0) {
        emit("expression", "regeneration", {{"agent", i}, {"count", out[i].reg.regenerations}});
      }
      if (out[i].inactive) {
        ++report.inactive[kExpr];
        emit("expression", "stage_inactive", {{"agent", i}});
      }
      if (out[i].reason) {
        world.agents[i].reason = std::move(*out[i].reason);
        emit("expression", "expression", {{"agent", i}, {"reason", world.agents[i].reason}});
      }
    }
  }

  // Influencer broadcasts for this step.
  std::vector<Message> broadcasts;
  {
    std::vector<std::optional<std::string>> texts(active.influencers.size());
    parallel_for(active.influencers.size(), config_.workers, [&](std::size_t k) {
      const AgentId id = influencer_sender_id(k);
      const AgentView v{id, active.influencers[k], "", {}};
      texts[k] = brain_->express(v, issue, context(world, s, Stage::Expression, kInfluencer, id));
    });
    for (std::size_t k = 0; k < texts.size(); ++k) {
      const AgentId id = influencer_sender_id(k);
      if (!texts[k]) {
        emit("expression", "stage_inactive", {{"agent", id}});
        continue;
      }
      broadcasts.push_back({id, *texts[k], active.influencers[k], s});
      emit("expression", "expression", {{"agent", id}, {"reason", *texts[k]}});
    }
  }

  if (config_.probe_interval > 0 && s % config_.probe_interval == 0) {
    report.probe = probe(world, s);
    for (const auto& row : report.probe) {
      emit("probe", "probe",
           {{"rater", row.rater}, {"target", row.target}, {"class", row.target_class}, {"rating", row.rating},
            {"adjectives", row.adjectives}});
    }
  }

  // ---- Stage 2: communication ---------------------------------------------
  const bool adaptive = config_.network_mode == NetworkMode::Adaptive && !active.random_interaction;
  const bool one_partner = config_.partner_mode == PartnerMode::OnePartner;

  // 2a. Candidate partners and continuation decisions.
  struct Selection {
    std::vector<AgentId> partners;  // decided on (or recipients directly when no decision is taken)
    std::vector<DecisionResult> decisions;
  };
  std::vector<Selection> sel(n);
  parallel_for(n, config_.workers, [&](std::size_t i) {
    const auto id = static_cast<AgentId>(i);
    const auto& out = world.graph.out_neighbors(id);
    std::vector<AgentId> candidates(out.begin(), out.end());
    if (active.random_interaction) {
      // Same number of recipients as contacts, drawn uniformly from everyone else.
      RandomStream rng(stream_key(world, s, kRecipients, id));
      const std::size_t want = one_partner ? std::min<std::size_t>(1, candidates.size()) : candidates.size();
      std::vector<AgentId> others;
      others.reserve(n - 1);
      for (std::size_t v = 0; v < n; ++v) {
        if (v != i) others.push_back(static_cast<AgentId>(v));
      }
      for (std::size_t k = 0; k < want && k < others.size(); ++k) {
        const auto j = k + static_cast<std::size_t>(rng.below(others.size() - k));
        std::swap(others[k], others[j]);
      }
      others.resize(std::min(want, others.size()));
      std::sort(others.begin(), others.end());
      sel[i].partners = std::move(others);
      return;
    }
    if (one_partner && !candidates.empty()) {
      RandomStream rng(stream_key(world, s, kOnePartner, id));
      candidates = {candidates[static_cast<std::size_t>(rng.below(candidates.size()))]};
    }
    sel[i].partners = candidates;
    if (!adaptive) return;
    const auto self = view_of(world.agents[i], effective[i]);
    for (AgentId j : candidates) {
      const auto& pj = world.agents[static_cast<std::size_t>(j)];
      sel[i].decisions.push_back(brain_->decide_continue(self, view_of(pj, effective[static_cast<std::size_t>(j)]),
                                                         issue, context(world, s, Stage::Decision, kDecision, id, j)));
    }
  });

  // 2b. Rewiring at the barrier; each agent only touches its own out-edges.
  std::vector<std::vector<AgentId>> partners(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto id = static_cast<AgentId>(i);
    if (sel[i].decisions.empty()) {
      partners[i] = sel[i].partners;
      continue;
    }
    std::vector<AgentId> fresh;
    for (std::size_t k = 0; k < sel[i].partners.size(); ++k) {
      const AgentId j = sel[i].partners[k];
      const auto& d = sel[i].decisions[k];
      nlohmann::json payload = {{"agent", id}, {"partner", j}, {"keep", d.keep}};
      if (d.parse_failed) payload["parse_failed"] = true;
      if (d.keep) {
        partners[i].push_back(j);
      } else {
        RandomStream rng(stream_key(world, s, kRewire, id, j));
        const auto replacement = replace_partner(world.graph, id, j, rng);
        if (replacement) {
          fresh.push_back(*replacement);
          payload["new_partner"] = *replacement;
        } else {
          ++report.saturated;
          partners[i].push_back(j);
          payload["saturated"] = true;
        }
      }
      emit("communication", "decision", std::move(payload));
    }
    partners[i].insert(partners[i].end(), fresh.begin(), fresh.end());
  }

  // 2c. Persuasion along every surviving or new link.
  auto history_of = [&](const AgentState& receiver, AgentId from) {
    std::vector<Message> h;
    const auto it = receiver.history.find(from);
    if (it != receiver.history.end()) h.assign(it->second.begin(), it->second.end());
    return h;
  };
  auto persuade_once = [&](std::size_t i, AgentId j, std::uint64_t purpose, std::int64_t salt,
                           RegulationOutcome& reg) -> std::optional<PersuasionResult> {
    const auto& a = world.agents[i];
    const auto& b = world.agents[static_cast<std::size_t>(j)];
    const auto self = view_of(a, effective[i]);
    const auto partner = view_of(b, effective[static_cast<std::size_t>(j)]);
    // The sender sees what the partner has said to it before.
    const auto history = history_of(a, j);
    const auto base = context(world, s, Stage::Persuasion, purpose, static_cast<std::int64_t>(i), j * 65536 + salt);
    auto generate = [&](int attempt) { return brain_->persuade(self, partner, history, issue, base.with_attempt(attempt)); };
    auto check = [&](const PersuasionResult& r, int attempt) -> std::optional<bool> {
      if (!r.will) return true;
      return brain_->check_persuasion(self, r.message, issue, base.with_attempt(attempt));
    };
    if (!regulate) return generate(0);
    return self_regulate<PersuasionResult>(retries, generate, check, &reg);
  };

  struct SendOut {
    std::vector<std::optional<PersuasionResult>> results;
    std::vector<RegulationOutcome> reg;
  };
  std::vector<SendOut> sends(n);
  parallel_for(n, config_.workers, [&](std::size_t i) {
    sends[i].results.resize(partners[i].size());
    sends[i].reg.resize(partners[i].size());
    for (std::size_t k = 0; k < partners[i].size(); ++k) {
      sends[i].results[k] = persuade_once(i, partners[i][k], kPersuasion, 0, sends[i].reg[k]);
    }
  });

  std::vector<std::vector<Outgoing>> inbound(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < partners[i].size(); ++k) {
      const AgentId j = partners[i][k];
      const auto& reg = sends[i].reg[k];
      report.regenerations[kPers] += static_cast<std::size_t>(reg.regenerations);
      if (reg.regenerations > 0) {
        emit("communication", "regeneration", {{"agent", i}, {"partner", j}, {"count", reg.regenerations}});
      }
      const auto& r = sends[i].results[k];
      if (!r) {
        ++report.inactive[kPers];
        emit("communication", "stage_inactive", {{"agent", i}, {"partner", j}});
        continue;
      }
      if (!r->will) {
        emit("communication", "persuasion", {{"sender", i}, {"receiver", j}, {"will", false}});
        continue;
      }
      inbound[static_cast<std::size_t>(j)].push_back({static_cast<AgentId>(i), j, r->message});
    }
  }

  // 2d. Routing interventions.
  if (active.opposing_exposure) {
    std::array<std::vector<AgentId>, 3> by_camp;
    for (const auto& a : world.agents) by_camp[static_cast<std::size_t>(sign_of(camp_of(a.opinion)) + 1)].push_back(a.id);
    struct Replaced {
      std::vector<std::optional<Outgoing>> msgs;
      std::vector<RegulationOutcome> reg;
    };
    std::vector<Replaced> rep(n);
    parallel_for(n, config_.workers, [&](std::size_t j) {
      const int camp = sign_of(camp_of(world.agents[j].opinion));
      rep[j].msgs.resize(inbound[j].size());
      rep[j].reg.resize(inbound[j].size());
      if (camp == 0) {
        for (std::size_t k = 0; k < inbound[j].size(); ++k) rep[j].msgs[k] = inbound[j][k];
        return;
      }
      const auto& pool = by_camp[static_cast<std::size_t>(-camp + 1)];
      RandomStream rng(stream_key(world, s, kReplace, static_cast<std::int64_t>(j)));
      for (std::size_t k = 0; k < inbound[j].size(); ++k) {
        const auto& m = inbound[j][k];
        if (sign_of(camp_of(world.agents[static_cast<std::size_t>(m.sender)].opinion)) == -camp) {
          rep[j].msgs[k] = m;
          continue;
        }
        if (pool.empty()) continue;
        const AgentId sub = pool[static_cast<std::size_t>(rng.below(pool.size()))];
        auto r = persuade_once(static_cast<std::size_t>(sub), static_cast<AgentId>(j), kReplace,
                               static_cast<std::int64_t>(k + 1), rep[j].reg[k]);
        if (r && r->will) rep[j].msgs[k] = Outgoing{sub, static_cast<AgentId>(j), r->message};
      }
    });
    for (std::size_t j = 0; j < n; ++j) {
      std::vector<Outgoing> kept;
      for (std::size_t k = 0; k < inbound[j].size(); ++k) {
        report.regenerations[kPers] += static_cast<std::size_t>(rep[j].reg[k].regenerations);
        if (rep[j].msgs[k]) {
          if (rep[j].msgs[k]->sender != inbound[j][k].sender) {
            emit("communication", "persuasion",
                 {{"sender", inbound[j][k].sender}, {"receiver", j}, {"replaced_by", rep[j].msgs[k]->sender}});
          }
          kept.push_back(std::move(*rep[j].msgs[k]));
        } else {
          ++report.blocked;
          emit("communication", "persuasion", {{"sender", inbound[j][k].sender}, {"receiver", j}, {"blocked", "Oppose"}});
        }
      }
      inbound[j] = std::move(kept);
    }
  }
  if (active.moderate_opposing) {
    for (std::size_t j = 0; j < n; ++j) {
      const int camp = sign_of(camp_of(world.agents[j].opinion));
      std::vector<Outgoing> kept;
      for (auto& m : inbound[j]) {
        const Opinion so = world.agents[static_cast<std::size_t>(m.sender)].opinion;
        const bool moderate = so.magnitude() == 1;
        const bool opposite = camp == 0 ? true : sign_of(camp_of(so)) == -camp;
        if (moderate && opposite) {
          kept.push_back(std::move(m));
        } else {
          ++report.blocked;
          emit("communication", "persuasion", {{"sender", m.sender}, {"receiver", j}, {"blocked", "MOI"}});
        }
      }
      inbound[j] = std::move(kept);
    }
  }

  // 2e. Delivery at the barrier, receivers in id order, senders ascending.
  const auto cap = static_cast<std::size_t>(std::max(0, config_.influencer_cap));
  for (std::size_t j = 0; j < n; ++j) {
    auto& receiver = world.agents[j];
    const Opinion receiver_opinion = receiver.opinion;
    std::vector<Message> inbox;
    for (std::size_t k = 0; k < broadcasts.size() && k < cap; ++k) inbox.push_back(broadcasts[k]);
    report.influencer_messages += std::min(broadcasts.size(), cap);
    auto& in = inbound[j];
    std::stable_sort(in.begin(), in.end(), [](const Outgoing& a, const Outgoing& b) { return a.sender < b.sender; });
    for (auto& m : in) {
      inbox.push_back({m.sender, std::move(m.text), world.agents[static_cast<std::size_t>(m.sender)].opinion, s});
    }
    std::stable_sort(inbox.begin(), inbox.end(), [](const Message& a, const Message& b) { return a.sender < b.sender; });
    for (const auto& m : inbox) {
      receiver.remember(m, config_.history_cap);
      auto payload = message_payload(m, receiver.id, receiver_opinion);
      if (m.from_influencer()) {
        payload["influencer"] = true;
      } else {
        report.interactions.push_back({t, m.sender, m.sender_opinion, receiver.id, receiver_opinion});
        if (config_.reverse_links && world.graph.add_edge(receiver.id, m.sender)) payload["linked"] = true;
      }
      emit("communication", "delivery", std::move(payload));
    }
    receiver.inbox = std::move(inbox);
  }

  // ---- Stage 3: opinion update --------------------------------------------
  {
    struct UpdOut {
      std::optional<UpdateResult> result;
      RegulationOutcome reg;
    };
    std::vector<UpdOut> out(n);
    parallel_for(n, config_.workers, [&](std::size_t i) {
      const auto& a = world.agents[i];
      if (a.inbox.empty()) return;
      const auto self = view_of(a, effective[i]);
      const auto base = context(world, s, Stage::Update, kUpdate, static_cast<std::int64_t>(i));
      auto generate = [&](int attempt) { return brain_->update_opinion(self, a.inbox, issue, base.with_attempt(attempt)); };
      auto check = [&](const UpdateResult& r, int attempt) -> std::optional<bool> {
        if (r.opinion == a.opinion) return true;
        return brain_->check_update(self, a.inbox, r, issue, base.with_attempt(attempt));
      };
      out[i].result = regulate ? self_regulate<UpdateResult>(retries, generate, check, &out[i].reg) : generate(0);
    });
    for (std::size_t i = 0; i < n; ++i) {
      auto& a = world.agents[i];
      if (a.inbox.empty()) continue;
      report.regenerations[kUpd] += static_cast<std::size_t>(out[i].reg.regenerations);
      if (out[i].reg.regenerations > 0) {
        emit("update", "regeneration", {{"agent", i}, {"count", out[i].reg.regenerations}});
      }
      if (!out[i].result) {
        ++report.inactive[kUpd];
        emit("update", "stage_inactive", {{"agent", i}});
        continue;
      }
      emit("update", "update",
           {{"agent", i}, {"from", a.opinion.value()}, {"to", out[i].result->opinion.value()},
            {"reason", out[i].result->reason}});
      a.opinion = out[i].result->opinion;
      a.reason = std::move(out[i].result->reason);
    }
  }

  for (auto& a : world.agents) a.inbox.clear();
  world.timestep = t;
  return report;
}

}  // namespace polarsim
