#include "polarsim/brains.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

#include "polarsim/prompts.hpp"
#include "polarsim/random.hpp"

namespace polarsim {

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Expression: return "expression";
    case Stage::Decision: return "decision";
    case Stage::Persuasion: return "persuasion";
    case Stage::Update: return "update";
    case Stage::Probe: return "probe";
    case Stage::Study: return "study";
  }
  return "?";
}

CallContext CallContext::with_attempt(int a) const {
  CallContext c = *this;
  c.attempt = a;
  c.rng_key = derive_key({rng_key, 0xA77E'4D7ULL, static_cast<std::uint64_t>(a)});
  return c;
}

// ---------------------------------------------------------------------------
// Mock brain

MockBrainParams effective_params(const MockBrainParams& base, DispositionSet d) {
  MockBrainParams p = base;
  if (d.contains(DispositionKind::SelectiveExposure)) p.beta *= 2.0;
  if (d.contains(DispositionKind::ExaggeratedMisperception)) p.beta *= 2.0;
  if (d.contains(DispositionKind::Stereotyping)) p.beta += 0.2;
  if (d.contains(DispositionKind::NoSelectiveExposure)) p.beta = 0.0;
  if (d.contains(DispositionKind::ConfirmationBias)) p.q *= 0.5;
  if (d.contains(DispositionKind::ObjectiveIllusion)) p.r = std::min(1.0, p.r * 2.0);
  if (d.contains(DispositionKind::NoConfirmationBias) || d.contains(DispositionKind::OpenMindedness)) {
    p.q = 1.0;
    p.r = 0.0;
  }
  return p;
}

std::string MockBrain::reason_token(Opinion o) { return "REASON(opinion=" + std::to_string(o.value()) + ")"; }
std::string MockBrain::persuade_token(Opinion o) { return "PERSUADE(from=" + std::to_string(o.value()) + ")"; }

std::optional<Opinion> MockBrain::token_opinion(std::string_view text) {
  for (std::string_view prefix : {std::string_view("REASON(opinion="), std::string_view("PERSUADE(from=")}) {
    if (!text.starts_with(prefix) || !text.ends_with(')')) continue;
    const auto body = text.substr(prefix.size(), text.size() - prefix.size() - 1);
    int v = 0;
    const auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), v);
    if (ec != std::errc() || ptr != body.data() + body.size() || v < Opinion::kMin || v > Opinion::kMax) {
      return std::nullopt;
    }
    return Opinion(v);
  }
  return std::nullopt;
}

std::optional<std::string> MockBrain::express(const AgentView& self, const IssueDefinition&, const CallContext&) {
  return reason_token(self.opinion);
}

DecisionResult MockBrain::decide_continue(const AgentView& self, const AgentView& partner, const IssueDefinition&,
                                          const CallContext& ctx) {
  const auto p = effective_params(params_, self.dispositions);
  const double distance = std::abs(self.opinion.value() - partner.opinion.value());
  const double accept = std::clamp(p.p0 - p.beta * distance, 0.0, 1.0);
  RandomStream rng(ctx.rng_key);
  const bool keep = rng.bernoulli(accept);
  return {keep, keep ? "yes" : "no", false};
}

std::optional<PersuasionResult> MockBrain::persuade(const AgentView& self, const AgentView&,
                                                    std::span<const Message>, const IssueDefinition&,
                                                    const CallContext&) {
  return PersuasionResult{true, persuade_token(self.opinion)};
}

namespace {

int sign(double v) { return (v > 0) - (v < 0); }

}  // namespace

std::optional<UpdateResult> MockBrain::update_opinion(const AgentView& self, std::span<const Message> inbox,
                                                      const IssueDefinition&, const CallContext& ctx) {
  if (inbox.empty()) return UpdateResult{self.opinion, std::string(self.reason)};
  const auto p = effective_params(params_, self.dispositions);
  RandomStream rng(ctx.rng_key);
  const int x = self.opinion.value();

  double mean = 0.0;
  double mean_abs = 0.0;
  bool same_camp = true;
  for (const auto& m : inbox) {
    mean += m.sender_opinion.value();
    mean_abs += m.sender_opinion.magnitude();
    same_camp = same_camp && camp_of(m.sender_opinion) == camp_of(self.opinion);
  }
  mean /= static_cast<double>(inbox.size());
  mean_abs /= static_cast<double>(inbox.size());

  int result = x;
  if (std::abs(mean - x) >= 0.5) {
    if (rng.bernoulli(p.q)) result = x + sign(mean - x);
  } else if (x != 0 && same_camp && mean_abs > std::abs(x)) {
    if (rng.bernoulli(p.r)) result = std::clamp(x + sign(x), Opinion::kMin, Opinion::kMax);
  }

  const double eps = x < 0 ? p.eps_left : x > 0 ? p.eps_right : 0.5 * (p.eps_left + p.eps_right);
  if (rng.bernoulli(eps)) {
    // Uniform over the four other levels.
    auto k = static_cast<int>(rng.below(Opinion::kLevels - 1)) + Opinion::kMin;
    if (k >= result) ++k;
    result = k;
  }
  const Opinion next(result);
  return UpdateResult{next, reason_token(next)};
}

std::optional<Impression> MockBrain::rate_impression(const AgentView& self, const AgentView& target,
                                                     const IssueDefinition&, const CallContext&) {
  const int diff = std::abs(sign_of(camp_of(self.opinion)) - sign_of(camp_of(target.opinion)));
  return Impression{5 - std::min(4, 2 * diff), {"a1", "a2", "a3", "a4", "a5"}, false};
}

std::optional<StudyResult> MockBrain::consider_study(const AgentView&, const IssueDefinition&, const CallContext&) {
  return StudyResult{true, "THEORY"};
}

std::optional<bool> MockBrain::check_expression(const AgentView& self, std::string_view reason,
                                                const IssueDefinition&, const CallContext&) {
  const auto o = token_opinion(reason);
  return o && *o == self.opinion;
}

std::optional<bool> MockBrain::check_persuasion(const AgentView& self, std::string_view message,
                                                const IssueDefinition&, const CallContext&) {
  const auto o = token_opinion(message);
  return o && *o == self.opinion;
}

std::optional<bool> MockBrain::check_update(const AgentView& self, std::span<const Message> inbox,
                                            const UpdateResult& proposed, const IssueDefinition&,
                                            const CallContext&) {
  const int delta = proposed.opinion.value() - self.opinion.value();
  if (delta == 0) return true;
  if (std::abs(delta) > 1) return false;
  double mean = 0.0;
  for (const auto& m : inbox) mean += m.sender_opinion.value();
  if (!inbox.empty()) mean /= static_cast<double>(inbox.size());
  const int direction = sign(mean - self.opinion.value());
  return direction != 0 && direction == sign(delta);
}

// ---------------------------------------------------------------------------
// Parsing helpers

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string_view trim(std::string_view s) {
  constexpr std::string_view junk = " \t\r\n\"'`.*";
  const auto a = s.find_first_not_of(junk);
  if (a == std::string_view::npos) return {};
  const auto b = s.find_last_not_of(junk);
  return s.substr(a, b - a + 1);
}

std::string json_text(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_null()) return {};
  return v.dump();
}

}  // namespace

std::optional<Opinion> parse_tendency(std::string_view text, const IssueDefinition& issue) {
  const auto t = trim(text);
  for (std::size_t k = 0; k < Opinion::kLevels; ++k) {
    if (t == issue.labels[k]) return Opinion::from_index(k);
  }
  const auto hay = lower(t);
  std::optional<std::size_t> best;
  bool ambiguous = false;
  for (std::size_t k = 0; k < Opinion::kLevels; ++k) {
    const auto needle = lower(issue.labels[k]);
    if (hay.find(needle) == std::string::npos) continue;
    if (!best || needle.size() > issue.labels[*best].size()) {
      best = k;
      ambiguous = false;
    } else if (needle.size() == issue.labels[*best].size()) {
      ambiguous = true;
    }
  }
  if (!best || ambiguous) return std::nullopt;
  return Opinion::from_index(*best);
}

std::optional<bool> parse_yes_no(std::string_view text) {
  const auto t = lower(trim(text));
  if (t.starts_with("yes")) return true;
  if (t.starts_with("no")) return false;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// LLM brain

LlmBrain::LlmBrain(std::shared_ptr<LlmClient> client, LlmBrainOptions options)
    : client_(std::move(client)), opt_(std::move(options)) {
  if (!client_) throw Error("LLM brain needs a client");
}

std::optional<std::string> LlmBrain::ask(const std::string& prompt, const CallContext& ctx, int parse_try) const {
  LlmRequest req;
  req.model = opt_.model;
  req.content = prompt;
  req.temperature = opt_.temperature;
  req.max_tokens = opt_.max_tokens;
  req.attempt = ctx.attempt * 1000 + parse_try;
  req.sample_key = ctx.sample_key;
  try {
    return client_->complete(req);
  } catch (const TransportError&) {
    return std::nullopt;
  } catch (const CacheMiss&) {
    return std::nullopt;
  }
}

std::optional<bool> LlmBrain::ask_yes_no(const std::string& prompt, const CallContext& ctx) const {
  for (int i = 0; i <= opt_.parse_retries; ++i) {
    const auto text = ask(prompt, ctx, i);
    if (!text) return std::nullopt;
    if (auto v = parse_yes_no(*text)) return v;
  }
  return std::nullopt;
}

std::optional<std::string> LlmBrain::express(const AgentView& self, const IssueDefinition& issue,
                                             const CallContext& ctx) {
  const auto prompt = render_expression_prompt(issue, self.opinion);
  for (int i = 0; i <= opt_.parse_retries; ++i) {
    const auto text = ask(prompt, ctx, i);
    if (!text) return std::nullopt;
    const auto t = trim(*text);
    if (!t.empty()) return std::string(t);
  }
  return std::nullopt;
}

DecisionResult LlmBrain::decide_continue(const AgentView& self, const AgentView& partner,
                                         const IssueDefinition& issue, const CallContext& ctx) {
  const auto traits = self.dispositions.for_stage(DispositionStage::PartnerDecision);
  const auto prompt =
      render_decision_prompt(issue, self.opinion, self.reason, partner.opinion, partner.reason, traits);
  for (int i = 0; i <= opt_.parse_retries; ++i) {
    const auto text = ask(prompt, ctx, i);
    if (!text) break;
    try {
      const auto doc = extract_json(*text, {"decision", "explain"});
      if (auto yes = parse_yes_no(json_text(doc["decision"]))) return {*yes, json_text(doc["explain"]), false};
    } catch (const ParseFailure&) {
    }
  }
  // Keep the tie: dropping edges on infrastructure noise would bias rewiring.
  return {true, "", true};
}

std::optional<PersuasionResult> LlmBrain::persuade(const AgentView& self, const AgentView& partner,
                                                   std::span<const Message> history, const IssueDefinition& issue,
                                                   const CallContext& ctx) {
  const auto prompt = render_persuasion_prompt(issue, self.reason, history, partner.reason);
  for (int i = 0; i <= opt_.parse_retries; ++i) {
    const auto text = ask(prompt, ctx, i);
    if (!text) return std::nullopt;
    try {
      const auto doc = extract_json(*text, {"will", "message"});
      const auto will = parse_yes_no(json_text(doc["will"]));
      if (!will) continue;
      if (!*will) return PersuasionResult{false, ""};
      auto msg = std::string(trim(json_text(doc["message"])));
      if (!msg.empty()) return PersuasionResult{true, std::move(msg)};
    } catch (const ParseFailure&) {
    }
  }
  return std::nullopt;
}

std::optional<UpdateResult> LlmBrain::update_opinion(const AgentView& self, std::span<const Message> inbox,
                                                     const IssueDefinition& issue, const CallContext& ctx) {
  if (inbox.empty()) return UpdateResult{self.opinion, std::string(self.reason)};
  const auto traits = self.dispositions.for_stage(DispositionStage::OpinionUpdate);
  const auto prompt = render_update_prompt(issue, self.opinion, self.reason, inbox, traits);
  for (int i = 0; i <= opt_.parse_retries; ++i) {
    const auto text = ask(prompt, ctx, i);
    if (!text) return std::nullopt;
    try {
      const auto doc = extract_json(*text, {"tendency", "reasons"});
      const auto o = parse_tendency(json_text(doc["tendency"]), issue);
      auto reason = std::string(trim(json_text(doc["reasons"])));
      if (o && !reason.empty()) return UpdateResult{*o, std::move(reason)};
    } catch (const ParseFailure&) {
    }
  }
  return std::nullopt;
}

std::optional<Impression> LlmBrain::rate_impression(const AgentView& self, const AgentView& target,
                                                    const IssueDefinition& issue, const CallContext& ctx) {
  const auto prompt = render_perception_prompt(issue, self.opinion, self.reason, target.opinion, target.reason);
  for (int i = 0; i <= opt_.parse_retries; ++i) {
    const auto text = ask(prompt, ctx, i);
    if (!text) return std::nullopt;
    try {
      const auto doc = extract_json(*text, {"rating", "adjectives"});
      int rating = 0;
      const auto& r = doc["rating"];
      if (r.is_number()) {
        rating = static_cast<int>(std::lround(r.get<double>()));
      } else {
        const auto s = std::string(trim(json_text(r)));
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), rating);
        if (ec != std::errc() || s.empty()) continue;
      }
      Impression imp;
      imp.rating = std::clamp(rating, 1, 5);
      imp.clamped = imp.rating != rating;
      if (doc["adjectives"].is_array()) {
        for (const auto& a : doc["adjectives"]) imp.adjectives.push_back(json_text(a));
      } else {
        imp.adjectives.push_back(json_text(doc["adjectives"]));
      }
      return imp;
    } catch (const ParseFailure&) {
    }
  }
  return std::nullopt;
}

std::optional<StudyResult> LlmBrain::consider_study(const AgentView& self, const IssueDefinition& issue,
                                                    const CallContext& ctx) {
  const auto prompt = render_study_prompt(issue, self.opinion, self.reason);
  for (int i = 0; i <= opt_.parse_retries; ++i) {
    const auto text = ask(prompt, ctx, i);
    if (!text) return std::nullopt;
    try {
      const auto doc = extract_json(*text, {"accept", "theory"});
      if (auto yes = parse_yes_no(json_text(doc["accept"]))) return StudyResult{*yes, json_text(doc["theory"])};
    } catch (const ParseFailure&) {
    }
  }
  return std::nullopt;
}

std::optional<bool> LlmBrain::check_expression(const AgentView& self, std::string_view reason,
                                               const IssueDefinition& issue, const CallContext& ctx) {
  return ask_yes_no(render_check_expression_prompt(issue, self.opinion, reason), ctx);
}

std::optional<bool> LlmBrain::check_persuasion(const AgentView& self, std::string_view message,
                                               const IssueDefinition& issue, const CallContext& ctx) {
  return ask_yes_no(render_check_persuasion_prompt(issue, self.opinion, message), ctx);
}

std::optional<bool> LlmBrain::check_update(const AgentView& self, std::span<const Message> inbox,
                                           const UpdateResult& proposed, const IssueDefinition& issue,
                                           const CallContext& ctx) {
  return ask_yes_no(render_check_update_prompt(issue, self.opinion, proposed.opinion, self.reason, inbox), ctx);
}

// ---------------------------------------------------------------------------

std::unique_ptr<Brain> make_brain(const BrainConfig& config, double temperature, std::shared_ptr<LlmClient> client) {
  if (config.kind == BrainKind::Mock) return std::make_unique<MockBrain>(config.mock);
  const auto ep = endpoint_from_env(config.llm.base_url, config.llm.model);
  LlmBrainOptions opt;
  opt.model = ep.model;
  opt.temperature = temperature;
  opt.max_tokens = config.llm.max_tokens;
  opt.parse_retries = config.llm.parse_retries;
  if (!client) throw Error("LLM brain requested without a client");
  return std::make_unique<LlmBrain>(std::move(client), opt);
}

}  // namespace polarsim
