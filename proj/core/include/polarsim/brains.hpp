#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "polarsim/config.hpp"
#include "polarsim/domain.hpp"
#include "polarsim/llmclient.hpp"

namespace polarsim {

enum class Stage : std::uint8_t { Expression, Decision, Persuasion, Update, Probe, Study };
std::string_view to_string(Stage s);

/// Immutable view of one agent as of the last barrier. dispositions is the
/// effective set: the agent's own traits plus any intervention-injected ones.
struct AgentView {
  AgentId id = 0;
  Opinion opinion;
  std::string_view reason;
  DispositionSet dispositions;
};

/// Identity of one brain invocation. rng_key seeds the mock brain; sample_key
/// and attempt make LLM samples distinct and replayable.
struct CallContext {
  int timestep = 0;
  int attempt = 0;
  std::uint64_t rng_key = 0;
  std::string sample_key;

  CallContext with_attempt(int a) const;
};

struct DecisionResult {
  bool keep = true;
  std::string explain;
  bool parse_failed = false;
};

struct PersuasionResult {
  bool will = false;
  std::string message;
};

struct UpdateResult {
  Opinion opinion;
  std::string reason;
};

struct Impression {
  int rating = 3;
  std::vector<std::string> adjectives;
  bool clamped = false;
};

struct StudyResult {
  bool accept = false;
  std::string theory;
};

/// Behavioural contract. A std::nullopt result means the stage is inactive
/// for this agent (transport failure, unparseable output). Implementations
/// hold no cross-agent state and may be called concurrently.
class Brain {
 public:
  virtual ~Brain() = default;

  virtual std::optional<std::string> express(const AgentView& self, const IssueDefinition& issue,
                                             const CallContext& ctx) = 0;
  virtual DecisionResult decide_continue(const AgentView& self, const AgentView& partner,
                                         const IssueDefinition& issue, const CallContext& ctx) = 0;
  virtual std::optional<PersuasionResult> persuade(const AgentView& self, const AgentView& partner,
                                                   std::span<const Message> history_from_partner,
                                                   const IssueDefinition& issue, const CallContext& ctx) = 0;
  /// Callers skip this (no call at all) for an empty inbox.
  virtual std::optional<UpdateResult> update_opinion(const AgentView& self, std::span<const Message> inbox,
                                                     const IssueDefinition& issue, const CallContext& ctx) = 0;
  virtual std::optional<Impression> rate_impression(const AgentView& self, const AgentView& target,
                                                    const IssueDefinition& issue, const CallContext& ctx) = 0;
  virtual std::optional<StudyResult> consider_study(const AgentView& self, const IssueDefinition& issue,
                                                    const CallContext& ctx) = 0;

  /// Self-regulation checks: true means the output is consistent. nullopt
  /// means the checker itself gave no usable answer.
  virtual std::optional<bool> check_expression(const AgentView& self, std::string_view reason,
                                               const IssueDefinition& issue, const CallContext& ctx) = 0;
  virtual std::optional<bool> check_persuasion(const AgentView& self, std::string_view message,
                                               const IssueDefinition& issue, const CallContext& ctx) = 0;
  virtual std::optional<bool> check_update(const AgentView& self, std::span<const Message> inbox,
                                           const UpdateResult& proposed, const IssueDefinition& issue,
                                           const CallContext& ctx) = 0;
};

/// Mock parameters after applying the acting agent's dispositions.
MockBrainParams effective_params(const MockBrainParams& base, DispositionSet dispositions);

/// Stochastic stand-in. Outputs are canonical tokens ("REASON(opinion=k)",
/// "PERSUADE(from=k)") so the checks can read the stance back.
class MockBrain : public Brain {
 public:
  explicit MockBrain(MockBrainParams params) : params_(params) {}
  const MockBrainParams& params() const { return params_; }

  std::optional<std::string> express(const AgentView& self, const IssueDefinition& issue,
                                     const CallContext& ctx) override;
  DecisionResult decide_continue(const AgentView& self, const AgentView& partner, const IssueDefinition& issue,
                                 const CallContext& ctx) override;
  std::optional<PersuasionResult> persuade(const AgentView& self, const AgentView& partner,
                                           std::span<const Message> history_from_partner,
                                           const IssueDefinition& issue, const CallContext& ctx) override;
  std::optional<UpdateResult> update_opinion(const AgentView& self, std::span<const Message> inbox,
                                             const IssueDefinition& issue, const CallContext& ctx) override;
  std::optional<Impression> rate_impression(const AgentView& self, const AgentView& target,
                                            const IssueDefinition& issue, const CallContext& ctx) override;
  std::optional<StudyResult> consider_study(const AgentView& self, const IssueDefinition& issue,
                                            const CallContext& ctx) override;
  std::optional<bool> check_expression(const AgentView& self, std::string_view reason, const IssueDefinition& issue,
                                       const CallContext& ctx) override;
  std::optional<bool> check_persuasion(const AgentView& self, std::string_view message, const IssueDefinition& issue,
                                       const CallContext& ctx) override;
  std::optional<bool> check_update(const AgentView& self, std::span<const Message> inbox,
                                   const UpdateResult& proposed, const IssueDefinition& issue,
                                   const CallContext& ctx) override;

  static std::string reason_token(Opinion o);
  static std::string persuade_token(Opinion o);
  /// Opinion named by a canonical token, if the text is one.
  static std::optional<Opinion> token_opinion(std::string_view text);

 private:
  MockBrainParams params_;
};

struct LlmBrainOptions {
  std::string model;
  double temperature = 1.0;
  int max_tokens = 512;
  int parse_retries = 3;  // extra samples drawn when the output is unparseable
};

/// Renders the stage prompts, calls the client, parses the JSON replies.
class LlmBrain : public Brain {
 public:
  LlmBrain(std::shared_ptr<LlmClient> client, LlmBrainOptions options);

  std::optional<std::string> express(const AgentView& self, const IssueDefinition& issue,
                                     const CallContext& ctx) override;
  DecisionResult decide_continue(const AgentView& self, const AgentView& partner, const IssueDefinition& issue,
                                 const CallContext& ctx) override;
  std::optional<PersuasionResult> persuade(const AgentView& self, const AgentView& partner,
                                           std::span<const Message> history_from_partner,
                                           const IssueDefinition& issue, const CallContext& ctx) override;
  std::optional<UpdateResult> update_opinion(const AgentView& self, std::span<const Message> inbox,
                                             const IssueDefinition& issue, const CallContext& ctx) override;
  std::optional<Impression> rate_impression(const AgentView& self, const AgentView& target,
                                            const IssueDefinition& issue, const CallContext& ctx) override;
  std::optional<StudyResult> consider_study(const AgentView& self, const IssueDefinition& issue,
                                            const CallContext& ctx) override;
  std::optional<bool> check_expression(const AgentView& self, std::string_view reason, const IssueDefinition& issue,
                                       const CallContext& ctx) override;
  std::optional<bool> check_persuasion(const AgentView& self, std::string_view message, const IssueDefinition& issue,
                                       const CallContext& ctx) override;
  std::optional<bool> check_update(const AgentView& self, std::span<const Message> inbox,
                                   const UpdateResult& proposed, const IssueDefinition& issue,
                                   const CallContext& ctx) override;

 private:
  /// nullopt on transport failure or cache miss.
  std::optional<std::string> ask(const std::string& prompt, const CallContext& ctx, int parse_try) const;
  std::optional<bool> ask_yes_no(const std::string& prompt, const CallContext& ctx) const;

  std::shared_ptr<LlmClient> client_;
  LlmBrainOptions opt_;
};

/// Maps a model's "tendency" answer onto the scale: exact label, then the
/// longest label contained case-insensitively, else nullopt.
std::optional<Opinion> parse_tendency(std::string_view text, const IssueDefinition& issue);

/// "yes"/"no" answer at the start of a reply, ignoring case, quotes and
/// punctuation.
std::optional<bool> parse_yes_no(std::string_view text);

struct RegulationOutcome {
  int regenerations = 0;  // candidates rejected by the check
  bool exhausted = false; // every candidate rejected: the stage goes inactive
};

/// Generates a candidate, checks it, and regenerates on a failed check until
/// one passes or 1 + max_retries candidates have been rejected. generate
/// returning nullopt ends the stage immediately (inactive). An unusable check
/// answer counts as a failure.
template <typename T, typename Generate, typename Check>
std::optional<T> self_regulate(int max_retries, Generate&& generate, Check&& check, RegulationOutcome* outcome) {
  RegulationOutcome local;
  auto& out = outcome ? *outcome : local;
  out = {};
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    std::optional<T> candidate = generate(attempt);
    if (!candidate) return std::nullopt;
    const std::optional<bool> ok = check(*candidate, attempt);
    if (ok.value_or(false)) return candidate;
    ++out.regenerations;
  }
  out.exhausted = true;
  return std::nullopt;
}

std::unique_ptr<Brain> make_brain(const BrainConfig& config, double temperature,
                                  std::shared_ptr<LlmClient> client = nullptr);

}  // namespace polarsim
