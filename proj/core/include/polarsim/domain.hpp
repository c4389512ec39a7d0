#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "polarsim/random.hpp"

namespace polarsim {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Camp : int { Left = -1, Neutral = 0, Right = 1 };

std::string_view to_string(Camp camp);

/// Five-level position on an issue: -2 left ... +2 right.
class Opinion {
 public:
  static constexpr int kMin = -2;
  static constexpr int kMax = 2;
  static constexpr std::size_t kLevels = 5;

  constexpr Opinion() = default;
  /// Throws std::invalid_argument outside [-2, 2].
  explicit Opinion(int value);

  static Opinion from_index(std::size_t index);
  static std::array<Opinion, kLevels> all();

  constexpr int value() const { return value_; }
  constexpr std::size_t index() const { return static_cast<std::size_t>(value_ - kMin); }
  constexpr int magnitude() const { return value_ < 0 ? -value_ : value_; }

  friend constexpr auto operator<=>(Opinion, Opinion) = default;

 private:
  int value_ = 0;
};

Camp camp_of(Opinion opinion);
int sign_of(Camp camp);

/// Display labels and prompt descriptions for one discussion topic. Index 0 is
/// opinion -2, index 4 is opinion +2.
struct IssueDefinition {
  std::string key;
  std::string name;
  std::array<std::string, Opinion::kLevels> labels;
  std::array<std::string, Opinion::kLevels> descriptions;

  const std::string& label(Opinion o) const { return labels[o.index()]; }
  const std::string& description(Opinion o) const { return descriptions[o.index()]; }
};

IssueDefinition parse_issue(std::string_view toml_text, std::string key);
IssueDefinition load_issue_file(const std::filesystem::path& path);
/// Built-in issues: partisanship, abortion_ban, gun_control, immigration,
/// flat_earth.
IssueDefinition builtin_issue(std::string_view key);
std::vector<std::string> builtin_issue_keys();
/// Resolves a builtin key or a path to an issue TOML file.
IssueDefinition resolve_issue(std::string_view key_or_path);

enum class DispositionKind : std::uint8_t {
  SelectiveExposure,
  ConfirmationBias,
  ExaggeratedMisperception,
  ObjectiveIllusion,
  Stereotyping,
  NoSelectiveExposure,
  NoConfirmationBias,
  OpenMindedness,
};

inline constexpr std::size_t kDispositionKinds = 8;

/// Which prompt a trait line is injected into.
enum class DispositionStage { PartnerDecision, OpinionUpdate };

struct Disposition {
  DispositionKind kind;
  std::string trait_name;
  std::string description;
  bool negated = false;
  DispositionStage stage = DispositionStage::PartnerDecision;

  /// "You have X, which means Y." or "You DO NOT have X, which means Y."
  std::string prompt_line() const;
};

std::string_view to_string(DispositionKind kind);
std::optional<DispositionKind> parse_disposition_kind(std::string_view text);
const Disposition& disposition_info(DispositionKind kind);

class DispositionSet {
 public:
  bool contains(DispositionKind k) const { return (bits_ >> static_cast<unsigned>(k)) & 1U; }
  void insert(DispositionKind k) { bits_ |= static_cast<std::uint16_t>(1U << static_cast<unsigned>(k)); }
  void erase(DispositionKind k) { bits_ &= static_cast<std::uint16_t>(~(1U << static_cast<unsigned>(k))); }
  bool empty() const { return bits_ == 0; }
  std::vector<DispositionKind> kinds() const;
  /// Subset whose trait lines belong to the given stage's prompt.
  std::vector<DispositionKind> for_stage(DispositionStage stage) const;
  DispositionSet merged(DispositionSet other) const {
    DispositionSet s;
    s.bits_ = bits_ | other.bits_;
    return s;
  }
  std::uint16_t bits() const { return bits_; }
  static DispositionSet from_bits(std::uint16_t bits) {
    DispositionSet s;
    s.bits_ = bits;
    return s;
  }

  friend bool operator==(DispositionSet, DispositionSet) = default;

 private:
  std::uint16_t bits_ = 0;
};

/// Relative frequencies of the five opinions, indexed -2..+2.
class OpinionDistribution {
 public:
  OpinionDistribution() = default;
  /// Throws std::invalid_argument unless every entry is >= 0 and the sum is 1
  /// within 1e-9.
  explicit OpinionDistribution(std::array<double, Opinion::kLevels> frequencies);

  double operator[](Opinion o) const { return f_[o.index()]; }
  const std::array<double, Opinion::kLevels>& frequencies() const { return f_; }

  static OpinionDistribution paper_default() { return OpinionDistribution({0.1, 0.2, 0.4, 0.2, 0.1}); }

  friend bool operator==(const OpinionDistribution&, const OpinionDistribution&) = default;

 private:
  std::array<double, Opinion::kLevels> f_{0.0, 0.0, 1.0, 0.0, 0.0};
};

/// Throws Error("empty population") on an empty list.
OpinionDistribution distribution_of(std::span<const Opinion> opinions);

/// Largest-remainder allocation of n agents over the five opinions.
std::array<std::size_t, Opinion::kLevels> allocate_counts(const OpinionDistribution& dist, std::size_t n);

/// Exact-count allocation followed by a shuffle.
std::vector<Opinion> sample_initial_opinions(const OpinionDistribution& dist, std::size_t n, RandomStream& rng);

/// Independent draws from the distribution.
std::vector<Opinion> sample_iid_opinions(const OpinionDistribution& dist, std::size_t n, RandomStream& rng);

using AgentId = int;

/// Influencers are addressed with negative sender ids: influencer k is -(k+1).
constexpr AgentId influencer_sender_id(std::size_t k) { return -static_cast<AgentId>(k) - 1; }
constexpr bool is_influencer_id(AgentId id) { return id < 0; }

struct Message {
  AgentId sender = 0;
  std::string text;
  Opinion sender_opinion;
  int timestep = 0;

  bool from_influencer() const { return is_influencer_id(sender); }
  friend bool operator==(const Message&, const Message&) = default;
};

struct AgentState {
  AgentId id = 0;
  Opinion opinion;
  std::string reason;
  DispositionSet dispositions;
  std::vector<Message> inbox;
  /// Messages received from each peer, oldest first, capped at the history
  /// limit.
  std::map<AgentId, std::deque<Message>> history;

  void remember(const Message& m, std::size_t cap);

  friend bool operator==(const AgentState&, const AgentState&) = default;
};

}  // namespace polarsim
