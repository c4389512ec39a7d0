#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "polarsim/domain.hpp"
#include "polarsim/socialnet.hpp"

namespace polarsim {

/// One delivered peer message, with both opinions captured at send time.
struct InteractionRecord {
  int timestep = 0;
  AgentId sender = 0;
  Opinion sender_opinion;
  AgentId receiver = 0;
  Opinion receiver_opinion;

  friend bool operator==(const InteractionRecord&, const InteractionRecord&) = default;
};

/// Sum over k of |k| f_k, in [0, 2].
double polarization_level(const OpinionDistribution& dist);
double polarization_level(std::span<const Opinion> opinions);

/// (x_now - x_prev) * sign(x_prev). A neutral origin gives 0 flagged
/// degenerate.
Measured polarization_change(Opinion prev, Opinion now);

class TransitionMatrix {
 public:
  using Rows = std::array<std::array<double, Opinion::kLevels>, Opinion::kLevels>;

  TransitionMatrix() : TransitionMatrix(identity_rows()) {}
  /// Throws Error unless every entry is >= 0 and every row sums to 1 within
  /// 1e-9.
  explicit TransitionMatrix(const Rows& rows);

  /// Row-normalised counts; a row with no observations is left as identity
  /// and reported by empty_rows().
  static TransitionMatrix from_counts(const std::array<std::array<std::size_t, Opinion::kLevels>, Opinion::kLevels>& counts);

  double operator()(Opinion from, Opinion to) const { return p_[from.index()][to.index()]; }
  const Rows& rows() const { return p_; }
  const std::vector<std::size_t>& empty_rows() const { return empty_rows_; }

  static Rows identity_rows();

 private:
  Rows p_;
  std::vector<std::size_t> empty_rows_;
};

/// Sum over k, k' of P[k][k'] |k - k'|, divided by the number of rows.
double self_inconsistency_rate(const TransitionMatrix& p);

struct InteractionMix {
  double homophilic = 0.0;
  double heterophilic = 0.0;
  double neutral_involved = 0.0;
  std::size_t count = 0;
  bool empty = true;  // no records: all shares 0
};

InteractionMix interaction_mix(std::span<const InteractionRecord> records);

/// Share of messages received by `agent` whose sender camp equals the
/// receiver's camp at receipt. nullopt when the agent received nothing.
std::optional<double> likeminded_exposure(std::span<const InteractionRecord> records, AgentId agent);

struct ExposureSummary {
  std::vector<double> shares;  // one per agent with inbound messages, by id
  double median = 0.0;
  double share_above_075 = 0.0;  // strictly above 0.75
  std::size_t excluded = 0;      // agents with no inbound messages
};

ExposureSummary likeminded_exposure_summary(std::span<const InteractionRecord> records, std::size_t n_agents);

struct EchoChamberJoint {
  /// density[own opinion index][rounded mean in-neighbour opinion index]
  std::array<std::array<double, Opinion::kLevels>, Opinion::kLevels> density{};
  std::size_t isolated = 0;  // nodes without in-neighbours, excluded
};

/// Mean in-neighbour opinion is rounded half away from zero.
EchoChamberJoint echo_chamber_joint(const SocialGraph& g, std::span<const Opinion> opinions);

struct GroupStat {
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;
  double ci_low = 0.0;   // normal-approximation 95%
  double ci_high = 0.0;
  bool defined = false;  // n >= 2
};

GroupStat group_stat(std::span<const double> values);

struct TTest {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;  // two-sided
  bool defined = false;
};

/// Welch two-sample t test.
TTest welch_t_test(std::span<const double> a, std::span<const double> b);

struct ZTest {
  double z = 0.0;
  double p = 1.0;  // two-sided
  bool defined = false;
};

/// Pooled two-proportion z test.
ZTest two_proportion_z_test(std::size_t hits_a, std::size_t n_a, std::size_t hits_b, std::size_t n_b);

/// Upper-tail chi-square p value of observed counts against equal expected
/// counts.
double chi_square_uniform_p(std::span<const std::size_t> counts);

struct ExposureEffectTable {
  /// Keys: "<homophilic|opposing>/<radical|moderate>" and the per-camp
  /// variants "<...>/<...>/<L|R>".
  std::map<std::string, GroupStat> groups;
  /// radical vs moderate within each exposure type.
  std::map<std::string, TTest> tests;
  std::size_t neutral_origin = 0;  // agents with x_prev = 0, not grouped
  std::size_t tied = 0;            // no strict majority camp among in-neighbours
  std::size_t isolated = 0;        // no in-neighbours
};

/// Groups every agent by exposure (strict in-neighbour majority camp equal
/// to or opposite its own) and by whether the in-neighbour mean is more
/// extreme than its own opinion, then summarises s_cp across the step.
ExposureEffectTable exposure_effect_table(const SocialGraph& g_prev, std::span<const Opinion> prev,
                                          std::span<const Opinion> now);

/// s[t] - s[t - lag] for t = lag .. size-1. Throws Error unless size > lag.
std::vector<double> polarization_speed(std::span<const double> series, std::size_t lag = 5);

/// Fraction of agents whose opinion differs between two snapshots.
double opinion_change_rate(std::span<const Opinion> now, std::span<const Opinion> prev);

/// Share of the larger of the two non-neutral camps.
double dominant_camp_share(std::span<const Opinion> opinions);

struct MetricsRow {
  int t = 0;
  double s_pol = 0.0;
  double homophilic = 0.0;
  double heterophilic = 0.0;
  double neutral_involved = 0.0;
  double modularity = 0.0;
  double assortativity = 0.0;
  double homophily_index = 0.0;
  double change_rate_edges = 0.0;
  double change_rate_opinions = 0.0;

  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

/// prev_graph/prev_opinions may be null for the initial row.
MetricsRow compute_metrics_row(int t, const SocialGraph& g, std::span<const Opinion> opinions,
                               std::span<const InteractionRecord> records, const SocialGraph* prev_graph,
                               std::span<const Opinion> prev_opinions);

/// Fixed column order: t, s_pol, homophilic, heterophilic, neutral_involved,
/// modularity, assortativity, homophily_index, change_rate_edges,
/// change_rate_opinions.
std::string metrics_csv_header();
std::string metrics_csv_line(const MetricsRow& row);
MetricsRow parse_metrics_csv_line(const std::string& line);

/// Shortest round-trip decimal representation.
std::string format_double(double v);

}  // namespace polarsim
