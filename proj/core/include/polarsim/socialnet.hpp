#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "polarsim/config.hpp"
#include "polarsim/domain.hpp"
#include "polarsim/random.hpp"

namespace polarsim {

using Edge = std::pair<AgentId, AgentId>;

/// Directed contact graph: edge (i, j) means agent i may contact agent j.
class SocialGraph {
 public:
  SocialGraph() = default;
  explicit SocialGraph(std::size_t n);

  std::size_t size() const { return out_.size(); }

  /// Returns false if the edge already exists. Throws on self-loops and
  /// out-of-range endpoints.
  bool add_edge(AgentId from, AgentId to);
  bool remove_edge(AgentId from, AgentId to);
  bool has_edge(AgentId from, AgentId to) const;

  const std::set<AgentId>& out_neighbors(AgentId i) const { return out_.at(static_cast<std::size_t>(i)); }
  const std::set<AgentId>& in_neighbors(AgentId i) const { return in_.at(static_cast<std::size_t>(i)); }
  std::size_t out_degree(AgentId i) const { return out_neighbors(i).size(); }
  std::size_t in_degree(AgentId i) const { return in_neighbors(i).size(); }

  std::size_t edge_count() const { return edge_count_; }
  /// All directed edges in (from, to) order.
  std::vector<Edge> edges() const;
  /// Undirected projection: (min, max) pairs, each once, sorted.
  std::vector<Edge> undirected_edges() const;
  /// Neighbours in the undirected projection, sorted and unique.
  std::vector<AgentId> undirected_neighbors(AgentId i) const;

  /// Edges added since the journal was last cleared, in insertion order.
  const std::vector<Edge>& new_edge_journal() const { return journal_; }
  void clear_journal() { journal_.clear(); }

  bool is_symmetric() const;

  friend bool operator==(const SocialGraph& a, const SocialGraph& b) { return a.out_ == b.out_; }

 private:
  void check(AgentId i) const;

  std::vector<std::set<AgentId>> out_;
  std::vector<std::set<AgentId>> in_;
  std::size_t edge_count_ = 0;
  std::vector<Edge> journal_;
};

/// Builds a directed graph holding both orientations of every undirected edge.
SocialGraph from_undirected(std::size_t n, const std::vector<Edge>& undirected);

/// Ring lattice with k neighbours per node, each lattice edge rewired with
/// probability p. Throws std::invalid_argument unless n > k >= 2 and k even.
SocialGraph init_watts_strogatz(std::size_t n, int k, double p, RandomStream& rng);
/// G(n, p) with p = k_avg / (n - 1).
SocialGraph init_erdos_renyi(std::size_t n, double k_avg, RandomStream& rng);
/// Preferential attachment, m edges per new node (mean degree close to 2m).
SocialGraph init_barabasi_albert(std::size_t n, int m, RandomStream& rng);
SocialGraph make_initial_graph(const NetworkSpec& spec, std::size_t n, RandomStream& rng);

/// Replaces the contact (i, old_j) with (i, new_j), new_j uniform over nodes
/// that are neither i nor current out-neighbours of i. Returns nullopt and
/// leaves the graph untouched when i already contacts every other node.
std::optional<AgentId> replace_partner(SocialGraph& g, AgentId i, AgentId old_j, RandomStream& rng);

struct Measured {
  double value = 0.0;
  bool degenerate = false;
};

/// Two-block partition used by the modularity score: 0 = left side,
/// 1 = right side. Neutral nodes join the side with more undirected links;
/// ties go left for even ids and right for odd ids.
std::vector<int> camp_partition(const SocialGraph& g, std::span<const Opinion> opinions);

/// Newman modularity of the camp partition on the undirected projection.
/// Zero edges give 0.
double modularity_by_camp(const SocialGraph& g, std::span<const Opinion> opinions);

/// Pearson correlation of opinion values across undirected edge endpoints.
/// Zero variance (or fewer than 2 edges) gives 0 flagged degenerate.
Measured assortativity(const SocialGraph& g, std::span<const Opinion> opinions);

/// Observed same-camp edge fraction over the random-mixing expectation
/// sum_g p_g^2 (camps L, N, R). Throws Error on a graph with no edges.
double homophily_index(const SocialGraph& g, std::span<const Opinion> opinions);

struct DegreeSummary {
  std::map<std::size_t, std::size_t> histogram;  // degree -> node count
  double mean = 0.0;
  double top_mean = 0.0;   // mean degree of the top-k nodes
  double top_ratio = 0.0;  // top_mean / mean (0 when mean is 0)
};

DegreeSummary in_degree_histogram(const SocialGraph& g, std::size_t top = 20);
/// Degree in the undirected projection.
DegreeSummary total_degree_histogram(const SocialGraph& g, std::size_t top = 20);

/// 1 - |E_now ∩ E_prev| / |E_prev| over directed edges. An empty previous
/// edge set gives 0 flagged degenerate.
Measured network_change_rate(const SocialGraph& now, const SocialGraph& prev);

/// Mean local clustering coefficient of the undirected projection.
double average_clustering(const SocialGraph& g);

struct NetworkSnapshot {
  int timestep = 0;
  std::vector<Edge> edges;
  std::vector<Opinion> opinions;
};

NetworkSnapshot snapshot_of(int timestep, const SocialGraph& g, std::span<const Opinion> opinions);

/// One "t,i,j" line per directed edge.
void write_edge_list(std::ostream& out, int timestep, const SocialGraph& g);

}  // namespace polarsim
