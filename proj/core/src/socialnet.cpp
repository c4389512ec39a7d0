#include "polarsim/socialnet.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace polarsim {

SocialGraph::SocialGraph(std::size_t n) : out_(n), in_(n) {}

void SocialGraph::check(AgentId i) const {
  if (i < 0 || static_cast<std::size_t>(i) >= out_.size()) {
    throw std::out_of_range("node " + std::to_string(i) + " outside graph of size " + std::to_string(out_.size()));
  }
}

bool SocialGraph::add_edge(AgentId from, AgentId to) {
  check(from);
  check(to);
  if (from == to) throw std::invalid_argument("self-loop on node " + std::to_string(from));
  if (!out_[static_cast<std::size_t>(from)].insert(to).second) return false;
  in_[static_cast<std::size_t>(to)].insert(from);
  ++edge_count_;
  journal_.emplace_back(from, to);
  return true;
}

bool SocialGraph::remove_edge(AgentId from, AgentId to) {
  check(from);
  check(to);
  if (out_[static_cast<std::size_t>(from)].erase(to) == 0) return false;
  in_[static_cast<std::size_t>(to)].erase(from);
  --edge_count_;
  return true;
}

bool SocialGraph::has_edge(AgentId from, AgentId to) const {
  check(from);
  check(to);
  return out_[static_cast<std::size_t>(from)].contains(to);
}

std::vector<Edge> SocialGraph::edges() const {
  std::vector<Edge> out;
  out.reserve(edge_count_);
  for (std::size_t i = 0; i < out_.size(); ++i) {
    for (AgentId j : out_[i]) out.emplace_back(static_cast<AgentId>(i), j);
  }
  return out;
}

std::vector<Edge> SocialGraph::undirected_edges() const {
  std::vector<Edge> out;
  out.reserve(edge_count_);
  for (std::size_t i = 0; i < out_.size(); ++i) {
    const auto a = static_cast<AgentId>(i);
    for (AgentId j : out_[i]) {
      if (a < j || !out_[static_cast<std::size_t>(j)].contains(a)) out.emplace_back(std::min(a, j), std::max(a, j));
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<AgentId> SocialGraph::undirected_neighbors(AgentId i) const {
  check(i);
  const auto& o = out_[static_cast<std::size_t>(i)];
  const auto& n = in_[static_cast<std::size_t>(i)];
  std::vector<AgentId> out;
  out.reserve(o.size() + n.size());
  std::set_union(o.begin(), o.end(), n.begin(), n.end(), std::back_inserter(out));
  return out;
}

bool SocialGraph::is_symmetric() const {
  for (std::size_t i = 0; i < out_.size(); ++i) {
    if (out_[i] != in_[i]) return false;
  }
  return true;
}

SocialGraph from_undirected(std::size_t n, const std::vector<Edge>& undirected) {
  SocialGraph g(n);
  for (const auto& [a, b] : undirected) {
    g.add_edge(a, b);
    g.add_edge(b, a);
  }
  g.clear_journal();
  return g;
}

SocialGraph init_watts_strogatz(std::size_t n, int k, double p, RandomStream& rng) {
  if (k < 2 || k % 2 != 0) throw std::invalid_argument("Watts-Strogatz k must be an even integer >= 2");
  if (static_cast<std::size_t>(k) >= n) throw std::invalid_argument("Watts-Strogatz requires k < n");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("Watts-Strogatz p must lie in [0, 1]");

  std::vector<std::set<AgentId>> adj(n);
  auto link = [&](std::size_t a, std::size_t b) {
    adj[a].insert(static_cast<AgentId>(b));
    adj[b].insert(static_cast<AgentId>(a));
  };
  auto unlink = [&](std::size_t a, std::size_t b) {
    adj[a].erase(static_cast<AgentId>(b));
    adj[b].erase(static_cast<AgentId>(a));
  };
  const auto half = static_cast<std::size_t>(k / 2);
  for (std::size_t j = 1; j <= half; ++j) {
    for (std::size_t u = 0; u < n; ++u) link(u, (u + j) % n);
  }
  // Same sweep order as the classic construction: one lattice "ring" at a
  // time, each edge (u, u+j) considered once.
  for (std::size_t j = 1; j <= half; ++j) {
    for (std::size_t u = 0; u < n; ++u) {
      const std::size_t v = (u + j) % n;
      if (!rng.bernoulli(p)) continue;
      if (adj[u].size() >= n - 1) continue;
      std::size_t w = static_cast<std::size_t>(rng.below(n));
      while (w == u || adj[u].contains(static_cast<AgentId>(w))) w = static_cast<std::size_t>(rng.below(n));
      unlink(u, v);
      link(u, w);
    }
  }
  std::vector<Edge> und;
  for (std::size_t a = 0; a < n; ++a) {
    for (AgentId b : adj[a]) {
      if (static_cast<AgentId>(a) < b) und.emplace_back(static_cast<AgentId>(a), b);
    }
  }
  return from_undirected(n, und);
}

SocialGraph init_erdos_renyi(std::size_t n, double k_avg, RandomStream& rng) {
  if (n < 3) throw std::invalid_argument("Erdos-Renyi requires n >= 3");
  if (!(k_avg >= 0.0 && k_avg <= static_cast<double>(n - 1))) {
    throw std::invalid_argument("Erdos-Renyi k_avg must lie in [0, n-1]");
  }
  const double p = k_avg / static_cast<double>(n - 1);
  std::vector<Edge> und;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      if (rng.bernoulli(p)) und.emplace_back(static_cast<AgentId>(a), static_cast<AgentId>(b));
    }
  }
  return from_undirected(n, und);
}

SocialGraph init_barabasi_albert(std::size_t n, int m, RandomStream& rng) {
  if (n < 3) throw std::invalid_argument("Barabasi-Albert requires n >= 3");
  if (m < 1 || static_cast<std::size_t>(m) >= n) throw std::invalid_argument("Barabasi-Albert m must lie in [1, n-1]");
  const auto mm = static_cast<std::size_t>(m);
  std::vector<Edge> und;
  std::vector<AgentId> repeated;  // each node appears once per incident edge
  // Seed with a star on m + 1 nodes.
  for (std::size_t leaf = 1; leaf <= mm; ++leaf) {
    und.emplace_back(0, static_cast<AgentId>(leaf));
    repeated.push_back(0);
    repeated.push_back(static_cast<AgentId>(leaf));
  }
  for (std::size_t source = mm + 1; source < n; ++source) {
    std::set<AgentId> targets;
    while (targets.size() < mm) targets.insert(repeated[static_cast<std::size_t>(rng.below(repeated.size()))]);
    for (AgentId t : targets) {
      und.emplace_back(t, static_cast<AgentId>(source));
      repeated.push_back(t);
      repeated.push_back(static_cast<AgentId>(source));
    }
  }
  return from_undirected(n, und);
}

SocialGraph make_initial_graph(const NetworkSpec& spec, std::size_t n, RandomStream& rng) {
  switch (spec.model) {
    case NetworkModel::WattsStrogatz: return init_watts_strogatz(n, spec.k, spec.p, rng);
    case NetworkModel::ErdosRenyi: return init_erdos_renyi(n, spec.k_avg, rng);
    case NetworkModel::BarabasiAlbert: return init_barabasi_albert(n, spec.m, rng);
  }
  throw std::invalid_argument("unknown network model");
}

std::optional<AgentId> replace_partner(SocialGraph& g, AgentId i, AgentId old_j, RandomStream& rng) {
  const auto n = g.size();
  const auto& out = g.out_neighbors(i);
  if (!out.contains(old_j)) throw std::invalid_argument("replace_partner: (i, old_j) is not a contact");
  const std::size_t candidates = n - 1 - out.size();
  if (candidates == 0) return std::nullopt;

  AgentId chosen = -1;
  if (out.size() * 2 < n) {
    // Rejection sampling is uniform over the candidate set and cheap while
    // most nodes are candidates.
    do {
      chosen = static_cast<AgentId>(rng.below(n));
    } while (chosen == i || out.contains(chosen));
  } else {
    auto rank = rng.below(candidates);
    for (std::size_t v = 0; v < n; ++v) {
      const auto id = static_cast<AgentId>(v);
      if (id == i || out.contains(id)) continue;
      if (rank == 0) {
        chosen = id;
        break;
      }
      --rank;
    }
  }
  g.remove_edge(i, old_j);
  g.add_edge(i, chosen);
  return chosen;
}

std::vector<int> camp_partition(const SocialGraph& g, std::span<const Opinion> opinions) {
  const auto n = g.size();
  if (opinions.size() != n) throw std::invalid_argument("opinion count does not match graph size");
  std::vector<int> side(n, 0);
  for (std::size_t v = 0; v < n; ++v) {
    const Camp c = camp_of(opinions[v]);
    if (c == Camp::Left) {
      side[v] = 0;
    } else if (c == Camp::Right) {
      side[v] = 1;
    } else {
      int left = 0;
      int right = 0;
      for (AgentId u : g.undirected_neighbors(static_cast<AgentId>(v))) {
        const Camp cu = camp_of(opinions[static_cast<std::size_t>(u)]);
        if (cu == Camp::Left) ++left;
        if (cu == Camp::Right) ++right;
      }
      if (left != right) side[v] = left > right ? 0 : 1;
      else side[v] = static_cast<int>(v % 2);
    }
  }
  return side;
}

double modularity_by_camp(const SocialGraph& g, std::span<const Opinion> opinions) {
  const auto side = camp_partition(g, opinions);
  const auto und = g.undirected_edges();
  if (und.empty()) return 0.0;
  const auto m = static_cast<double>(und.size());
  std::array<double, 2> internal{0.0, 0.0};
  std::array<double, 2> degree_sum{0.0, 0.0};
  for (const auto& [a, b] : und) {
    const int sa = side[static_cast<std::size_t>(a)];
    const int sb = side[static_cast<std::size_t>(b)];
    degree_sum[static_cast<std::size_t>(sa)] += 1.0;
    degree_sum[static_cast<std::size_t>(sb)] += 1.0;
    if (sa == sb) internal[static_cast<std::size_t>(sa)] += 1.0;
  }
  double q = 0.0;
  for (std::size_t c = 0; c < 2; ++c) {
    const double frac = degree_sum[c] / (2.0 * m);
    q += internal[c] / m - frac * frac;
  }
  return q;
}

Measured assortativity(const SocialGraph& g, std::span<const Opinion> opinions) {
  if (opinions.size() != g.size()) throw std::invalid_argument("opinion count does not match graph size");
  const auto und = g.undirected_edges();
  if (und.size() < 2) return {0.0, true};
  // Symmetric form: each undirected edge contributes both orientations, so
  // the two margins coincide.
  double sum = 0.0;
  double sum_sq = 0.0;
  double cross = 0.0;
  for (const auto& [a, b] : und) {
    const double x = opinions[static_cast<std::size_t>(a)].value();
    const double y = opinions[static_cast<std::size_t>(b)].value();
    sum += x + y;
    sum_sq += x * x + y * y;
    cross += 2.0 * x * y;
  }
  const double count = 2.0 * static_cast<double>(und.size());
  const double mean = sum / count;
  const double var = sum_sq / count - mean * mean;
  if (var <= 1e-15) return {0.0, true};
  const double cov = cross / count - mean * mean;
  return {std::clamp(cov / var, -1.0, 1.0), false};
}

double homophily_index(const SocialGraph& g, std::span<const Opinion> opinions) {
  if (opinions.size() != g.size()) throw std::invalid_argument("opinion count does not match graph size");
  const auto und = g.undirected_edges();
  if (und.empty()) throw Error("homophily index undefined on a graph with no edges");
  std::size_t same = 0;
  for (const auto& [a, b] : und) {
    if (camp_of(opinions[static_cast<std::size_t>(a)]) == camp_of(opinions[static_cast<std::size_t>(b)])) ++same;
  }
  std::array<double, 3> share{0.0, 0.0, 0.0};
  for (Opinion o : opinions) share[static_cast<std::size_t>(sign_of(camp_of(o)) + 1)] += 1.0;
  double expected = 0.0;
  for (double s : share) {
    const double p = s / static_cast<double>(opinions.size());
    expected += p * p;
  }
  const double observed = static_cast<double>(same) / static_cast<double>(und.size());
  return observed / expected;
}

namespace {

DegreeSummary summarize(std::vector<std::size_t> degrees, std::size_t top) {
  DegreeSummary s;
  if (degrees.empty()) return s;
  double total = 0.0;
  for (auto d : degrees) {
    ++s.histogram[d];
    total += static_cast<double>(d);
  }
  s.mean = total / static_cast<double>(degrees.size());
  std::sort(degrees.begin(), degrees.end(), std::greater<>());
  const auto k = std::min(top, degrees.size());
  double top_total = 0.0;
  for (std::size_t i = 0; i < k; ++i) top_total += static_cast<double>(degrees[i]);
  s.top_mean = k > 0 ? top_total / static_cast<double>(k) : 0.0;
  s.top_ratio = s.mean > 0.0 ? s.top_mean / s.mean : 0.0;
  return s;
}

}  // namespace

DegreeSummary in_degree_histogram(const SocialGraph& g, std::size_t top) {
  std::vector<std::size_t> d(g.size());
  for (std::size_t v = 0; v < g.size(); ++v) d[v] = g.in_degree(static_cast<AgentId>(v));
  return summarize(std::move(d), top);
}

DegreeSummary total_degree_histogram(const SocialGraph& g, std::size_t top) {
  std::vector<std::size_t> d(g.size());
  for (std::size_t v = 0; v < g.size(); ++v) d[v] = g.undirected_neighbors(static_cast<AgentId>(v)).size();
  return summarize(std::move(d), top);
}

Measured network_change_rate(const SocialGraph& now, const SocialGraph& prev) {
  if (now.size() != prev.size()) throw std::invalid_argument("network_change_rate: graphs differ in size");
  if (prev.edge_count() == 0) return {0.0, true};
  std::size_t kept = 0;
  for (std::size_t i = 0; i < prev.size(); ++i) {
    const auto& a = prev.out_neighbors(static_cast<AgentId>(i));
    const auto& b = now.out_neighbors(static_cast<AgentId>(i));
    for (AgentId j : a) kept += b.contains(j) ? 1 : 0;
  }
  return {1.0 - static_cast<double>(kept) / static_cast<double>(prev.edge_count()), false};
}

double average_clustering(const SocialGraph& g) {
  const auto n = g.size();
  if (n == 0) return 0.0;
  std::vector<std::vector<AgentId>> nb(n);
  for (std::size_t v = 0; v < n; ++v) nb[v] = g.undirected_neighbors(static_cast<AgentId>(v));
  double total = 0.0;
  for (std::size_t v = 0; v < n; ++v) {
    const auto& a = nb[v];
    const auto k = a.size();
    if (k < 2) continue;
    std::size_t links = 0;
    for (std::size_t x = 0; x < k; ++x) {
      const auto& ax = nb[static_cast<std::size_t>(a[x])];
      for (std::size_t y = x + 1; y < k; ++y) {
        if (std::binary_search(ax.begin(), ax.end(), a[y])) ++links;
      }
    }
    total += 2.0 * static_cast<double>(links) / static_cast<double>(k * (k - 1));
  }
  return total / static_cast<double>(n);
}

NetworkSnapshot snapshot_of(int timestep, const SocialGraph& g, std::span<const Opinion> opinions) {
  return {timestep, g.edges(), std::vector<Opinion>(opinions.begin(), opinions.end())};
}

void write_edge_list(std::ostream& out, int timestep, const SocialGraph& g) {
  for (const auto& [i, j] : g.edges()) out << timestep << ',' << i << ',' << j << '\n';
}

}  // namespace polarsim
