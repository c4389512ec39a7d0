#include "polarsim/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace polarsim {

double polarization_level(const OpinionDistribution& dist) {
  double s = 0.0;
  for (Opinion o : Opinion::all()) s += o.magnitude() * dist[o];
  return s;
}

double polarization_level(std::span<const Opinion> opinions) {
  if (opinions.empty()) throw Error("empty population");
  std::size_t total = 0;
  for (Opinion o : opinions) total += static_cast<std::size_t>(o.magnitude());
  return static_cast<double>(total) / static_cast<double>(opinions.size());
}

Measured polarization_change(Opinion prev, Opinion now) {
  const int s = sign_of(camp_of(prev));
  if (s == 0) return {0.0, true};
  return {static_cast<double>((now.value() - prev.value()) * s), false};
}

TransitionMatrix::Rows TransitionMatrix::identity_rows() {
  Rows r{};
  for (std::size_t k = 0; k < Opinion::kLevels; ++k) r[k][k] = 1.0;
  return r;
}

TransitionMatrix::TransitionMatrix(const Rows& rows) : p_(rows) {
  for (std::size_t k = 0; k < Opinion::kLevels; ++k) {
    double sum = 0.0;
    for (double v : p_[k]) {
      if (!(v >= 0.0)) throw Error("transition matrix row " + std::to_string(k) + " has a negative entry");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw Error("transition matrix row " + std::to_string(k) + " sums to " + std::to_string(sum));
    }
  }
}

TransitionMatrix TransitionMatrix::from_counts(
    const std::array<std::array<std::size_t, Opinion::kLevels>, Opinion::kLevels>& counts) {
  Rows rows = identity_rows();
  std::vector<std::size_t> empty;
  for (std::size_t k = 0; k < Opinion::kLevels; ++k) {
    const auto total = std::accumulate(counts[k].begin(), counts[k].end(), std::size_t{0});
    if (total == 0) {
      empty.push_back(k);
      continue;
    }
    for (std::size_t j = 0; j < Opinion::kLevels; ++j) {
      rows[k][j] = static_cast<double>(counts[k][j]) / static_cast<double>(total);
    }
  }
  TransitionMatrix m(rows);
  m.empty_rows_ = std::move(empty);
  return m;
}

double self_inconsistency_rate(const TransitionMatrix& p) {
  double s = 0.0;
  for (std::size_t k = 0; k < Opinion::kLevels; ++k) {
    for (std::size_t j = 0; j < Opinion::kLevels; ++j) {
      const double d = k > j ? static_cast<double>(k - j) : static_cast<double>(j - k);
      s += p.rows()[k][j] * d;
    }
  }
  return s / static_cast<double>(Opinion::kLevels);
}

InteractionMix interaction_mix(std::span<const InteractionRecord> records) {
  InteractionMix mix;
  if (records.empty()) return mix;
  std::size_t homo = 0;
  std::size_t hetero = 0;
  std::size_t neutral = 0;
  for (const auto& r : records) {
    const Camp a = camp_of(r.sender_opinion);
    const Camp b = camp_of(r.receiver_opinion);
    if (a == Camp::Neutral || b == Camp::Neutral) ++neutral;
    else if (a == b) ++homo;
    else ++hetero;
  }
  const auto n = static_cast<double>(records.size());
  mix.homophilic = static_cast<double>(homo) / n;
  mix.heterophilic = static_cast<double>(hetero) / n;
  mix.neutral_involved = static_cast<double>(neutral) / n;
  mix.count = records.size();
  mix.empty = false;
  return mix;
}

std::optional<double> likeminded_exposure(std::span<const InteractionRecord> records, AgentId agent) {
  std::size_t total = 0;
  std::size_t same = 0;
  for (const auto& r : records) {
    if (r.receiver != agent) continue;
    ++total;
    if (camp_of(r.sender_opinion) == camp_of(r.receiver_opinion)) ++same;
  }
  if (total == 0) return std::nullopt;
  return static_cast<double>(same) / static_cast<double>(total);
}

ExposureSummary likeminded_exposure_summary(std::span<const InteractionRecord> records, std::size_t n_agents) {
  std::vector<std::size_t> total(n_agents, 0);
  std::vector<std::size_t> same(n_agents, 0);
  for (const auto& r : records) {
    if (r.receiver < 0 || static_cast<std::size_t>(r.receiver) >= n_agents) continue;
    const auto i = static_cast<std::size_t>(r.receiver);
    ++total[i];
    if (camp_of(r.sender_opinion) == camp_of(r.receiver_opinion)) ++same[i];
  }
  ExposureSummary s;
  for (std::size_t i = 0; i < n_agents; ++i) {
    if (total[i] == 0) {
      ++s.excluded;
      continue;
    }
    s.shares.push_back(static_cast<double>(same[i]) / static_cast<double>(total[i]));
  }
  if (!s.shares.empty()) {
    auto sorted = s.shares;
    std::sort(sorted.begin(), sorted.end());
    const auto m = sorted.size();
    s.median = m % 2 == 1 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
    const auto above = std::count_if(sorted.begin(), sorted.end(), [](double v) { return v > 0.75; });
    s.share_above_075 = static_cast<double>(above) / static_cast<double>(m);
  }
  return s;
}

EchoChamberJoint echo_chamber_joint(const SocialGraph& g, std::span<const Opinion> opinions) {
  if (opinions.size() != g.size()) throw std::invalid_argument("opinion count does not match graph size");
  EchoChamberJoint joint;
  std::size_t counted = 0;
  std::array<std::array<std::size_t, Opinion::kLevels>, Opinion::kLevels> counts{};
  for (std::size_t v = 0; v < g.size(); ++v) {
    const auto& in = g.in_neighbors(static_cast<AgentId>(v));
    if (in.empty()) {
      ++joint.isolated;
      continue;
    }
    long sum = 0;
    for (AgentId u : in) sum += opinions[static_cast<std::size_t>(u)].value();
    const double mean = static_cast<double>(sum) / static_cast<double>(in.size());
    const auto bucket = static_cast<int>(std::round(mean));
    ++counts[opinions[v].index()][static_cast<std::size_t>(bucket - Opinion::kMin)];
    ++counted;
  }
  if (counted > 0) {
    for (std::size_t a = 0; a < Opinion::kLevels; ++a) {
      for (std::size_t b = 0; b < Opinion::kLevels; ++b) {
        joint.density[a][b] = static_cast<double>(counts[a][b]) / static_cast<double>(counted);
      }
    }
  }
  return joint;
}

GroupStat group_stat(std::span<const double> values) {
  GroupStat g;
  g.n = values.size();
  if (g.n == 0) return g;
  g.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(g.n);
  if (g.n < 2) return g;
  double ss = 0.0;
  for (double v : values) ss += (v - g.mean) * (v - g.mean);
  g.sd = std::sqrt(ss / static_cast<double>(g.n - 1));
  const double half = 1.959963984540054 * g.sd / std::sqrt(static_cast<double>(g.n));
  g.ci_low = g.mean - half;
  g.ci_high = g.mean + half;
  g.defined = true;
  return g;
}

TTest welch_t_test(std::span<const double> a, std::span<const double> b) {
  const auto ga = group_stat(a);
  const auto gb = group_stat(b);
  TTest t;
  if (!ga.defined || !gb.defined) return t;
  const double va = ga.sd * ga.sd / static_cast<double>(ga.n);
  const double vb = gb.sd * gb.sd / static_cast<double>(gb.n);
  const double se2 = va + vb;
  if (se2 <= 0.0) return t;
  t.t = (ga.mean - gb.mean) / std::sqrt(se2);
  t.df = se2 * se2 /
         (va * va / static_cast<double>(ga.n - 1) + vb * vb / static_cast<double>(gb.n - 1));
  const boost::math::students_t dist(t.df);
  t.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t.t)));
  t.defined = true;
  return t;
}

ZTest two_proportion_z_test(std::size_t hits_a, std::size_t n_a, std::size_t hits_b, std::size_t n_b) {
  ZTest z;
  if (n_a == 0 || n_b == 0) return z;
  const double pa = static_cast<double>(hits_a) / static_cast<double>(n_a);
  const double pb = static_cast<double>(hits_b) / static_cast<double>(n_b);
  const double pooled = static_cast<double>(hits_a + hits_b) / static_cast<double>(n_a + n_b);
  const double se =
      std::sqrt(pooled * (1.0 - pooled) * (1.0 / static_cast<double>(n_a) + 1.0 / static_cast<double>(n_b)));
  if (se <= 0.0) return z;
  z.z = (pa - pb) / se;
  const boost::math::normal_distribution<> nd;
  z.p = 2.0 * boost::math::cdf(boost::math::complement(nd, std::abs(z.z)));
  z.defined = true;
  return z;
}

double chi_square_uniform_p(std::span<const std::size_t> counts) {
  if (counts.size() < 2) throw Error("chi-square test needs at least two cells");
  const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
  if (total == 0.0) throw Error("chi-square test on empty counts");
  const double expected = total / static_cast<double>(counts.size());
  double stat = 0.0;
  for (auto c : counts) stat += (static_cast<double>(c) - expected) * (static_cast<double>(c) - expected) / expected;
  const boost::math::chi_squared dist(static_cast<double>(counts.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

ExposureEffectTable exposure_effect_table(const SocialGraph& g_prev, std::span<const Opinion> prev,
                                          std::span<const Opinion> now) {
  if (prev.size() != g_prev.size() || now.size() != prev.size()) {
    throw std::invalid_argument("exposure_effect_table: snapshot sizes differ");
  }
  ExposureEffectTable table;
  std::map<std::string, std::vector<double>> samples;
  for (std::size_t v = 0; v < prev.size(); ++v) {
    const Camp own = camp_of(prev[v]);
    const auto& in = g_prev.in_neighbors(static_cast<AgentId>(v));
    if (in.empty()) {
      ++table.isolated;
      continue;
    }
    if (own == Camp::Neutral) {
      ++table.neutral_origin;
      continue;
    }
    std::array<std::size_t, 3> camp_counts{};
    long sum = 0;
    for (AgentId u : in) {
      const Opinion o = prev[static_cast<std::size_t>(u)];
      ++camp_counts[static_cast<std::size_t>(sign_of(camp_of(o)) + 1)];
      sum += o.value();
    }
    const auto top = *std::max_element(camp_counts.begin(), camp_counts.end());
    if (std::count(camp_counts.begin(), camp_counts.end(), top) > 1) {
      ++table.tied;
      continue;
    }
    const auto majority = static_cast<int>(std::max_element(camp_counts.begin(), camp_counts.end()) - camp_counts.begin()) - 1;
    std::string exposure;
    if (majority == sign_of(own)) exposure = "homophilic";
    else if (majority == -sign_of(own)) exposure = "opposing";
    else {
      ++table.tied;  // neutral majority: neither exposure type
      continue;
    }
    const double mean = static_cast<double>(sum) / static_cast<double>(in.size());
    const bool radical = std::abs(mean) - prev[v].magnitude() > 0.0;
    const std::string key = exposure + (radical ? "/radical" : "/moderate");
    const double scp = polarization_change(prev[v], now[v]).value;
    samples[key].push_back(scp);
    samples[key + (own == Camp::Left ? "/L" : "/R")].push_back(scp);
  }
  for (const std::string exposure : {"homophilic", "opposing"}) {
    for (const std::string radical : {"radical", "moderate"}) {
      const auto key = exposure + "/" + radical;
      table.groups[key] = group_stat(samples[key]);
      for (const std::string camp : {"L", "R"}) table.groups[key + "/" + camp] = group_stat(samples[key + "/" + camp]);
    }
    table.tests[exposure] = welch_t_test(samples[exposure + "/radical"], samples[exposure + "/moderate"]);
  }
  return table;
}

std::vector<double> polarization_speed(std::span<const double> series, std::size_t lag) {
  if (series.size() <= lag) throw Error("polarization speed needs more than " + std::to_string(lag) + " points");
  std::vector<double> out;
  out.reserve(series.size() - lag);
  for (std::size_t t = lag; t < series.size(); ++t) out.push_back(series[t] - series[t - lag]);
  return out;
}

double opinion_change_rate(std::span<const Opinion> now, std::span<const Opinion> prev) {
  if (now.size() != prev.size()) throw std::invalid_argument("opinion_change_rate: populations differ");
  if (now.empty()) return 0.0;
  std::size_t changed = 0;
  for (std::size_t i = 0; i < now.size(); ++i) changed += now[i] != prev[i] ? 1 : 0;
  return static_cast<double>(changed) / static_cast<double>(now.size());
}

double dominant_camp_share(std::span<const Opinion> opinions) {
  if (opinions.empty()) throw Error("empty population");
  std::size_t left = 0;
  std::size_t right = 0;
  for (Opinion o : opinions) {
    if (o.value() < 0) ++left;
    if (o.value() > 0) ++right;
  }
  return static_cast<double>(std::max(left, right)) / static_cast<double>(opinions.size());
}

MetricsRow compute_metrics_row(int t, const SocialGraph& g, std::span<const Opinion> opinions,
                               std::span<const InteractionRecord> records, const SocialGraph* prev_graph,
                               std::span<const Opinion> prev_opinions) {
  MetricsRow row;
  row.t = t;
  row.s_pol = polarization_level(opinions);
  const auto mix = interaction_mix(records);
  row.homophilic = mix.homophilic;
  row.heterophilic = mix.heterophilic;
  row.neutral_involved = mix.neutral_involved;
  row.modularity = modularity_by_camp(g, opinions);
  row.assortativity = assortativity(g, opinions).value;
  row.homophily_index = g.edge_count() > 0 ? homophily_index(g, opinions) : 0.0;
  if (prev_graph != nullptr) row.change_rate_edges = network_change_rate(g, *prev_graph).value;
  if (!prev_opinions.empty()) row.change_rate_opinions = opinion_change_rate(opinions, prev_opinions);
  return row;
}

std::string format_double(double v) {
  if (v == 0.0) return "0";  // folds -0
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw Error("cannot format number");
  return std::string(buf, ptr);
}

std::string metrics_csv_header() {
  return "t,s_pol,homophilic,heterophilic,neutral_involved,modularity,assortativity,homophily_index,"
         "change_rate_edges,change_rate_opinions";
}

std::string metrics_csv_line(const MetricsRow& r) {
  std::string s = std::to_string(r.t);
  for (double v : {r.s_pol, r.homophilic, r.heterophilic, r.neutral_involved, r.modularity, r.assortativity,
                   r.homophily_index, r.change_rate_edges, r.change_rate_opinions}) {
    s += ',';
    s += format_double(v);
  }
  return s;
}

MetricsRow parse_metrics_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (cells.size() != 10) throw Error("metrics row has " + std::to_string(cells.size()) + " columns, expected 10");
  MetricsRow r;
  r.t = std::stoi(cells[0]);
  double* fields[] = {&r.s_pol,      &r.homophilic,    &r.heterophilic,     &r.neutral_involved,
                      &r.modularity, &r.assortativity, &r.homophily_index, &r.change_rate_edges,
                      &r.change_rate_opinions};
  for (std::size_t i = 0; i < 9; ++i) {
    const auto& c = cells[i + 1];
    const auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), *fields[i]);
    if (ec != std::errc()) throw Error("malformed metrics value '" + c + "'");
  }
  return r;
}

}  // namespace polarsim
