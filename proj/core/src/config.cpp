#include "polarsim/config.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <set>
#include <sstream>

#include <toml.hpp>

namespace polarsim {

namespace {

constexpr std::array<std::pair<Strategy, std::string_view>, 7> kStrategyNames = {{
    {Strategy::RandomInteraction, "RI"},
    {Strategy::ModerateOpposing, "MOI"},
    {Strategy::NoSelectiveExposure, "NSE"},
    {Strategy::NoConfirmationBias, "NCB"},
    {Strategy::NeutralElite, "NES"},
    {Strategy::OpenMindedness, "OpenMindedness"},
    {Strategy::OpposingExposure, "Oppose"},
}};

/// Which stage of the timestep a strategy takes over. Strategies may be
/// combined only if their stages are disjoint.
std::string_view owned_stage(Strategy s) {
  switch (s) {
    case Strategy::RandomInteraction:
    case Strategy::NoSelectiveExposure: return "partner selection";
    case Strategy::ModerateOpposing:
    case Strategy::OpposingExposure: return "message routing";
    case Strategy::NoConfirmationBias:
    case Strategy::OpenMindedness: return "opinion update";
    case Strategy::NeutralElite: return "influencers";
  }
  return "";
}

void reject_unknown(const toml::table& tbl, std::initializer_list<std::string_view> allowed, std::string_view prefix) {
  for (const auto& [k, v] : tbl) {
    if (std::find(allowed.begin(), allowed.end(), k.str()) == allowed.end()) {
      throw ConfigError(std::string(prefix) + std::string(k.str()), "unknown key");
    }
  }
}

template <typename T>
T get_or(const toml::table& tbl, std::string_view key, T fallback, std::string_view prefix) {
  const auto* node = tbl.get(key);
  if (node == nullptr) return fallback;
  if constexpr (std::is_same_v<T, double>) {
    if (auto v = node->value<double>()) return *v;
  } else if constexpr (std::is_same_v<T, bool>) {
    if (node->is_boolean()) return *node->value<bool>();
  } else if constexpr (std::is_integral_v<T>) {
    if (node->is_integer()) return static_cast<T>(*node->value<std::int64_t>());
  } else {
    if (auto v = node->value<std::string>()) return *v;
  }
  throw ConfigError(std::string(prefix) + std::string(key), "wrong value type");
}

const toml::table* subtable(const toml::table& tbl, std::string_view key, std::string_view prefix) {
  const auto* node = tbl.get(key);
  if (node == nullptr) return nullptr;
  if (!node->is_table()) throw ConfigError(std::string(prefix) + std::string(key), "expected a table");
  return node->as_table();
}

const toml::array* array_of_tables(const toml::table& tbl, std::string_view key) {
  const auto* node = tbl.get(key);
  if (node == nullptr) return nullptr;
  if (!node->is_array_of_tables()) throw ConfigError(std::string(key), "expected an array of tables");
  return node->as_array();
}

bool windows_overlap(const InterventionSpec& a, const InterventionSpec& b) {
  return a.start_t < b.end_t && b.start_t < a.end_t;
}

}  // namespace

std::optional<MockBrainParams> mock_preset(std::string_view name) {
  if (name == "default") return MockBrainParams{};
  if (name == "homophilic") {
    MockBrainParams m;
    m.p0 = 1.0;
    m.beta = 0.4;
    m.q = 0.05;
    m.r = 1.0;
    return m;
  }
  return std::nullopt;
}

std::string_view to_string(Strategy s) {
  for (const auto& [k, name] : kStrategyNames) {
    if (k == s) return name;
  }
  return "?";
}

std::optional<Strategy> parse_strategy(std::string_view text) {
  for (const auto& [k, name] : kStrategyNames) {
    if (name == text) return k;
  }
  return std::nullopt;
}

void validate(const SimulationConfig& c) {
  if (c.n_agents < 2) throw ConfigError("n_agents", "must be at least 2");
  if (c.n_timesteps < 1) throw ConfigError("n_timesteps", "must be positive");
  if (c.history_cap < 1) throw ConfigError("history_cap", "must be positive");
  if (!(c.temperature >= 0.0 && c.temperature <= 2.0)) throw ConfigError("temperature", "must lie in [0, 2]");
  if (c.max_retries < 1) throw ConfigError("self_regulation.max_retries", "must be at least 1");
  if (c.workers < 1) throw ConfigError("workers", "must be at least 1");
  if (c.influencer_cap < 0) throw ConfigError("influencer_cap", "must be non-negative");
  if (c.probe_interval < 0) throw ConfigError("probe_interval", "must be non-negative");

  const auto& net = c.network;
  switch (net.model) {
    case NetworkModel::WattsStrogatz:
      if (net.k < 2 || net.k % 2 != 0) throw ConfigError("network.k", "must be an even integer >= 2");
      if (static_cast<std::size_t>(net.k) >= c.n_agents) throw ConfigError("network.k", "must be smaller than n_agents");
      if (!(net.p >= 0.0 && net.p <= 1.0)) throw ConfigError("network.p", "must lie in [0, 1]");
      break;
    case NetworkModel::ErdosRenyi:
      if (c.n_agents < 3) throw ConfigError("n_agents", "Erdos-Renyi needs at least 3 nodes");
      if (!(net.k_avg >= 0.0 && net.k_avg <= static_cast<double>(c.n_agents - 1))) {
        throw ConfigError("network.k_avg", "must lie in [0, n_agents - 1]");
      }
      break;
    case NetworkModel::BarabasiAlbert:
      if (net.m < 1 || static_cast<std::size_t>(net.m) >= c.n_agents) {
        throw ConfigError("network.m", "must lie in [1, n_agents - 1]");
      }
      break;
  }

  const auto& mk = c.brain.mock;
  auto prob = [](double v, const char* key) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(key, "must lie in [0, 1]");
  };
  prob(mk.p0, "brain.mock.p0");
  prob(mk.q, "brain.mock.q");
  prob(mk.r, "brain.mock.r");
  prob(mk.eps_left, "brain.mock.eps_left");
  prob(mk.eps_right, "brain.mock.eps_right");
  if (!(mk.beta >= 0.0)) throw ConfigError("brain.mock.beta", "must be non-negative");
  if (c.brain.llm.max_tokens < 1) throw ConfigError("brain.llm.max_tokens", "must be positive");
  if (c.brain.llm.max_in_flight < 1) throw ConfigError("brain.llm.max_in_flight", "must be positive");
  if (c.brain.llm.requests_per_minute < 1) throw ConfigError("brain.llm.requests_per_minute", "must be positive");
  if (c.brain.llm.parse_retries < 1) throw ConfigError("brain.llm.parse_retries", "must be positive");

  for (std::size_t i = 0; i < c.interventions.size(); ++i) {
    const auto& iv = c.interventions[i];
    const std::string key = "interventions[" + std::to_string(i) + "]";
    if (iv.start_t < 0) throw ConfigError(key + ".start", "must be non-negative");
    if (!(iv.start_t < iv.end_t)) throw ConfigError(key + ".end", "must be greater than start");
    if (iv.end_t > c.n_timesteps) throw ConfigError(key + ".end", "must not exceed n_timesteps");
    if (iv.influencer_opinion < -2 || iv.influencer_opinion > 2) {
      throw ConfigError(key + ".influencer_opinion", "must lie in [-2, 2]");
    }
    for (std::size_t j = 0; j < i; ++j) {
      const auto& other = c.interventions[j];
      if (!windows_overlap(iv, other)) continue;
      if (owned_stage(iv.strategy) == owned_stage(other.strategy)) {
        throw ConfigError(key + ".strategy", std::string(to_string(iv.strategy)) + " and " +
                                                 std::string(to_string(other.strategy)) + " both control " +
                                                 std::string(owned_stage(iv.strategy)));
      }
    }
  }
  for (std::size_t i = 0; i < c.dispositions.size(); ++i) {
    const double f = c.dispositions[i].fraction;
    if (!(f >= 0.0 && f <= 1.0)) {
      throw ConfigError("dispositions[" + std::to_string(i) + "].fraction", "must lie in [0, 1]");
    }
  }
  for (std::size_t i = 0; i < c.influencers.size(); ++i) {
    const int o = c.influencers[i].opinion;
    if (o < -2 || o > 2) throw ConfigError("influencers[" + std::to_string(i) + "].opinion", "must lie in [-2, 2]");
  }
}

SimulationConfig parse_config(std::string_view toml_text, const std::filesystem::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << e.description() << " (line " << e.source().begin.line << ")";
    throw ConfigError("<syntax>", msg.str());
  }

  reject_unknown(root,
                 {"seed", "issue", "n_agents", "n_timesteps", "init_opinions", "init_mode", "history_cap",
                  "temperature", "partner_mode", "network_mode", "reverse_links", "influencer_cap", "probe_interval",
                  "workers", "network", "brain", "self_regulation", "interventions", "dispositions", "influencers"},
                 "");

  SimulationConfig c;
  if (!root.contains("seed")) throw ConfigError("seed", "is required");
  if (!root.contains("issue")) throw ConfigError("issue", "is required");
  c.seed = static_cast<std::uint64_t>(get_or<std::int64_t>(root, "seed", 0, ""));

  std::string issue = get_or<std::string>(root, "issue", "", "");
  if (issue.ends_with(".toml")) {
    std::filesystem::path p(issue);
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    issue = std::filesystem::absolute(p).lexically_normal().string();
  }
  try {
    c.issue = resolve_issue(issue);
  } catch (const Error& e) {
    throw ConfigError("issue", e.what());
  }
  c.issue_key = issue;

  const auto n_agents = get_or<std::int64_t>(root, "n_agents", 1000, "");
  if (n_agents < 2) throw ConfigError("n_agents", "must be at least 2");
  c.n_agents = static_cast<std::size_t>(n_agents);
  c.n_timesteps = get_or<int>(root, "n_timesteps", 40, "");

  if (const auto* node = root.get("init_opinions")) {
    const auto* arr = node->as_array();
    if (arr == nullptr || arr->size() != Opinion::kLevels) {
      throw ConfigError("init_opinions", "must be an array of 5 numbers");
    }
    std::array<double, Opinion::kLevels> f{};
    for (std::size_t i = 0; i < f.size(); ++i) {
      auto v = (*arr)[i].value<double>();
      if (!v) throw ConfigError("init_opinions", "must be an array of 5 numbers");
      f[i] = *v;
    }
    try {
      c.init_opinions = OpinionDistribution(f);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("init_opinions", e.what());
    }
  }

  const auto init_mode = get_or<std::string>(root, "init_mode", "exact", "");
  if (init_mode == "exact") c.init_mode = InitMode::ExactCounts;
  else if (init_mode == "iid") c.init_mode = InitMode::Iid;
  else throw ConfigError("init_mode", "must be 'exact' or 'iid'");

  const auto history_cap = get_or<std::int64_t>(root, "history_cap", 5, "");
  if (history_cap < 1) throw ConfigError("history_cap", "must be positive");
  c.history_cap = static_cast<std::size_t>(history_cap);
  c.temperature = get_or<double>(root, "temperature", 1.0, "");

  const auto partner = get_or<std::string>(root, "partner_mode", "per_edge", "");
  if (partner == "per_edge") c.partner_mode = PartnerMode::PerEdge;
  else if (partner == "one_partner") c.partner_mode = PartnerMode::OnePartner;
  else throw ConfigError("partner_mode", "must be 'per_edge' or 'one_partner'");

  const auto netmode = get_or<std::string>(root, "network_mode", "adaptive", "");
  if (netmode == "adaptive") c.network_mode = NetworkMode::Adaptive;
  else if (netmode == "static") c.network_mode = NetworkMode::Static;
  else if (netmode == "random") c.network_mode = NetworkMode::Random;
  else throw ConfigError("network_mode", "must be 'adaptive', 'static' or 'random'");

  c.reverse_links = get_or<bool>(root, "reverse_links", false, "");
  c.influencer_cap = get_or<int>(root, "influencer_cap", 2, "");
  c.probe_interval = get_or<int>(root, "probe_interval", 0, "");
  c.workers = get_or<int>(root, "workers", 1, "");

  if (const auto* net = subtable(root, "network", "")) {
    reject_unknown(*net, {"model", "k", "p", "k_avg", "m"}, "network.");
    const auto model = get_or<std::string>(*net, "model", "ws", "network.");
    if (model == "ws") c.network.model = NetworkModel::WattsStrogatz;
    else if (model == "er") c.network.model = NetworkModel::ErdosRenyi;
    else if (model == "ba") c.network.model = NetworkModel::BarabasiAlbert;
    else throw ConfigError("network.model", "must be 'ws', 'er' or 'ba'");
    c.network.k = get_or<int>(*net, "k", 4, "network.");
    c.network.p = get_or<double>(*net, "p", 0.001, "network.");
    c.network.k_avg = get_or<double>(*net, "k_avg", 4.0, "network.");
    c.network.m = get_or<int>(*net, "m", 2, "network.");
  }

  if (const auto* brain = subtable(root, "brain", "")) {
    reject_unknown(*brain, {"kind", "mock", "llm"}, "brain.");
    const auto kind = get_or<std::string>(*brain, "kind", "mock", "brain.");
    if (kind == "mock") c.brain.kind = BrainKind::Mock;
    else if (kind == "llm") c.brain.kind = BrainKind::Llm;
    else throw ConfigError("brain.kind", "must be 'mock' or 'llm'");
    if (const auto* mock = subtable(*brain, "mock", "brain.")) {
      reject_unknown(*mock, {"preset", "p0", "beta", "q", "r", "eps_left", "eps_right"}, "brain.mock.");
      auto& m = c.brain.mock;
      // Explicit keys override the preset's values.
      if (const auto preset = get_or<std::string>(*mock, "preset", "", "brain.mock."); !preset.empty()) {
        const auto found = mock_preset(preset);
        if (!found) throw ConfigError("brain.mock.preset", "unknown preset '" + preset + "'");
        m = *found;
      }
      m.p0 = get_or<double>(*mock, "p0", m.p0, "brain.mock.");
      m.beta = get_or<double>(*mock, "beta", m.beta, "brain.mock.");
      m.q = get_or<double>(*mock, "q", m.q, "brain.mock.");
      m.r = get_or<double>(*mock, "r", m.r, "brain.mock.");
      m.eps_left = get_or<double>(*mock, "eps_left", m.eps_left, "brain.mock.");
      m.eps_right = get_or<double>(*mock, "eps_right", m.eps_right, "brain.mock.");
    }
    if (const auto* llm = subtable(*brain, "llm", "brain.")) {
      reject_unknown(*llm,
                     {"model", "base_url", "max_tokens", "cache_dir", "cache_only", "max_in_flight",
                      "requests_per_minute", "parse_retries", "workers"},
                     "brain.llm.");
      auto& l = c.brain.llm;
      l.model = get_or<std::string>(*llm, "model", l.model, "brain.llm.");
      l.base_url = get_or<std::string>(*llm, "base_url", l.base_url, "brain.llm.");
      l.max_tokens = get_or<int>(*llm, "max_tokens", l.max_tokens, "brain.llm.");
      l.cache_dir = get_or<std::string>(*llm, "cache_dir", l.cache_dir, "brain.llm.");
      if (!l.cache_dir.empty() && std::filesystem::path(l.cache_dir).is_relative() && !base_dir.empty()) {
        l.cache_dir = (base_dir / l.cache_dir).lexically_normal().string();
      }
      l.cache_only = get_or<bool>(*llm, "cache_only", l.cache_only, "brain.llm.");
      l.max_in_flight = get_or<int>(*llm, "max_in_flight", l.max_in_flight, "brain.llm.");
      l.requests_per_minute = get_or<int>(*llm, "requests_per_minute", l.requests_per_minute, "brain.llm.");
      l.parse_retries = get_or<int>(*llm, "parse_retries", l.parse_retries, "brain.llm.");
      l.workers = get_or<int>(*llm, "workers", l.workers, "brain.llm.");
    }
  }

  if (const auto* sr = subtable(root, "self_regulation", "")) {
    reject_unknown(*sr, {"enabled", "max_retries"}, "self_regulation.");
    c.self_regulation = get_or<bool>(*sr, "enabled", false, "self_regulation.");
    c.max_retries = get_or<int>(*sr, "max_retries", 10, "self_regulation.");
  }

  if (const auto* arr = array_of_tables(root, "interventions")) {
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const auto& t = *(*arr)[i].as_table();
      const std::string prefix = "interventions[" + std::to_string(i) + "].";
      reject_unknown(t, {"strategy", "start", "end", "influencer_opinion"}, prefix);
      InterventionSpec iv;
      const auto name = get_or<std::string>(t, "strategy", "", prefix);
      auto s = parse_strategy(name);
      if (!s) throw ConfigError(prefix + "strategy", "unknown strategy '" + name + "'");
      iv.strategy = *s;
      iv.start_t = get_or<int>(t, "start", 35, prefix);
      iv.end_t = get_or<int>(t, "end", 40, prefix);
      iv.influencer_opinion = get_or<int>(t, "influencer_opinion", 0, prefix);
      c.interventions.push_back(iv);
    }
  }
  if (const auto* arr = array_of_tables(root, "dispositions")) {
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const auto& t = *(*arr)[i].as_table();
      const std::string prefix = "dispositions[" + std::to_string(i) + "].";
      reject_unknown(t, {"kind", "fraction"}, prefix);
      const auto name = get_or<std::string>(t, "kind", "", prefix);
      auto k = parse_disposition_kind(name);
      if (!k) throw ConfigError(prefix + "kind", "unknown disposition '" + name + "'");
      c.dispositions.push_back({*k, get_or<double>(t, "fraction", 0.0, prefix)});
    }
  }
  if (const auto* arr = array_of_tables(root, "influencers")) {
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const auto& t = *(*arr)[i].as_table();
      const std::string prefix = "influencers[" + std::to_string(i) + "].";
      reject_unknown(t, {"opinion"}, prefix);
      c.influencers.push_back({get_or<int>(t, "opinion", 0, prefix)});
    }
  }

  validate(c);
  return c;
}

SimulationConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("<file>", "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

std::string to_toml(const SimulationConfig& c) {
  toml::table root;
  root.insert("seed", static_cast<std::int64_t>(c.seed));
  root.insert("issue", c.issue_key);
  root.insert("n_agents", static_cast<std::int64_t>(c.n_agents));
  root.insert("n_timesteps", c.n_timesteps);
  toml::array init;
  for (double f : c.init_opinions.frequencies()) init.push_back(f);
  root.insert("init_opinions", init);
  root.insert("init_mode", c.init_mode == InitMode::Iid ? "iid" : "exact");
  root.insert("history_cap", static_cast<std::int64_t>(c.history_cap));
  root.insert("temperature", c.temperature);
  root.insert("partner_mode", c.partner_mode == PartnerMode::OnePartner ? "one_partner" : "per_edge");
  root.insert("network_mode", c.network_mode == NetworkMode::Static   ? "static"
                              : c.network_mode == NetworkMode::Random ? "random"
                                                                      : "adaptive");
  root.insert("reverse_links", c.reverse_links);
  root.insert("influencer_cap", c.influencer_cap);
  root.insert("probe_interval", c.probe_interval);
  root.insert("workers", c.workers);

  toml::table net;
  net.insert("model", c.network.model == NetworkModel::ErdosRenyi       ? "er"
                      : c.network.model == NetworkModel::BarabasiAlbert ? "ba"
                                                                        : "ws");
  net.insert("k", c.network.k);
  net.insert("p", c.network.p);
  net.insert("k_avg", c.network.k_avg);
  net.insert("m", c.network.m);
  root.insert("network", net);

  toml::table brain;
  brain.insert("kind", c.brain.kind == BrainKind::Llm ? "llm" : "mock");
  toml::table mock;
  mock.insert("p0", c.brain.mock.p0);
  mock.insert("beta", c.brain.mock.beta);
  mock.insert("q", c.brain.mock.q);
  mock.insert("r", c.brain.mock.r);
  mock.insert("eps_left", c.brain.mock.eps_left);
  mock.insert("eps_right", c.brain.mock.eps_right);
  brain.insert("mock", mock);
  toml::table llm;
  llm.insert("model", c.brain.llm.model);
  llm.insert("base_url", c.brain.llm.base_url);
  llm.insert("max_tokens", c.brain.llm.max_tokens);
  llm.insert("cache_dir", c.brain.llm.cache_dir);
  llm.insert("cache_only", c.brain.llm.cache_only);
  llm.insert("max_in_flight", c.brain.llm.max_in_flight);
  llm.insert("requests_per_minute", c.brain.llm.requests_per_minute);
  llm.insert("parse_retries", c.brain.llm.parse_retries);
  llm.insert("workers", c.brain.llm.workers);
  brain.insert("llm", llm);
  root.insert("brain", brain);

  toml::table sr;
  sr.insert("enabled", c.self_regulation);
  sr.insert("max_retries", c.max_retries);
  root.insert("self_regulation", sr);

  if (!c.interventions.empty()) {
    toml::array arr;
    for (const auto& iv : c.interventions) {
      toml::table t;
      t.insert("strategy", std::string(to_string(iv.strategy)));
      t.insert("start", iv.start_t);
      t.insert("end", iv.end_t);
      t.insert("influencer_opinion", iv.influencer_opinion);
      arr.push_back(std::move(t));
    }
    root.insert("interventions", arr);
  }
  if (!c.dispositions.empty()) {
    toml::array arr;
    for (const auto& d : c.dispositions) {
      toml::table t;
      t.insert("kind", std::string(to_string(d.kind)));
      t.insert("fraction", d.fraction);
      arr.push_back(std::move(t));
    }
    root.insert("dispositions", arr);
  }
  if (!c.influencers.empty()) {
    toml::array arr;
    for (const auto& inf : c.influencers) {
      toml::table t;
      t.insert("opinion", inf.opinion);
      arr.push_back(std::move(t));
    }
    root.insert("influencers", arr);
  }
  std::ostringstream out;
  out << root << "\n";
  return out.str();
}

}  // namespace polarsim
