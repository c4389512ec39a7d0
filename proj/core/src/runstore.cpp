#include "polarsim/runstore.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <regex>
#include <sstream>

namespace polarsim {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, const std::string& data) {
  fs::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << data;
    if (!out.flush()) throw Error("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

namespace {

void append_file(const fs::path& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw Error("cannot append to " + path.string());
  out << data;
  if (!out.flush()) throw Error("cannot append to " + path.string());
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::vector<std::string> lines;
  if (!fs::exists(path)) return lines;
  std::ifstream in(path, std::ios::binary);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

/// Keeps the lines for which keep(line) holds.
void filter_lines(const fs::path& path, const std::function<bool(const std::string&)>& keep) {
  if (!fs::exists(path)) return;
  std::string out;
  for (const auto& line : read_lines(path)) {
    if (keep(line)) out += line + "\n";
  }
  write_file_atomic(path, out);
}

constexpr const char* kProbeHeader = "t,rater,target_class,rating,adjectives";

}  // namespace

// ---------------------------------------------------------------------------
// Serialisation

nlohmann::json snapshot_to_json(const WorldState& world) {
  nlohmann::json doc;
  doc["t"] = world.timestep;
  nlohmann::json opinions = nlohmann::json::array();
  nlohmann::json reasons = nlohmann::json::array();
  nlohmann::json dispositions = nlohmann::json::array();
  nlohmann::json histories = nlohmann::json::array();
  for (const auto& a : world.agents) {
    opinions.push_back(a.opinion.value());
    reasons.push_back(a.reason);
    dispositions.push_back(a.dispositions.bits());
    for (const auto& [peer, msgs] : a.history) {
      nlohmann::json list = nlohmann::json::array();
      for (const auto& m : msgs) {
        list.push_back({{"text", m.text}, {"sender_opinion", m.sender_opinion.value()}, {"timestep", m.timestep}});
      }
      histories.push_back({{"agent", a.id}, {"peer", peer}, {"messages", list}});
    }
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [i, j] : world.graph.edges()) edges.push_back({i, j});
  doc["opinions"] = opinions;
  doc["reasons"] = reasons;
  doc["edges"] = edges;
  doc["rng_state"] = {{"seed", world.seed}, {"branch", world.branch}};
  doc["dispositions"] = dispositions;
  doc["histories"] = histories;
  return doc;
}

WorldState snapshot_from_json(const nlohmann::json& doc) {
  WorldState w;
  w.timestep = doc.at("t").get<int>();
  const auto& opinions = doc.at("opinions");
  const auto& reasons = doc.at("reasons");
  const auto& dispositions = doc.at("dispositions");
  const auto n = opinions.size();
  if (reasons.size() != n || dispositions.size() != n) throw Error("snapshot arrays differ in length");
  w.agents.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& a = w.agents[i];
    a.id = static_cast<AgentId>(i);
    a.opinion = Opinion(opinions[i].get<int>());
    a.reason = reasons[i].get<std::string>();
    a.dispositions = DispositionSet::from_bits(dispositions[i].get<std::uint16_t>());
  }
  w.graph = SocialGraph(n);
  for (const auto& e : doc.at("edges")) w.graph.add_edge(e.at(0).get<AgentId>(), e.at(1).get<AgentId>());
  w.graph.clear_journal();
  w.seed = doc.at("rng_state").at("seed").get<std::uint64_t>();
  w.branch = doc.at("rng_state").at("branch").get<std::string>();
  for (const auto& h : doc.at("histories")) {
    const auto agent = h.at("agent").get<AgentId>();
    const auto peer = h.at("peer").get<AgentId>();
    if (agent < 0 || static_cast<std::size_t>(agent) >= n) throw Error("snapshot history names unknown agent");
    auto& list = w.agents[static_cast<std::size_t>(agent)].history[peer];
    for (const auto& m : h.at("messages")) {
      list.push_back({peer, m.at("text").get<std::string>(), Opinion(m.at("sender_opinion").get<int>()),
                      m.at("timestep").get<int>()});
    }
  }
  return w;
}

std::string event_to_line(const Event& e, std::uint64_t seq) {
  // Fixed key order keeps the journal readable and byte-stable.
  return "{\"t\":" + std::to_string(e.t) + ",\"seq\":" + std::to_string(seq) +
         ",\"stage\":" + nlohmann::json(e.stage).dump() + ",\"kind\":" + nlohmann::json(e.kind).dump() +
         ",\"payload\":" + e.payload.dump() + "}\n";
}

// ---------------------------------------------------------------------------
// RunStore

RunStore::RunStore(fs::path dir) : dir_(std::move(dir)) {}

RunStore RunStore::create(const fs::path& dir, const SimulationConfig& config) {
  if (fs::exists(dir) && !fs::is_empty(dir)) throw Error("run directory " + dir.string() + " is not empty");
  fs::create_directories(dir / "snapshots");
  RunStore store(dir);
  write_file_atomic(dir / "config.toml", to_toml(config));
  write_file_atomic(dir / "events.jsonl", "");
  write_file_atomic(dir / "metrics.csv", metrics_csv_header() + "\n");
  if (config.probe_interval > 0) write_file_atomic(dir / "probe.csv", std::string(kProbeHeader) + "\n");
  return store;
}

RunStore RunStore::open(const fs::path& dir) {
  if (!fs::exists(dir / "config.toml")) throw Error("no run found in " + dir.string());
  RunStore store(dir);
  store.sync_seq();
  return store;
}

void RunStore::sync_seq() {
  next_seq_ = 0;
  const auto lines = read_lines(dir_ / "events.jsonl");
  if (!lines.empty()) next_seq_ = nlohmann::json::parse(lines.back()).at("seq").get<std::uint64_t>() + 1;
}

SimulationConfig RunStore::load_config() const { return parse_config(read_file(dir_ / "config.toml"), dir_); }

void RunStore::append_events(const std::vector<Event>& events) {
  std::string out;
  for (const auto& e : events) out += event_to_line(e, next_seq_++);
  append_file(dir_ / "events.jsonl", out);
}

void RunStore::append_metrics(const MetricsRow& row) { append_file(dir_ / "metrics.csv", metrics_csv_line(row) + "\n"); }

void RunStore::append_probe(const std::vector<ProbeRow>& rows) {
  if (rows.empty()) return;
  const auto path = dir_ / "probe.csv";
  std::string out;
  if (!fs::exists(path)) out = std::string(kProbeHeader) + "\n";
  for (const auto& r : rows) {
    std::string adjectives;
    for (std::size_t i = 0; i < r.adjectives.size(); ++i) {
      if (i > 0) adjectives += '|';
      // Field separators inside model output would break the row.
      std::string a = r.adjectives[i];
      std::replace(a.begin(), a.end(), ',', ' ');
      std::replace(a.begin(), a.end(), '|', ' ');
      std::replace(a.begin(), a.end(), '\n', ' ');
      adjectives += a;
    }
    out += std::to_string(r.t) + "," + std::to_string(r.rater) + "," + r.target_class + "," +
           std::to_string(r.rating) + "," + adjectives + "\n";
  }
  append_file(path, out);
}

std::string RunStore::snapshot_name(int t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "t%04d.json", t);
  return buf;
}

void RunStore::write_snapshot(const WorldState& world) {
  write_file_atomic(dir_ / "snapshots" / snapshot_name(world.timestep), snapshot_to_json(world).dump() + "\n");
}

std::vector<int> RunStore::snapshot_times() const {
  std::vector<int> out;
  const auto dir = dir_ / "snapshots";
  if (!fs::exists(dir)) return out;
  static const std::regex pattern(R"(t(\d{4,})\.json)");
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const auto name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) out.push_back(std::stoi(m[1].str()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::optional<int> RunStore::last_snapshot() const {
  const auto times = snapshot_times();
  if (times.empty()) return std::nullopt;
  return times.back();
}

WorldState RunStore::read_snapshot(int t) const {
  const auto path = dir_ / "snapshots" / snapshot_name(t);
  std::optional<int> last_good;
  for (int k : snapshot_times()) {
    if (k < t) last_good = k;
  }
  if (!fs::exists(path)) throw SnapshotError("snapshot t=" + std::to_string(t) + " missing", last_good);
  try {
    auto w = snapshot_from_json(nlohmann::json::parse(read_file(path)));
    if (w.timestep != t) throw Error("snapshot labelled t=" + std::to_string(w.timestep));
    return w;
  } catch (const SnapshotError&) {
    throw;
  } catch (const std::exception& e) {
    throw SnapshotError("snapshot t=" + std::to_string(t) + " is corrupt: " + e.what(), last_good);
  }
}

std::vector<Event> RunStore::read_events() const {
  std::vector<Event> out;
  for (const auto& line : read_lines(dir_ / "events.jsonl")) {
    const auto j = nlohmann::json::parse(line);
    out.push_back({j.at("t").get<int>(), j.at("stage").get<std::string>(), j.at("kind").get<std::string>(),
                   j.at("payload")});
  }
  return out;
}

std::vector<MetricsRow> RunStore::read_metrics() const {
  const auto lines = read_lines(dir_ / "metrics.csv");
  if (lines.empty()) throw Error("metrics.csv missing in " + dir_.string());
  if (lines.front() != metrics_csv_header()) throw Error("metrics.csv has an unexpected header");
  std::vector<MetricsRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) rows.push_back(parse_metrics_csv_line(lines[i]));
  return rows;
}

void RunStore::truncate_after(int t) {
  filter_lines(dir_ / "events.jsonl",
               [&](const std::string& line) { return nlohmann::json::parse(line).at("t").get<int>() <= t; });
  filter_lines(dir_ / "metrics.csv", [&](const std::string& line) {
    return line == metrics_csv_header() || parse_metrics_csv_line(line).t <= t;
  });
  // A probe labelled t is taken while stepping from t, so it belongs after snapshot t.
  filter_lines(dir_ / "probe.csv", [&](const std::string& line) {
    return line == kProbeHeader || std::stoi(line.substr(0, line.find(','))) < t;
  });
  for (int k : snapshot_times()) {
    if (k > t) fs::remove(dir_ / "snapshots" / snapshot_name(k));
  }
  sync_seq();
}

void RunStore::copy_prefix(const RunStore& source, int t) {
  const auto snapshot = source.dir_ / "snapshots" / snapshot_name(t);
  if (!fs::exists(snapshot)) (void)source.read_snapshot(t);  // throws with the last good time
  for (const char* name : {"events.jsonl", "metrics.csv", "probe.csv"}) {
    const auto from = source.dir_ / name;
    if (!fs::exists(from)) continue;
    fs::copy_file(from, dir_ / name, fs::copy_options::overwrite_existing);
  }
  fs::copy_file(snapshot, dir_ / "snapshots" / snapshot_name(t), fs::copy_options::overwrite_existing);
  truncate_after(t);
}

// ---------------------------------------------------------------------------
// Replay

WorldState replay_events(const std::vector<Event>& events, int t, std::uint64_t seed, const std::string& branch,
                         std::size_t history_cap) {
  WorldState w;
  w.seed = seed;
  w.branch = branch;
  bool initialised = false;
  for (const auto& e : events) {
    if (e.t > t) break;
    const auto& p = e.payload;
    if (e.kind == "init") {
      const auto& opinions = p.at("opinions");
      const auto n = opinions.size();
      w.agents.assign(n, AgentState{});
      for (std::size_t i = 0; i < n; ++i) {
        w.agents[i].id = static_cast<AgentId>(i);
        w.agents[i].opinion = Opinion(opinions[i].get<int>());
        w.agents[i].dispositions = DispositionSet::from_bits(p.at("dispositions")[i].get<std::uint16_t>());
      }
      w.graph = SocialGraph(n);
      for (const auto& edge : p.at("edges")) w.graph.add_edge(edge.at(0).get<AgentId>(), edge.at(1).get<AgentId>());
      initialised = true;
      continue;
    }
    if (!initialised) throw Error("journal does not start with an init event");
    if (e.kind == "expression") {
      const auto id = p.at("agent").get<AgentId>();
      if (id >= 0) w.agents.at(static_cast<std::size_t>(id)).reason = p.at("reason").get<std::string>();
    } else if (e.kind == "intervention") {
      if (p.contains("agent") && p.value("accept", false)) {
        w.agents.at(p.at("agent").get<std::size_t>()).dispositions.insert(DispositionKind::OpenMindedness);
      }
    } else if (e.kind == "decision") {
      if (p.contains("new_partner")) {
        const auto i = p.at("agent").get<AgentId>();
        w.graph.remove_edge(i, p.at("partner").get<AgentId>());
        w.graph.add_edge(i, p.at("new_partner").get<AgentId>());
      }
    } else if (e.kind == "delivery") {
      const auto receiver = p.at("receiver").get<AgentId>();
      const auto sender = p.at("sender").get<AgentId>();
      Message m{sender, p.at("text").get<std::string>(), Opinion(p.at("sender_opinion").get<int>()), e.t - 1};
      w.agents.at(static_cast<std::size_t>(receiver)).remember(m, history_cap);
      if (p.value("linked", false)) w.graph.add_edge(receiver, sender);
    } else if (e.kind == "update") {
      auto& a = w.agents.at(p.at("agent").get<std::size_t>());
      a.opinion = Opinion(p.at("to").get<int>());
      a.reason = p.at("reason").get<std::string>();
    }
    w.timestep = e.t;
  }
  if (!initialised) throw Error("journal holds no init event");
  w.timestep = t;
  w.graph.clear_journal();
  return w;
}

// ---------------------------------------------------------------------------
// Running

std::shared_ptr<LlmClient> make_llm_client(const LlmSettings& settings, const fs::path& run_dir,
                                           std::shared_ptr<Transport> transport) {
  const auto ep = endpoint_from_env(settings.base_url, settings.model);
  if (!transport && !settings.cache_only) {
    if (ep.base_url.empty()) throw ConfigError("brain.llm.base_url", "no endpoint: set LLM_BASE_URL or use cache_only");
    transport = std::make_shared<HttpTransport>(ep.base_url, ep.api_key);
  }
  if (ep.model.empty()) throw ConfigError("brain.llm.model", "no model: set LLM_MODEL or brain.llm.model");
  const fs::path cache_dir = settings.cache_dir.empty() ? run_dir / "cache" : fs::path(settings.cache_dir);
  ClientOptions opt;
  opt.max_in_flight = settings.max_in_flight;
  opt.requests_per_minute = settings.requests_per_minute;
  opt.cache_only = settings.cache_only;
  return std::make_shared<LlmClient>(opt, std::move(transport), std::make_shared<SystemClock>(),
                                     std::make_shared<ResponseCache>(cache_dir));
}

std::shared_ptr<Brain> make_run_brain(const SimulationConfig& config, const fs::path& run_dir,
                                      std::shared_ptr<Transport> transport) {
  if (config.brain.kind == BrainKind::Mock) return std::make_shared<MockBrain>(config.brain.mock);
  auto client = make_llm_client(config.brain.llm, run_dir, std::move(transport));
  return std::shared_ptr<Brain>(make_brain(config.brain, config.temperature, client));
}

RunResult continue_run(RunStore& store, const Engine& engine, WorldState world, int until,
                       const StepObserver& observer) {
  while (world.timestep < until) {
    const SocialGraph prev_graph = world.graph;
    const auto prev_opinions = world.opinions();
    auto report = engine.step(world);
    const auto opinions = world.opinions();
    const auto row =
        compute_metrics_row(world.timestep, world.graph, opinions, report.interactions, &prev_graph, prev_opinions);
    // Snapshot last: a snapshot exists only once everything before it is on disk.
    store.append_events(report.events);
    store.append_probe(report.probe);
    store.append_metrics(row);
    store.write_snapshot(world);
    if (observer) observer(world, report);
  }
  return {store.dir(), std::move(world), store.read_metrics()};
}

namespace {

SimulationConfig with_run_workers(SimulationConfig c) {
  if (c.brain.kind == BrainKind::Llm) c.workers = std::max(c.workers, c.brain.llm.workers);
  return c;
}

}  // namespace

RunResult run_simulation(const SimulationConfig& config, const fs::path& run_dir, std::shared_ptr<Brain> brain,
                         const StepObserver& observer) {
  auto store = RunStore::create(run_dir, config);
  const Engine engine(with_run_workers(config), std::move(brain));
  auto world = engine.initialize();
  store.append_events({Engine::init_event(world)});
  const auto opinions = world.opinions();
  store.append_metrics(compute_metrics_row(0, world.graph, opinions, {}, nullptr, {}));
  store.write_snapshot(world);
  return continue_run(store, engine, std::move(world), config.n_timesteps, observer);
}

RunResult resume_run(const fs::path& run_dir, std::shared_ptr<Brain> brain, const StepObserver& observer) {
  auto store = RunStore::open(run_dir);
  const auto last = store.last_snapshot();
  if (!last) throw SnapshotError("run in " + run_dir.string() + " has no snapshot to resume from", std::nullopt);
  store.truncate_after(*last);
  const auto config = store.load_config();
  auto world = store.read_snapshot(*last);
  const Engine engine(with_run_workers(config), std::move(brain));
  return continue_run(store, engine, std::move(world), config.n_timesteps, observer);
}

// ---------------------------------------------------------------------------
// Export

std::optional<ExportKind> parse_export_kind(std::string_view s) {
  if (s == "metrics") return ExportKind::Metrics;
  if (s == "edges") return ExportKind::Edges;
  if (s == "distributions") return ExportKind::Distributions;
  if (s == "transition") return ExportKind::Transition;
  if (s == "svg") return ExportKind::Svg;
  return std::nullopt;
}

TransitionMatrix transition_from_snapshots(const RunStore& store) {
  const auto times = store.snapshot_times();
  if (times.size() < 2) throw Error("transition export needs at least two snapshots");
  std::array<std::array<std::size_t, Opinion::kLevels>, Opinion::kLevels> counts{};
  auto prev = store.read_snapshot(times.front()).opinions();
  for (std::size_t k = 1; k < times.size(); ++k) {
    const auto now = store.read_snapshot(times[k]).opinions();
    for (std::size_t i = 0; i < now.size(); ++i) ++counts[prev[i].index()][now[i].index()];
    prev = now;
  }
  return TransitionMatrix::from_counts(counts);
}

std::string svg_line_chart(const std::string& title, const std::vector<double>& xs, const std::vector<double>& ys) {
  constexpr double W = 640, H = 360, L = 60, R = 20, T = 40, B = 40;
  double xmin = xs.empty() ? 0 : *std::min_element(xs.begin(), xs.end());
  double xmax = xs.empty() ? 1 : *std::max_element(xs.begin(), xs.end());
  double ymin = ys.empty() ? 0 : std::min(0.0, *std::min_element(ys.begin(), ys.end()));
  double ymax = ys.empty() ? 1 : *std::max_element(ys.begin(), ys.end());
  if (xmax <= xmin) xmax = xmin + 1;
  if (ymax <= ymin) ymax = ymin + 1;
  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  std::string points;
  for (std::size_t i = 0; i < xs.size() && i < ys.size(); ++i) {
    if (i > 0) points += ' ';
    points += num(px(xs[i])) + "," + num(py(ys[i]));
  }
  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"360\" viewBox=\"0 0 640 360\">\n";
  svg += "<rect width=\"640\" height=\"360\" fill=\"white\"/>\n";
  svg += "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" + title +
         "</text>\n";
  svg += "<line x1=\"" + num(L) + "\" y1=\"" + num(H - B) + "\" x2=\"" + num(W - R) + "\" y2=\"" + num(H - B) +
         "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + num(L) + "\" y1=\"" + num(T) + "\" x2=\"" + num(L) + "\" y2=\"" + num(H - B) +
         "\" stroke=\"black\"/>\n";
  svg += "<text x=\"" + num(L - 6) + "\" y=\"" + num(py(ymax) + 4) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + num(ymax) + "</text>\n";
  svg += "<text x=\"" + num(L - 6) + "\" y=\"" + num(py(ymin) + 4) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + num(ymin) + "</text>\n";
  svg += "<text x=\"" + num(L) + "\" y=\"" + num(H - B + 16) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + num(xmin) + "</text>\n";
  svg += "<text x=\"" + num(W - R) + "\" y=\"" + num(H - B + 16) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + num(xmax) + "</text>\n";
  svg += "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"" + points + "\"/>\n";
  svg += "</svg>\n";
  return svg;
}

std::vector<fs::path> export_run(const fs::path& run_dir, ExportKind what) {
  const auto store = RunStore::open(run_dir);
  const auto out_dir = run_dir / "exports";
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  switch (what) {
    case ExportKind::Metrics: {
      if (!fs::exists(run_dir / "metrics.csv")) throw Error("export metrics: metrics.csv missing");
      (void)store.read_metrics();  // validates the schema
      const auto dst = out_dir / "metrics.csv";
      write_file_atomic(dst, read_file(run_dir / "metrics.csv"));
      written.push_back(dst);
      break;
    }
    case ExportKind::Edges: {
      const auto times = store.snapshot_times();
      if (times.empty()) throw Error("export edges: no snapshots");
      std::ostringstream out;
      for (int t : times) write_edge_list(out, t, store.read_snapshot(t).graph);
      const auto dst = out_dir / "edges.csv";
      write_file_atomic(dst, out.str());
      written.push_back(dst);
      break;
    }
    case ExportKind::Distributions: {
      const auto times = store.snapshot_times();
      if (times.empty()) throw Error("export distributions: no snapshots");
      for (int t : times) {
        const auto opinions = store.read_snapshot(t).opinions();
        const auto dist = distribution_of(opinions);
        nlohmann::json doc = {{"t", t}, {"f", dist.frequencies()}, {"s_pol", polarization_level(dist)}};
        const auto dst = out_dir / "distributions" / ("t" + RunStore::snapshot_name(t).substr(1));
        write_file_atomic(dst, doc.dump(2) + "\n");
        written.push_back(dst);
      }
      break;
    }
    case ExportKind::Transition: {
      const auto p = transition_from_snapshots(store);
      std::string csv;
      for (const auto& row : p.rows()) {
        for (std::size_t j = 0; j < row.size(); ++j) {
          if (j > 0) csv += ',';
          csv += format_double(row[j]);
        }
        csv += '\n';
      }
      const auto dst = out_dir / "transition.csv";
      write_file_atomic(dst, csv);
      written.push_back(dst);
      break;
    }
    case ExportKind::Svg: {
      const auto rows = store.read_metrics();
      if (rows.empty()) throw Error("export svg: metrics.csv has no rows");
      std::vector<double> xs;
      for (const auto& r : rows) xs.push_back(r.t);
      const std::vector<std::pair<std::string, double MetricsRow::*>> series = {
          {"s_pol", &MetricsRow::s_pol},
          {"homophilic", &MetricsRow::homophilic},
          {"heterophilic", &MetricsRow::heterophilic},
          {"neutral_involved", &MetricsRow::neutral_involved},
      };
      for (const auto& [name, field] : series) {
        std::vector<double> ys;
        for (const auto& r : rows) ys.push_back(r.*field);
        const auto dst = out_dir / (name + ".svg");
        write_file_atomic(dst, svg_line_chart(name, xs, ys));
        written.push_back(dst);
      }
      break;
    }
  }
  return written;
}

}  // namespace polarsim
