#include "polarsim/domain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <toml.hpp>

#include "polarsim/embedded.hpp"

namespace polarsim {

std::string_view to_string(Camp camp) {
  switch (camp) {
    case Camp::Left: return "L";
    case Camp::Neutral: return "N";
    case Camp::Right: return "R";
  }
  return "?";
}

Opinion::Opinion(int value) : value_(value) {
  if (value < kMin || value > kMax) {
    throw std::invalid_argument("opinion out of range: " + std::to_string(value));
  }
}

Opinion Opinion::from_index(std::size_t index) {
  if (index >= kLevels) throw std::invalid_argument("opinion index out of range");
  return Opinion(static_cast<int>(index) + kMin);
}

std::array<Opinion, Opinion::kLevels> Opinion::all() {
  return {Opinion(-2), Opinion(-1), Opinion(0), Opinion(1), Opinion(2)};
}

Camp camp_of(Opinion opinion) {
  if (opinion.value() < 0) return Camp::Left;
  if (opinion.value() > 0) return Camp::Right;
  return Camp::Neutral;
}

int sign_of(Camp camp) { return static_cast<int>(camp); }

// ---------------------------------------------------------------------------
// Issues

namespace {

std::array<std::string, Opinion::kLevels> read_five(const toml::table& tbl, std::string_view key,
                                                    const std::string& source) {
  const auto* arr = tbl[key].as_array();
  if (arr == nullptr || arr->size() != Opinion::kLevels) {
    throw Error(source + ": '" + std::string(key) + "' must be an array of exactly 5 strings");
  }
  std::array<std::string, Opinion::kLevels> out;
  for (std::size_t i = 0; i < Opinion::kLevels; ++i) {
    auto s = (*arr)[i].value<std::string>();
    if (!s || s->empty()) {
      throw Error(source + ": '" + std::string(key) + "[" + std::to_string(i) + "]' must be a non-empty string");
    }
    out[i] = *s;
  }
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

IssueDefinition parse_issue(std::string_view toml_text, std::string key) {
  toml::table tbl;
  try {
    tbl = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    throw Error("issue '" + key + "': " + std::string(e.description()));
  }
  for (const auto& [k, v] : tbl) {
    if (k != "name" && k != "labels" && k != "descriptions") {
      throw Error("issue '" + key + "': unknown key '" + std::string(k.str()) + "'");
    }
  }
  IssueDefinition issue;
  issue.key = std::move(key);
  auto name = tbl["name"].value<std::string>();
  if (!name || name->empty()) throw Error("issue '" + issue.key + "': 'name' must be a non-empty string");
  issue.name = *name;
  issue.labels = read_five(tbl, "labels", "issue '" + issue.key + "'");
  issue.descriptions = read_five(tbl, "descriptions", "issue '" + issue.key + "'");
  return issue;
}

IssueDefinition load_issue_file(const std::filesystem::path& path) {
  return parse_issue(read_text_file(path), path.stem().string());
}

IssueDefinition builtin_issue(std::string_view key) {
  const auto text = embedded_resource("issues/" + std::string(key) + ".toml");
  if (!text) throw Error("unknown issue '" + std::string(key) + "'");
  return parse_issue(*text, std::string(key));
}

std::vector<std::string> builtin_issue_keys() {
  std::vector<std::string> keys;
  for (auto name : embedded_resource_names()) {
    if (name.starts_with("issues/") && name.ends_with(".toml")) {
      keys.emplace_back(name.substr(7, name.size() - 7 - 5));
    }
  }
  return keys;
}

IssueDefinition resolve_issue(std::string_view key_or_path) {
  if (key_or_path.ends_with(".toml")) return load_issue_file(std::filesystem::path(key_or_path));
  return builtin_issue(key_or_path);
}

// ---------------------------------------------------------------------------
// Dispositions

namespace {

constexpr std::array<std::string_view, kDispositionKinds> kKindNames = {
    "SelectiveExposure", "ConfirmationBias",   "ExaggeratedMisperception", "ObjectiveIllusion",
    "Stereotyping",      "NoSelectiveExposure", "NoConfirmationBias",      "OpenMindedness",
};

std::array<Disposition, kDispositionKinds> load_traits() {
  const auto text = embedded_resource("traits.toml");
  if (!text) throw Error("traits.toml missing from embedded data");
  const toml::table tbl = toml::parse(*text);
  std::array<Disposition, kDispositionKinds> out{};
  for (std::size_t i = 0; i < kDispositionKinds; ++i) {
    const auto* entry = tbl[kKindNames[i]].as_table();
    if (entry == nullptr) throw Error("traits.toml: missing entry " + std::string(kKindNames[i]));
    Disposition d;
    d.kind = static_cast<DispositionKind>(i);
    d.trait_name = (*entry)["trait"].value_or(std::string{});
    d.description = (*entry)["description"].value_or(std::string{});
    d.negated = (*entry)["negated"].value_or(false);
    d.stage = (*entry)["stage"].value_or(std::string{"decision"}) == "update" ? DispositionStage::OpinionUpdate
                                                                            : DispositionStage::PartnerDecision;
    out[i] = std::move(d);
  }
  return out;
}

}  // namespace

std::string Disposition::prompt_line() const {
  return (negated ? "You DO NOT have " : "You have ") + trait_name + ", which means " + description + ".";
}

std::string_view to_string(DispositionKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

std::optional<DispositionKind> parse_disposition_kind(std::string_view text) {
  for (std::size_t i = 0; i < kDispositionKinds; ++i) {
    if (kKindNames[i] == text) return static_cast<DispositionKind>(i);
  }
  return std::nullopt;
}

const Disposition& disposition_info(DispositionKind kind) {
  static const auto table = load_traits();
  return table[static_cast<std::size_t>(kind)];
}

std::vector<DispositionKind> DispositionSet::kinds() const {
  std::vector<DispositionKind> out;
  for (std::size_t i = 0; i < kDispositionKinds; ++i) {
    if (contains(static_cast<DispositionKind>(i))) out.push_back(static_cast<DispositionKind>(i));
  }
  return out;
}

std::vector<DispositionKind> DispositionSet::for_stage(DispositionStage stage) const {
  std::vector<DispositionKind> out;
  for (auto k : kinds()) {
    if (disposition_info(k).stage == stage) out.push_back(k);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Distributions

OpinionDistribution::OpinionDistribution(std::array<double, Opinion::kLevels> frequencies) : f_(frequencies) {
  double sum = 0.0;
  for (double v : f_) {
    if (!(v >= 0.0)) throw std::invalid_argument("opinion distribution has a negative entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("opinion distribution sums to " + std::to_string(sum) + ", expected 1");
  }
}

OpinionDistribution distribution_of(std::span<const Opinion> opinions) {
  if (opinions.empty()) throw Error("empty population");
  std::array<std::size_t, Opinion::kLevels> counts{};
  for (Opinion o : opinions) ++counts[o.index()];
  std::array<double, Opinion::kLevels> f{};
  const auto n = static_cast<double>(opinions.size());
  for (std::size_t k = 0; k < Opinion::kLevels; ++k) f[k] = static_cast<double>(counts[k]) / n;
  // Division can leave the sum a few ulps away from 1; fold the residue into
  // the largest cell so the invariant holds exactly.
  const double sum = std::accumulate(f.begin(), f.end(), 0.0);
  auto largest = std::max_element(f.begin(), f.end());
  *largest += 1.0 - sum;
  return OpinionDistribution(f);
}

std::array<std::size_t, Opinion::kLevels> allocate_counts(const OpinionDistribution& dist, std::size_t n) {
  std::array<std::size_t, Opinion::kLevels> counts{};
  std::array<double, Opinion::kLevels> remainder{};
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < Opinion::kLevels; ++k) {
    const double exact = dist.frequencies()[k] * static_cast<double>(n);
    // Snap values within rounding noise of an integer (0.1 * 10 etc.).
    const double snapped = std::abs(exact - std::round(exact)) < 1e-9 ? std::round(exact) : exact;
    counts[k] = static_cast<std::size_t>(std::floor(snapped));
    remainder[k] = snapped - std::floor(snapped);
    assigned += counts[k];
  }
  std::array<std::size_t, Opinion::kLevels> order{0, 1, 2, 3, 4};
  // Largest remainder first; ties resolved toward the centre of the scale,
  // then by index, so the allocation is symmetric where possible.
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (remainder[a] != remainder[b]) return remainder[a] > remainder[b];
    const auto da = a > 2 ? a - 2 : 2 - a;
    const auto db = b > 2 ? b - 2 : 2 - b;
    return da < db;
  });
  for (std::size_t i = 0; assigned < n; i = (i + 1) % Opinion::kLevels) {
    if (dist.frequencies()[order[i]] > 0.0) {
      ++counts[order[i]];
      ++assigned;
    }
  }
  return counts;
}

std::vector<Opinion> sample_initial_opinions(const OpinionDistribution& dist, std::size_t n, RandomStream& rng) {
  const auto counts = allocate_counts(dist, n);
  std::vector<Opinion> out;
  out.reserve(n);
  for (std::size_t k = 0; k < Opinion::kLevels; ++k) {
    out.insert(out.end(), counts[k], Opinion::from_index(k));
  }
  rng.shuffle(std::span<Opinion>(out));
  return out;
}

std::vector<Opinion> sample_iid_opinions(const OpinionDistribution& dist, std::size_t n, RandomStream& rng) {
  std::vector<Opinion> out;
  out.reserve(n);
  const auto& f = dist.frequencies();
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t k = 0;
    for (; k + 1 < Opinion::kLevels; ++k) {
      acc += f[k];
      if (u < acc) break;
    }
    // Skip zero-probability tail cells reached only through rounding.
    while (f[k] == 0.0 && k > 0) --k;
    out.push_back(Opinion::from_index(k));
  }
  return out;
}

void AgentState::remember(const Message& m, std::size_t cap) {
  auto& h = history[m.sender];
  h.push_back(m);
  while (h.size() > cap) h.pop_front();
}

}  // namespace polarsim
