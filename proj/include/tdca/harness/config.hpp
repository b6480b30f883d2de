#pragma once

// Experiment configuration: flat text with [section] headers and
// `key = value` lines; `#` starts a comment. Keys are addressed as
// section.key. Unknown keys are rejected so typos never pass silently.

#include "tdca/dataset.hpp"
#include "tdca/diffusion.hpp"
#include "tdca/error.hpp"
#include "tdca/pgpe.hpp"
#include "tdca/tdca.hpp"

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace tdca::harness {

class ConfigError : public ValueError {
 public:
  using ValueError::ValueError;
};

namespace text {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    const std::string item = trim(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start));
    if (!item.empty()) out.push_back(item);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace text

class ConfigFile {
 public:
  ConfigFile() = default;

  static ConfigFile parse(std::string_view text, const std::string& origin = "<config>") {
    ConfigFile cfg;
    cfg.origin_ = origin;
    std::string section;
    std::istringstream is{std::string(text)};
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(is, raw)) {
      ++lineno;
      const auto hash = raw.find('#');
      const std::string line = text::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
      if (line.empty()) continue;
      const std::string where = origin + ":" + std::to_string(lineno);
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
        section = text::trim(std::string_view(line).substr(1, line.size() - 2));
        if (section.empty()) throw ConfigError(where + ": empty section name");
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
      const std::string key = text::trim(std::string_view(line).substr(0, eq));
      if (key.empty()) throw ConfigError(where + ": missing key");
      const std::string full = section.empty() ? key : section + "." + key;
      if (cfg.values_.count(full)) throw ConfigError(where + ": duplicate key '" + full + "'");
      cfg.values_[full] = text::trim(std::string_view(line).substr(eq + 1));
    }
    return cfg;
  }

  static ConfigFile load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config " + path.string());
    const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return parse(text, path.string());
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  const std::map<std::string, std::string>& values() const { return values_; }
  const std::string& origin() const { return origin_; }

  std::string str(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double real(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    double v = 0.0;
    const auto& s = it->second;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
      throw ConfigError(origin_ + ": '" + key + "' must be a number, got '" + s + "'");
    }
    return v;
  }

  std::uint64_t count(const std::string& key, std::uint64_t fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return parse_count(key, it->second);
  }

  bool flag(const std::string& key, bool fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1" || it->second == "yes") return true;
    if (it->second == "false" || it->second == "0" || it->second == "no") return false;
    throw ConfigError(origin_ + ": '" + key + "' must be true or false, got '" + it->second + "'");
  }

  std::vector<std::string> list(const std::string& key, char sep = ',') const {
    const auto it = values_.find(key);
    if (it == values_.end()) return {};
    return text::split(it->second, sep);
  }

  std::vector<std::uint64_t> counts(const std::string& key) const {
    std::vector<std::uint64_t> out;
    for (const auto& s : list(key)) out.push_back(parse_count(key, s));
    return out;
  }

  void reject_unknown(const std::set<std::string>& known) const {
    for (const auto& [k, v] : values_) {
      if (!known.count(k)) throw ConfigError(origin_ + ": unknown key '" + k + "'");
    }
  }

 private:
  std::uint64_t parse_count(const std::string& key, const std::string& s) const {
    std::uint64_t v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
      throw ConfigError(origin_ + ": '" + key + "' must be a non-negative integer, got '" + s + "'");
    }
    return v;
  }

  std::string origin_ = "<config>";
  std::map<std::string, std::string> values_;
};

enum class TaskKind { Gaussian, Classification };
enum class MethodKind { BP, TDCA };

/// One entry of a diffusion sweep: a hidden width and a credit granularity.
struct SweepSetting {
  std::string label;
  std::size_t hidden = 100;
  Granularity granularity = Granularity::per_neuron();
};

/// "full" (per-neuron, default hidden width), "neuron:N", "line:N:K" or
/// "grid:HxW:K" (N hidden units, K group credits).
inline SweepSetting parse_sweep_setting(const std::string& text, std::size_t default_hidden,
                                        double sigma) {
  const auto parts = text::split(text, ':');
  auto num = [&](const std::string& s) {
    std::size_t v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size() || v == 0) {
      throw ConfigError("bad number '" + s + "' in sweep setting '" + text + "'");
    }
    return v;
  };
  SweepSetting s;
  s.label = text;
  if (parts.size() == 1 && parts[0] == "full") {
    s.hidden = default_hidden;
    return s;
  }
  if (parts.size() == 2 && parts[0] == "neuron") {
    s.hidden = num(parts[1]);
    return s;
  }
  if (parts.size() == 3 && parts[0] == "line") {
    s.hidden = num(parts[1]);
    s.granularity = Granularity::per_group({NeighborStructure::line(s.hidden), num(parts[2]), sigma, false});
    return s;
  }
  if (parts.size() == 3 && parts[0] == "grid") {
    const auto x = parts[1].find('x');
    if (x == std::string::npos) throw ConfigError("grid setting needs HxW: '" + text + "'");
    const std::size_t h = num(parts[1].substr(0, x));
    const std::size_t w = num(parts[1].substr(x + 1));
    s.hidden = h * w;
    s.granularity = Granularity::per_group({NeighborStructure::grid(h, w), num(parts[2]), sigma, false});
    return s;
  }
  throw ConfigError("unknown sweep setting '" + text + "' (full, neuron:N, line:N:K, grid:HxW:K)");
}

struct GaussianSettings {
  Point2 trap{3.0, 3.0};
  std::size_t random_starts = 8;
  double domain = 6.0;
  std::size_t steps = 30;
  double bp_lr = 0.1;
  std::size_t bp_steps = 200;
};

struct FieldSettings {
  double lo = -6.0;
  double hi = 6.0;
  std::size_t points = 11;
  std::size_t steps = 200;
  double scale = 0.1;
  double tolerance = 0.2;
};

struct LandscapeSettings {
  std::size_t points = 21;
  double margin = 0.25;  // fraction of the projected extent added on each side
};

struct FlopSettings {
  std::size_t batch = 1000;
  std::size_t big_hidden = 1000;
  std::size_t group_credits = 10;
};

struct ExperimentConfig {
  std::string name = "experiment";
  TaskKind task = TaskKind::Classification;
  MethodKind method = MethodKind::TDCA;
  std::vector<DatasetId> datasets{DatasetId::MNIST};
  std::size_t train_size = 1000;
  std::size_t test_size = 0;  // 0 = whole test split
  std::uint64_t subsample_seed = 0;
  std::size_t steps = 20;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  double bp_lr = 0.1;
  BottomUpArch arch;
  TdcaConfig tdca;
  double loss_weight = 0.001;
  std::string checkpoint;
  pgpe::Config pgpe;
  GaussianSettings gaussian;
  FieldSettings field;
  LandscapeSettings landscape;
  FlopSettings flops;
  std::vector<SweepSetting> sweep;
  std::vector<std::pair<std::string, std::string>> transfer_sources;  // label, checkpoint path
  std::vector<DatasetId> transfer_targets;
  std::string out = "runs/experiment";
  ConfigFile source;

  void validate() const {
    auto fail = [&](const std::string& m) { throw ConfigError(source.origin() + ": " + m); };
    if (seeds.empty()) fail("train.seeds must list at least one seed");
    if (steps == 0) fail("train.steps must be at least 1");
    if (task == TaskKind::Classification) {
      if (datasets.empty()) fail("data.datasets must name at least one dataset");
      if (train_size == 0) fail("data.train_size must be at least 1");
      for (DatasetId d : datasets) {
        if (train_size > canonical_count(d, Split::Train)) {
          fail("data.train_size " + std::to_string(train_size) + " exceeds the " +
               std::string(to_string(d)) + " training split");
        }
      }
      if (arch.hidden.empty()) fail("bottom_up.hidden must list at least one width");
    } else {
      if (gaussian.steps == 0) fail("gaussian.steps must be at least 1");
      if (field.points < 2) fail("field.points must be at least 2");
    }
    if (pgpe.population_size < 2 || pgpe.population_size % 2) fail("pgpe.population must be even");
    if (tdca.credit_scale <= 0.0) fail("tdca.credit_scale must be positive");
    if (pgpe.initial_sigma <= 0.0) fail("pgpe.sigma must be positive");
    if (bp_lr <= 0.0) fail("train.bp_lr must be positive");
    if (pgpe.threads == 0) fail("pgpe.threads must be at least 1");
    for (const auto& s : sweep) {
      if (s.granularity.kind == Granularity::Kind::PerGroup && s.granularity.group->credits > s.hidden) {
        fail("sweep setting '" + s.label + "' asks for " + std::to_string(s.granularity.group->credits) +
             " credits over " + std::to_string(s.hidden) + " neurons");
      }
    }
  }

  std::vector<LayerSpec> bottom_up_specs(DatasetId d) const {
    return resolve_arch(input_dim(d), kClassCount, arch);
  }
};

inline const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "experiment.name", "experiment.task", "experiment.method", "experiment.out",
      "data.datasets", "data.train_size", "data.test_size", "data.subsample_seed",
      "train.steps", "train.seeds", "train.bp_lr", "train.loss_weight",
      "bottom_up.hidden", "bottom_up.activation",
      "tdca.hidden", "tdca.credit_scale", "tdca.rule", "tdca.granularity", "tdca.structure",
      "tdca.length", "tdca.grid_height", "tdca.grid_width", "tdca.credits", "tdca.sigma",
      "tdca.include_outputs", "tdca.checkpoint",
      "pgpe.population", "pgpe.generations", "pgpe.lr_center", "pgpe.lr_sigma", "pgpe.sigma",
      "pgpe.seed", "pgpe.threads",
      "gaussian.trap_x", "gaussian.trap_y", "gaussian.random_starts", "gaussian.domain",
      "gaussian.steps", "gaussian.bp_lr", "gaussian.bp_steps",
      "field.min", "field.max", "field.points", "field.steps", "field.scale", "field.tolerance",
      "landscape.points", "landscape.margin",
      "flops.batch", "flops.big_hidden", "flops.group_credits",
      "diffusion.settings", "diffusion.sigma",
      "transfer.sources", "transfer.datasets"};
  return keys;
}

inline Granularity granularity_from_config(const ConfigFile& c, std::size_t first_hidden) {
  const std::string kind = c.str("tdca.granularity", "neuron");
  if (kind == "neuron") return Granularity::per_neuron();
  if (kind == "parameter") return Granularity::per_parameter();
  if (kind != "group") throw ConfigError("tdca.granularity must be parameter, neuron or group");
  GroupSpec gs;
  const std::string structure = c.str("tdca.structure", "line");
  if (structure == "line") {
    gs.structure = NeighborStructure::line(c.count("tdca.length", first_hidden));
  } else if (structure == "grid") {
    gs.structure = NeighborStructure::grid(c.count("tdca.grid_height", 10), c.count("tdca.grid_width", 10));
  } else {
    throw ConfigError("tdca.structure must be line or grid");
  }
  gs.credits = c.count("tdca.credits", 10);
  gs.sigma = c.real("tdca.sigma", 0.0);
  gs.include_outputs = c.flag("tdca.include_outputs", false);
  return Granularity::per_group(gs);
}

inline ExperimentConfig experiment_from(const ConfigFile& c) {
  c.reject_unknown(known_keys());
  ExperimentConfig e;
  e.source = c;
  e.name = c.str("experiment.name", e.name);
  const std::string task = c.str("experiment.task", "classification");
  if (task == "gaussian") {
    e.task = TaskKind::Gaussian;
  } else if (task != "classification") {
    throw ConfigError(c.origin() + ": experiment.task must be gaussian or classification");
  }
  const std::string method = c.str("experiment.method", "tdca");
  if (method == "bp") {
    e.method = MethodKind::BP;
  } else if (method != "tdca") {
    throw ConfigError(c.origin() + ": experiment.method must be bp or tdca");
  }
  e.out = c.str("experiment.out", "runs/" + e.name);

  if (c.has("data.datasets")) {
    e.datasets.clear();
    for (const auto& d : c.list("data.datasets")) e.datasets.push_back(dataset_id_from_string(d));
  }
  e.train_size = c.count("data.train_size", e.train_size);
  e.test_size = c.count("data.test_size", e.test_size);
  e.subsample_seed = c.count("data.subsample_seed", e.subsample_seed);

  e.steps = c.count("train.steps", e.steps);
  if (c.has("train.seeds")) e.seeds = c.counts("train.seeds");
  e.bp_lr = c.real("train.bp_lr", e.bp_lr);
  e.loss_weight = c.real("train.loss_weight", e.loss_weight);

  if (c.has("bottom_up.hidden")) {
    e.arch.hidden.clear();
    for (auto h : c.counts("bottom_up.hidden")) e.arch.hidden.push_back(h);
  }
  e.arch.hidden_activation = activation_from_string(c.str("bottom_up.activation", "tanh"));

  e.tdca.hidden = c.count("tdca.hidden", e.tdca.hidden);
  e.tdca.credit_scale = c.real("tdca.credit_scale", e.tdca.credit_scale);
  e.tdca.rule = expansion_rule_from_string(c.str("tdca.rule", "mean_activity"));
  e.tdca.granularity = granularity_from_config(c, e.arch.hidden.empty() ? 0 : e.arch.hidden.front());
  e.checkpoint = c.str("tdca.checkpoint", "");

  e.pgpe.population_size = c.count("pgpe.population", e.pgpe.population_size);
  e.pgpe.generations = c.count("pgpe.generations", e.pgpe.generations);
  e.pgpe.lr_center = c.real("pgpe.lr_center", e.pgpe.lr_center);
  e.pgpe.lr_sigma = c.real("pgpe.lr_sigma", e.pgpe.lr_sigma);
  e.pgpe.initial_sigma = c.real("pgpe.sigma", e.pgpe.initial_sigma);
  e.pgpe.seed = c.count("pgpe.seed", e.pgpe.seed);
  e.pgpe.threads = c.count("pgpe.threads", e.pgpe.threads);

  e.gaussian.trap = Point2(c.real("gaussian.trap_x", e.gaussian.trap.x()),
                           c.real("gaussian.trap_y", e.gaussian.trap.y()));
  e.gaussian.random_starts = c.count("gaussian.random_starts", e.gaussian.random_starts);
  e.gaussian.domain = c.real("gaussian.domain", e.gaussian.domain);
  e.gaussian.steps = c.count("gaussian.steps", e.gaussian.steps);
  e.gaussian.bp_lr = c.real("gaussian.bp_lr", e.gaussian.bp_lr);
  e.gaussian.bp_steps = c.count("gaussian.bp_steps", e.gaussian.bp_steps);

  e.field.lo = c.real("field.min", e.field.lo);
  e.field.hi = c.real("field.max", e.field.hi);
  e.field.points = c.count("field.points", e.field.points);
  e.field.steps = c.count("field.steps", e.field.steps);
  e.field.scale = c.real("field.scale", e.field.scale);
  e.field.tolerance = c.real("field.tolerance", e.field.tolerance);

  e.landscape.points = c.count("landscape.points", e.landscape.points);
  e.landscape.margin = c.real("landscape.margin", e.landscape.margin);

  e.flops.batch = c.count("flops.batch", e.flops.batch);
  e.flops.big_hidden = c.count("flops.big_hidden", e.flops.big_hidden);
  e.flops.group_credits = c.count("flops.group_credits", e.flops.group_credits);

  const std::size_t default_hidden = e.arch.hidden.empty() ? 100 : e.arch.hidden.front();
  for (const auto& s : c.list("diffusion.settings", ';')) {
    e.sweep.push_back(parse_sweep_setting(s, default_hidden, c.real("diffusion.sigma", 0.0)));
  }
  for (const auto& s : c.list("transfer.sources")) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(c.origin() + ": transfer.sources entries are label=path");
    e.transfer_sources.emplace_back(text::trim(s.substr(0, eq)), text::trim(s.substr(eq + 1)));
  }
  for (const auto& d : c.list("transfer.datasets")) e.transfer_targets.push_back(dataset_id_from_string(d));

  e.validate();
  return e;
}

inline ExperimentConfig load_experiment(const std::filesystem::path& path) {
  return experiment_from(ConfigFile::load(path));
}

}  // namespace tdca::harness
