#include "run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace pdda::cli {

namespace {

using enum ValueType;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

const KeyInfo& info(const std::string& key) {
  for (const auto& k : config_keys())
    if (k.name == key) return k;
  throw Error("unknown config key '" + key + "'");
}

[[noreturn]] void invalid(const std::string& key, const std::string& value, const std::string& why) {
  throw Error("config key '" + key + "': " + why + ", got '" + value + "'");
}

std::string canonical_real(const std::string& key, const std::string& v) {
  double x = 0.0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, x);
  if (v.empty() || ec != std::errc() || ptr != end || !std::isfinite(x)) {
    invalid(key, v, "expected a finite number");
  }
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::string canonical_count(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, x);
  if (v.empty() || ec != std::errc() || ptr != end) invalid(key, v, "expected a non-negative integer");
  return std::to_string(x);
}

std::string canonical_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return "true";
  if (v == "false" || v == "0" || v == "no" || v == "off") return "false";
  invalid(key, v, "expected true or false");
}

// Enumerated values are checked by the parser of their domain type.
void check_member(const std::string& key, const std::string& v) {
  try {
    if (key == "schedule") parse_schedule_kind(v);
    if (key == "projection_mode" || key == "diagnose_modes") parse_projection_mode(v);
    if (key == "keeper_mask") parse_keeper_mask(v);
    if (key == "corruption" || key == "corruptions") parse_corruption_kind(v);
    if (key == "methods") parse_method(v);
    if (key == "severities") {
      const std::string c = canonical_count(key, v);
      if (std::stoul(c) > static_cast<unsigned long>(kMaxSeverity)) throw Error("severity above 5");
    }
  } catch (const Error& e) {
    invalid(key, v, e.what());
  }
}

std::string canonical(const KeyInfo& k, const std::string& raw) {
  const std::string key(k.name);
  const std::string v = trim(raw);
  switch (k.type) {
    case real: return canonical_real(key, v);
    case count: {
      std::string c = canonical_count(key, v);
      if (key == "severity" && std::stoul(c) > static_cast<unsigned long>(kMaxSeverity)) {
        invalid(key, v, "expected a severity in 0..5");
      }
      return c;
    }
    case boolean: return canonical_bool(key, v);
    case text:
      if (v.find('\n') != std::string::npos) invalid(key, v, "value spans lines");
      if (!v.empty() || key == "schedule" || key == "projection_mode" || key == "keeper_mask" ||
          key == "corruption") {
        check_member(key, v);
      }
      return v;
    case list: {
      const auto items = split_list(v);
      if (items.empty()) invalid(key, v, "expected a non-empty comma-separated list");
      std::string out;
      for (const auto& item : items) {
        check_member(key, item);
        out += (out.empty() ? "" : ",") + (key == "severities" ? canonical_count(key, item) : item);
      }
      return out;
    }
  }
  return v;
}

}  // namespace

const std::vector<KeyInfo>& config_keys() {
  static const std::vector<KeyInfo> keys = {
      {"seed", count, "0", "base seed; --seed overrides it"},
      {"out", text, "pdda_out", "output directory; PDDA_OUT and --out override it"},
      {"dataset", text, "dataset.ckpt", "dataset file, relative to out"},
      {"score_checkpoint", text, "score.ckpt", "score network checkpoint, relative to out"},
      {"classifier_checkpoint", text, "classifier.ckpt", "classifier checkpoint, relative to out"},
      {"train_size", count, "2048", "training split size"},
      {"val_size", count, "256", "validation split size"},
      {"test_size", count, "512", "test split size"},
      {"schedule", text, "linear", "noise schedule: linear or cosine"},
      {"T", count, "100", "diffusion steps"},
      {"R", real, "0.3", "guidance magnitude per step"},
      {"tau", real, "0.5", "contrastive temperature"},
      {"patch_size", count, "2", "feature patch side"},
      {"s_fraction", real, "0.5", "guidance active for t <= floor(s_fraction T)"},
      {"t_star", real, "0.008", "feature-extraction step as a fraction of T"},
      {"projection_mode", text, "always", "always, on_conflict_only or off"},
      {"keeper_mask", text, "all", "all, f1, f2 or none"},
      {"grad_through_score", boolean, "true", "differentiate the keepers through the score network"},
      {"semantic_weight", real, "1", "weight of the semantic keeper direction"},
      {"modification_weight", real, "1", "weight of the modification keeper direction"},
      {"score_epochs", count, "60", "score network training epochs"},
      {"score_lr", real, "0.005", "score network learning rate"},
      {"score_momentum", real, "0.9", "score network momentum"},
      {"score_batch", count, "4", "score network minibatch size"},
      {"classifier_epochs", count, "20", "classifier training epochs"},
      {"classifier_lr", real, "0.01", "classifier learning rate"},
      {"classifier_momentum", real, "0.9", "classifier momentum"},
      {"classifier_batch", count, "32", "classifier minibatch size"},
      {"methods", list,
       "source_only,diffpure_like,pdda_full,pdda_f1_only,pdda_f2_only,pdda_no_projection,"
       "pdda_no_schedule",
       "evaluate: methods to run"},
      {"corruptions", list, "gaussian_noise,impulse_noise,contrast,gaussian_blur,pixelate",
       "evaluate: corruption kinds"},
      {"severities", list, "3", "evaluate: severities (0 = uncorrupted)"},
      {"num_seeds", count, "3", "evaluate: seeds seed, seed+1, ..."},
      {"eval_limit", count, "0", "evaluate: first N test images only (0 = all)"},
      {"input", text, "", "purify: input PGM; empty selects a test image by index"},
      {"index", count, "0", "purify: test image index"},
      {"corruption", text, "gaussian_noise", "purify/diagnose: corruption kind"},
      {"severity", count, "3", "purify/diagnose: corruption severity (0 = none)"},
      {"diagnose_trajectories", count, "32", "diagnose: number of guided trajectories"},
      {"diagnose_modes", list, "off,always,on_conflict_only", "diagnose: projection modes"},
  };
  return keys;
}

RunConfig::RunConfig() {
  for (const auto& k : config_keys()) values_[std::string(k.name)] = std::string(k.fallback);
}

void RunConfig::set(const std::string& key, const std::string& value) {
  values_[key] = canonical(info(key), value);
}

void RunConfig::set(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw Error("expected key=value, got '" + std::string(assignment) + "'");
  }
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

RunConfig RunConfig::parse(std::string_view text, const std::string& origin) {
  RunConfig cfg;
  cfg.apply_text(text, origin);
  return cfg;
}

void RunConfig::apply_text(std::string_view text, const std::string& origin) {
  std::map<std::string, std::size_t> seen;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto where = origin + ":" + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(where + ": expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    if (auto it = seen.find(key); it != seen.end()) {
      throw Error(where + ": config key '" + key + "' repeated (first on line " +
                  std::to_string(it->second) + ")");
    }
    seen[key] = line_no;
    try {
      set(key, line.substr(eq + 1));
    } catch (const Error& e) {
      throw Error(where + ": " + e.what());
    }
  }
}

void RunConfig::apply_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  apply_text(ss.str(), path.string());
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  RunConfig cfg;
  cfg.apply_file(path);
  return cfg;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& k : config_keys()) {
    const std::string& v = values_.at(std::string(k.name));
    out += std::string(k.name) + " =" + (v.empty() ? "" : " " + v) + "\n";
  }
  return out;
}

const std::string& RunConfig::get(const std::string& key) const {
  info(key);
  return values_.at(key);
}

double RunConfig::real(const std::string& key) const { return std::stod(get(key)); }
std::uint64_t RunConfig::count(const std::string& key) const { return std::stoull(get(key)); }
bool RunConfig::boolean(const std::string& key) const { return get(key) == "true"; }
std::vector<std::string> RunConfig::list(const std::string& key) const {
  return split_list(get(key));
}

std::filesystem::path resolve_path(const RunConfig& cfg, const std::string& key) {
  std::filesystem::path p = cfg.get(key);
  if (p.empty()) throw Error("config key '" + key + "' is empty");
  return p.is_absolute() ? p : std::filesystem::path(cfg.get("out")) / p;
}

GuidanceConfig guidance_config(const RunConfig& cfg) {
  GuidanceConfig g;
  g.R = cfg.real("R");
  g.tau = cfg.real("tau");
  g.patch_size = cfg.count("patch_size");
  g.s_fraction = cfg.real("s_fraction");
  g.t_star = cfg.real("t_star");
  g.projection = parse_projection_mode(cfg.get("projection_mode"));
  g.keepers = parse_keeper_mask(cfg.get("keeper_mask"));
  g.grad_through_score = cfg.boolean("grad_through_score");
  g.semantic_weight = cfg.real("semantic_weight");
  g.modification_weight = cfg.real("modification_weight");
  try {
    g.validate();
  } catch (const Error& e) {
    throw Error(std::string("invalid guidance configuration: ") + e.what());
  }
  return g;
}

NoiseSchedule schedule(const RunConfig& cfg) {
  try {
    return make_schedule(cfg.count("T"), parse_schedule_kind(cfg.get("schedule")));
  } catch (const Error& e) {
    throw Error(std::string("config key 'T': ") + e.what());
  }
}

DatasetSizes dataset_sizes(const RunConfig& cfg) {
  DatasetSizes s{cfg.count("train_size"), cfg.count("val_size"), cfg.count("test_size")};
  for (const char* key : {"train_size", "val_size", "test_size"}) {
    if (cfg.count(key) == 0) throw Error(std::string("config key '") + key + "' must be positive");
  }
  return s;
}

TrainOptions score_train_options(const RunConfig& cfg) {
  TrainOptions o;
  o.epochs = cfg.count("score_epochs");
  o.lr = cfg.real("score_lr");
  o.momentum = cfg.real("score_momentum");
  o.batch_size = cfg.count("score_batch");
  o.seed = cfg.count("seed");
  if (o.batch_size == 0) throw Error("config key 'score_batch' must be positive");
  return o;
}

ClassifierTrainOptions classifier_train_options(const RunConfig& cfg) {
  ClassifierTrainOptions o;
  o.epochs = cfg.count("classifier_epochs");
  o.lr = cfg.real("classifier_lr");
  o.momentum = cfg.real("classifier_momentum");
  o.batch_size = cfg.count("classifier_batch");
  o.seed = cfg.count("seed");
  if (o.batch_size == 0) throw Error("config key 'classifier_batch' must be positive");
  return o;
}

std::vector<Method> methods(const RunConfig& cfg) {
  std::vector<Method> out;
  for (const auto& m : cfg.list("methods")) out.push_back(parse_method(m));
  return out;
}

std::vector<CorruptionSpec> corruptions(const RunConfig& cfg) {
  std::vector<CorruptionSpec> out;
  for (const auto& sev : cfg.list("severities")) {
    for (const auto& kind : cfg.list("corruptions")) {
      out.push_back({parse_corruption_kind(kind), std::stoi(sev)});
    }
  }
  return out;
}

std::vector<ProjectionMode> diagnose_modes(const RunConfig& cfg) {
  std::vector<ProjectionMode> out;
  for (const auto& m : cfg.list("diagnose_modes")) out.push_back(parse_projection_mode(m));
  return out;
}

}  // namespace pdda::cli
