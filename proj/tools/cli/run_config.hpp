#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "pdda/classifier.hpp"
#include "pdda/corruption.hpp"
#include "pdda/dataset.hpp"
#include "pdda/evaluate.hpp"
#include "pdda/guidance_config.hpp"
#include "pdda/schedule.hpp"
#include "pdda/score_model.hpp"

namespace pdda::cli {

enum class ValueType { real, count, boolean, text, list };

struct KeyInfo {
  std::string_view name;
  ValueType type;
  std::string_view fallback;  // default value, already canonical
  std::string_view doc;
};

/// Every accepted key in canonical order.
const std::vector<KeyInfo>& config_keys();

/// Flat key=value run configuration. Values are validated and normalised on
/// assignment, so two configs with the same meaning serialise identically.
class RunConfig {
 public:
  /// All keys at their defaults.
  RunConfig();

  /// `# comment` and blank lines are ignored; each other line is `key = value`.
  /// Unknown or repeated keys and invalid values throw pdda::Error naming the
  /// key and line.
  static RunConfig parse(std::string_view text, const std::string& origin = "config");
  static RunConfig load(const std::filesystem::path& path);

  /// Parses config text on top of the current values.
  void apply_text(std::string_view text, const std::string& origin = "config");
  void apply_file(const std::filesystem::path& path);

  /// Applies "key=value" on top of the current values.
  void set(std::string_view assignment);
  void set(const std::string& key, const std::string& value);

  /// Canonical text: one `key = value` line per key in config_keys() order.
  std::string to_text() const;

  const std::string& get(const std::string& key) const;
  double real(const std::string& key) const;
  std::uint64_t count(const std::string& key) const;
  bool boolean(const std::string& key) const;
  std::vector<std::string> list(const std::string& key) const;

  bool operator==(const RunConfig& other) const { return values_ == other.values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// Resolves a path-valued key against the output directory when relative.
std::filesystem::path resolve_path(const RunConfig& cfg, const std::string& key);

GuidanceConfig guidance_config(const RunConfig& cfg);
NoiseSchedule schedule(const RunConfig& cfg);
DatasetSizes dataset_sizes(const RunConfig& cfg);
TrainOptions score_train_options(const RunConfig& cfg);
ClassifierTrainOptions classifier_train_options(const RunConfig& cfg);
std::vector<Method> methods(const RunConfig& cfg);
std::vector<CorruptionSpec> corruptions(const RunConfig& cfg);
std::vector<ProjectionMode> diagnose_modes(const RunConfig& cfg);

}  // namespace pdda::cli
