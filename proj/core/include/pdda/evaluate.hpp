#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pdda/classifier.hpp"
#include "pdda/corruption.hpp"
#include "pdda/dataset.hpp"
#include "pdda/guidance_config.hpp"
#include "pdda/sampler.hpp"

namespace pdda {

enum class Method {
  source_only,
  diffpure_like,
  pdda_full,
  pdda_f1_only,
  pdda_f2_only,
  pdda_no_projection,
  pdda_no_schedule,
};

Method parse_method(const std::string& s);
const char* to_string(Method m);
std::vector<Method> all_methods();

/// Sampler configuration of a method derived from the base configuration;
/// empty for source_only, which classifies the corrupted input directly.
///   diffpure_like       keepers none
///   pdda_f1_only/f2     keepers f1/f2
///   pdda_no_projection  projection off
///   pdda_no_schedule    s_fraction 1 (guided at every step)
std::optional<GuidanceConfig> method_guidance(Method m, const GuidanceConfig& base);

/// Seed of the per-image streams, derived from (global seed, image index).
std::uint64_t image_seed(std::uint64_t global_seed, std::size_t image_index);
/// Stream used to corrupt one image.
std::mt19937_64 corruption_stream(std::uint64_t global_seed, std::size_t image_index,
                                  const CorruptionSpec& spec);

struct EvalModels {
  const ScoreNetwork& score;
  const Classifier& classifier;
  const NoiseSchedule& schedule;
};

struct EvalOptions {
  std::vector<Method> methods;
  std::vector<CorruptionSpec> corruptions;
  std::vector<std::uint64_t> seeds;
  GuidanceConfig guidance;
  std::size_t jobs = 1;   // worker threads; 0 = hardware concurrency
  std::size_t limit = 0;  // evaluate the first `limit` images only; 0 = all
  std::string config_text;  // canonical run configuration, hashed into the metadata
  std::function<void(std::size_t done, std::size_t total)> progress;
};

struct EvalRow {
  Method method = Method::source_only;
  CorruptionSpec corruption;
  std::size_t n = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
  std::vector<double> seed_accuracy;  // one entry per seed, in seed order
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::vector<std::pair<std::string, std::string>> metadata;

  const EvalRow& row(Method m, CorruptionKind kind, int severity) const;
  /// Mean accuracy of `m` over the listed rows of every corruption it was run on.
  double mean_accuracy(Method m) const;
};

/// Columns method,corruption,severity,n,accuracy.
void write_report_csv(std::ostream& os, const EvalReport& report);
/// key=value lines.
void write_report_metadata(std::ostream& os, const EvalReport& report);

/// Runs every method on every corrupted test image for every seed. Each
/// (seed, corruption, image) unit is independent, so the report does not
/// depend on `jobs`. Methods sharing a guidance start reuse one unguided
/// prefix, which is bitwise identical to running them separately.
EvalReport evaluate(const Split& test, const EvalModels& models, const EvalOptions& opts);

std::uint64_t fnv1a(const std::string& text);

struct DiagnoseOptions {
  std::vector<ProjectionMode> modes{ProjectionMode::off, ProjectionMode::always,
                                    ProjectionMode::on_conflict_only};
  std::size_t trajectories = 32;
  CorruptionSpec corruption{CorruptionKind::gaussian_noise, 3};
  std::uint64_t seed = 0;
  GuidanceConfig guidance;
  std::size_t jobs = 1;
};

struct PhiSample {
  std::size_t trajectory = 0;
  std::size_t t = 0;
  double phi = 0.0;
};

struct DiagnoseResult {
  std::vector<ProjectionMode> modes;
  std::vector<std::vector<PhiSample>> samples;  // per mode
  std::vector<double> mean_phi;                 // per mode, over all samples
};

/// Guided trajectories of the first `trajectories` corrupted test images under
/// each projection mode, recording the per-step gradient magnitude similarity.
DiagnoseResult diagnose(const Split& test, const ScoreNetwork& score, const NoiseSchedule& sched,
                        const DiagnoseOptions& opts);

/// Columns mode,trajectory,t,phi.
void write_diagnose_csv(std::ostream& os, const DiagnoseResult& result);

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. The first exception
/// (lowest index) is rethrown after all workers finish.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

}  // namespace pdda
