#pragma once

#include <cstddef>
#include <string>

namespace pdda {

enum class ProjectionMode { always, on_conflict_only, off };

ProjectionMode parse_projection_mode(const std::string& s);
const char* to_string(ProjectionMode mode);

struct KeeperMask {
  bool semantic = true;
  bool modification = true;

  bool any() const { return semantic || modification; }
};

/// Parses "all", "none", "f1" or "f2".
KeeperMask parse_keeper_mask(const std::string& s);
std::string to_string(KeeperMask mask);

/// Knobs of the guided sampler.
struct GuidanceConfig {
  double R = 0.3;            // guidance magnitude per step
  double tau = 0.5;          // contrastive temperature
  std::size_t patch_size = 2;
  double s_fraction = 0.5;   // guidance active for t <= floor(s_fraction * T)
  double t_star = 0.008;     // feature-extraction step as a fraction of T
  ProjectionMode projection = ProjectionMode::always;
  KeeperMask keepers;
  bool grad_through_score = true;
  double semantic_weight = 1.0;
  double modification_weight = 1.0;

  /// Throws pdda::Error naming the first invalid field.
  void validate() const;
  /// Last guided step, floor(s_fraction * T).
  std::size_t guidance_start(std::size_t T) const;
  /// Feature-extraction step max(1, round(t_star * T)).
  std::size_t feature_step(std::size_t T) const;
};

}  // namespace pdda
