#include "pdda/guidance_config.hpp"

#include <algorithm>
#include <cmath>

#include "pdda/tensor.hpp"

namespace pdda {

ProjectionMode parse_projection_mode(const std::string& s) {
  if (s == "always") return ProjectionMode::always;
  if (s == "on_conflict_only") return ProjectionMode::on_conflict_only;
  if (s == "off") return ProjectionMode::off;
  throw Error("unknown projection mode '" + s + "'");
}

const char* to_string(ProjectionMode mode) {
  switch (mode) {
    case ProjectionMode::always: return "always";
    case ProjectionMode::on_conflict_only: return "on_conflict_only";
    case ProjectionMode::off: return "off";
  }
  return "?";
}

KeeperMask parse_keeper_mask(const std::string& s) {
  if (s == "all") return {true, true};
  if (s == "none") return {false, false};
  if (s == "f1") return {true, false};
  if (s == "f2") return {false, true};
  throw Error("unknown keeper mask '" + s + "' (expected all, none, f1 or f2)");
}

std::string to_string(KeeperMask mask) {
  if (mask.semantic && mask.modification) return "all";
  if (mask.semantic) return "f1";
  if (mask.modification) return "f2";
  return "none";
}

void GuidanceConfig::validate() const {
  if (!std::isfinite(R) || R < 0.0) throw Error("R must be a non-negative number");
  if (!(tau > 0.0)) throw Error("tau must be positive");
  if (patch_size == 0) throw Error("patch_size must be positive");
  if (!(s_fraction >= 0.0 && s_fraction <= 1.0)) throw Error("s_fraction must lie in [0,1]");
  if (!(t_star > 0.0 && t_star < 1.0)) throw Error("t_star must lie in (0,1)");
  if (semantic_weight < 0.0 || modification_weight < 0.0) {
    throw Error("keeper weights must be non-negative");
  }
}

std::size_t GuidanceConfig::guidance_start(std::size_t T) const {
  return static_cast<std::size_t>(std::floor(s_fraction * static_cast<double>(T)));
}

std::size_t GuidanceConfig::feature_step(std::size_t T) const {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(t_star * static_cast<double>(T))));
}

}  // namespace pdda
