#pragma once

#include <random>
#include <string>
#include <vector>

#include "pdda/tensor.hpp"

namespace pdda {

enum class CorruptionKind { gaussian_noise, impulse_noise, contrast, gaussian_blur, pixelate };

inline constexpr int kMaxSeverity = 5;

CorruptionKind parse_corruption_kind(const std::string& s);
const char* to_string(CorruptionKind kind);
std::vector<CorruptionKind> all_corruption_kinds();

/// Severity 1..5; severity 0 is the identity.
struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::gaussian_noise;
  int severity = 3;
};

/// Per-kind parameter at a severity:
///   gaussian_noise  std      0.1 0.2 0.35 0.5 0.7
///   impulse_noise   prob     0.02 0.05 0.1 0.17 0.25
///   contrast        factor   0.75 0.5 0.4 0.3 0.2
///   gaussian_blur   std      0.5 0.75 1.0 1.5 2.0
///   pixelate        block    2 2 4 4 8
double corruption_parameter(CorruptionKind kind, int severity);

/// The raw operator at an explicit parameter, without the final clamp.
/// Blur uses a truncated (radius ceil(3 std)) kernel with edge replication;
/// pixelate needs a block that divides both spatial sides.
Tensor apply_corruption(const Tensor& x, CorruptionKind kind, double parameter,
                        std::mt19937_64& rng);

/// apply_corruption at the tabulated parameter, clamped to [-1, 1].
Tensor corrupt(const Tensor& x, const CorruptionSpec& spec, std::mt19937_64& rng);

}  // namespace pdda
