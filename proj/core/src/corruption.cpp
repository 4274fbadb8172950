#include "pdda/corruption.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace pdda {

namespace {

constexpr std::array<CorruptionKind, 5> kKinds{
    CorruptionKind::gaussian_noise, CorruptionKind::impulse_noise, CorruptionKind::contrast,
    CorruptionKind::gaussian_blur, CorruptionKind::pixelate};

void check_image(const Tensor& x) {
  if (x.shape.size() < 2) throw Error("corrupt: image needs at least two dimensions");
}

// Values and shape only; gradients never flow through corruptions.
Tensor copy_values(const Tensor& x) { return Tensor(x.shape, x.data); }

// Spatial layout: leading dimensions are independent planes of H x W.
struct Planes {
  std::size_t count, h, w;
};

Planes planes_of(const Tensor& x) {
  const std::size_t h = x.shape[x.shape.size() - 2], w = x.shape.back();
  return {x.size() / (h * w), h, w};
}

Tensor blur(const Tensor& x, double sd) {
  if (sd <= 0.0) throw Error("gaussian_blur: std must be positive");
  const int radius = static_cast<int>(std::ceil(3.0 * sd));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sd * sd));
    total += kernel[i + radius];
  }
  for (auto& k : kernel) k /= total;

  const auto [count, h, w] = planes_of(x);
  Tensor tmp = copy_values(x), out = copy_values(x);
  auto at = [](int i, std::size_t n) {
    return static_cast<std::size_t>(std::clamp(i, 0, static_cast<int>(n) - 1));
  };
  for (std::size_t p = 0; p < count; ++p) {
    const double* src = x.data.data() + p * h * w;
    double* mid = tmp.data.data() + p * h * w;
    double* dst = out.data.data() + p * h * w;
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          acc += kernel[i + radius] * src[r * w + at(static_cast<int>(c) + i, w)];
        }
        mid[r * w + c] = acc;
      }
    }
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          acc += kernel[i + radius] * mid[at(static_cast<int>(r) + i, h) * w + c];
        }
        dst[r * w + c] = acc;
      }
    }
  }
  return out;
}

Tensor pixelate(const Tensor& x, double block_size) {
  const auto b = static_cast<std::size_t>(block_size);
  if (block_size < 1.0 || static_cast<double>(b) != block_size) {
    throw Error("pixelate: block must be a positive integer, got " + std::to_string(block_size));
  }
  const auto [count, h, w] = planes_of(x);
  if (h % b != 0 || w % b != 0) {
    throw Error("pixelate: block " + std::to_string(b) + " does not divide " + std::to_string(h) +
                "x" + std::to_string(w));
  }
  Tensor out = copy_values(x);
  for (std::size_t p = 0; p < count; ++p) {
    double* d = out.data.data() + p * h * w;
    for (std::size_t r0 = 0; r0 < h; r0 += b) {
      for (std::size_t c0 = 0; c0 < w; c0 += b) {
        double mean = 0.0;
        for (std::size_t r = r0; r < r0 + b; ++r)
          for (std::size_t c = c0; c < c0 + b; ++c) mean += d[r * w + c];
        mean /= static_cast<double>(b * b);
        for (std::size_t r = r0; r < r0 + b; ++r)
          for (std::size_t c = c0; c < c0 + b; ++c) d[r * w + c] = mean;
      }
    }
  }
  return out;
}

}  // namespace

CorruptionKind parse_corruption_kind(const std::string& s) {
  for (auto k : kKinds)
    if (s == to_string(k)) return k;
  throw Error("unknown corruption kind '" + s + "'");
}

const char* to_string(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::gaussian_noise: return "gaussian_noise";
    case CorruptionKind::impulse_noise: return "impulse_noise";
    case CorruptionKind::contrast: return "contrast";
    case CorruptionKind::gaussian_blur: return "gaussian_blur";
    case CorruptionKind::pixelate: return "pixelate";
  }
  return "?";
}

std::vector<CorruptionKind> all_corruption_kinds() { return {kKinds.begin(), kKinds.end()}; }

double corruption_parameter(CorruptionKind kind, int severity) {
  if (severity < 1 || severity > kMaxSeverity) {
    throw Error("corruption severity must be in 1..5, got " + std::to_string(severity));
  }
  static constexpr double table[5][5] = {
      {0.1, 0.2, 0.35, 0.5, 0.7},
      {0.02, 0.05, 0.1, 0.17, 0.25},
      {0.75, 0.5, 0.4, 0.3, 0.2},
      {0.5, 0.75, 1.0, 1.5, 2.0},
      {2, 2, 4, 4, 8},
  };
  return table[static_cast<int>(kind)][severity - 1];
}

Tensor apply_corruption(const Tensor& x, CorruptionKind kind, double parameter,
                        std::mt19937_64& rng) {
  check_image(x);
  switch (kind) {
    case CorruptionKind::gaussian_noise: {
      if (parameter < 0.0) throw Error("gaussian_noise: std must be nonnegative");
      std::normal_distribution<double> normal(0.0, 1.0);
      Tensor out = copy_values(x);
      for (auto& v : out.data) v += parameter * normal(rng);
      return out;
    }
    case CorruptionKind::impulse_noise: {
      if (parameter < 0.0 || parameter > 1.0) throw Error("impulse_noise: prob must be in [0,1]");
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      Tensor out = copy_values(x);
      for (auto& v : out.data) {
        const bool hit = unit(rng) < parameter;
        const bool salt = unit(rng) < 0.5;
        if (hit) v = salt ? 1.0 : -1.0;
      }
      return out;
    }
    case CorruptionKind::contrast: {
      const auto [count, h, w] = planes_of(x);
      Tensor out = copy_values(x);
      for (std::size_t p = 0; p < count; ++p) {
        double* d = out.data.data() + p * h * w;
        double mean = 0.0;
        for (std::size_t i = 0; i < h * w; ++i) mean += d[i];
        mean /= static_cast<double>(h * w);
        for (std::size_t i = 0; i < h * w; ++i) d[i] = mean + parameter * (d[i] - mean);
      }
      return out;
    }
    case CorruptionKind::gaussian_blur:
      return blur(x, parameter);
    case CorruptionKind::pixelate:
      return pixelate(x, parameter);
  }
  throw Error("unknown corruption kind");
}

Tensor corrupt(const Tensor& x, const CorruptionSpec& spec, std::mt19937_64& rng) {
  if (spec.severity == 0) return copy_values(x);
  Tensor out = apply_corruption(x, spec.kind, corruption_parameter(spec.kind, spec.severity), rng);
  for (auto& v : out.data) v = std::clamp(v, -1.0, 1.0);
  return out;
}

}  // namespace pdda
