#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pdda/params.hpp"
#include "pdda/tensor.hpp"

namespace pdda {

/// Shape classes of the toy dataset, in label order.
enum class ShapeClass : int { disk = 0, hollow_square = 1, cross = 2, diagonal_stripes = 3 };

inline constexpr std::size_t kNumClasses = 4;
inline constexpr std::size_t kImageSide = 16;

const char* to_string(ShapeClass c);

/// Everything needed to re-render one toy image.
struct ShapeParams {
  ShapeClass shape = ShapeClass::disk;
  int dx = 0;  // translation in pixels, within [-2, 2]
  int dy = 0;
  double size = 0.0;       // disk radius, square half-side, cross arm half-length, stripe period
  double thickness = 0.0;  // square border, cross bar and stripe widths
  double intensity = 1.0;  // foreground level in [0.7, 1]
};

/// Renders a (1,16,16) image with background -1. Pixel (r,c) is sampled at
/// its centre, measured from the image centre (7.5, 7.5) shifted by (dy, dx).
Tensor render_shape(const ShapeParams& p);

enum class SplitKind { train, val, test };

const char* to_string(SplitKind s);

struct Split {
  SplitKind kind = SplitKind::train;
  std::vector<Tensor> images;  // (1,16,16) each
  std::vector<int> labels;
  std::vector<ShapeParams> params;

  std::size_t size() const { return images.size(); }
  std::array<std::size_t, kNumClasses> label_histogram() const;
};

struct DatasetSizes {
  std::size_t train = 2048;
  std::size_t val = 256;
  std::size_t test = 512;
};

struct ToyDataset {
  std::uint64_t seed = 0;
  Split train;
  Split val;
  Split test;

  const Split& split(SplitKind kind) const;
};

/// Label-balanced (every class count within one of the others) and fully
/// determined by `seed`.
ToyDataset generate_dataset(std::uint64_t seed, const DatasetSizes& sizes = {});

/// Dataset <-> named arrays ("<split>.images" (N,1,16,16), "<split>.labels" (N),
/// "seed" (1)), so datasets share the checkpoint file format.
NamedArrays dataset_to_arrays(const ToyDataset& ds);
ToyDataset dataset_from_arrays(const NamedArrays& arrays);

}  // namespace pdda
