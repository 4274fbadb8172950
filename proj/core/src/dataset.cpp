#include "pdda/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace pdda {

const char* to_string(ShapeClass c) {
  switch (c) {
    case ShapeClass::disk: return "disk";
    case ShapeClass::hollow_square: return "hollow_square";
    case ShapeClass::cross: return "cross";
    case ShapeClass::diagonal_stripes: return "diagonal_stripes";
  }
  return "?";
}

const char* to_string(SplitKind s) {
  switch (s) {
    case SplitKind::train: return "train";
    case SplitKind::val: return "val";
    case SplitKind::test: return "test";
  }
  return "?";
}

namespace {

bool covers(const ShapeParams& p, double u, double v) {
  const double au = std::abs(u), av = std::abs(v);
  switch (p.shape) {
    case ShapeClass::disk:
      return u * u + v * v <= p.size * p.size;
    case ShapeClass::hollow_square: {
      const double d = std::max(au, av);
      return d <= p.size && d > p.size - p.thickness;
    }
    case ShapeClass::cross: {
      const double half = p.thickness / 2.0;
      return (au <= half && av <= p.size) || (av <= half && au <= p.size);
    }
    case ShapeClass::diagonal_stripes: {
      const double phase = std::fmod(u + v + 64.0 * p.size, p.size);
      return phase < p.thickness;
    }
  }
  return false;
}

ShapeParams draw_params(ShapeClass shape, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> shift(-2, 2);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ShapeParams p;
  p.shape = shape;
  p.dx = shift(rng);
  p.dy = shift(rng);
  p.intensity = 0.7 + 0.3 * unit(rng);
  switch (shape) {
    case ShapeClass::disk:
      p.size = 3.5 + 2.0 * unit(rng);
      break;
    case ShapeClass::hollow_square:
      p.size = 4.0 + 1.5 * unit(rng);
      p.thickness = 1.0 + unit(rng);
      break;
    case ShapeClass::cross:
      p.size = 4.0 + 1.5 * unit(rng);
      p.thickness = unit(rng) < 0.5 ? 2.0 : 3.0;
      break;
    case ShapeClass::diagonal_stripes:
      p.size = unit(rng) < 0.5 ? 4.0 : 6.0;
      p.thickness = p.size / 2.0;
      break;
  }
  return p;
}

Split make_split(SplitKind kind, std::size_t n, std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(kind)};
  std::mt19937_64 rng(seq);
  Split s;
  s.kind = kind;
  s.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) s.labels[i] = static_cast<int>(i % kNumClasses);
  std::shuffle(s.labels.begin(), s.labels.end(), rng);
  for (int label : s.labels) {
    s.params.push_back(draw_params(static_cast<ShapeClass>(label), rng));
    s.images.push_back(render_shape(s.params.back()));
  }
  return s;
}

}  // namespace

Tensor render_shape(const ShapeParams& p) {
  Tensor img = Tensor::full({1, kImageSide, kImageSide}, -1.0);
  const double centre = (kImageSide - 1) / 2.0;
  for (std::size_t r = 0; r < kImageSide; ++r) {
    for (std::size_t c = 0; c < kImageSide; ++c) {
      const double v = static_cast<double>(r) - centre - p.dy;
      const double u = static_cast<double>(c) - centre - p.dx;
      if (covers(p, u, v)) img[r * kImageSide + c] = p.intensity;
    }
  }
  return img;
}

std::array<std::size_t, kNumClasses> Split::label_histogram() const {
  std::array<std::size_t, kNumClasses> h{};
  for (int l : labels) ++h.at(static_cast<std::size_t>(l));
  return h;
}

const Split& ToyDataset::split(SplitKind kind) const {
  switch (kind) {
    case SplitKind::train: return train;
    case SplitKind::val: return val;
    case SplitKind::test: return test;
  }
  throw Error("unknown split");
}

ToyDataset generate_dataset(std::uint64_t seed, const DatasetSizes& sizes) {
  if (sizes.train == 0 || sizes.val == 0 || sizes.test == 0) {
    throw Error("generate_dataset: split sizes must be positive");
  }
  ToyDataset ds;
  ds.seed = seed;
  ds.train = make_split(SplitKind::train, sizes.train, seed);
  ds.val = make_split(SplitKind::val, sizes.val, seed);
  ds.test = make_split(SplitKind::test, sizes.test, seed);
  return ds;
}

NamedArrays dataset_to_arrays(const ToyDataset& ds) {
  NamedArrays out;
  out.emplace_back("seed", Tensor({2}, {static_cast<double>(ds.seed >> 32),
                                        static_cast<double>(ds.seed & 0xffffffffu)}));
  for (const Split* s : {&ds.train, &ds.val, &ds.test}) {
    const std::size_t n = s->size();
    const std::size_t per = kImageSide * kImageSide;
    Tensor images = Tensor::zeros({n, 1, kImageSide, kImageSide});
    Tensor labels = Tensor::zeros({n});
    for (std::size_t i = 0; i < n; ++i) {
      std::copy(s->images[i].data.begin(), s->images[i].data.end(), images.data.begin() + i * per);
      labels[i] = s->labels[i];
    }
    out.emplace_back(std::string(to_string(s->kind)) + ".images", std::move(images));
    out.emplace_back(std::string(to_string(s->kind)) + ".labels", std::move(labels));
  }
  return out;
}

ToyDataset dataset_from_arrays(const NamedArrays& arrays) {
  ToyDataset ds;
  const Tensor& seed = find_array(arrays, "seed");
  if (seed.size() != 2) throw Error("dataset: 'seed' must hold two words");
  ds.seed = (static_cast<std::uint64_t>(seed[0]) << 32) | static_cast<std::uint64_t>(seed[1]);
  for (SplitKind kind : {SplitKind::train, SplitKind::val, SplitKind::test}) {
    const std::string name = to_string(kind);
    const Tensor& images = find_array(arrays, name + ".images");
    const Tensor& labels = find_array(arrays, name + ".labels");
    const Shape want{labels.size(), 1, kImageSide, kImageSide};
    if (labels.shape.size() != 1 || images.shape != want) {
      throw Error("dataset: split '" + name + "' has shape " + to_string(images.shape) +
                  " for " + std::to_string(labels.size()) + " labels");
    }
    Split& s = kind == SplitKind::train ? ds.train : kind == SplitKind::val ? ds.val : ds.test;
    s.kind = kind;
    const std::size_t per = kImageSide * kImageSide;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const double l = labels[i];
      if (l != std::floor(l) || l < 0 || l >= static_cast<double>(kNumClasses)) {
        throw Error("dataset: label " + std::to_string(l) + " out of range in split '" + name + "'");
      }
      s.labels.push_back(static_cast<int>(l));
      s.images.emplace_back(Shape{1, kImageSide, kImageSide},
                            std::vector<double>(images.data.begin() + i * per,
                                                images.data.begin() + (i + 1) * per));
    }
  }
  return ds;
}

}  // namespace pdda
