#include "pdda/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

namespace pdda {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

Tensor::Tensor(Shape s, std::vector<double> values)
    : shape(std::move(s)), data(std::move(values)) {
  for (auto d : shape) {
    if (d == 0) throw Error("tensor shape has a zero dimension: " + to_string(shape));
  }
  if (numel(shape) != data.size()) {
    throw Error("tensor shape " + to_string(shape) + " does not match " +
                std::to_string(data.size()) + " values");
  }
}

Tensor Tensor::zeros(Shape s) { return full(std::move(s), 0.0); }

Tensor Tensor::full(Shape s, double value) {
  const auto n = numel(s);
  return Tensor(std::move(s), std::vector<double>(n, value));
}

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace pdda
