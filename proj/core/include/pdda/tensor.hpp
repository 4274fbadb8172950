#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pdda {

/// Raised for every contract violation inside the library (bad shapes,
/// out-of-range steps, malformed files). Messages name the offending value.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major array of doubles. Plain value type; differentiation
/// happens on an ad::Graph that copies tensors in as leaves.
struct Tensor {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::optional<std::vector<double>> grad;

  Tensor() = default;
  Tensor(Shape s, std::vector<double> values);

  static Tensor zeros(Shape s);
  static Tensor full(Shape s, double value);

  std::size_t size() const { return data.size(); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  std::span<const double> values() const { return data; }

  bool all_finite() const;
};

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);

}  // namespace pdda
