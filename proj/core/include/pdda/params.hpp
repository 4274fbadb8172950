#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "pdda/autodiff.hpp"
#include "pdda/tensor.hpp"

namespace pdda {

/// Ordered name -> array collection. Model parameters and checkpoint payloads
/// share this representation.
using NamedArrays = std::vector<std::pair<std::string, Tensor>>;

const Tensor& find_array(const NamedArrays& arrays, const std::string& name);

/// Kaiming-uniform fan-in initialisation: U(-b, b) with b = sqrt(6 / fan_in).
Tensor kaiming_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng);

/// Copies every array onto `g` as a leaf, differentiable when `trainable`.
std::vector<ad::Var> bind(ad::Graph& g, const NamedArrays& params, bool trainable);

/// Checks that `loaded` carries exactly the names and shapes of `reference`.
void check_layout(const NamedArrays& reference, const NamedArrays& loaded, const std::string& what);

/// Heavy-ball SGD: v <- momentum * v + grad; p <- p - lr * v.
class SgdMomentum {
 public:
  SgdMomentum(double lr, double momentum) : lr_(lr), momentum_(momentum) {}

  void step(NamedArrays& params, const std::vector<std::vector<double>>& grads);

 private:
  double lr_;
  double momentum_;
  std::vector<std::vector<double>> velocity_;
};

}  // namespace pdda
