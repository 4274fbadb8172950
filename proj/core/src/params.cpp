#include "pdda/params.hpp"

#include <cmath>

namespace pdda {

const Tensor& find_array(const NamedArrays& arrays, const std::string& name) {
  for (const auto& [n, t] : arrays) {
    if (n == name) return t;
  }
  throw Error("no array named '" + name + "'");
}

Tensor kaiming_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data) v = dist(rng);
  return t;
}

std::vector<ad::Var> bind(ad::Graph& g, const NamedArrays& params, bool trainable) {
  std::vector<ad::Var> vars;
  vars.reserve(params.size());
  for (const auto& [name, t] : params) {
    vars.push_back(trainable ? g.variable(t) : g.constant(t));
  }
  return vars;
}

void check_layout(const NamedArrays& reference, const NamedArrays& loaded, const std::string& what) {
  if (reference.size() != loaded.size()) {
    throw Error(what + ": expected " + std::to_string(reference.size()) + " arrays, got " +
                std::to_string(loaded.size()));
  }
  for (std::size_t i = 0; i < reference.size(); ++i) {
    if (reference[i].first != loaded[i].first) {
      throw Error(what + ": array " + std::to_string(i) + " is '" + loaded[i].first +
                  "', expected '" + reference[i].first + "'");
    }
    if (reference[i].second.shape != loaded[i].second.shape) {
      throw Error(what + ": array '" + loaded[i].first + "' has shape " +
                  to_string(loaded[i].second.shape) + ", expected " +
                  to_string(reference[i].second.shape));
    }
  }
}

void SgdMomentum::step(NamedArrays& params, const std::vector<std::vector<double>>& grads) {
  if (grads.size() != params.size()) throw Error("sgd: gradient count mismatch");
  if (velocity_.empty()) {
    velocity_.reserve(params.size());
    for (const auto& p : params) velocity_.emplace_back(p.second.size(), 0.0);
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k].second.data;
    auto& v = velocity_[k];
    const auto& g = grads[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = momentum_ * v[i] + g[i];
      p[i] -= lr_ * v[i];
    }
  }
}

}  // namespace pdda
