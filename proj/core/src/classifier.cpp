#include "pdda/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "pdda/score_model.hpp"

namespace pdda {

namespace {

constexpr std::size_t kBatch = 64;

NamedArrays initial_parameters(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  NamedArrays p;
  p.emplace_back("conv1.w", kaiming_uniform({16, 1, 3, 3}, 9, rng));
  p.emplace_back("conv1.b", Tensor::zeros({16}));
  p.emplace_back("conv2.w", kaiming_uniform({32, 16, 3, 3}, 16 * 9, rng));
  p.emplace_back("conv2.b", Tensor::zeros({32}));
  p.emplace_back("dense.w", kaiming_uniform({512, kNumClasses}, 512, rng));
  p.emplace_back("dense.b", Tensor::zeros({kNumClasses}));
  return p;
}

Probabilities row(std::span<const double> probs, std::size_t i) {
  Probabilities p{};
  std::copy_n(probs.begin() + i * kNumClasses, kNumClasses, p.begin());
  return p;
}

}  // namespace

Classifier::Classifier(std::uint64_t seed) : params_(initial_parameters(seed)) {}

Classifier Classifier::from_arrays(NamedArrays arrays) {
  Classifier c;
  check_layout(c.params_, arrays, "classifier");
  c.params_ = std::move(arrays);
  return c;
}

ad::Var Classifier::logits(ad::Graph& g, ad::Var x, bool trainable_params,
                           std::vector<ad::Var>* params) const {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != 1 || s[2] != kImageSide || s[3] != kImageSide) {
    throw Error("classifier: expected (N,1,16,16) input, got " + to_string(s));
  }
  const auto p = bind(g, params_, trainable_params);
  if (params) *params = p;
  ad::Var h = ad::avg_pool2d(ad::relu(ad::conv2d(x, p[0], p[1])), 2);
  h = ad::avg_pool2d(ad::relu(ad::conv2d(h, p[2], p[3])), 2);
  h = ad::reshape(h, {s[0], 512});
  return ad::add(ad::matmul(h, p[4]), p[5]);
}

std::vector<Probabilities> Classifier::predict(std::span<const Tensor> images) const {
  std::vector<Probabilities> out;
  out.reserve(images.size());
  for (std::size_t start = 0; start < images.size(); start += kBatch) {
    const std::size_t end = std::min(images.size(), start + kBatch);
    ad::Graph g(false);
    const ad::Var probs =
        ad::softmax(logits(g, g.constant(stack_images(images.subspan(start, end - start)))));
    for (std::size_t i = 0; i < end - start; ++i) out.push_back(row(probs.data(), i));
  }
  return out;
}

Probabilities Classifier::predict(const Tensor& image) const {
  return predict(std::span<const Tensor>(&image, 1)).front();
}

std::size_t argmax(const Probabilities& p) {
  return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

Probabilities ensemble_average(const Probabilities& a, const Probabilities& b) {
  Probabilities out{};
  for (std::size_t k = 0; k < kNumClasses; ++k) out[k] = 0.5 * (a[k] + b[k]);
  return out;
}

Probabilities ensemble_predict(const Classifier& clf, const Tensor& x0, const Tensor& x_test) {
  const Tensor pair[] = {x0, x_test};
  const auto p = clf.predict(pair);
  return ensemble_average(p[0], p[1]);
}

ad::Var cross_entropy(ad::Var logits, std::span<const int> labels) {
  const Shape& s = logits.shape();
  if (s.size() != 2 || s[0] != labels.size()) {
    throw Error("cross_entropy: logits " + to_string(s) + " vs " +
                std::to_string(labels.size()) + " labels");
  }
  std::vector<std::size_t> picks(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= s[1]) {
      throw Error("cross_entropy: label " + std::to_string(labels[i]) + " out of range");
    }
    picks[i] = i * s[1] + static_cast<std::size_t>(labels[i]);
  }
  const ad::Var picked = ad::gather(ad::log_softmax(logits), std::move(picks), {labels.size()});
  return ad::neg(ad::mean(picked));
}

double accuracy(const Classifier& clf, const Split& split) {
  if (split.size() == 0) throw Error("accuracy: empty split");
  const auto probs = clf.predict(split.images);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    correct += argmax(probs[i]) == static_cast<std::size_t>(split.labels[i]);
  }
  return static_cast<double>(correct) / static_cast<double>(split.size());
}

ClassifierLog train_classifier(Classifier& clf, const ToyDataset& data,
                               const ClassifierTrainOptions& opts) {
  const Split& train = data.train;
  if (train.size() == 0) throw Error("train_classifier: empty train split");
  if (opts.batch_size == 0) throw Error("train_classifier: batch size must be positive");
  std::mt19937_64 rng(opts.seed);
  SgdMomentum opt(opts.lr, opts.momentum);
  ClassifierLog log;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
      const std::size_t end = std::min(order.size(), start + opts.batch_size);
      std::vector<Tensor> images;
      std::vector<int> labels;
      for (std::size_t i = start; i < end; ++i) {
        images.push_back(train.images[order[i]]);
        labels.push_back(train.labels[order[i]]);
      }
      const auto where = [&] {
        return "epoch " + std::to_string(epoch + 1) + ", batch " + std::to_string(batches + 1);
      };
      ad::Graph g;
      std::vector<ad::Var> params;
      ad::Var loss;
      try {
        loss = cross_entropy(clf.logits(g, g.constant(stack_images(images)), true, &params), labels);
      } catch (const Error& e) {
        throw Error("classifier training diverged at " + where() + ": " + e.what());
      }
      const double value = loss.item();
      if (!std::isfinite(value)) throw Error("classifier training diverged at " + where());
      g.backward(loss);
      std::vector<std::vector<double>> grads;
      grads.reserve(params.size());
      for (auto p : params) grads.push_back(g.grad(p));
      opt.step(clf.parameters(), grads);
      total += value;
      ++batches;
    }
    log.epoch_loss.push_back(total / static_cast<double>(batches));
  }
  log.val_accuracy = accuracy(clf, data.val);
  log.test_accuracy = accuracy(clf, data.test);
  return log;
}

}  // namespace pdda
