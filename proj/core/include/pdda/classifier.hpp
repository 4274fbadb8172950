#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "pdda/autodiff.hpp"
#include "pdda/dataset.hpp"
#include "pdda/params.hpp"

namespace pdda {

using Probabilities = std::array<double, kNumClasses>;

/// conv3x3(1->16) relu pool2 conv3x3(16->32) relu pool2 dense(512->4).
class Classifier {
 public:
  explicit Classifier(std::uint64_t seed = 0);

  static Classifier from_arrays(NamedArrays arrays);

  const NamedArrays& parameters() const { return params_; }
  NamedArrays& parameters() { return params_; }

  /// x: (N,1,16,16) -> logits (N,4). `params` receives the bound leaves.
  ad::Var logits(ad::Graph& g, ad::Var x, bool trainable_params = false,
                 std::vector<ad::Var>* params = nullptr) const;

  /// Softmax output for one (1,16,16) image.
  Probabilities predict(const Tensor& image) const;
  /// Softmax outputs for a list of images, evaluated in batches.
  std::vector<Probabilities> predict(std::span<const Tensor> images) const;

 private:
  NamedArrays params_;
};

std::size_t argmax(const Probabilities& p);

/// 0.5 (p(x0) + p(x_test)).
Probabilities ensemble_predict(const Classifier& clf, const Tensor& x0, const Tensor& x_test);
Probabilities ensemble_average(const Probabilities& a, const Probabilities& b);

/// Mean cross-entropy of logits (N,4) against integer labels.
ad::Var cross_entropy(ad::Var logits, std::span<const int> labels);

double accuracy(const Classifier& clf, const Split& split);

struct ClassifierTrainOptions {
  std::size_t epochs = 20;
  double lr = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

struct ClassifierLog {
  std::vector<double> epoch_loss;
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;  // clean accuracy on the test split
};

/// Trains on the train split; aborts on a non-finite loss.
ClassifierLog train_classifier(Classifier& clf, const ToyDataset& data,
                               const ClassifierTrainOptions& opts);

}  // namespace pdda
