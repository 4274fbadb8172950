#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "pdda/autodiff.hpp"
#include "pdda/params.hpp"
#include "pdda/schedule.hpp"

namespace pdda {

/// One intermediate feature map of the UNet forward pass.
struct FeatureTap {
  std::size_t layer = 0;  // 1-based forward-pass position
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  ad::Var features;  // (C, H, W)
};

using FeatureTaps = std::vector<FeatureTap>;

/// Small UNet noise predictor for (1,16,16) images.
///
///   enc1  16 @ 16x16 -> pool -> enc2 32 @ 8x8 -> pool -> mid 32 @ 4x4
///   -> up + enc2 -> dec1 32 @ 8x8 -> 1x1 conv, up + enc1 -> dec2 16 @ 16x16 -> head
///
/// Every block is conv3x3 + time projection + silu. The five block outputs
/// are the feature taps. The head is zero-initialised.
class ScoreNetwork {
 public:
  static constexpr std::size_t kImageSize = 16;
  static constexpr std::size_t kTimeEmbedDim = 32;
  static constexpr std::size_t kNumTaps = 5;

  explicit ScoreNetwork(std::uint64_t seed = 0);

  /// Replaces the parameters; names and shapes must match the architecture.
  static ScoreNetwork from_arrays(NamedArrays arrays);

  const NamedArrays& parameters() const { return params_; }
  NamedArrays& parameters() { return params_; }

  struct Output {
    ad::Var eps;                  // (N,1,16,16), invalid when the head is skipped
    FeatureTaps taps;             // only populated for single-image passes
    std::vector<ad::Var> params;  // leaves bound for this pass
  };

  /// x: (N,1,16,16); steps: one diffusion step per batch item.
  Output forward(ad::Graph& g, ad::Var x, std::span<const std::size_t> steps,
                 bool trainable_params = false, bool with_head = true) const;

 private:
  NamedArrays params_;
};

/// 32-dim sinusoidal embedding of an integer step: [sin(t w_i), cos(t w_i)].
std::vector<double> timestep_embedding(std::size_t t, std::size_t dim);

struct EpsPrediction {
  ad::Var eps_hat;  // (1,16,16)
  FeatureTaps taps;
};

/// Single-image noise prediction; differentiable w.r.t. x_t.
EpsPrediction predict_eps(const ScoreNetwork& model, ad::Graph& g, ad::Var x_t, std::size_t t);

/// Feature taps only (the output head is skipped).
FeatureTaps extract_features(const ScoreNetwork& model, ad::Graph& g, ad::Var x, std::size_t t);

/// Noisy inputs of one score-matching batch. Per item, in order: the step,
/// then its eps values; x_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps.
struct DsmSample {
  std::vector<std::size_t> steps;
  Tensor eps;
  Tensor x_t;
};

DsmSample draw_dsm_sample(const Tensor& x0_batch, const NoiseSchedule& sched, std::mt19937_64& rng);

/// mean((eps_hat - eps)^2)
ad::Var dsm_objective(ad::Var eps_hat, const Tensor& eps);

/// Denoising score-matching loss on a batch of clean images (B,1,16,16):
/// t ~ U{1..T}, eps ~ N(0,I) per item, mean of (eps_hat - eps)^2. `params`
/// receives the bound parameter leaves.
ad::Var dsm_loss(const ScoreNetwork& model, ad::Graph& g, const Tensor& x0_batch,
                 const NoiseSchedule& sched, std::mt19937_64& rng,
                 std::vector<ad::Var>* params = nullptr);

struct TrainingLog {
  std::vector<double> epoch_loss;
};

struct TrainOptions {
  std::size_t epochs = 30;
  double lr = 1e-3;
  double momentum = 0.9;
  std::size_t batch_size = 4;
  std::uint64_t seed = 0;
};

/// SGD with momentum over shuffled minibatches; aborts on a non-finite loss.
TrainingLog train(ScoreNetwork& model, const std::vector<Tensor>& images,
                  const NoiseSchedule& sched, const TrainOptions& opts);

/// Stacks (1,16,16) images into a (B,1,16,16) batch.
Tensor stack_images(std::span<const Tensor> images);

}  // namespace pdda
