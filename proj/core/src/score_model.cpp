#include "pdda/score_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pdda {

namespace {

struct BlockSpec {
  const char* name;
  std::size_t in;
  std::size_t out;
};

// Feature blocks in forward order; each one is a tap.
constexpr BlockSpec kBlocks[] = {
    {"enc1", 1, 16}, {"enc2", 16, 32}, {"mid", 32, 32}, {"dec1", 32, 32}, {"dec2", 16, 16},
};

// Parameter slots in `params_` order.
enum Slot : std::size_t { kBlockSlots = 4, kUpW = 5 * kBlockSlots, kUpB, kHeadW, kHeadB, kNumSlots };

}  // namespace

ScoreNetwork::ScoreNetwork(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (const auto& b : kBlocks) {
    const std::string n = b.name;
    params_.emplace_back(n + ".conv.w", kaiming_uniform({b.out, b.in, 3, 3}, b.in * 9, rng));
    params_.emplace_back(n + ".conv.b", Tensor::zeros({b.out}));
    params_.emplace_back(n + ".time.w", kaiming_uniform({kTimeEmbedDim, b.out}, kTimeEmbedDim, rng));
    params_.emplace_back(n + ".time.b", Tensor::zeros({b.out}));
  }
  params_.emplace_back("up2.w", kaiming_uniform({16, 32, 1, 1}, 32, rng));
  params_.emplace_back("up2.b", Tensor::zeros({16}));
  params_.emplace_back("head.w", Tensor::zeros({1, 16, 3, 3}));
  params_.emplace_back("head.b", Tensor::zeros({1}));
}

ScoreNetwork ScoreNetwork::from_arrays(NamedArrays arrays) {
  ScoreNetwork net;
  check_layout(net.params_, arrays, "score network");
  net.params_ = std::move(arrays);
  return net;
}

std::vector<double> timestep_embedding(std::size_t t, std::size_t dim) {
  const std::size_t half = dim / 2;
  std::vector<double> emb(dim, 0.0);
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    emb[i] = std::sin(static_cast<double>(t) * freq);
    emb[half + i] = std::cos(static_cast<double>(t) * freq);
  }
  return emb;
}

ScoreNetwork::Output ScoreNetwork::forward(ad::Graph& g, ad::Var x,
                                           std::span<const std::size_t> steps,
                                           bool trainable_params, bool with_head) const {
  const auto& s = x.shape();
  if (s.size() != 4 || s[1] != 1 || s[2] != kImageSize || s[3] != kImageSize) {
    throw Error("score network expects (N,1,16,16), got " + to_string(s));
  }
  const std::size_t N = s[0];
  if (steps.size() != N) throw Error("score network: one step per batch item required");

  Output out;
  out.params = bind(g, params_, trainable_params);
  const auto& P = out.params;

  std::vector<double> emb;
  emb.reserve(N * kTimeEmbedDim);
  for (auto t : steps) {
    const auto e = timestep_embedding(t, kTimeEmbedDim);
    emb.insert(emb.end(), e.begin(), e.end());
  }
  const ad::Var temb = g.constant(Tensor({N, kTimeEmbedDim}, std::move(emb)));

  std::size_t layer = 0;
  auto block = [&](ad::Var h, std::size_t b) {
    const std::size_t base = b * kBlockSlots;
    const std::size_t C = kBlocks[b].out;
    ad::Var c = ad::conv2d(h, P[base], P[base + 1]);
    ad::Var tp = ad::add(ad::matmul(temb, P[base + 2]), P[base + 3]);
    c = ad::add(c, ad::reshape(tp, {N, C, 1, 1}));
    ad::Var y = ad::silu(c);
    ++layer;
    if (N == 1) {
      const auto& ys = y.shape();
      out.taps.push_back({layer, ys[1], ys[2], ys[3], ad::reshape(y, {ys[1], ys[2], ys[3]})});
    }
    return y;
  };

  const ad::Var e1 = block(x, 0);
  const ad::Var e2 = block(ad::avg_pool2d(e1, 2), 1);
  const ad::Var m = block(ad::avg_pool2d(e2, 2), 2);
  const ad::Var d1 = block(ad::add(ad::upsample2d(m, 2), e2), 3);
  const ad::Var u2 = ad::conv2d(d1, P[kUpW], P[kUpB]);
  const ad::Var d2 = block(ad::add(ad::upsample2d(u2, 2), e1), 4);
  if (with_head) out.eps = ad::conv2d(d2, P[kHeadW], P[kHeadB]);
  return out;
}

EpsPrediction predict_eps(const ScoreNetwork& model, ad::Graph& g, ad::Var x_t, std::size_t t) {
  const Shape expected{1, ScoreNetwork::kImageSize, ScoreNetwork::kImageSize};
  if (x_t.shape() != expected) {
    throw Error("predict_eps expects (1,16,16), got " + to_string(x_t.shape()));
  }
  if (t < 1) throw Error("predict_eps: step must be >= 1");
  const std::size_t steps[] = {t};
  auto out = model.forward(g, ad::reshape(x_t, {1, 1, 16, 16}), steps);
  return {ad::reshape(out.eps, expected), std::move(out.taps)};
}

FeatureTaps extract_features(const ScoreNetwork& model, ad::Graph& g, ad::Var x, std::size_t t) {
  const Shape expected{1, ScoreNetwork::kImageSize, ScoreNetwork::kImageSize};
  if (x.shape() != expected) {
    throw Error("extract_features expects (1,16,16), got " + to_string(x.shape()));
  }
  const std::size_t steps[] = {t};
  return model.forward(g, ad::reshape(x, {1, 1, 16, 16}), steps, false, false).taps;
}

Tensor stack_images(std::span<const Tensor> images) {
  if (images.empty()) throw Error("stack_images: empty batch");
  std::vector<double> data;
  data.reserve(images.size() * images[0].size());
  for (const auto& im : images) {
    if (im.shape != images[0].shape) throw Error("stack_images: mixed shapes");
    data.insert(data.end(), im.data.begin(), im.data.end());
  }
  Shape s{images.size()};
  s.insert(s.end(), images[0].shape.begin(), images[0].shape.end());
  return Tensor(std::move(s), std::move(data));
}

DsmSample draw_dsm_sample(const Tensor& x0_batch, const NoiseSchedule& sched, std::mt19937_64& rng) {
  if (x0_batch.shape.size() != 4 || x0_batch.shape[0] == 0) {
    throw Error("dsm_loss: expected a non-empty (B,1,16,16) batch");
  }
  const std::size_t B = x0_batch.shape[0];
  const std::size_t per = x0_batch.size() / B;
  std::uniform_int_distribution<std::size_t> step_dist(1, sched.steps());
  std::normal_distribution<double> normal(0.0, 1.0);

  DsmSample s{std::vector<std::size_t>(B), Tensor::zeros(x0_batch.shape), Tensor::zeros(x0_batch.shape)};
  for (std::size_t b = 0; b < B; ++b) {
    s.steps[b] = step_dist(rng);
    const double ab = sched.alpha_bar(s.steps[b]);
    const double a = std::sqrt(ab), sd = std::sqrt(1.0 - ab);
    for (std::size_t i = b * per; i < (b + 1) * per; ++i) {
      s.eps[i] = normal(rng);
      s.x_t[i] = a * x0_batch[i] + sd * s.eps[i];
    }
  }
  return s;
}

ad::Var dsm_objective(ad::Var eps_hat, const Tensor& eps) {
  const ad::Var diff = ad::sub(eps_hat, eps_hat.graph()->constant(eps));
  return ad::mean(ad::mul(diff, diff));
}

ad::Var dsm_loss(const ScoreNetwork& model, ad::Graph& g, const Tensor& x0_batch,
                 const NoiseSchedule& sched, std::mt19937_64& rng, std::vector<ad::Var>* params) {
  DsmSample s = draw_dsm_sample(x0_batch, sched, rng);
  auto out = model.forward(g, g.constant(std::move(s.x_t)), s.steps, true);
  if (params) *params = out.params;
  return dsm_objective(out.eps, s.eps);
}

TrainingLog train(ScoreNetwork& model, const std::vector<Tensor>& images,
                  const NoiseSchedule& sched, const TrainOptions& opts) {
  if (images.empty()) throw Error("train: empty dataset");
  if (opts.batch_size == 0) throw Error("train: batch size must be positive");
  std::mt19937_64 rng(opts.seed);
  SgdMomentum opt(opts.lr, opts.momentum);
  TrainingLog log;
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
      const std::size_t end = std::min(order.size(), start + opts.batch_size);
      std::vector<Tensor> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(images[order[i]]);
      const auto where = [&] {
        return "epoch " + std::to_string(epoch + 1) + ", batch " + std::to_string(batches + 1);
      };
      ad::Graph g;
      std::vector<ad::Var> params;
      ad::Var loss;
      try {
        loss = dsm_loss(model, g, stack_images(batch), sched, rng, &params);
      } catch (const Error& e) {
        throw Error("score training diverged at " + where() + ": " + e.what());
      }
      const double value = loss.item();
      if (!std::isfinite(value)) throw Error("score training diverged at " + where());
      g.backward(loss);
      std::vector<std::vector<double>> grads;
      grads.reserve(params.size());
      for (auto p : params) grads.push_back(g.grad(p));
      opt.step(model.parameters(), grads);
      total += value;
      ++batches;
    }
    log.epoch_loss.push_back(total / static_cast<double>(batches));
  }
  return log;
}

}  // namespace pdda
