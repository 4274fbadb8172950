#include "pdda/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace pdda {

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  os << "step,t,f1_norm,f2_norm,phi,guided\n";
  const auto old = os.precision(17);
  for (std::size_t i = 0; i < traj.steps.size(); ++i) {
    const auto& s = traj.steps[i];
    os << i << ',' << s.t << ',' << s.f1_norm << ',' << s.f2_norm << ',';
    if (s.phi) os << *s.phi;
    os << ',' << (s.guided ? 1 : 0) << '\n';
  }
  os.precision(old);
}

Tensor conditional_score(const std::optional<Tensor>& f1, const std::optional<Tensor>& f2_projected,
                         const GuidanceConfig& cfg, const Shape& shape) {
  Tensor out = Tensor::zeros(shape);
  auto accumulate = [&](const std::optional<Tensor>& f, double w) {
    if (!f) return;
    if (f->shape != shape) throw Error("conditional_score: keeper shape mismatch");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= cfg.R * w * (*f)[i];
  };
  accumulate(f1, cfg.semantic_weight);
  accumulate(f2_projected, cfg.modification_weight);
  return out;
}

std::mt19937_64 noise_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

Tensor standard_normal(const Shape& shape, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor t = Tensor::zeros(shape);
  for (auto& v : t.data) v = normal(rng);
  return t;
}

namespace {

Tensor step_noise(std::uint64_t seed, std::size_t t, const Shape& shape) {
  if (t == 1) return Tensor::zeros(shape);
  auto rng = noise_stream(seed, t);
  return standard_normal(shape, rng);
}

Tensor predict_plain(const ScoreNetwork& model, const Tensor& x, std::size_t t) {
  ad::Graph g(false);
  return predict_eps(model, g, g.constant(x), t).eps_hat.value();
}

Tensor clamp_image(Tensor x) {
  for (auto& v : x.data) v = std::clamp(v, -1.0, 1.0);
  return x;
}

bool finite(const Tensor& t) { return t.all_finite(); }

}  // namespace

PddaSampler::PddaSampler(const ScoreNetwork& model, const NoiseSchedule& sched, GuidanceConfig cfg,
                         Tensor x_test, std::uint64_t seed)
    : model_(model), sched_(sched), cfg_(cfg), x_test_(std::move(x_test)), seed_(seed) {
  cfg_.validate();
  if (cfg_.keepers.semantic && guidance_start() > 0) {
    reference_ = encode_reference(model_, x_test_, cfg_, sched_.steps());
  }
}

Tensor PddaSampler::start() const {
  auto rng = noise_stream(seed_, 0);
  const Tensor eps = standard_normal(x_test_.shape, rng);
  return forward_diffuse(x_test_, sched_.steps(), eps, sched_);
}

Tensor PddaSampler::step(const Tensor& x, std::size_t t, TrajectoryStep& rec) const {
  rec.t = t;
  rec.x_t = x;
  const Tensor z = step_noise(seed_, t, x.shape);
  if (!guided_at(t)) {
    const Tensor eps = predict_plain(model_, x, t);
    rec.x_hat0 = estimate_x0(x, t, eps, sched_);
    return reverse_step(x, t, eps, sched_, z);
  }

  ad::Graph g;
  const ad::Var xt = g.variable(x);
  Tensor eps;
  ad::Var x_hat0;
  if (cfg_.grad_through_score) {
    const auto pred = predict_eps(model_, g, xt, t);
    eps = pred.eps_hat.value();
    x_hat0 = estimate_x0(xt, t, pred.eps_hat, sched_);
  } else {
    eps = predict_plain(model_, x, t);
    x_hat0 = estimate_x0(xt, t, g.constant(eps), sched_);
  }
  rec.x_hat0 = x_hat0.value();

  std::optional<Tensor> f1, f2;
  if (cfg_.keepers.semantic) f1 = semantic_keeper(g, xt, x_hat0, model_, *reference_, cfg_);
  if (cfg_.keepers.modification) f2 = modification_keeper(g, xt, x_hat0, x_test_);
  for (const auto* f : {&f1, &f2}) {
    if (*f && !finite(**f)) {
      throw Error("guidance gradient is not finite at step " + std::to_string(t));
    }
  }
  rec.f1_norm = f1 ? l2_norm(f1->data) : 0.0;
  rec.f2_norm = f2 ? l2_norm(f2->data) : 0.0;
  // A keeper that vanishes exactly has no direction to contribute this step.
  if (f1 && rec.f1_norm == 0.0) f1.reset();
  if (f2 && rec.f2_norm == 0.0) f2.reset();

  Tensor next = reverse_step(x, t, eps, sched_, z);
  rec.guided = true;
  if (!f1 && !f2) return next;

  const Projection p = project(f1, f2, cfg_.projection);
  if (f1 && f2) {
    // Projection disabled: compare the raw keeper gradients. Otherwise compare
    // the pair handed to the combination.
    rec.phi = cfg_.projection == ProjectionMode::off
                  ? gradient_magnitude_similarity(f1->data, f2->data)
                  : gradient_magnitude_similarity(p.g1.data, p.f2_projected.data);
  }
  std::optional<Tensor> d1, d2;
  if (f1) d1 = p.g1;
  if (f2) d2 = p.f2_projected;
  const Tensor cond = conditional_score(d1, d2, cfg_, x.shape);
  for (std::size_t i = 0; i < next.size(); ++i) next[i] += cond[i];
  return next;
}

Tensor PddaSampler::run(Tensor x, std::size_t from, std::size_t until, Trajectory* traj) const {
  if (from > sched_.steps() || until > from) throw Error("sampler: invalid step range");
  for (std::size_t t = from; t > until; --t) {
    TrajectoryStep rec;
    try {
      x = step(x, t, rec);
    } catch (const Error& e) {
      const std::string msg = e.what();
      if (msg.find("step") != std::string::npos) throw;
      throw Error("sampler step " + std::to_string(t) + ": " + msg);
    }
    if (!finite(x)) throw Error("sampler state is not finite after step " + std::to_string(t));
    if (traj) traj->steps.push_back(std::move(rec));
  }
  return x;
}

SampleResult sample_pdda(const Tensor& x_test, const ScoreNetwork& model,
                         const NoiseSchedule& sched, const GuidanceConfig& cfg, std::uint64_t seed) {
  PddaSampler sampler(model, sched, cfg, x_test, seed);
  SampleResult out;
  out.x0 = clamp_image(sampler.run(sampler.start(), sched.steps(), 0, &out.trajectory));
  return out;
}

Tensor sample_unconditional(const Tensor& x_test, const ScoreNetwork& model,
                            const NoiseSchedule& sched, std::uint64_t seed) {
  auto rng = noise_stream(seed, 0);
  const Tensor eps = standard_normal(x_test.shape, rng);
  Tensor x = forward_diffuse(x_test, sched.steps(), eps, sched);
  for (std::size_t t = sched.steps(); t >= 1; --t) {
    const Tensor eps_hat = predict_plain(model, x, t);
    x = reverse_step(x, t, eps_hat, sched, step_noise(seed, t, x.shape));
  }
  return clamp_image(std::move(x));
}

}  // namespace pdda
