#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <vector>

#include "pdda/guidance.hpp"
#include "pdda/guidance_config.hpp"
#include "pdda/schedule.hpp"
#include "pdda/score_model.hpp"

namespace pdda {

struct TrajectoryStep {
  std::size_t t = 0;
  Tensor x_t;
  Tensor x_hat0;
  double f1_norm = 0.0;
  double f2_norm = 0.0;
  std::optional<double> phi;
  bool guided = false;
};

/// One record per reverse step, in sampling order (t = T first).
struct Trajectory {
  std::vector<TrajectoryStep> steps;
};

/// Columns step,t,f1_norm,f2_norm,phi,guided; phi is empty outside the
/// guidance interval.
void write_trajectory_csv(std::ostream& os, const Trajectory& traj);

/// -R (w1 f1 + w2 f2'); absent keepers contribute zero. Both absent yields
/// zeros of `shape`.
Tensor conditional_score(const std::optional<Tensor>& f1, const std::optional<Tensor>& f2_projected,
                         const GuidanceConfig& cfg, const Shape& shape);

/// Independent normal stream for (seed, stream). Stream 0 is the forward
/// diffusion noise, stream t the reverse-step noise at step t.
std::mt19937_64 noise_stream(std::uint64_t seed, std::uint64_t stream);
Tensor standard_normal(const Shape& shape, std::mt19937_64& rng);

/// Guided reverse diffusion for one test image.
///
/// Forward-diffuses x_test to x_T, then runs T ancestral steps. For
/// t <= floor(s_fraction T) the two keeper gradients are taken w.r.t. x_t,
/// passed through the projection stage, and -R (g1 + f2') is added to x_{t-1}.
class PddaSampler {
 public:
  PddaSampler(const ScoreNetwork& model, const NoiseSchedule& sched, GuidanceConfig cfg,
              Tensor x_test, std::uint64_t seed);

  /// x_T drawn from the forward process.
  Tensor start() const;

  /// Runs steps t = from, from-1, ..., until+1 starting from x_from and
  /// returns x_until. Records into `traj` when given.
  Tensor run(Tensor x, std::size_t from, std::size_t until, Trajectory* traj = nullptr) const;

  std::size_t guidance_start() const { return cfg_.guidance_start(sched_.steps()); }
  bool guided_at(std::size_t t) const { return cfg_.keepers.any() && t <= guidance_start(); }
  const GuidanceConfig& config() const { return cfg_; }

 private:
  Tensor step(const Tensor& x, std::size_t t, TrajectoryStep& rec) const;

  const ScoreNetwork& model_;
  const NoiseSchedule& sched_;
  GuidanceConfig cfg_;
  Tensor x_test_;
  std::uint64_t seed_;
  std::optional<SemanticReference> reference_;
};

struct SampleResult {
  Tensor x0;
  Trajectory trajectory;
};

/// Full guided run; the result is clamped to [-1, 1].
SampleResult sample_pdda(const Tensor& x_test, const ScoreNetwork& model,
                         const NoiseSchedule& sched, const GuidanceConfig& cfg, std::uint64_t seed);

/// Plain ancestral sampler from the forward-diffused x_test with the same
/// noise streams and no guidance; clamped to [-1, 1].
Tensor sample_unconditional(const Tensor& x_test, const ScoreNetwork& model,
                            const NoiseSchedule& sched, std::uint64_t seed);

}  // namespace pdda
