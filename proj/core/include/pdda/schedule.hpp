#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "pdda/autodiff.hpp"
#include "pdda/tensor.hpp"

namespace pdda {

enum class ScheduleKind { cosine, linear };

ScheduleKind parse_schedule_kind(const std::string& s);
const char* to_string(ScheduleKind kind);

/// Per-step diffusion constants for steps t = 1..T (all accessors are 1-based).
///
///   alpha_t     = 1 - beta_t
///   alpha_bar_t = prod_{s<=t} alpha_s
///   sigma_t     = sqrt(beta_t (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t)),  sigma_1 = 0
class NoiseSchedule {
 public:
  /// Builds a schedule from explicit betas, each in (0, 1).
  static NoiseSchedule from_betas(std::vector<double> betas);

  std::size_t steps() const { return beta_.size(); }
  double beta(std::size_t t) const { return beta_[index(t)]; }
  double alpha(std::size_t t) const { return 1.0 - beta_[index(t)]; }
  double alpha_bar(std::size_t t) const { return alpha_bar_[index(t)]; }
  double posterior_sigma(std::size_t t) const { return sigma_[index(t)]; }

  /// Throws unless 1 <= t <= T.
  std::size_t index(std::size_t t) const;

 private:
  std::vector<double> beta_;
  std::vector<double> alpha_bar_;
  std::vector<double> sigma_;
};

/// Cosine: alpha_bar_t = f(t)/f(0), f(t) = cos^2(((t/T) + 0.008)/1.008 * pi/2), betas
/// clipped to 0.999. Linear: betas spaced evenly over [0.1/T, 20/T], clipped to 0.999.
NoiseSchedule make_schedule(std::size_t T, ScheduleKind kind);

/// sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps
Tensor forward_diffuse(const Tensor& x0, std::size_t t, const Tensor& eps,
                       const NoiseSchedule& sched);

/// One-step clean estimate (x_t - sqrt(1 - alpha_bar_t) eps_hat) / sqrt(alpha_bar_t).
Tensor estimate_x0(const Tensor& x_t, std::size_t t, const Tensor& eps_hat,
                   const NoiseSchedule& sched);
ad::Var estimate_x0(ad::Var x_t, std::size_t t, ad::Var eps_hat, const NoiseSchedule& sched);

/// Ancestral step (x_t - beta_t / sqrt(1 - alpha_bar_t) eps_hat) / sqrt(alpha_t) + sigma_t z.
Tensor reverse_step(const Tensor& x_t, std::size_t t, const Tensor& eps_hat,
                    const NoiseSchedule& sched, const Tensor& z);

}  // namespace pdda
