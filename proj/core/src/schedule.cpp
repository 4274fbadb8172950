#include "pdda/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace pdda {

ScheduleKind parse_schedule_kind(const std::string& s) {
  if (s == "cosine") return ScheduleKind::cosine;
  if (s == "linear") return ScheduleKind::linear;
  throw Error("unknown schedule kind '" + s + "'");
}

const char* to_string(ScheduleKind kind) {
  return kind == ScheduleKind::cosine ? "cosine" : "linear";
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  if (betas.size() < 2) throw Error("noise schedule needs T >= 2 steps");
  NoiseSchedule s;
  s.beta_ = std::move(betas);
  s.alpha_bar_.resize(s.beta_.size());
  s.sigma_.resize(s.beta_.size());
  double prev = 1.0;
  for (std::size_t i = 0; i < s.beta_.size(); ++i) {
    const double b = s.beta_[i];
    if (!(b > 0.0 && b < 1.0)) throw Error("beta at step " + std::to_string(i + 1) + " not in (0,1)");
    const double ab = prev * (1.0 - b);
    s.alpha_bar_[i] = ab;
    s.sigma_[i] = i == 0 ? 0.0 : std::sqrt(b * (1.0 - prev) / (1.0 - ab));
    prev = ab;
  }
  return s;
}

std::size_t NoiseSchedule::index(std::size_t t) const {
  if (t < 1 || t > beta_.size()) {
    throw Error("step " + std::to_string(t) + " outside [1, " + std::to_string(beta_.size()) + "]");
  }
  return t - 1;
}

NoiseSchedule make_schedule(std::size_t T, ScheduleKind kind) {
  if (T < 2) throw Error("noise schedule needs T >= 2, got " + std::to_string(T));
  std::vector<double> betas(T);
  const double Td = static_cast<double>(T);
  if (kind == ScheduleKind::cosine) {
    constexpr double s = 0.008;
    auto f = [&](double t) {
      const double c = std::cos((t / Td + s) / (1.0 + s) * std::numbers::pi / 2.0);
      return c * c;
    };
    for (std::size_t t = 1; t <= T; ++t) {
      betas[t - 1] = std::min(1.0 - f(static_cast<double>(t)) / f(static_cast<double>(t - 1)), 0.999);
    }
  } else {
    const double lo = 0.1 / Td, hi = std::min(20.0 / Td, 0.999);
    for (std::size_t t = 1; t <= T; ++t) {
      betas[t - 1] = std::min(lo + (hi - lo) * static_cast<double>(t - 1) / (Td - 1.0), 0.999);
    }
  }
  return NoiseSchedule::from_betas(std::move(betas));
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape != b.shape) {
    throw Error(std::string(what) + ": shape mismatch " + to_string(a.shape) + " vs " +
                to_string(b.shape));
  }
}

}  // namespace

Tensor forward_diffuse(const Tensor& x0, std::size_t t, const Tensor& eps,
                       const NoiseSchedule& sched) {
  require_same_shape(x0, eps, "forward_diffuse");
  const double ab = sched.alpha_bar(t);
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  Tensor out = x0;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

Tensor estimate_x0(const Tensor& x_t, std::size_t t, const Tensor& eps_hat,
                   const NoiseSchedule& sched) {
  require_same_shape(x_t, eps_hat, "estimate_x0");
  const double ab = sched.alpha_bar(t);
  if (ab == 0.0) throw Error("estimate_x0: alpha_bar is zero at step " + std::to_string(t));
  const double inv = 1.0 / std::sqrt(ab), b = std::sqrt(1.0 - ab);
  Tensor out = x_t;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (x_t[i] - b * eps_hat[i]) * inv;
  return out;
}

ad::Var estimate_x0(ad::Var x_t, std::size_t t, ad::Var eps_hat, const NoiseSchedule& sched) {
  const double ab = sched.alpha_bar(t);
  if (ab == 0.0) throw Error("estimate_x0: alpha_bar is zero at step " + std::to_string(t));
  return ad::scale(ad::sub(x_t, ad::scale(eps_hat, std::sqrt(1.0 - ab))), 1.0 / std::sqrt(ab));
}

Tensor reverse_step(const Tensor& x_t, std::size_t t, const Tensor& eps_hat,
                    const NoiseSchedule& sched, const Tensor& z) {
  require_same_shape(x_t, eps_hat, "reverse_step");
  require_same_shape(x_t, z, "reverse_step");
  const double beta = sched.beta(t);
  const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha(t));
  const double coef = beta / std::sqrt(1.0 - sched.alpha_bar(t));
  const double sigma = sched.posterior_sigma(t);
  Tensor out = x_t;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = inv_sqrt_alpha * (x_t[i] - coef * eps_hat[i]) + sigma * z[i];
  }
  return out;
}

}  // namespace pdda
