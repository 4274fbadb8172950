#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "pdda/sampler.hpp"
#include "pdda/schedule.hpp"
#include "test_support.hpp"

namespace pdda {
namespace {

using testing::random_tensor;

TEST(Schedule, CosineMatchesClosedForm) {
  const std::size_t T = 100;
  const auto s = make_schedule(T, ScheduleKind::cosine);
  auto f = [&](double t) {
    const double c = std::cos((t / T + 0.008) / 1.008 * std::numbers::pi / 2);
    return c * c;
  };
  double prod = 1.0;
  for (std::size_t t = 1; t <= T; ++t) {
    const double beta = std::min(1.0 - f(t) / f(t - 1), 0.999);
    prod *= 1.0 - beta;
    EXPECT_NEAR(s.beta(t), beta, 1e-14) << t;
    EXPECT_NEAR(s.alpha_bar(t), prod, 1e-14) << t;
  }
  EXPECT_LT(s.alpha_bar(T), 0.01);
}

TEST(Schedule, LinearTwoStepProduct) {
  const auto s = NoiseSchedule::from_betas({0.1, 0.2});
  EXPECT_DOUBLE_EQ(s.alpha_bar(1), 0.9);
  EXPECT_DOUBLE_EQ(s.alpha_bar(2), 0.72);
}

TEST(Schedule, LinearEndpoints) {
  const auto s = make_schedule(100, ScheduleKind::linear);
  EXPECT_DOUBLE_EQ(s.beta(1), 0.001);
  EXPECT_DOUBLE_EQ(s.beta(100), 0.2);
}

TEST(Schedule, InvariantsHoldForBothKinds) {
  for (auto kind : {ScheduleKind::cosine, ScheduleKind::linear}) {
    for (std::size_t T : {2u, 10u, 100u, 1000u}) {
      const auto s = make_schedule(T, kind);
      ASSERT_EQ(s.steps(), T);
      EXPECT_EQ(s.posterior_sigma(1), 0.0);
      double prev = 1.0;
      for (std::size_t t = 1; t <= T; ++t) {
        EXPECT_GT(s.beta(t), 0.0);
        EXPECT_LT(s.beta(t), 1.0);
        EXPECT_DOUBLE_EQ(s.alpha(t), 1.0 - s.beta(t));
        EXPECT_LT(s.alpha_bar(t), prev) << to_string(kind) << " T=" << T << " t=" << t;
        EXPECT_GT(s.alpha_bar(t), 0.0);
        EXPECT_GE(s.posterior_sigma(t), 0.0);
        prev = s.alpha_bar(t);
      }
      for (std::size_t t = 2; t <= T; ++t) {
        const double expect =
            std::sqrt(s.beta(t) * (1 - s.alpha_bar(t - 1)) / (1 - s.alpha_bar(t)));
        EXPECT_NEAR(s.posterior_sigma(t), expect, 1e-15);
      }
    }
  }
}

TEST(Schedule, RejectsBadArguments) {
  EXPECT_THROW(make_schedule(1, ScheduleKind::cosine), Error);
  EXPECT_THROW(make_schedule(0, ScheduleKind::linear), Error);
  EXPECT_THROW(NoiseSchedule::from_betas({0.1, 1.0}), Error);
  EXPECT_THROW(NoiseSchedule::from_betas({0.0}), Error);
  const auto s = make_schedule(10, ScheduleKind::cosine);
  EXPECT_THROW(s.beta(0), Error);
  EXPECT_THROW(s.beta(11), Error);
  EXPECT_EQ(parse_schedule_kind("linear"), ScheduleKind::linear);
  EXPECT_THROW(parse_schedule_kind("quadratic"), Error);
}

// Two steps, the first negligible, so alpha_bar(2) is the requested value.
NoiseSchedule single_step(double alpha_bar) {
  return NoiseSchedule::from_betas({1e-300, 1.0 - alpha_bar});
}

TEST(ForwardDiffuse, Endpoints) {
  const Tensor x0 = random_tensor({1, 4, 4}, 1), eps = random_tensor({1, 4, 4}, 2);
  const auto clean = NoiseSchedule::from_betas({1e-300, 1e-300});
  EXPECT_EQ(forward_diffuse(x0, 1, eps, clean).data, x0.data);
  // alpha_bar -> 0: the data term shrinks like sqrt(alpha_bar)
  for (double ab : {1e-4, 1e-8, 1e-12}) {
    const double err = testing::max_abs_diff(forward_diffuse(x0, 2, eps, single_step(ab)).data, eps.data);
    EXPECT_LE(err, 2 * std::sqrt(ab)) << ab;
  }
}

TEST(ForwardDiffuse, QuarterAlphaBarArithmetic) {
  const auto y = forward_diffuse(Tensor({1}, {2.0}), 2, Tensor({1}, {-1.0}), single_step(0.25));
  EXPECT_NEAR(y[0], 0.13397, 1e-5);
}

TEST(ForwardDiffuse, RejectsBadArguments) {
  const auto s = make_schedule(10, ScheduleKind::cosine);
  const Tensor x = Tensor::zeros({4});
  EXPECT_THROW(forward_diffuse(x, 0, x, s), Error);
  EXPECT_THROW(forward_diffuse(x, 11, x, s), Error);
  EXPECT_THROW(forward_diffuse(x, 1, Tensor::zeros({5}), s), Error);
}

TEST(ForwardDiffuse, MarginalMatchesClosedFormStatistics) {
  const auto s = make_schedule(100, ScheduleKind::cosine);
  const Tensor x0 = random_tensor({3}, 3);
  const std::size_t n = 10000;
  std::mt19937_64 rng(4);
  for (std::size_t t : {1u, 25u, 50u, 99u}) {
    std::vector<double> sum(3, 0.0), sq(3, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      const Tensor y = forward_diffuse(x0, t, standard_normal({3}, rng), s);
      for (std::size_t i = 0; i < 3; ++i) {
        sum[i] += y[i];
        sq[i] += y[i] * y[i];
      }
    }
    const double var = 1.0 - s.alpha_bar(t);
    for (std::size_t i = 0; i < 3; ++i) {
      const double m = sum[i] / n;
      const double v = (sq[i] - n * m * m) / (n - 1);
      EXPECT_LT(std::abs(m - std::sqrt(s.alpha_bar(t)) * x0[i]), 4 * std::sqrt(var / n));
      // sample variance of a Gaussian has standard error var sqrt(2/(n-1))
      EXPECT_LT(std::abs(v - var), 4 * var * std::sqrt(2.0 / (n - 1)));
    }
  }
}

TEST(EstimateX0, InvertsForwardDiffusionAtEveryStep) {
  for (auto kind : {ScheduleKind::cosine, ScheduleKind::linear}) {
    const auto s = make_schedule(100, kind);
    const Tensor x0 = random_tensor({1, 16, 16}, 5), eps = random_tensor({1, 16, 16}, 6, -3, 3);
    for (std::size_t t = 1; t <= 100; ++t) {
      const Tensor back = estimate_x0(forward_diffuse(x0, t, eps, s), t, eps, s);
      // the cosine end step divides by sqrt(alpha_bar) ~ 5e-4 (linear ~ 2e-3),
      // amplifying rounding of the noisy sum.
      EXPECT_LT(testing::max_abs_diff(back.data, x0.data), 1e-10) << to_string(kind) << " t=" << t;
    }
  }
}

TEST(EstimateX0, PointMassScoreRecoversData) {
  const auto s = make_schedule(100, ScheduleKind::cosine);
  const Tensor x0 = random_tensor({1, 4, 4}, 7);
  std::mt19937_64 rng(8);
  for (std::size_t t = 1; t <= 100; ++t) {
    const Tensor xt = forward_diffuse(x0, t, standard_normal(x0.shape, rng), s);
    // analytic score -(x_t - sqrt(ab) x0) / (1 - ab), mapped to eps = -sqrt(1 - ab) score
    Tensor eps = xt;
    const double ab = s.alpha_bar(t);
    for (std::size_t i = 0; i < eps.size(); ++i) {
      const double score = -(xt[i] - std::sqrt(ab) * x0[i]) / (1 - ab);
      eps[i] = -std::sqrt(1 - ab) * score;
    }
    EXPECT_LT(testing::max_abs_diff(estimate_x0(xt, t, eps, s).data, x0.data), 1e-10) << t;
  }
}

TEST(EstimateX0, DifferentiableFormMatchesTensorForm) {
  const auto s = make_schedule(20, ScheduleKind::cosine);
  const Tensor xt = random_tensor({1, 4, 4}, 9), eps = random_tensor({1, 4, 4}, 10);
  ad::Graph g;
  const auto v = estimate_x0(g.constant(xt), 7, g.constant(eps), s);
  EXPECT_LT(testing::max_abs_diff(v.value().data, estimate_x0(xt, 7, eps, s).data), 1e-14);
}

TEST(ReverseStep, ZeroPredictionLimit) {
  const auto s = make_schedule(10, ScheduleKind::cosine);
  const Tensor x = random_tensor({6}, 11);
  const Tensor y = reverse_step(x, 5, Tensor::zeros({6}), s, Tensor::zeros({6}));
  for (std::size_t i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(y[i], x[i] / std::sqrt(s.alpha(5)));
}

TEST(ReverseStep, LastStepIgnoresNoise) {
  const auto s = make_schedule(10, ScheduleKind::cosine);
  const Tensor x = random_tensor({6}, 12), e = random_tensor({6}, 13);
  EXPECT_EQ(reverse_step(x, 1, e, s, random_tensor({6}, 14)).data,
            reverse_step(x, 1, e, s, Tensor::zeros({6})).data);
  EXPECT_THROW(reverse_step(x, 0, e, s, e), Error);
  EXPECT_THROW(reverse_step(x, 11, e, s, e), Error);
}

// N(0,1) data: x_t ~ N(0,1) for all t and the exact noise predictor is
// eps = sqrt(1 - ab_t) x_t. The step is then x_{t-1} = sqrt(alpha_t) x_t +
// sigma_t z, whose variance follows the recursion v <- alpha_t v + sigma_t^2.
TEST(ReverseStep, GaussianChainMatchesExactRecursion) {
  const auto s = make_schedule(100, ScheduleKind::cosine);
  double v_exact = 1.0;
  for (std::size_t t = 100; t >= 1; --t) {
    v_exact = s.alpha(t) * v_exact + s.posterior_sigma(t) * s.posterior_sigma(t);
  }
  EXPECT_NEAR(v_exact, 1.0, 0.05);

  const std::size_t n = 10000;
  std::mt19937_64 start_rng(15);
  Tensor x = standard_normal({n}, start_rng);
  std::mt19937_64 rng(16);
  for (std::size_t t = 100; t >= 1; --t) {
    Tensor eps = x;
    for (auto& e : eps.data) e *= std::sqrt(1 - s.alpha_bar(t));
    x = reverse_step(x, t, eps, s, standard_normal({n}, rng));
  }
  double m = 0.0, sq = 0.0;
  for (double v : x.data) {
    m += v;
    sq += v * v;
  }
  m /= n;
  const double var = (sq - n * m * m) / (n - 1);
  EXPECT_LT(std::abs(m), 3 * std::sqrt(v_exact / n));
  EXPECT_LT(std::abs(var - v_exact), 3 * v_exact * std::sqrt(2.0 / (n - 1)));
}

TEST(ConditionalScore, Arithmetic) {
  GuidanceConfig cfg;
  cfg.R = 2.0;
  const Shape shape{2};
  const auto both = conditional_score(Tensor({2}, {1, 0}), Tensor({2}, {0, 1}), cfg, shape);
  EXPECT_EQ(both.data, (std::vector<double>{-2, -2}));
  const auto none = conditional_score(std::nullopt, std::nullopt, cfg, shape);
  EXPECT_EQ(none.data, (std::vector<double>{0, 0}));
  const auto zeros = conditional_score(Tensor({2}, {0, 0}), Tensor({2}, {0, 0}), cfg, shape);
  EXPECT_EQ(zeros.data, (std::vector<double>{0, 0}));
  const auto f2_only = conditional_score(std::nullopt, Tensor({2}, {0.5, -1}), cfg, shape);
  EXPECT_EQ(f2_only.data, (std::vector<double>{-1, 2}));
  cfg.semantic_weight = 0.5;
  const auto weighted = conditional_score(Tensor({2}, {1, 0}), Tensor({2}, {0, 1}), cfg, shape);
  EXPECT_EQ(weighted.data, (std::vector<double>{-1, -2}));
}

TEST(NoiseStreams, IndependentAndReproducible) {
  auto a = noise_stream(3, 7), b = noise_stream(3, 7), c = noise_stream(3, 8), d = noise_stream(4, 7);
  const auto ta = standard_normal({16}, a);
  EXPECT_EQ(ta.data, standard_normal({16}, b).data);
  EXPECT_NE(ta.data, standard_normal({16}, c).data);
  EXPECT_NE(ta.data, standard_normal({16}, d).data);
}

TEST(TrajectoryCsv, HeaderAndEmptyPhiOutsideInterval) {
  Trajectory traj;
  TrajectoryStep a;
  a.t = 2;
  TrajectoryStep b;
  b.t = 1;
  b.f1_norm = 0.5;
  b.f2_norm = 0.25;
  b.phi = 0.75;
  b.guided = true;
  traj.steps = {a, b};
  std::ostringstream os;
  write_trajectory_csv(os, traj);
  std::istringstream lines(os.str());
  std::string header, first, second;
  std::getline(lines, header);
  std::getline(lines, first);
  std::getline(lines, second);
  EXPECT_EQ(header, "step,t,f1_norm,f2_norm,phi,guided");
  EXPECT_EQ(first, "0,2,0,0,,0");
  EXPECT_EQ(second, "1,1,0.5,0.25,0.75,1");
}

}  // namespace
}  // namespace pdda
