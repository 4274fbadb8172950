#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "pdda/guidance.hpp"
#include "test_support.hpp"

namespace pdda {
namespace {

using testing::random_score_model;
using testing::random_tensor;

FeatureTap tap(ad::Graph& g, std::size_t layer, Tensor t) {
  FeatureTap out;
  out.layer = layer;
  out.channels = t.shape[0];
  out.height = t.shape[1];
  out.width = t.shape[2];
  out.features = g.constant(std::move(t));
  return out;
}

TEST(GroupFeatures, UNetChannelsGiveTwoGroups) {
  ad::Graph g;
  const std::size_t channels[] = {16, 32, 32, 32, 16};
  const std::size_t sides[] = {16, 8, 4, 8, 16};
  FeatureTaps taps;
  for (std::size_t i = 0; i < 5; ++i) {
    taps.push_back(tap(g, i + 1, Tensor::zeros({channels[i], sides[i], sides[i]})));
  }
  const auto groups = group_features(taps);
  ASSERT_EQ(groups.size(), 2u);
  EXPECT_EQ(groups[0].channels, 16u);
  EXPECT_EQ(groups[1].channels, 32u);
  auto layers = [](const FeatureGroup& grp) {
    std::vector<std::size_t> out;
    for (const auto& m : grp.members) out.push_back(m.layer);
    return out;
  };
  EXPECT_EQ(layers(groups[0]), (std::vector<std::size_t>{1, 5}));
  EXPECT_EQ(layers(groups[1]), (std::vector<std::size_t>{2, 3, 4}));
  EXPECT_EQ(groups[0].min_height, 16u);
  EXPECT_EQ(groups[1].min_height, 4u);
  EXPECT_EQ(groups[1].min_width, 4u);
}

TEST(GroupFeatures, SingleTap) {
  ad::Graph g;
  const auto groups = group_features({tap(g, 1, Tensor::zeros({3, 4, 2}))});
  ASSERT_EQ(groups.size(), 1u);
  EXPECT_EQ(groups[0].members.size(), 1u);
  EXPECT_EQ(groups[0].min_height, 4u);
  EXPECT_EQ(groups[0].min_width, 2u);
}

TEST(GroupFeatures, RandomLayoutsArePartitioned) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    ad::Graph g;
    FeatureTaps taps;
    const std::size_t L = 1 + rng() % 8;
    for (std::size_t i = 0; i < L; ++i) {
      const std::size_t c = 1 + rng() % 4, side = 2 << (rng() % 3);
      taps.push_back(tap(g, i + 1, Tensor::zeros({c, side, side})));
    }
    const auto groups = group_features(taps);
    std::vector<std::size_t> seen;
    for (std::size_t m = 0; m < groups.size(); ++m) {
      if (m > 0) EXPECT_LT(groups[m - 1].channels, groups[m].channels);
      std::size_t min_side = 1000;
      for (const auto& member : groups[m].members) {
        EXPECT_EQ(member.channels, groups[m].channels);
        seen.push_back(member.layer);
        min_side = std::min(min_side, member.height);
      }
      EXPECT_EQ(groups[m].min_height, min_side);
    }
    std::sort(seen.begin(), seen.end());
    std::vector<std::size_t> all(L);
    std::iota(all.begin(), all.end(), 1);
    EXPECT_EQ(seen, all);
  }
}

FeatureGroup make_group(ad::Graph& g, std::vector<Tensor> members) {
  FeatureTaps taps;
  for (std::size_t i = 0; i < members.size(); ++i) taps.push_back(tap(g, i + 1, std::move(members[i])));
  return group_features(taps).at(0);
}

TEST(AggregateGroup, ConstantMapStandardisesToZero) {
  ad::Graph g;
  const auto grp = make_group(g, {Tensor::full({2, 8, 8}, 1.0), Tensor::full({2, 4, 4}, 2.0)});
  const auto y = aggregate_group(grp);
  EXPECT_EQ(y.shape(), (Shape{2, 4, 4}));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(AggregateGroup, SingleMemberIsStandardised) {
  ad::Graph g;
  const Tensor x = random_tensor({3, 4, 4}, 2);
  const auto y = aggregate_group(make_group(g, {x})).value();
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0.0, v = 0.0;
    for (std::size_t i = 0; i < 16; ++i) m += x[c * 16 + i];
    m /= 16;
    for (std::size_t i = 0; i < 16; ++i) v += (x[c * 16 + i] - m) * (x[c * 16 + i] - m);
    v /= 16;
    for (std::size_t i = 0; i < 16; ++i) {
      EXPECT_NEAR(y[c * 16 + i], (x[c * 16 + i] - m) / std::sqrt(v + 1e-5), 1e-12);
    }
  }
}

TEST(AggregateGroup, PoolThenSumOracle) {
  ad::Graph g;
  const Tensor big = random_tensor({1, 4, 4}, 3), small = random_tensor({1, 2, 2}, 4);
  const auto y = aggregate_group(make_group(g, {big, small})).value();
  std::vector<double> s(4);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 2; ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) acc += big[(2 * r + i) * 4 + 2 * c + j];
      s[r * 2 + c] = acc / 4 + small[r * 2 + c];
    }
  const double m = (s[0] + s[1] + s[2] + s[3]) / 4;
  double v = 0.0;
  for (double x : s) v += (x - m) * (x - m);
  v /= 4;
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y[i], (s[i] - m) / std::sqrt(v + 1e-5), 1e-12);
}

TEST(AggregateGroup, RandomGroupHasUnitChannelStatistics) {
  for (std::uint64_t seed = 5; seed < 15; ++seed) {
    ad::Graph g;
    const auto y = aggregate_group(
        make_group(g, {random_tensor({4, 8, 8}, seed), random_tensor({4, 4, 4}, seed + 100)}));
    for (std::size_t c = 0; c < 4; ++c) {
      double m = 0.0, v = 0.0;
      for (std::size_t i = 0; i < 16; ++i) m += y.data()[c * 16 + i];
      m /= 16;
      for (std::size_t i = 0; i < 16; ++i) v += std::pow(y.data()[c * 16 + i] - m, 2);
      v /= 16;
      EXPECT_NEAR(m, 0.0, 1e-12);
      EXPECT_NEAR(v, 1.0, 1e-3);
    }
  }
}

TEST(AggregateGroup, RejectsIndivisibleResolutions) {
  ad::Graph g;
  EXPECT_THROW(aggregate_group(make_group(g, {Tensor::zeros({1, 6, 6}), Tensor::zeros({1, 4, 4})})),
               Error);
}

TEST(AggregateGroup, GradientMatchesFiniteDifferences) {
  const Tensor other = random_tensor({2, 4, 4}, 16);
  const Tensor w = random_tensor({2, 4, 4}, 17);
  const double err = ad::finite_diff_check(
      [&](ad::Graph& g, ad::Var x) {
        FeatureTaps taps;
        FeatureTap a;
        a.layer = 1;
        a.channels = 2;
        a.height = a.width = 8;
        a.features = x;
        taps.push_back(a);
        taps.push_back(tap(g, 2, other));
        return ad::sum(ad::mul(aggregate_group(group_features(taps)[0]), g.constant(w)));
      },
      random_tensor({2, 8, 8}, 18), 1e-5);
  EXPECT_LT(err, 1e-6);
}

TEST(Patchify, CountsAndLayout) {
  ad::Graph g;
  std::vector<double> v(16);
  std::iota(v.begin(), v.end(), 0.0);
  const auto p = patchify(g.constant(Tensor({1, 4, 4}, v)), 2);
  EXPECT_EQ(p.count(), 4u);
  EXPECT_EQ(p.dim(), 4u);
  // row-major blocks, each block row-major
  EXPECT_EQ(p.patches.value().data,
            (std::vector<double>{0, 1, 4, 5, 2, 3, 6, 7, 8, 9, 12, 13, 10, 11, 14, 15}));

  const auto wide = patchify(g.constant(Tensor::zeros({32, 4, 4})), 2);
  EXPECT_EQ(wide.count(), 4u);
  EXPECT_EQ(wide.dim(), 128u);
}

TEST(Patchify, MultiChannelPatchesAreChannelMajor) {
  ad::Graph g;
  std::vector<double> v(2 * 2 * 4);
  std::iota(v.begin(), v.end(), 0.0);
  const auto p = patchify(g.constant(Tensor({2, 2, 4}, v)), 2);
  EXPECT_EQ(p.patches.value().data,
            (std::vector<double>{0, 1, 4, 5, 8, 9, 12, 13, 2, 3, 6, 7, 10, 11, 14, 15}));
}

TEST(Patchify, RejectsDegenerateAndIndivisible) {
  ad::Graph g;
  EXPECT_THROW(patchify(g.constant(Tensor::zeros({1, 4, 4})), 4), Error);
  EXPECT_THROW(patchify(g.constant(Tensor::zeros({1, 4, 4})), 3), Error);
  EXPECT_THROW(patchify(g.constant(Tensor::zeros({4, 4})), 2), Error);
}

PatchSet patch_set(ad::Graph& g, Tensor t) { return {0, g.constant(std::move(t))}; }

TEST(ContrastiveDistance, OrthonormalPairClosedForm) {
  ad::Graph g;
  const auto a = patch_set(g, Tensor({2, 2}, {1, 0, 0, 1}));
  EXPECT_NEAR(patch_contrastive_distance(a, a, 1.0).item(), std::log(1 + std::exp(1.0)) - 1, 1e-15);
  EXPECT_NEAR(patch_contrastive_distance(a, a, 1.0).item(), 0.31326, 1e-5);
}

TEST(ContrastiveDistance, VanishesAsTemperatureGoesToZero) {
  ad::Graph g;
  const auto a = patch_set(g, random_tensor({4, 6}, 19));
  double prev = patch_contrastive_distance(a, a, 1.0).item();
  for (double tau : {0.3, 0.1, 0.03, 0.01}) {
    const double d = patch_contrastive_distance(a, a, tau).item();
    EXPECT_LE(d, prev);
    prev = d;
  }
  EXPECT_LT(prev, 1e-6);
}

// Term-by-term scalar evaluation of the InfoNCE distance.
double brute_force(const Tensor& a, const Tensor& b, double tau) {
  const std::size_t N = a.shape[0], D = a.shape[1];
  auto cosine = [&](std::size_t i, std::size_t k) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t d = 0; d < D; ++d) {
      ab += a[i * D + d] * b[k * D + d];
      aa += a[i * D + d] * a[i * D + d];
      bb += b[k * D + d] * b[k * D + d];
    }
    return ab / std::sqrt(aa * bb);
  };
  double total = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    double others = 0.0;
    for (std::size_t k = 0; k < N; ++k) {
      if (k != i) others += std::exp(cosine(i, k) / tau);
    }
    const double own = std::exp(cosine(i, i) / tau);
    total += std::log(own / (others + own));
  }
  return -total / N;
}

TEST(ContrastiveDistance, MatchesBruteForce) {
  for (std::uint64_t seed = 20; seed < 30; ++seed) {
    const Tensor a = random_tensor({3, 5}, seed), b = random_tensor({3, 5}, seed + 50);
    for (double tau : {0.1, 0.5, 2.0}) {
      ad::Graph g;
      const double d = patch_contrastive_distance(patch_set(g, a), patch_set(g, b), tau).item();
      EXPECT_NEAR(d, brute_force(a, b, tau), 1e-12);
      EXPECT_GE(d, 0.0);
    }
  }
}

TEST(ContrastiveDistance, InvariantUnderSharedPermutation) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t N = 2 + rng() % 6, D = 1 + rng() % 6;
    const Tensor a = random_tensor({N, D}, rng()), b = random_tensor({N, D}, rng());
    std::vector<std::size_t> perm(N);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor pa = a, pb = b;
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t d = 0; d < D; ++d) {
        pa[i * D + d] = a[perm[i] * D + d];
        pb[i * D + d] = b[perm[i] * D + d];
      }
    ad::Graph g;
    EXPECT_NEAR(patch_contrastive_distance(patch_set(g, a), patch_set(g, b), 0.5).item(),
                patch_contrastive_distance(patch_set(g, pa), patch_set(g, pb), 0.5).item(), 1e-12);
  }
}

TEST(ContrastiveDistance, Errors) {
  ad::Graph g;
  const auto a = patch_set(g, random_tensor({3, 4}, 32));
  EXPECT_THROW(patch_contrastive_distance(a, patch_set(g, random_tensor({2, 4}, 33)), 0.5), Error);
  EXPECT_THROW(patch_contrastive_distance(a, patch_set(g, random_tensor({3, 5}, 33)), 0.5), Error);
  EXPECT_THROW(patch_contrastive_distance(a, a, 0.0), Error);
  Tensor z = random_tensor({3, 4}, 34);
  for (std::size_t d = 0; d < 4; ++d) z[4 + d] = 0.0;
  EXPECT_THROW(patch_contrastive_distance(a, patch_set(g, z), 0.5), Error);
}

TEST(ContrastiveDistance, GradientMatchesFiniteDifferences) {
  const Tensor b = random_tensor({4, 6}, 35);
  const double err = ad::finite_diff_check(
      [&](ad::Graph& g, ad::Var x) {
        return patch_contrastive_distance({0, x}, patch_set(g, b), 0.5);
      },
      random_tensor({4, 6}, 36), 1e-5);
  EXPECT_LT(err, 1e-6);
}

// Keepers through the estimate x_hat0 = (x_t - sqrt(1-ab) eps_hat(x_t)) / sqrt(ab).
struct KeeperFixture : ::testing::Test {
  ScoreNetwork model = random_score_model(40, 0.3);
  NoiseSchedule sched = make_schedule(100, ScheduleKind::linear);
  GuidanceConfig cfg;
  Tensor x_test = random_tensor({1, 16, 16}, 41);
  std::size_t t = 20;

  ad::Var x_hat0(ad::Graph& g, ad::Var xt) const {
    return estimate_x0(xt, t, predict_eps(model, g, xt, t).eps_hat, sched);
  }
};

TEST_F(KeeperFixture, SemanticDistanceGradient) {
  const auto ref = encode_reference(model, x_test, cfg, sched.steps());
  const double err = ad::finite_diff_check(
      [&](ad::Graph& g, ad::Var xt) { return semantic_distance(model, g, x_hat0(g, xt), ref, cfg); },
      random_tensor({1, 16, 16}, 42), 1e-5);
  EXPECT_LT(err, 1e-4);
}

TEST_F(KeeperFixture, ModificationDistanceGradient) {
  const double err = ad::finite_diff_check(
      [&](ad::Graph& g, ad::Var xt) { return modification_distance(g, x_hat0(g, xt), x_test); },
      random_tensor({1, 16, 16}, 43), 1e-5);
  EXPECT_LT(err, 1e-4);
}

TEST_F(KeeperFixture, KeepersReturnTheInputGradient) {
  const Tensor x = random_tensor({1, 16, 16}, 44);
  const auto ref = encode_reference(model, x_test, cfg, sched.steps());
  ad::Graph g1;
  const auto xt1 = g1.variable(x);
  const Tensor f1 = semantic_keeper(g1, xt1, x_hat0(g1, xt1), model, ref, cfg);
  ad::Graph h1;
  const auto v1 = h1.variable(x);
  h1.backward(semantic_distance(model, h1, x_hat0(h1, v1), ref, cfg));
  EXPECT_EQ(f1.data, h1.grad(v1));
  EXPECT_EQ(f1.shape, x.shape);

  ad::Graph g2;
  const auto xt2 = g2.variable(x);
  const Tensor f2 = modification_keeper(g2, xt2, x_hat0(g2, xt2), x_test);
  ad::Graph h2;
  const auto v2 = h2.variable(x);
  h2.backward(modification_distance(h2, x_hat0(h2, v2), x_test));
  EXPECT_EQ(f2.data, h2.grad(v2));
}

TEST_F(KeeperFixture, SemanticDistanceAveragesGroups) {
  const auto ref = encode_reference(model, x_test, cfg, sched.steps());
  ASSERT_EQ(ref.patches.size(), 2u);
  ad::Graph g;
  const auto xh = g.constant(random_tensor({1, 16, 16}, 45));
  const double d = semantic_distance(model, g, xh, ref, cfg).item();
  const auto taps = extract_features(model, g, xh, ref.feature_step);
  const auto groups = group_features(taps);
  double sum = 0.0;
  for (std::size_t m = 0; m < 2; ++m) {
    const auto gen = patchify(aggregate_group(groups[m]), cfg.patch_size, m);
    sum += patch_contrastive_distance({m, g.constant(ref.patches[m])}, gen, cfg.tau).item();
  }
  EXPECT_NEAR(d, sum / 2, 1e-14);
  EXPECT_EQ(ref.feature_step, 1u);  // max(1, round(0.008 * 100))
}

// Every positive pair has cosine similarity 1 when the estimate is the test
// image itself, so no unrelated image scores closer.
TEST_F(KeeperFixture, SemanticDistanceIsLowestAtTheTestImage) {
  const auto ref = encode_reference(model, x_test, cfg, sched.steps());
  auto distance_at = [&](const Tensor& xh) {
    ad::Graph g;
    return semantic_distance(model, g, g.constant(xh), ref, cfg).item();
  };
  const double at_test = distance_at(x_test);
  for (std::uint64_t s = 0; s < 8; ++s) {
    EXPECT_LT(at_test, distance_at(random_tensor({1, 16, 16}, 46 + s))) << s;
  }
}

TEST(ModificationKeeper, ZeroAtTheTestImage) {
  const Tensor x = random_tensor({1, 16, 16}, 47);
  ad::Graph g;
  const auto v = g.variable(x);
  for (double e : modification_keeper(g, v, v, x).data) EXPECT_EQ(e, 0.0);
}

TEST(ModificationKeeper, ScalarQuadratic) {
  ad::Graph g;
  const auto v = g.variable(Tensor({1}, {3.0}));
  EXPECT_EQ(modification_distance(g, v, Tensor({1}, {0.0})).item(), 9.0);
  EXPECT_EQ(modification_keeper(g, v, v, Tensor({1}, {0.0})).data, (std::vector<double>{6.0}));
  // mean over N elements: 2 (x_hat - x_test) / N
  ad::Graph h;
  const auto w = h.variable(Tensor({4}, {3.0, 1.0, 0.0, -1.0}));
  EXPECT_EQ(modification_keeper(h, w, w, Tensor::zeros({4})).data,
            (std::vector<double>{1.5, 0.5, 0.0, -0.5}));
  EXPECT_THROW(modification_distance(h, w, Tensor::zeros({3})), Error);
}

std::vector<double> vec(std::initializer_list<double> v) { return v; }

TEST(MagnitudeSimilarity, LawAndErrors) {
  const auto v = random_tensor({10}, 48).data;
  EXPECT_EQ(gradient_magnitude_similarity(v, v), 1.0);
  auto v3 = v;
  for (auto& x : v3) x *= 3;
  EXPECT_NEAR(gradient_magnitude_similarity(v, v3), 0.6, 1e-12);
  EXPECT_NEAR(gradient_magnitude_similarity(vec({1, 0}), vec({0, 3})), 0.6, 1e-15);
  EXPECT_EQ(gradient_magnitude_similarity(vec({1, 0}), vec({0, 0})), 0.0);
  EXPECT_LT(gradient_magnitude_similarity(vec({1, 0}), vec({1e-9, 0})), 1e-8);
  EXPECT_THROW(gradient_magnitude_similarity(vec({0, 0}), vec({0, 0})), Error);
  EXPECT_THROW(gradient_magnitude_similarity(vec({1, 0}), vec({1})), Error);
}

TEST(MagnitudeSimilarity, SymmetryScaleLawAndBounds) {
  std::mt19937_64 rng(49);
  std::uniform_real_distribution<double> scale(-6, 6);
  for (int i = 0; i < 1000; ++i) {
    const auto a = random_tensor({7}, rng()).data;
    auto b = random_tensor({7}, rng()).data;
    const double s = std::pow(10.0, scale(rng) / 2);
    for (auto& x : b) x *= s;
    const double phi = gradient_magnitude_similarity(a, b);
    EXPECT_EQ(phi, gradient_magnitude_similarity(b, a));
    EXPECT_GT(phi, 0.0);
    EXPECT_LE(phi, 1.0);
    const double c = std::pow(10.0, scale(rng) / 3);
    auto ca = a;
    for (auto& x : ca) x *= c;
    EXPECT_NEAR(gradient_magnitude_similarity(a, ca), 2 * c / (1 + c * c), 1e-12);
  }
}

TEST(Project, WorkedExamples) {
  const auto orth = project(Tensor({2}, {1, 0}), Tensor({2}, {0, 1}), ProjectionMode::always);
  EXPECT_EQ(orth.g1.data, vec({1, 0}));
  EXPECT_EQ(orth.f2_projected.data, vec({0, 1}));

  const auto conflict = project(Tensor({2}, {1, 0}), Tensor({2}, {-1, 1}), ProjectionMode::always);
  EXPECT_NEAR(conflict.f2_projected[0], 0.0, 1e-15);
  EXPECT_NEAR(conflict.f2_projected[1], 0.70711, 1e-5);

  const Tensor f1 = random_tensor({9}, 50);
  Tensor f2 = f1;
  for (auto& x : f2.data) x *= 2.5;
  const auto parallel = project(f1, f2, ProjectionMode::always);
  EXPECT_LT(l2_norm(parallel.f2_projected.data), 1e-15);
  EXPECT_NEAR(l2_norm(parallel.g1.data), 1.0, 1e-15);
}

TEST(Project, Modes) {
  const Tensor f1({2}, {2, 0}), agree({2}, {1, 1}), oppose({2}, {-1, 1});
  const double r = 1 / std::sqrt(2.0);
  const auto off = project(f1, oppose, ProjectionMode::off);
  EXPECT_FALSE(off.projected);
  EXPECT_NEAR(off.f2_projected[0], -r, 1e-15);
  EXPECT_NEAR(off.f2_projected[1], r, 1e-15);
  const auto conflict_only = project(f1, oppose, ProjectionMode::on_conflict_only);
  EXPECT_TRUE(conflict_only.projected);
  EXPECT_NEAR(conflict_only.f2_projected[0], 0.0, 1e-15);
  const auto no_conflict = project(f1, agree, ProjectionMode::on_conflict_only);
  EXPECT_FALSE(no_conflict.projected);
  EXPECT_NEAR(no_conflict.f2_projected[0], r, 1e-15);
  for (auto mode : {ProjectionMode::always, ProjectionMode::off, ProjectionMode::on_conflict_only}) {
    EXPECT_EQ(project(f1, agree, mode).g1.data, vec({1, 0}));
  }
}

TEST(Project, AbsentAndZeroKeepers) {
  const auto only2 = project(std::nullopt, Tensor({2}, {0, 4}), ProjectionMode::always);
  EXPECT_EQ(only2.g1.data, vec({0, 0}));
  EXPECT_EQ(only2.f2_projected.data, vec({0, 1}));
  const auto only1 = project(Tensor({2}, {3, 0}), std::nullopt, ProjectionMode::always);
  EXPECT_EQ(only1.f2_projected.data, vec({0, 0}));
  EXPECT_THROW(project(Tensor({2}, {0, 0}), Tensor({2}, {0, 1}), ProjectionMode::always), Error);
  EXPECT_THROW(project(Tensor({2}, {1, 0}), Tensor({2}, {0, 0}), ProjectionMode::off), Error);
  EXPECT_THROW(project(std::nullopt, std::nullopt, ProjectionMode::always), Error);
  EXPECT_THROW(project(Tensor({2}, {1, 0}), Tensor({3}, {0, 0, 1}), ProjectionMode::always), Error);
}

TEST(Project, OrthogonalityAndIdempotence) {
  std::mt19937_64 rng(51);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 2 + rng() % 300;
    const Tensor f1 = random_tensor({n}, rng()), f2 = random_tensor({n}, rng());
    const auto p = project(f1, f2, ProjectionMode::always);
    EXPECT_LE(std::abs(dot(p.f2_projected.data, p.g1.data)), 1e-10);
    const double norm = l2_norm(p.f2_projected.data);
    const auto again = project(p.g1, p.f2_projected, ProjectionMode::always);
    for (std::size_t k = 0; k < n; ++k) {
      EXPECT_NEAR(again.f2_projected[k] * norm, p.f2_projected[k], 1e-10);
    }
  }
}

}  // namespace
}  // namespace pdda
