#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "pdda/autodiff.hpp"
#include "pdda/guidance_config.hpp"
#include "pdda/score_model.hpp"

namespace pdda {

/// Feature taps sharing one channel count.
struct FeatureGroup {
  std::size_t channels = 0;
  std::vector<FeatureTap> members;
  std::size_t min_height = 0;
  std::size_t min_width = 0;
};

/// Partitions taps by channel count, groups in ascending channel order,
/// members in forward-pass order.
std::vector<FeatureGroup> group_features(const FeatureTaps& taps);

/// Average-pools every member down to the group's minimum resolution, sums
/// them, then standardises each channel with its own spatial statistics:
/// (x - mean_c) / sqrt(var_c + 1e-5). Result is (C, Hmin, Wmin).
ad::Var aggregate_group(const FeatureGroup& group);

inline constexpr double kStandardizeEps = 1e-5;

/// Non-overlapping P x P blocks of a (C,H,W) map, row-major block order,
/// each flattened channel-major into a vector of length C*P*P.
struct PatchSet {
  std::size_t group = 0;
  ad::Var patches;  // (N, C*P*P)
  std::size_t count() const { return patches.shape()[0]; }
  std::size_t dim() const { return patches.shape()[1]; }
};

/// Throws if P does not divide H and W or fewer than two patches result.
PatchSet patchify(ad::Var aggregated, std::size_t P, std::size_t group = 0);

/// InfoNCE distance between matching patch sets:
///   D = -(1/N) sum_i log softmax_k(s_ik / tau)[i],  s_ik = cos(a_i, b_k).
ad::Var patch_contrastive_distance(const PatchSet& a, const PatchSet& b, double tau);

/// Patch sets of the test image, encoded once per sampling run.
struct SemanticReference {
  std::vector<Tensor> patches;  // per group, (N, D)
  std::size_t feature_step = 1;
};

SemanticReference encode_reference(const ScoreNetwork& model, const Tensor& x_test,
                                   const GuidanceConfig& cfg, std::size_t T);

/// Mean over groups of the patch contrastive distance between the reference
/// and the features of `x_hat0`, both taken at the reference's feature step.
ad::Var semantic_distance(const ScoreNetwork& model, ad::Graph& g, ad::Var x_hat0,
                          const SemanticReference& ref, const GuidanceConfig& cfg);

/// Mean squared error between x_test and x_hat0.
ad::Var modification_distance(ad::Graph& g, ad::Var x_hat0, const Tensor& x_test);

/// f1: gradient of semantic_distance w.r.t. `x_t`, where `x_hat0` was built from `x_t` on `g`.
Tensor semantic_keeper(ad::Graph& g, ad::Var x_t, ad::Var x_hat0, const ScoreNetwork& model,
                       const SemanticReference& ref, const GuidanceConfig& cfg);

/// f2: gradient of modification_distance w.r.t. `x_t`.
Tensor modification_keeper(ad::Graph& g, ad::Var x_t, ad::Var x_hat0, const Tensor& x_test);

/// 2 |v1| |v2| / (|v1|^2 + |v2|^2); throws when both are zero.
double gradient_magnitude_similarity(std::span<const double> v1, std::span<const double> v2);

struct Projection {
  Tensor g1;            // unit semantic direction (zeros when the keeper is absent)
  Tensor f2_projected;  // modification direction after the projection stage
  bool projected = false;
};

/// Normalises both keepers and removes from g2 its component along g1
/// (mode always; on_conflict_only only when g2.g1 < 0; off never). An absent
/// keeper passes through as zeros; a present keeper with zero norm throws.
Projection project(const std::optional<Tensor>& f1, const std::optional<Tensor>& f2,
                   ProjectionMode mode);

}  // namespace pdda
