#include "pdda/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace pdda {

std::vector<FeatureGroup> group_features(const FeatureTaps& taps) {
  std::map<std::size_t, FeatureGroup> by_channels;
  for (const auto& tap : taps) {
    auto& g = by_channels[tap.channels];
    if (g.members.empty()) {
      g.channels = tap.channels;
      g.min_height = tap.height;
      g.min_width = tap.width;
    }
    g.min_height = std::min(g.min_height, tap.height);
    g.min_width = std::min(g.min_width, tap.width);
    g.members.push_back(tap);
  }
  std::vector<FeatureGroup> groups;
  for (auto& [c, g] : by_channels) groups.push_back(std::move(g));
  return groups;
}

ad::Var aggregate_group(const FeatureGroup& group) {
  if (group.members.empty()) throw Error("aggregate_group: empty group");
  ad::Var total;
  for (const auto& m : group.members) {
    if (m.height % group.min_height != 0 || m.width % group.min_width != 0 ||
        m.height / group.min_height != m.width / group.min_width) {
      throw Error("aggregate_group: tap " + std::to_string(m.layer) + " resolution " +
                  std::to_string(m.height) + "x" + std::to_string(m.width) +
                  " is not an integer multiple of " + std::to_string(group.min_height) + "x" +
                  std::to_string(group.min_width));
    }
    const std::size_t k = m.height / group.min_height;
    ad::Var pooled = k == 1 ? m.features : ad::avg_pool2d(m.features, k);
    total = total.valid() ? ad::add(total, pooled) : pooled;
  }
  const std::size_t C = group.channels, HW = group.min_height * group.min_width;
  ad::Var rows = ad::reshape(total, {C, HW});
  ad::Var centered = ad::sub(rows, ad::mean_last(rows));
  ad::Var var = ad::mean_last(ad::mul(centered, centered));
  ad::Var norm = ad::div(centered, ad::sqrt(ad::add_scalar(var, kStandardizeEps)));
  return ad::reshape(norm, {C, group.min_height, group.min_width});
}

PatchSet patchify(ad::Var aggregated, std::size_t P, std::size_t group) {
  const auto& s = aggregated.shape();
  if (s.size() != 3) throw Error("patchify: expected (C,H,W), got " + to_string(s));
  const std::size_t C = s[0], H = s[1], W = s[2];
  if (P == 0 || H % P != 0 || W % P != 0) {
    throw Error("patchify: patch size " + std::to_string(P) + " does not divide " +
                std::to_string(H) + "x" + std::to_string(W));
  }
  const std::size_t nh = H / P, nw = W / P, N = nh * nw, D = C * P * P;
  if (N < 2) throw Error("patchify: need at least two patches, got " + std::to_string(N));
  std::vector<std::size_t> idx;
  idx.reserve(N * D);
  for (std::size_t bi = 0; bi < nh; ++bi)
    for (std::size_t bj = 0; bj < nw; ++bj)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t py = 0; py < P; ++py)
          for (std::size_t px = 0; px < P; ++px)
            idx.push_back((c * H + bi * P + py) * W + bj * P + px);
  return {group, ad::gather(aggregated, std::move(idx), {N, D})};
}

namespace {

ad::Var unit_rows(ad::Var m) {
  ad::Var sq = ad::sum_last(ad::mul(m, m));
  for (double v : sq.data()) {
    if (v == 0.0) throw Error("patch_contrastive_distance: zero-norm patch");
  }
  return ad::div(m, ad::sqrt(sq));
}

}  // namespace

ad::Var patch_contrastive_distance(const PatchSet& a, const PatchSet& b, double tau) {
  if (!(tau > 0.0)) throw Error("patch_contrastive_distance: tau must be positive");
  if (a.count() != b.count() || a.dim() != b.dim()) {
    throw Error("patch_contrastive_distance: patch sets differ, " + to_string(a.patches.shape()) +
                " vs " + to_string(b.patches.shape()));
  }
  const std::size_t N = a.count();
  ad::Var sim = ad::matmul(unit_rows(a.patches), ad::transpose(unit_rows(b.patches)));
  ad::Var logp = ad::log_softmax(ad::scale(sim, 1.0 / tau));
  std::vector<std::size_t> diag(N);
  for (std::size_t i = 0; i < N; ++i) diag[i] = i * N + i;
  return ad::neg(ad::mean(ad::gather(logp, std::move(diag), {N})));
}

namespace {

std::vector<ad::Var> group_patches(const FeatureTaps& taps, std::size_t P) {
  std::vector<ad::Var> out;
  const auto groups = group_features(taps);
  for (std::size_t m = 0; m < groups.size(); ++m) {
    out.push_back(patchify(aggregate_group(groups[m]), P, m).patches);
  }
  return out;
}

}  // namespace

SemanticReference encode_reference(const ScoreNetwork& model, const Tensor& x_test,
                                   const GuidanceConfig& cfg, std::size_t T) {
  SemanticReference ref;
  ref.feature_step = cfg.feature_step(T);
  ad::Graph g(false);
  const auto taps = extract_features(model, g, g.constant(x_test), ref.feature_step);
  for (auto v : group_patches(taps, cfg.patch_size)) ref.patches.push_back(v.value());
  return ref;
}

ad::Var semantic_distance(const ScoreNetwork& model, ad::Graph& g, ad::Var x_hat0,
                          const SemanticReference& ref, const GuidanceConfig& cfg) {
  const auto taps = extract_features(model, g, x_hat0, ref.feature_step);
  const auto patches = group_patches(taps, cfg.patch_size);
  if (patches.size() != ref.patches.size()) throw Error("semantic_distance: group count mismatch");
  ad::Var total;
  for (std::size_t m = 0; m < patches.size(); ++m) {
    const PatchSet test{m, g.constant(ref.patches[m])};
    const PatchSet gen{m, patches[m]};
    ad::Var d = patch_contrastive_distance(test, gen, cfg.tau);
    total = total.valid() ? ad::add(total, d) : d;
  }
  return ad::scale(total, 1.0 / static_cast<double>(patches.size()));
}

ad::Var modification_distance(ad::Graph& g, ad::Var x_hat0, const Tensor& x_test) {
  if (x_hat0.shape() != x_test.shape) {
    throw Error("modification_distance: shape mismatch " + to_string(x_hat0.shape()) + " vs " +
                to_string(x_test.shape));
  }
  ad::Var diff = ad::sub(g.constant(x_test), x_hat0);
  return ad::mean(ad::mul(diff, diff));
}

Tensor semantic_keeper(ad::Graph& g, ad::Var x_t, ad::Var x_hat0, const ScoreNetwork& model,
                       const SemanticReference& ref, const GuidanceConfig& cfg) {
  ad::Var d = semantic_distance(model, g, x_hat0, ref, cfg);
  g.backward(d);
  return g.grad_tensor(x_t);
}

Tensor modification_keeper(ad::Graph& g, ad::Var x_t, ad::Var x_hat0, const Tensor& x_test) {
  ad::Var d = modification_distance(g, x_hat0, x_test);
  g.backward(d);
  return g.grad_tensor(x_t);
}

double gradient_magnitude_similarity(std::span<const double> v1, std::span<const double> v2) {
  if (v1.size() != v2.size()) throw Error("gradient_magnitude_similarity: length mismatch");
  // Sorted so that FMA contraction cannot make the result order dependent.
  const double a = std::min(l2_norm(v1), l2_norm(v2)), b = std::max(l2_norm(v1), l2_norm(v2));
  const double den = a * a + b * b;
  if (den == 0.0) throw Error("gradient_magnitude_similarity: both gradients are zero");
  return 2.0 * (a * b) / den;
}

Projection project(const std::optional<Tensor>& f1, const std::optional<Tensor>& f2,
                   ProjectionMode mode) {
  if (!f1 && !f2) throw Error("project: both keepers absent");
  const Shape shape = f1 ? f1->shape : f2->shape;
  if (f1 && f2 && f1->shape != f2->shape) throw Error("project: keeper shapes differ");
  auto normalized = [](const Tensor& f, const char* which) {
    const double n = l2_norm(f.data);
    if (n == 0.0) throw Error(std::string("project: ") + which + " has zero norm");
    Tensor u = f;
    for (auto& v : u.data) v /= n;
    return u;
  };
  Projection out{f1 ? normalized(*f1, "f1") : Tensor::zeros(shape),
                 f2 ? normalized(*f2, "f2") : Tensor::zeros(shape), false};
  if (!f1 || !f2) return out;
  const double c = dot(out.f2_projected.data, out.g1.data);
  const bool apply = mode == ProjectionMode::always ||
                     (mode == ProjectionMode::on_conflict_only && c < 0.0);
  if (apply) {
    for (std::size_t i = 0; i < out.g1.size(); ++i) out.f2_projected[i] -= c * out.g1[i];
    out.projected = true;
  }
  return out;
}

}  // namespace pdda
