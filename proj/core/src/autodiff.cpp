#include "pdda/autodiff.hpp"

#include "gemm.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace pdda::ad {

const char* name(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::div: return "div";
    case OpKind::neg: return "neg";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::sqrt: return "sqrt";
    case OpKind::silu: return "silu";
    case OpKind::relu: return "relu";
    case OpKind::clamp: return "clamp";
    case OpKind::scale: return "scale";
    case OpKind::add_scalar: return "add_scalar";
    case OpKind::matmul: return "matmul";
    case OpKind::transpose: return "transpose";
    case OpKind::conv2d: return "conv2d";
    case OpKind::avg_pool2d: return "avg_pool2d";
    case OpKind::upsample2d: return "upsample2d";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::sum_last: return "sum_last";
    case OpKind::dot: return "dot";
    case OpKind::l2_norm: return "l2_norm";
    case OpKind::softmax: return "softmax";
    case OpKind::log_softmax: return "log_softmax";
    case OpKind::reshape: return "reshape";
    case OpKind::gather: return "gather";
  }
  return "?";
}

// ---- Var ------------------------------------------------------------------

const Shape& Var::shape() const { return graph_->node(id_).shape; }
std::span<const double> Var::data() const { return graph_->node(id_).value; }
std::size_t Var::size() const { return graph_->node(id_).value.size(); }
bool Var::requires_grad() const { return graph_->node(id_).requires_grad; }

double Var::item() const {
  const auto& v = graph_->node(id_).value;
  if (v.size() != 1) throw Error("item() on a tensor of shape " + to_string(shape()));
  return v[0];
}

Tensor Var::value() const {
  const auto& n = graph_->node(id_);
  return Tensor(n.shape, n.value);
}

// ---- Graph ----------------------------------------------------------------

void Graph::check_owner(Var v) const {
  if (v.graph() != this || v.id() >= nodes_.size()) {
    throw Error("variable does not belong to this graph");
  }
}

Var Graph::constant(Tensor t) {
  Node n;
  n.shape = std::move(t.shape);
  n.value = std::move(t.data);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Graph::variable(Tensor t) {
  Var v = constant(std::move(t));
  nodes_.back().requires_grad = record_;
  return v;
}

Var Graph::record(OpKind kind, Shape shape, std::vector<double> value,
                  std::initializer_list<Var> inputs, BackwardFn backward) {
  Node n;
  n.kind = kind;
  n.shape = std::move(shape);
  n.value = std::move(value);
  for (Var in : inputs) {
    if (!in.valid()) continue;
    check_owner(in);
    n.inputs.push_back(in.id());
    n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (record_ && n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

std::vector<double>& Graph::grad_buffer(std::uint32_t id) {
  auto& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void Graph::backward(Var output) {
  check_owner(output);
  if (output.size() != 1) {
    throw Error("backward without a seed needs a scalar output, got shape " +
                to_string(output.shape()));
  }
  const double one = 1.0;
  backward(output, std::span<const double>(&one, 1));
}

void Graph::backward(Var output, std::span<const double> seed) {
  check_owner(output);
  if (seed.size() != output.size()) throw Error("backward seed size mismatch");
  for (auto& n : nodes_) n.grad.clear();
  if (!nodes_[output.id()].requires_grad) return;
  auto& g = grad_buffer(output.id());
  std::copy(seed.begin(), seed.end(), g.begin());
  for (std::uint32_t i = output.id() + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (n.grad.empty() || !n.backward) continue;
    n.backward(*this, i);
  }
}

std::vector<double> Graph::grad(Var v) const {
  check_owner(v);
  const auto& n = nodes_[v.id()];
  if (n.grad.empty()) return std::vector<double>(n.value.size(), 0.0);
  return n.grad;
}

Tensor Graph::grad_tensor(Var v) const { return Tensor(v.shape(), grad(v)); }

// ---- elementwise ----------------------------------------------------------

namespace {

Graph& graph_of(Var a) {
  if (!a.valid()) throw Error("operation on an empty variable");
  return *a.graph();
}

// Right-aligned broadcasting where each dimension is equal or 1.
struct Broadcast {
  Shape out;
  std::vector<std::size_t> out_dims, a_strides, b_strides;
  bool same = false;

  Broadcast(const Shape& a, const Shape& b) {
    same = a == b;
    const std::size_t rank = std::max(a.size(), b.size());
    out.assign(rank, 1);
    a_strides.assign(rank, 0);
    b_strides.assign(rank, 0);
    auto dim = [rank](const Shape& s, std::size_t d) -> std::size_t {
      const std::size_t off = rank - s.size();
      return d < off ? 1 : s[d - off];
    };
    for (std::size_t d = 0; d < rank; ++d) {
      const auto da = dim(a, d), db = dim(b, d);
      if (da != db && da != 1 && db != 1) {
        throw Error("shape mismatch: " + to_string(a) + " vs " + to_string(b));
      }
      out[d] = std::max(da, db);
    }
    std::size_t sa = 1, sb = 1;
    for (std::size_t d = rank; d-- > 0;) {
      const auto da = dim(a, d), db = dim(b, d);
      a_strides[d] = da == 1 ? 0 : sa;
      b_strides[d] = db == 1 ? 0 : sb;
      sa *= da;
      sb *= db;
    }
  }

  template <typename F>
  void for_each(F&& f) const {
    const std::size_t n = numel(out);
    if (same) {
      for (std::size_t i = 0; i < n; ++i) f(i, i, i);
      return;
    }
    const std::size_t rank = out.size();
    std::vector<std::size_t> idx(rank, 0);
    std::size_t ia = 0, ib = 0;
    for (std::size_t i = 0; i < n; ++i) {
      f(i, ia, ib);
      for (std::size_t d = rank; d-- > 0;) {
        if (++idx[d] < out[d]) {
          ia += a_strides[d];
          ib += b_strides[d];
          break;
        }
        ia -= a_strides[d] * (out[d] - 1);
        ib -= b_strides[d] * (out[d] - 1);
        idx[d] = 0;
      }
    }
  }
};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Var binary(Elementwise kind, Var a, Var b) {
  Graph& g = graph_of(a);
  Broadcast bc(a.shape(), b.shape());
  std::vector<double> out(numel(bc.out));
  const auto av = a.data();
  const auto bv = b.data();
  OpKind op{};
  switch (kind) {
    case Elementwise::add:
      op = OpKind::add;
      bc.for_each([&](auto i, auto ia, auto ib) { out[i] = av[ia] + bv[ib]; });
      break;
    case Elementwise::sub:
      op = OpKind::sub;
      bc.for_each([&](auto i, auto ia, auto ib) { out[i] = av[ia] - bv[ib]; });
      break;
    case Elementwise::mul:
      op = OpKind::mul;
      bc.for_each([&](auto i, auto ia, auto ib) { out[i] = av[ia] * bv[ib]; });
      break;
    case Elementwise::div:
      op = OpKind::div;
      bc.for_each([&](auto i, auto ia, auto ib) {
        if (bv[ib] == 0.0) throw Error("div: division by zero");
        out[i] = av[ia] / bv[ib];
      });
      break;
    default:
      throw Error("elementwise: not a binary kind");
  }
  const std::uint32_t ida = a.id(), idb = b.id();
  return g.record(op, bc.out, std::move(out), {a, b},
                  [bc, op, ida, idb](Graph& gr, std::uint32_t self) {
                    const auto& go = gr.node(self).grad;
                    const auto& av = gr.node(ida).value;
                    const auto& bv = gr.node(idb).value;
                    const bool need_a = gr.wants_grad(ida);
                    const bool need_b = gr.wants_grad(idb);
                    std::vector<double>* ga = need_a ? &gr.grad_buffer(ida) : nullptr;
                    std::vector<double>* gb = need_b ? &gr.grad_buffer(idb) : nullptr;
                    bc.for_each([&](auto i, auto ia, auto ib) {
                      const double gi = go[i];
                      switch (op) {
                        case OpKind::add:
                          if (ga) (*ga)[ia] += gi;
                          if (gb) (*gb)[ib] += gi;
                          break;
                        case OpKind::sub:
                          if (ga) (*ga)[ia] += gi;
                          if (gb) (*gb)[ib] -= gi;
                          break;
                        case OpKind::mul:
                          if (ga) (*ga)[ia] += gi * bv[ib];
                          if (gb) (*gb)[ib] += gi * av[ia];
                          break;
                        default:  // div
                          if (ga) (*ga)[ia] += gi / bv[ib];
                          if (gb) (*gb)[ib] -= gi * av[ia] / (bv[ib] * bv[ib]);
                          break;
                      }
                    });
                  });
}

// Unary op: forward value function and derivative as a function of (x, y).
template <typename Fwd, typename Deriv>
Var unary(OpKind op, Var a, Fwd fwd, Deriv deriv) {
  Graph& g = graph_of(a);
  const auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  const std::uint32_t ida = a.id();
  return g.record(op, a.shape(), std::move(out), {a},
                  [ida, deriv](Graph& gr, std::uint32_t self) {
                    const auto& n = gr.node(self);
                    const auto& x = gr.node(ida).value;
                    auto& ga = gr.grad_buffer(ida);
                    for (std::size_t i = 0; i < x.size(); ++i) {
                      ga[i] += n.grad[i] * deriv(x[i], n.value[i]);
                    }
                  });
}

void require_finite(const Var& v, const char* op) {
  for (double x : v.data()) {
    if (!std::isfinite(x)) throw Error(std::string(op) + ": produced a non-finite value");
  }
}

}  // namespace

Var elementwise(Elementwise kind, Var a, std::optional<Var> b, ElementwiseParams params) {
  switch (kind) {
    case Elementwise::add:
    case Elementwise::sub:
    case Elementwise::mul:
    case Elementwise::div: {
      if (!b) throw Error("elementwise: binary kind needs two operands");
      Var r = binary(kind, a, *b);
      require_finite(r, name(graph_of(r).kind(r)));
      return r;
    }
    default:
      break;
  }
  if (b) throw Error("elementwise: unary kind given two operands");
  switch (kind) {
    case Elementwise::neg:
      return unary(OpKind::neg, a, [](double x) { return -x; },
                   [](double, double) { return -1.0; });
    case Elementwise::exp: {
      Var r = unary(OpKind::exp, a, [](double x) { return std::exp(x); },
                    [](double, double y) { return y; });
      require_finite(r, "exp");
      return r;
    }
    case Elementwise::log:
      for (double x : a.data()) {
        if (!(x > 0.0)) throw Error("log: non-positive input " + std::to_string(x));
      }
      return unary(OpKind::log, a, [](double x) { return std::log(x); },
                   [](double x, double) { return 1.0 / x; });
    case Elementwise::sqrt:
      for (double x : a.data()) {
        if (x < 0.0) throw Error("sqrt: negative input " + std::to_string(x));
      }
      return unary(OpKind::sqrt, a, [](double x) { return std::sqrt(x); },
                   [](double, double y) {
                     if (y == 0.0) throw Error("sqrt: derivative undefined at 0");
                     return 0.5 / y;
                   });
    case Elementwise::silu:
      return unary(OpKind::silu, a, [](double x) { return x * sigmoid(x); },
                   [](double x, double) {
                     const double s = sigmoid(x);
                     return s + x * s * (1.0 - s);
                   });
    case Elementwise::relu:
      return unary(OpKind::relu, a, [](double x) { return x > 0.0 ? x : 0.0; },
                   [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
    case Elementwise::clamp: {
      const double lo = params.lo, hi = params.hi;
      if (lo > hi) throw Error("clamp: lo > hi");
      return unary(OpKind::clamp, a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
                   [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
    }
    default:
      throw Error("elementwise: unknown kind");
  }
}

Var add(Var a, Var b) { return elementwise(Elementwise::add, a, b); }
Var sub(Var a, Var b) { return elementwise(Elementwise::sub, a, b); }
Var mul(Var a, Var b) { return elementwise(Elementwise::mul, a, b); }
Var div(Var a, Var b) { return elementwise(Elementwise::div, a, b); }
Var neg(Var a) { return elementwise(Elementwise::neg, a); }
Var exp(Var a) { return elementwise(Elementwise::exp, a); }
Var log(Var a) { return elementwise(Elementwise::log, a); }
Var sqrt(Var a) { return elementwise(Elementwise::sqrt, a); }
Var silu(Var a) { return elementwise(Elementwise::silu, a); }
Var relu(Var a) { return elementwise(Elementwise::relu, a); }
Var clamp(Var a, double lo, double hi) {
  return elementwise(Elementwise::clamp, a, std::nullopt, {lo, hi});
}

Var scale(Var a, double factor) {
  return unary(OpKind::scale, a, [factor](double x) { return factor * x; },
               [factor](double, double) { return factor; });
}

Var add_scalar(Var a, double offset) {
  return unary(OpKind::add_scalar, a, [offset](double x) { return x + offset; },
               [](double, double) { return 1.0; });
}

// ---- contractions ---------------------------------------------------------

Var matmul(Var a, Var b) {
  Graph& g = graph_of(a);
  if (a.shape().size() != 2 || b.shape().size() != 2) throw Error("matmul: rank mismatch");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw Error("matmul: inner dimension mismatch " + to_string(a.shape()) + " x " +
                to_string(b.shape()));
  }
  const auto av = a.data(), bv = b.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      const double* brow = bv.data() + p * n;
      double* orow = out.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  const std::uint32_t ida = a.id(), idb = b.id();
  return g.record(OpKind::matmul, {m, n}, std::move(out), {a, b},
                  [ida, idb, m, k, n](Graph& gr, std::uint32_t self) {
                    const auto& go = gr.node(self).grad;
                    const auto& av = gr.node(ida).value;
                    const auto& bv = gr.node(idb).value;
                    if (gr.wants_grad(ida)) {
                      auto& ga = gr.grad_buffer(ida);
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t p = 0; p < k; ++p) {
                          double s = 0.0;
                          for (std::size_t j = 0; j < n; ++j) s += go[i * n + j] * bv[p * n + j];
                          ga[i * k + p] += s;
                        }
                    }
                    if (gr.wants_grad(idb)) {
                      auto& gb = gr.grad_buffer(idb);
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t p = 0; p < k; ++p) {
                          const double aip = av[i * k + p];
                          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * go[i * n + j];
                        }
                    }
                  });
}

Var transpose(Var a) {
  if (a.shape().size() != 2) throw Error("transpose: rank mismatch");
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  std::vector<std::size_t> idx(r * c);
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < r; ++j) idx[i * r + j] = j * c + i;
  Var out = gather(a, std::move(idx), {c, r});
  return out;
}

namespace {

// Column matrix (C*K*K, H*W) of zero-padded input windows for one image.
void im2col(const double* in, double* cols, std::size_t C, std::size_t H, std::size_t W,
            std::size_t K) {
  const long pad = static_cast<long>(K / 2);
  const long Hl = static_cast<long>(H), Wl = static_cast<long>(W);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t ky = 0; ky < K; ++ky)
      for (std::size_t kx = 0; kx < K; ++kx) {
        double* row = cols + ((c * K + ky) * K + kx) * H * W;
        const long dy = static_cast<long>(ky) - pad, dx = static_cast<long>(kx) - pad;
        for (long y = 0; y < Hl; ++y) {
          const long sy = y + dy;
          for (long x = 0; x < Wl; ++x) {
            const long sx = x + dx;
            row[y * Wl + x] = (sy >= 0 && sy < Hl && sx >= 0 && sx < Wl)
                                  ? in[(static_cast<long>(c) * Hl + sy) * Wl + sx]
                                  : 0.0;
          }
        }
      }
}

void col2im_acc(const double* cols, double* out, std::size_t C, std::size_t H, std::size_t W,
                std::size_t K) {
  const long pad = static_cast<long>(K / 2);
  const long Hl = static_cast<long>(H), Wl = static_cast<long>(W);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t ky = 0; ky < K; ++ky)
      for (std::size_t kx = 0; kx < K; ++kx) {
        const double* row = cols + ((c * K + ky) * K + kx) * H * W;
        const long dy = static_cast<long>(ky) - pad, dx = static_cast<long>(kx) - pad;
        for (long y = 0; y < Hl; ++y) {
          const long sy = y + dy;
          if (sy < 0 || sy >= Hl) continue;
          for (long x = 0; x < Wl; ++x) {
            const long sx = x + dx;
            if (sx >= 0 && sx < Wl) out[(static_cast<long>(c) * Hl + sy) * Wl + sx] += row[y * Wl + x];
          }
        }
      }
}

}  // namespace

Var conv2d(Var x, Var weight, Var bias) {
  Graph& g = graph_of(x);
  const auto& xs = x.shape();
  const auto& ws = weight.shape();
  if (xs.size() != 4 || ws.size() != 4) throw Error("conv2d: rank mismatch");
  const std::size_t N = xs[0], C = xs[1], H = xs[2], W = xs[3];
  const std::size_t O = ws[0], K = ws[2];
  if (ws[1] != C) throw Error("conv2d: channel mismatch " + to_string(xs) + " vs " + to_string(ws));
  if (ws[3] != K || K % 2 == 0) throw Error("conv2d: kernel must be square and odd-sized");
  if (bias.valid() && (bias.shape().size() != 1 || bias.shape()[0] != O)) {
    throw Error("conv2d: bias shape mismatch");
  }
  const std::size_t HW = H * W, CKK = C * K * K;
  const bool pointwise = K == 1;

  const auto xv = x.data(), wv = weight.data();
  std::vector<double> out(N * O * HW, 0.0);
  std::vector<double> cols(pointwise ? 0 : CKK * HW);
  for (std::size_t n = 0; n < N; ++n) {
    double* op = out.data() + n * O * HW;
    if (bias.valid()) {
      for (std::size_t o = 0; o < O; ++o) std::fill(op + o * HW, op + (o + 1) * HW, bias.data()[o]);
    }
    const double* src = xv.data() + n * C * HW;
    if (!pointwise) {
      im2col(src, cols.data(), C, H, W, K);
      src = cols.data();
    }
    detail::gemm_acc(wv.data(), src, op, O, CKK, HW);
  }
  const std::uint32_t idx = x.id(), idw = weight.id();
  const bool has_bias = bias.valid();
  const std::uint32_t idb = has_bias ? bias.id() : 0;
  return g.record(
      OpKind::conv2d, {N, O, H, W}, std::move(out), {x, weight, bias},
      [=](Graph& gr, std::uint32_t self) {
        const auto& go = gr.node(self).grad;
        const auto& xv = gr.node(idx).value;
        const auto& wv = gr.node(idw).value;
        if (has_bias && gr.wants_grad(idb)) {
          auto& gb = gr.grad_buffer(idb);
          for (std::size_t n = 0; n < N; ++n)
            for (std::size_t o = 0; o < O; ++o) {
              const double* gp = go.data() + (n * O + o) * HW;
              double s = 0.0;
              for (std::size_t i = 0; i < HW; ++i) s += gp[i];
              gb[o] += s;
            }
        }
        const bool need_x = gr.wants_grad(idx), need_w = gr.wants_grad(idw);
        std::vector<double> cols(CKK * HW), go_t(HW * O), gw_t, w_t;
        if (need_w) gw_t.assign(CKK * O, 0.0);
        if (need_x) {
          w_t.resize(CKK * O);
          detail::transpose(wv.data(), w_t.data(), O, CKK);
        }
        for (std::size_t n = 0; n < N; ++n) {
          const double* gp = go.data() + n * O * HW;
          if (need_w) {
            const double* src = xv.data() + n * C * HW;
            if (!pointwise) {
              im2col(src, cols.data(), C, H, W, K);
              src = cols.data();
            }
            detail::transpose(gp, go_t.data(), O, HW);
            detail::gemm_acc(src, go_t.data(), gw_t.data(), CKK, HW, O);
          }
          if (need_x) {
            double* gx = gr.grad_buffer(idx).data() + n * C * HW;
            if (pointwise) {
              detail::gemm_acc(w_t.data(), gp, gx, CKK, O, HW);
            } else {
              std::fill(cols.begin(), cols.end(), 0.0);
              detail::gemm_acc(w_t.data(), gp, cols.data(), CKK, O, HW);
              col2im_acc(cols.data(), gx, C, H, W, K);
            }
          }
        }
        if (need_w) {
          auto& gw = gr.grad_buffer(idw);
          for (std::size_t o = 0; o < O; ++o)
            for (std::size_t p = 0; p < CKK; ++p) gw[o * CKK + p] += gw_t[p * O + o];
        }
      });
}

Var avg_pool2d(Var x, std::size_t k) {
  Graph& g = graph_of(x);
  const auto& s = x.shape();
  if (s.size() < 2) throw Error("avg_pool2d: rank mismatch");
  const std::size_t H = s[s.size() - 2], W = s[s.size() - 1];
  if (k == 0 || H % k != 0 || W % k != 0) {
    throw Error("avg_pool2d: kernel " + std::to_string(k) + " does not divide " +
                to_string(s));
  }
  const std::size_t planes = x.size() / (H * W), Ho = H / k, Wo = W / k;
  Shape os = s;
  os[s.size() - 2] = Ho;
  os[s.size() - 1] = Wo;
  const double inv = 1.0 / static_cast<double>(k * k);
  const auto xv = x.data();
  std::vector<double> out(planes * Ho * Wo, 0.0);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t xx = 0; xx < W; ++xx)
        out[(p * Ho + y / k) * Wo + xx / k] += xv[(p * H + y) * W + xx];
  for (auto& v : out) v *= inv;
  const std::uint32_t idx = x.id();
  return g.record(OpKind::avg_pool2d, os, std::move(out), {x},
                  [=](Graph& gr, std::uint32_t self) {
                    const auto& go = gr.node(self).grad;
                    auto& gx = gr.grad_buffer(idx);
                    for (std::size_t p = 0; p < planes; ++p)
                      for (std::size_t y = 0; y < H; ++y)
                        for (std::size_t xx = 0; xx < W; ++xx)
                          gx[(p * H + y) * W + xx] += inv * go[(p * Ho + y / k) * Wo + xx / k];
                  });
}

Var upsample2d(Var x, std::size_t k) {
  const auto& s = x.shape();
  if (s.size() < 2 || k == 0) throw Error("upsample2d: bad arguments");
  const std::size_t H = s[s.size() - 2], W = s[s.size() - 1];
  const std::size_t planes = x.size() / (H * W), Ho = H * k, Wo = W * k;
  Shape os = s;
  os[s.size() - 2] = Ho;
  os[s.size() - 1] = Wo;
  std::vector<std::size_t> idx(planes * Ho * Wo);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < Ho; ++y)
      for (std::size_t xx = 0; xx < Wo; ++xx)
        idx[(p * Ho + y) * Wo + xx] = (p * H + y / k) * W + xx / k;
  return gather(x, std::move(idx), std::move(os));
}

Var sum(Var a) {
  Graph& g = graph_of(a);
  double s = 0.0;
  for (double v : a.data()) s += v;
  const std::uint32_t ida = a.id();
  return g.record(OpKind::sum, {1}, {s}, {a}, [ida](Graph& gr, std::uint32_t self) {
    const double go = gr.node(self).grad[0];
    for (auto& v : gr.grad_buffer(ida)) v += go;
  });
}

Var mean(Var a) {
  Graph& g = graph_of(a);
  const double n = static_cast<double>(a.size());
  double s = 0.0;
  for (double v : a.data()) s += v;
  const std::uint32_t ida = a.id();
  return g.record(OpKind::mean, {1}, {s / n}, {a}, [ida, n](Graph& gr, std::uint32_t self) {
    const double go = gr.node(self).grad[0] / n;
    for (auto& v : gr.grad_buffer(ida)) v += go;
  });
}

Var sum_last(Var a) {
  Graph& g = graph_of(a);
  const auto& s = a.shape();
  const std::size_t L = s.back(), rows = a.size() / L;
  Shape os = s;
  os.back() = 1;
  const auto av = a.data();
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < L; ++j) out[r] += av[r * L + j];
  const std::uint32_t ida = a.id();
  return g.record(OpKind::sum_last, os, std::move(out), {a},
                  [ida, rows, L](Graph& gr, std::uint32_t self) {
                    const auto& go = gr.node(self).grad;
                    auto& ga = gr.grad_buffer(ida);
                    for (std::size_t r = 0; r < rows; ++r)
                      for (std::size_t j = 0; j < L; ++j) ga[r * L + j] += go[r];
                  });
}

Var mean_last(Var a) { return scale(sum_last(a), 1.0 / static_cast<double>(a.shape().back())); }

Var dot(Var a, Var b) {
  Graph& g = graph_of(a);
  if (a.shape() != b.shape()) {
    throw Error("dot: shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  const double s = pdda::dot(a.data(), b.data());
  const std::uint32_t ida = a.id(), idb = b.id();
  return g.record(OpKind::dot, {1}, {s}, {a, b}, [ida, idb](Graph& gr, std::uint32_t self) {
    const double go = gr.node(self).grad[0];
    if (gr.wants_grad(ida)) {
      auto& ga = gr.grad_buffer(ida);
      const auto& bv = gr.node(idb).value;
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go * bv[i];
    }
    if (gr.wants_grad(idb)) {
      auto& gb = gr.grad_buffer(idb);
      const auto& av = gr.node(ida).value;
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go * av[i];
    }
  });
}

Var l2_norm(Var a) {
  Graph& g = graph_of(a);
  const double nrm = pdda::l2_norm(a.data());
  const std::uint32_t ida = a.id();
  return g.record(OpKind::l2_norm, {1}, {nrm}, {a}, [ida, nrm](Graph& gr, std::uint32_t self) {
    if (nrm == 0.0) throw Error("l2_norm: gradient undefined at the zero vector");
    const double go = gr.node(self).grad[0];
    const auto& av = gr.node(ida).value;
    auto& ga = gr.grad_buffer(ida);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go * av[i] / nrm;
  });
}

Var softmax(Var a) {
  Graph& g = graph_of(a);
  const std::size_t L = a.shape().back(), rows = a.size() / L;
  const auto av = a.data();
  std::vector<double> out(a.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * L;
    double* y = out.data() + r * L;
    const double mx = *std::max_element(x, x + L);
    double z = 0.0;
    for (std::size_t j = 0; j < L; ++j) z += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < L; ++j) y[j] /= z;
  }
  const std::uint32_t ida = a.id();
  return g.record(OpKind::softmax, a.shape(), std::move(out), {a},
                  [ida, rows, L](Graph& gr, std::uint32_t self) {
                    const auto& n = gr.node(self);
                    auto& ga = gr.grad_buffer(ida);
                    for (std::size_t r = 0; r < rows; ++r) {
                      const double* y = n.value.data() + r * L;
                      const double* go = n.grad.data() + r * L;
                      double s = 0.0;
                      for (std::size_t j = 0; j < L; ++j) s += go[j] * y[j];
                      for (std::size_t j = 0; j < L; ++j) ga[r * L + j] += y[j] * (go[j] - s);
                    }
                  });
}

Var log_softmax(Var a) {
  Graph& g = graph_of(a);
  const std::size_t L = a.shape().back(), rows = a.size() / L;
  const auto av = a.data();
  std::vector<double> out(a.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * L;
    double* y = out.data() + r * L;
    const double mx = *std::max_element(x, x + L);
    double z = 0.0;
    for (std::size_t j = 0; j < L; ++j) z += std::exp(x[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < L; ++j) y[j] = x[j] - lse;
  }
  const std::uint32_t ida = a.id();
  return g.record(OpKind::log_softmax, a.shape(), std::move(out), {a},
                  [ida, rows, L](Graph& gr, std::uint32_t self) {
                    const auto& n = gr.node(self);
                    auto& ga = gr.grad_buffer(ida);
                    for (std::size_t r = 0; r < rows; ++r) {
                      const double* y = n.value.data() + r * L;
                      const double* go = n.grad.data() + r * L;
                      double s = 0.0;
                      for (std::size_t j = 0; j < L; ++j) s += go[j];
                      for (std::size_t j = 0; j < L; ++j) ga[r * L + j] += go[j] - std::exp(y[j]) * s;
                    }
                  });
}

Var reshape(Var a, Shape shape) {
  Graph& g = graph_of(a);
  if (numel(shape) != a.size()) {
    throw Error("reshape: " + to_string(a.shape()) + " to " + to_string(shape));
  }
  const std::uint32_t ida = a.id();
  std::vector<double> v(a.data().begin(), a.data().end());
  return g.record(OpKind::reshape, std::move(shape), std::move(v), {a},
                  [ida](Graph& gr, std::uint32_t self) {
                    const auto& go = gr.node(self).grad;
                    auto& ga = gr.grad_buffer(ida);
                    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
                  });
}

Var gather(Var a, std::vector<std::size_t> indices, Shape shape) {
  Graph& g = graph_of(a);
  if (numel(shape) != indices.size()) throw Error("gather: shape/index count mismatch");
  const auto av = a.data();
  std::vector<double> out(indices.size());
  for (std::size_t j = 0; j < indices.size(); ++j) {
    if (indices[j] >= av.size()) throw Error("gather: index out of range");
    out[j] = av[indices[j]];
  }
  const std::uint32_t ida = a.id();
  return g.record(OpKind::gather, std::move(shape), std::move(out), {a},
                  [ida, idx = std::move(indices)](Graph& gr, std::uint32_t self) {
                    const auto& go = gr.node(self).grad;
                    auto& ga = gr.grad_buffer(ida);
                    for (std::size_t j = 0; j < idx.size(); ++j) ga[idx[j]] += go[j];
                  });
}

// ---- gradient checking -----------------------------------------------------

double finite_diff_check(const ScalarFn& loss_fn, const Tensor& x, double h,
                         std::span<const std::size_t> coords) {
  if (!(h > 0.0)) throw Error("finite_diff_check: h must be positive");
  std::vector<double> analytic;
  {
    Graph g;
    Var xv = g.variable(x);
    Var loss = loss_fn(g, xv);
    if (loss.size() != 1) {
      throw Error("finite_diff_check: loss is not scalar, shape " + to_string(loss.shape()));
    }
    g.backward(loss);
    analytic = g.grad(xv);
  }
  auto eval = [&](const Tensor& at) {
    Graph g(false);
    return loss_fn(g, g.constant(at)).item();
  };
  std::vector<std::size_t> all;
  if (coords.empty()) {
    all.resize(x.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    coords = all;
  }
  double worst = 0.0;
  Tensor probe = x;
  for (std::size_t i : coords) {
    if (i >= x.size()) throw Error("finite_diff_check: coordinate out of range");
    const double orig = probe.data[i];
    probe.data[i] = orig + h;
    const double up = eval(probe);
    probe.data[i] = orig - h;
    const double down = eval(probe);
    probe.data[i] = orig;
    const double numeric = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric)));
  }
  return worst;
}

}  // namespace pdda::ad
