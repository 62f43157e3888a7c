#pragma once

// Differentiable forward operations over topo::Tensor.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "topo_snn/tensor.hpp"

namespace topo::ops {

namespace detail {

inline std::vector<double>* grad_of(const std::shared_ptr<topo::detail::Node>& p) {
  return p->requires_grad ? &p->ensure_grad() : nullptr;
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ContractViolation(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                            " vs " + shape_str(b.shape()));
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] + b[i];
  return Tensor::make_result(a.shape(), std::move(v), "add", {a, b}, [](topo::detail::Node& n) {
    for (auto& p : n.parents)
      if (auto* g = detail::grad_of(p))
        for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i];
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] - b[i];
  return Tensor::make_result(a.shape(), std::move(v), "sub", {a, b}, [](topo::detail::Node& n) {
    if (auto* g = detail::grad_of(n.parents[0]))
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i];
    if (auto* g = detail::grad_of(n.parents[1]))
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] -= n.grad[i];
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] * b[i];
  return Tensor::make_result(a.shape(), std::move(v), "mul", {a, b}, [](topo::detail::Node& n) {
    const auto& av = n.parents[0]->value;
    const auto& bv = n.parents[1]->value;
    if (auto* g = detail::grad_of(n.parents[0]))
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i] * bv[i];
    if (auto* g = detail::grad_of(n.parents[1]))
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i] * av[i];
  });
}

inline Tensor scale(const Tensor& a, double s) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] * s;
  return Tensor::make_result(a.shape(), std::move(v), "scale", {a}, [s](topo::detail::Node& n) {
    if (auto* g = detail::grad_of(n.parents[0]))
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i] * s;
  });
}

inline Tensor add_scalar(const Tensor& a, double s) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] + s;
  return Tensor::make_result(a.shape(), std::move(v), "add_scalar", {a}, [](topo::detail::Node& n) {
    if (auto* g = detail::grad_of(n.parents[0]))
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i];
  });
}

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  return Tensor::make_result({1}, {s}, "sum", {a}, [](topo::detail::Node& n) {
    if (auto* g = detail::grad_of(n.parents[0]))
      for (double& x : *g) x += n.grad[0];
  });
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size())
    throw ContractViolation("reshape: cannot view " + shape_str(a.shape()) + " as " +
                            shape_str(shape));
  std::vector<double> v(a.data().begin(), a.data().end());
  return Tensor::make_result(std::move(shape), std::move(v), "reshape", {a},
                             [](topo::detail::Node& n) {
                               if (auto* g = detail::grad_of(n.parents[0]))
                                 for (std::size_t i = 0; i < n.grad.size(); ++i)
                                   (*g)[i] += n.grad[i];
                             });
}

// (m, k) x (k, n) -> (m, n)
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ContractViolation("matmul: shape mismatch " + shape_str(a.shape()) + " x " +
                            shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> v(m * n, 0.0);
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      for (std::size_t j = 0; j < n; ++j) v[i * n + j] += aip * B[p * n + j];
    }
  return Tensor::make_result({m, n}, std::move(v), "matmul", {a, b}, [m, k, n](topo::detail::Node& nd) {
    const auto& A = nd.parents[0]->value;
    const auto& B = nd.parents[1]->value;
    const auto& G = nd.grad;
    if (auto* ga = detail::grad_of(nd.parents[0]))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += G[i * n + j] * B[p * n + j];
          (*ga)[i * k + p] += s;
        }
    if (auto* gb = detail::grad_of(nd.parents[1]))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = A[i * k + p];
          for (std::size_t j = 0; j < n; ++j) (*gb)[p * n + j] += aip * G[i * n + j];
        }
  });
}

// x: (B, in), weight: (out, in), bias: (out) or undefined -> (B, out)
inline Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = {}) {
  if (x.rank() != 2 || weight.rank() != 2 || x.dim(1) != weight.dim(1))
    throw ContractViolation("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                            shape_str(weight.shape()));
  const std::size_t nb = x.dim(0), in = x.dim(1), out = weight.dim(0);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out))
    throw ContractViolation("linear: bias " + shape_str(bias.shape()) + " does not match " +
                            std::to_string(out) + " outputs");
  std::vector<double> v(nb * out);
  const auto X = x.data();
  const auto Wt = weight.data();
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t o = 0; o < out; ++o) {
      double s = bias.defined() ? bias[o] : 0.0;
      const double* w = &Wt[o * in];
      const double* xi = &X[b * in];
      for (std::size_t i = 0; i < in; ++i) s += w[i] * xi[i];
      v[b * out + o] = s;
    }
  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return Tensor::make_result({nb, out}, std::move(v), "linear", std::move(inputs),
                             [nb, in, out](topo::detail::Node& n) {
    const auto& X = n.parents[0]->value;
    const auto& Wt = n.parents[1]->value;
    const auto& G = n.grad;
    if (auto* gx = detail::grad_of(n.parents[0]))
      for (std::size_t b = 0; b < nb; ++b)
        for (std::size_t o = 0; o < out; ++o) {
          const double g = G[b * out + o];
          if (g == 0.0) continue;
          for (std::size_t i = 0; i < in; ++i) (*gx)[b * in + i] += g * Wt[o * in + i];
        }
    if (auto* gw = detail::grad_of(n.parents[1]))
      for (std::size_t b = 0; b < nb; ++b)
        for (std::size_t o = 0; o < out; ++o) {
          const double g = G[b * out + o];
          if (g == 0.0) continue;
          for (std::size_t i = 0; i < in; ++i) (*gw)[o * in + i] += g * X[b * in + i];
        }
    if (n.parents.size() > 2)
      if (auto* gb = detail::grad_of(n.parents[2]))
        for (std::size_t b = 0; b < nb; ++b)
          for (std::size_t o = 0; o < out; ++o) (*gb)[o] += G[b * out + o];
  });
}

struct Conv2dGeometry {
  std::size_t batch, in_c, in_h, in_w, out_c, k, stride, pad, out_h, out_w;
};

// x: (B, C, H, W), weight: (O, C, k, k), bias: (O) or undefined.
inline Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias = {},
                     std::size_t stride = 1, std::size_t pad = 0) {
  if (x.rank() != 4 || weight.rank() != 4 || weight.dim(1) != x.dim(1) ||
      weight.dim(2) != weight.dim(3))
    throw ContractViolation("conv2d: input " + shape_str(x.shape()) + " incompatible with kernel " +
                            shape_str(weight.shape()));
  if (stride == 0) throw ContractViolation("conv2d: stride must be positive");
  Conv2dGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), weight.dim(0), weight.dim(2),
                   stride, pad, 0, 0};
  if (g.in_h + 2 * pad < g.k || g.in_w + 2 * pad < g.k)
    throw ContractViolation("conv2d: kernel " + shape_str(weight.shape()) +
                            " does not fit padded input " + shape_str(x.shape()));
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.out_c))
    throw ContractViolation("conv2d: bias " + shape_str(bias.shape()) + " does not match kernel " +
                            shape_str(weight.shape()));
  g.out_h = (g.in_h + 2 * pad - g.k) / stride + 1;
  g.out_w = (g.in_w + 2 * pad - g.k) / stride + 1;

  const auto X = x.data();
  const auto K = weight.data();
  std::vector<double> v(g.batch * g.out_c * g.out_h * g.out_w);
  const auto ipad = static_cast<std::ptrdiff_t>(pad);
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t o = 0; o < g.out_c; ++o) {
      double* out = &v[((b * g.out_c) + o) * g.out_h * g.out_w];
      const double b0 = bias.defined() ? bias[o] : 0.0;
      std::fill(out, out + g.out_h * g.out_w, b0);
      for (std::size_t c = 0; c < g.in_c; ++c) {
        const double* in = &X[((b * g.in_c) + c) * g.in_h * g.in_w];
        for (std::size_t ki = 0; ki < g.k; ++ki)
          for (std::size_t kj = 0; kj < g.k; ++kj) {
            const double w = K[((o * g.in_c + c) * g.k + ki) * g.k + kj];
            for (std::size_t i = 0; i < g.out_h; ++i) {
              const auto r = static_cast<std::ptrdiff_t>(i * stride + ki) - ipad;
              if (r < 0 || r >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
              const double* row = in + r * static_cast<std::ptrdiff_t>(g.in_w);
              double* orow = out + i * g.out_w;
              for (std::size_t j = 0; j < g.out_w; ++j) {
                const auto col = static_cast<std::ptrdiff_t>(j * stride + kj) - ipad;
                if (col < 0 || col >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
                orow[j] += w * row[col];
              }
            }
          }
      }
    }

  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return Tensor::make_result({g.batch, g.out_c, g.out_h, g.out_w}, std::move(v), "conv2d",
                             std::move(inputs), [g](topo::detail::Node& n) {
    const auto& X = n.parents[0]->value;
    const auto& K = n.parents[1]->value;
    const auto& G = n.grad;
    auto* gx = detail::grad_of(n.parents[0]);
    auto* gw = detail::grad_of(n.parents[1]);
    const auto ipad = static_cast<std::ptrdiff_t>(g.pad);
    for (std::size_t b = 0; b < g.batch; ++b)
      for (std::size_t o = 0; o < g.out_c; ++o) {
        const double* go = &G[((b * g.out_c) + o) * g.out_h * g.out_w];
        for (std::size_t c = 0; c < g.in_c; ++c) {
          const std::size_t in_off = ((b * g.in_c) + c) * g.in_h * g.in_w;
          for (std::size_t ki = 0; ki < g.k; ++ki)
            for (std::size_t kj = 0; kj < g.k; ++kj) {
              const std::size_t widx = ((o * g.in_c + c) * g.k + ki) * g.k + kj;
              const double w = K[widx];
              double wacc = 0.0;
              for (std::size_t i = 0; i < g.out_h; ++i) {
                const auto r = static_cast<std::ptrdiff_t>(i * g.stride + ki) - ipad;
                if (r < 0 || r >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
                const std::size_t row = in_off + static_cast<std::size_t>(r) * g.in_w;
                const double* grow = go + i * g.out_w;
                for (std::size_t j = 0; j < g.out_w; ++j) {
                  const auto col = static_cast<std::ptrdiff_t>(j * g.stride + kj) - ipad;
                  if (col < 0 || col >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
                  const std::size_t xi = row + static_cast<std::size_t>(col);
                  wacc += grow[j] * X[xi];
                  if (gx) (*gx)[xi] += grow[j] * w;
                }
              }
              if (gw) (*gw)[widx] += wacc;
            }
        }
      }
    if (n.parents.size() > 2)
      if (auto* gb = detail::grad_of(n.parents[2]))
        for (std::size_t b = 0; b < g.batch; ++b)
          for (std::size_t o = 0; o < g.out_c; ++o) {
            const double* go = &G[((b * g.out_c) + o) * g.out_h * g.out_w];
            double s = 0.0;
            for (std::size_t i = 0; i < g.out_h * g.out_w; ++i) s += go[i];
            (*gb)[o] += s;
          }
  });
}

// Non-overlapping k x k average pooling on (B, C, H, W); H and W must divide by k.
inline Tensor avg_pool2d(const Tensor& x, std::size_t k) {
  if (x.rank() != 4 || k == 0 || x.dim(2) % k != 0 || x.dim(3) % k != 0)
    throw ContractViolation("avg_pool2d: window " + std::to_string(k) + " does not tile " +
                            shape_str(x.shape()));
  const std::size_t nb = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h / k, ow = w / k;
  const double inv = 1.0 / static_cast<double>(k * k);
  std::vector<double> v(nb * c * oh * ow, 0.0);
  const auto X = x.data();
  for (std::size_t p = 0; p < nb * c; ++p)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j)
        v[p * oh * ow + (i / k) * ow + j / k] += X[p * h * w + i * w + j] * inv;
  return Tensor::make_result({nb, c, oh, ow}, std::move(v), "avg_pool2d", {x},
                             [nb, c, h, w, k, oh, ow, inv](topo::detail::Node& n) {
    if (auto* g = detail::grad_of(n.parents[0]))
      for (std::size_t p = 0; p < nb * c; ++p)
        for (std::size_t i = 0; i < h; ++i)
          for (std::size_t j = 0; j < w; ++j)
            (*g)[p * h * w + i * w + j] += n.grad[p * oh * ow + (i / k) * ow + j / k] * inv;
  });
}

// Per-channel affine map on (B, C, ...): y = (x - shift[c]) * scale[c].
inline Tensor channel_affine(const Tensor& x, std::span<const double> shift, std::span<const double> scl) {
  if (x.rank() < 2 || shift.size() != x.dim(1) || scl.size() != x.dim(1))
    throw ContractViolation("channel_affine: " + std::to_string(shift.size()) +
                            " channel constants for input " + shape_str(x.shape()));
  const std::size_t nb = x.dim(0), c = x.dim(1), inner = x.size() / (nb * c);
  std::vector<double> v(x.size());
  std::vector<double> sc(scl.begin(), scl.end());
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t idx = (b * c + ch) * inner + i;
        v[idx] = (x[idx] - shift[ch]) * scl[ch];
      }
  return Tensor::make_result(x.shape(), std::move(v), "channel_affine", {x},
                             [nb, c, inner, sc = std::move(sc)](topo::detail::Node& n) {
    if (auto* g = detail::grad_of(n.parents[0]))
      for (std::size_t b = 0; b < nb; ++b)
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t i = 0; i < inner; ++i) {
            const std::size_t idx = (b * c + ch) * inner + i;
            (*g)[idx] += n.grad[idx] * sc[ch];
          }
  });
}

// Row-wise log-softmax of (B, K) logits.
inline std::vector<double> log_softmax_rows(std::span<const double> z, std::size_t nb, std::size_t k) {
  std::vector<double> out(z.size());
  for (std::size_t b = 0; b < nb; ++b) {
    const double* row = &z[b * k];
    const double m = *std::max_element(row, row + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(row[j] - m);
    const double lse = m + std::log(s);
    for (std::size_t j = 0; j < k; ++j) out[b * k + j] = row[j] - lse;
  }
  return out;
}

// Per-sample log p(label | logits) as a (B) tensor.
inline Tensor log_softmax_pick(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size())
    throw ContractViolation("log_softmax_pick: logits " + shape_str(logits.shape()) + " vs " +
                            std::to_string(labels.size()) + " labels");
  const std::size_t nb = logits.dim(0), k = logits.dim(1);
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= k)
      throw ContractViolation("log_softmax_pick: label " + std::to_string(y) + " out of range");
  auto ls = log_softmax_rows(logits.data(), nb, k);
  std::vector<double> v(nb);
  std::vector<int> lab(labels.begin(), labels.end());
  for (std::size_t b = 0; b < nb; ++b) v[b] = ls[b * k + static_cast<std::size_t>(lab[b])];
  return Tensor::make_result({nb}, std::move(v), "log_softmax_pick", {logits},
                             [nb, k, ls = std::move(ls), lab = std::move(lab)](topo::detail::Node& n) {
    if (auto* g = detail::grad_of(n.parents[0]))
      for (std::size_t b = 0; b < nb; ++b)
        for (std::size_t j = 0; j < k; ++j) {
          const double p = std::exp(ls[b * k + j]);
          const double onehot = (static_cast<int>(j) == lab[b]) ? 1.0 : 0.0;
          (*g)[b * k + j] += n.grad[b] * (onehot - p);
        }
  });
}

// Mean softmax cross-entropy over the batch.
inline Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  return scale(sum(log_softmax_pick(logits, labels)), -1.0 / static_cast<double>(labels.size()));
}

// Spike nonlinearity: forward Heaviside(u - v_th) with ties firing, backward
// through the arctan surrogate g(x) = (a/2) / (1 + (pi a x / 2)^2).
// With `relaxed` set, the forward pass is the antiderivative of g,
// 1/2 + atan(pi a x / 2) / pi, making the whole graph smooth so finite
// differences can validate the surrogate path.
struct SpikeFn {
  double alpha = 2.0;
  bool relaxed = false;

  double surrogate(double x) const {
    const double z = std::numbers::pi * alpha * x / 2.0;
    return (alpha / 2.0) / (1.0 + z * z);
  }
  double forward(double x) const {
    if (relaxed) return 0.5 + std::atan(std::numbers::pi * alpha * x / 2.0) / std::numbers::pi;
    return x >= 0.0 ? 1.0 : 0.0;
  }
};

inline Tensor spike_threshold(const Tensor& u, double v_th, SpikeFn fn = {}) {
  if (!(v_th > 0.0)) throw ContractViolation("spike_threshold: v_th must be positive");
  std::vector<double> v(u.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = fn.forward(u[i] - v_th);
  return Tensor::make_result(u.shape(), std::move(v), "spike", {u}, [v_th, fn](topo::detail::Node& n) {
    if (auto* g = detail::grad_of(n.parents[0])) {
      const auto& U = n.parents[0]->value;
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        (*g)[i] += n.grad[i] * fn.surrogate(U[i] - v_th);
    }
  });
}

// Leaky integration h = u + (x - u) / tau.
inline Tensor lif_charge(const Tensor& u, const Tensor& x, double tau) {
  detail::require_same_shape(u, x, "lif_charge");
  const double decay = 1.0 - 1.0 / tau, gain = 1.0 / tau;
  std::vector<double> v(u.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = u[i] + (x[i] - u[i]) / tau;
  return Tensor::make_result(u.shape(), std::move(v), "lif_charge", {u, x},
                             [decay, gain](topo::detail::Node& n) {
    if (auto* g = detail::grad_of(n.parents[0]))
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i] * decay;
    if (auto* g = detail::grad_of(n.parents[1]))
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i] * gain;
  });
}

// Hard reset: h (1 - s) + v_reset s.  Soft reset: h - v_th s.
inline Tensor lif_reset(const Tensor& h, const Tensor& s, double v_reset, bool soft, double v_th) {
  detail::require_same_shape(h, s, "lif_reset");
  std::vector<double> v(h.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = soft ? h[i] - v_th * s[i] : h[i] * (1.0 - s[i]) + v_reset * s[i];
  return Tensor::make_result(h.shape(), std::move(v), "lif_reset", {h, s},
                             [v_reset, soft, v_th](topo::detail::Node& n) {
    const auto& H = n.parents[0]->value;
    const auto& S = n.parents[1]->value;
    if (auto* g = detail::grad_of(n.parents[0]))
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        (*g)[i] += soft ? n.grad[i] : n.grad[i] * (1.0 - S[i]);
    if (auto* g = detail::grad_of(n.parents[1]))
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        (*g)[i] += soft ? -v_th * n.grad[i] : n.grad[i] * (v_reset - H[i]);
  });
}

}  // namespace topo::ops
