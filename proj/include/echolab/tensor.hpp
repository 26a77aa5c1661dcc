#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace echolab::nn {

struct TensorError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeMismatch : TensorError {
  using TensorError::TensorError;
};
struct NonScalarRoot : TensorError {
  NonScalarRoot() : TensorError("backward() needs a scalar root") {}
};
struct CheckpointError : TensorError {
  using TensorError::TensorError;
};

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

// One node of the dynamically recorded computation graph. Creation order of
// reachable nodes is a topological order; backward() walks it in reverse and
// visits each node exactly once.
template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // allocated iff requires_grad
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T>&)> backward_fn;

  std::size_t numel() const { return value.size(); }
  void ensure_grad() {
    if (requires_grad && grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

template <class T>
using Var = std::shared_ptr<Node<T>>;

template <class T>
Var<T> make_var(Shape shape, bool requires_grad = false) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value.assign(shape_numel(n->shape), T(0));
  n->requires_grad = requires_grad;
  n->ensure_grad();
  return n;
}

template <class T>
Var<T> constant(Shape shape, std::vector<T> data) {
  if (shape_numel(shape) != data.size()) throw ShapeMismatch("constant: data does not match shape");
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  return n;
}

template <class T>
Var<T> scalar(T v) {
  return constant<T>({1}, {v});
}

namespace detail {

template <class T>
Var<T> make_result(Shape shape, std::vector<Var<T>> parents) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value.assign(shape_numel(n->shape), T(0));
  for (const auto& p : parents)
    if (p->requires_grad) n->requires_grad = true;
  n->parents = std::move(parents);
  n->ensure_grad();
  return n;
}

template <class T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a->shape != b->shape)
    throw ShapeMismatch(std::string(op) + ": " + shape_str(a->shape) + " vs " + shape_str(b->shape));
}

}  // namespace detail

// --- elementwise ---------------------------------------------------------

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a, b, "add");
  auto out = detail::make_result<T>(a->shape, {a, b});
  for (std::size_t i = 0; i < out->numel(); ++i) out->value[i] = a->value[i] + b->value[i];
  out->backward_fn = [](Node<T>& n) {
    for (int p = 0; p < 2; ++p)
      if (n.parents[p]->requires_grad)
        for (std::size_t i = 0; i < n.numel(); ++i) n.parents[p]->grad[i] += n.grad[i];
  };
  return out;
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a, b, "sub");
  auto out = detail::make_result<T>(a->shape, {a, b});
  for (std::size_t i = 0; i < out->numel(); ++i) out->value[i] = a->value[i] - b->value[i];
  out->backward_fn = [](Node<T>& n) {
    if (n.parents[0]->requires_grad)
      for (std::size_t i = 0; i < n.numel(); ++i) n.parents[0]->grad[i] += n.grad[i];
    if (n.parents[1]->requires_grad)
      for (std::size_t i = 0; i < n.numel(); ++i) n.parents[1]->grad[i] -= n.grad[i];
  };
  return out;
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a, b, "mul");
  auto out = detail::make_result<T>(a->shape, {a, b});
  for (std::size_t i = 0; i < out->numel(); ++i) out->value[i] = a->value[i] * b->value[i];
  out->backward_fn = [](Node<T>& n) {
    if (n.parents[0]->requires_grad)
      for (std::size_t i = 0; i < n.numel(); ++i) n.parents[0]->grad[i] += n.grad[i] * n.parents[1]->value[i];
    if (n.parents[1]->requires_grad)
      for (std::size_t i = 0; i < n.numel(); ++i) n.parents[1]->grad[i] += n.grad[i] * n.parents[0]->value[i];
  };
  return out;
}

template <class T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a, b, "div");
  auto out = detail::make_result<T>(a->shape, {a, b});
  for (std::size_t i = 0; i < out->numel(); ++i) out->value[i] = a->value[i] / b->value[i];
  out->backward_fn = [](Node<T>& n) {
    for (std::size_t i = 0; i < n.numel(); ++i) {
      const T bv = n.parents[1]->value[i];
      if (n.parents[0]->requires_grad) n.parents[0]->grad[i] += n.grad[i] / bv;
      if (n.parents[1]->requires_grad)
        n.parents[1]->grad[i] -= n.grad[i] * n.parents[0]->value[i] / (bv * bv);
    }
  };
  return out;
}

template <class T>
Var<T> add_scalar(const Var<T>& a, T s) {
  auto out = detail::make_result<T>(a->shape, {a});
  for (std::size_t i = 0; i < out->numel(); ++i) out->value[i] = a->value[i] + s;
  out->backward_fn = [](Node<T>& n) {
    if (n.parents[0]->requires_grad)
      for (std::size_t i = 0; i < n.numel(); ++i) n.parents[0]->grad[i] += n.grad[i];
  };
  return out;
}

template <class T>
Var<T> mul_scalar(const Var<T>& a, T s) {
  auto out = detail::make_result<T>(a->shape, {a});
  for (std::size_t i = 0; i < out->numel(); ++i) out->value[i] = a->value[i] * s;
  out->backward_fn = [s](Node<T>& n) {
    if (n.parents[0]->requires_grad)
      for (std::size_t i = 0; i < n.numel(); ++i) n.parents[0]->grad[i] += n.grad[i] * s;
  };
  return out;
}

template <class T>
Var<T> relu(const Var<T>& a) {
  auto out = detail::make_result<T>(a->shape, {a});
  for (std::size_t i = 0; i < out->numel(); ++i) out->value[i] = a->value[i] > T(0) ? a->value[i] : T(0);
  out->backward_fn = [](Node<T>& n) {
    if (!n.parents[0]->requires_grad) return;
    for (std::size_t i = 0; i < n.numel(); ++i)
      if (n.parents[0]->value[i] > T(0)) n.parents[0]->grad[i] += n.grad[i];
  };
  return out;
}

template <class T>
Var<T> sigmoid(const Var<T>& a) {
  auto out = detail::make_result<T>(a->shape, {a});
  for (std::size_t i = 0; i < out->numel(); ++i) out->value[i] = T(1) / (T(1) + std::exp(-a->value[i]));
  out->backward_fn = [](Node<T>& n) {
    if (!n.parents[0]->requires_grad) return;
    for (std::size_t i = 0; i < n.numel(); ++i) {
      const T y = n.value[i];
      n.parents[0]->grad[i] += n.grad[i] * y * (T(1) - y);
    }
  };
  return out;
}

// elementwise x^p; for p < 1 the derivative base is clamped away from zero
template <class T>
Var<T> pow_scalar(const Var<T>& a, T p) {
  auto out = detail::make_result<T>(a->shape, {a});
  for (std::size_t i = 0; i < out->numel(); ++i) out->value[i] = std::pow(a->value[i], p);
  out->backward_fn = [p](Node<T>& n) {
    if (!n.parents[0]->requires_grad) return;
    for (std::size_t i = 0; i < n.numel(); ++i) {
      T base = n.parents[0]->value[i];
      if (p < T(1)) base = std::max(base, T(1e-12));
      n.parents[0]->grad[i] += n.grad[i] * p * std::pow(base, p - T(1));
    }
  };
  return out;
}

// elementwise minimum; ties route the gradient to the first argument
template <class T>
Var<T> min_elem(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a, b, "min_elem");
  auto out = detail::make_result<T>(a->shape, {a, b});
  for (std::size_t i = 0; i < out->numel(); ++i) out->value[i] = std::min(a->value[i], b->value[i]);
  out->backward_fn = [](Node<T>& n) {
    for (std::size_t i = 0; i < n.numel(); ++i) {
      const bool first = n.parents[0]->value[i] <= n.parents[1]->value[i];
      Node<T>& p = *n.parents[first ? 0 : 1];
      if (p.requires_grad) p.grad[i] += n.grad[i];
    }
  };
  return out;
}

// gradient barrier: value copy that is a graph leaf
template <class T>
Var<T> detach(const Var<T>& a) {
  return constant<T>(a->shape, a->value);
}

// reverse along the last axis
template <class T>
Var<T> flip_last(const Var<T>& a) {
  if (a->shape.empty()) throw ShapeMismatch("flip_last: rank must be >= 1");
  const std::size_t last = static_cast<std::size_t>(a->shape.back());
  const std::size_t groups = a->numel() / last;
  auto out = detail::make_result<T>(a->shape, {a});
  for (std::size_t g = 0; g < groups; ++g)
    for (std::size_t j = 0; j < last; ++j)
      out->value[g * last + j] = a->value[g * last + (last - 1 - j)];
  out->backward_fn = [groups, last](Node<T>& n) {
    if (!n.parents[0]->requires_grad) return;
    for (std::size_t g = 0; g < groups; ++g)
      for (std::size_t j = 0; j < last; ++j)
        n.parents[0]->grad[g * last + (last - 1 - j)] += n.grad[g * last + j];
  };
  return out;
}

// --- shape ops ------------------------------------------------------------

template <class T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  if (shape_numel(shape) != a->numel()) throw ShapeMismatch("reshape: element count mismatch");
  auto out = detail::make_result<T>(std::move(shape), {a});
  out->value = a->value;
  out->backward_fn = [](Node<T>& n) {
    if (!n.parents[0]->requires_grad) return;
    for (std::size_t i = 0; i < n.numel(); ++i) n.parents[0]->grad[i] += n.grad[i];
  };
  return out;
}

// concatenate along axis 1 (requires rank >= 2 and equal remaining dims)
template <class T>
Var<T> concat1(const Var<T>& a, const Var<T>& b) {
  if (a->shape.size() != b->shape.size() || a->shape.size() < 2)
    throw ShapeMismatch("concat1: rank mismatch");
  for (std::size_t d = 0; d < a->shape.size(); ++d)
    if (d != 1 && a->shape[d] != b->shape[d]) throw ShapeMismatch("concat1: dim mismatch");
  Shape shape = a->shape;
  shape[1] += b->shape[1];
  const int batch = a->shape[0];
  const std::size_t inner_a = a->numel() / static_cast<std::size_t>(batch);
  const std::size_t inner_b = b->numel() / static_cast<std::size_t>(batch);
  auto out = detail::make_result<T>(std::move(shape), {a, b});
  for (int i = 0; i < batch; ++i) {
    std::copy_n(a->value.begin() + i * inner_a, inner_a, out->value.begin() + i * (inner_a + inner_b));
    std::copy_n(b->value.begin() + i * inner_b, inner_b,
                out->value.begin() + i * (inner_a + inner_b) + inner_a);
  }
  out->backward_fn = [batch, inner_a, inner_b](Node<T>& n) {
    for (int i = 0; i < batch; ++i) {
      const std::size_t base = i * (inner_a + inner_b);
      if (n.parents[0]->requires_grad)
        for (std::size_t j = 0; j < inner_a; ++j) n.parents[0]->grad[i * inner_a + j] += n.grad[base + j];
      if (n.parents[1]->requires_grad)
        for (std::size_t j = 0; j < inner_b; ++j)
          n.parents[1]->grad[i * inner_b + j] += n.grad[base + inner_a + j];
    }
  };
  return out;
}

// --- reductions -----------------------------------------------------------

template <class T>
Var<T> sum_all(const Var<T>& a) {
  auto out = detail::make_result<T>({1}, {a});
  T s = T(0);
  for (const T v : a->value) s += v;
  out->value[0] = s;
  out->backward_fn = [](Node<T>& n) {
    if (!n.parents[0]->requires_grad) return;
    for (std::size_t i = 0; i < n.parents[0]->numel(); ++i) n.parents[0]->grad[i] += n.grad[0];
  };
  return out;
}

template <class T>
Var<T> mean_all(const Var<T>& a) {
  const T inv = T(1) / static_cast<T>(a->numel());
  auto out = detail::make_result<T>({1}, {a});
  T s = T(0);
  for (const T v : a->value) s += v;
  out->value[0] = s * inv;
  out->backward_fn = [inv](Node<T>& n) {
    if (!n.parents[0]->requires_grad) return;
    for (std::size_t i = 0; i < n.parents[0]->numel(); ++i) n.parents[0]->grad[i] += n.grad[0] * inv;
  };
  return out;
}

template <class T>
Var<T> sum_axis_last(const Var<T>& a) {
  if (a->shape.size() < 2) throw ShapeMismatch("sum_axis_last: rank must be >= 2");
  Shape shape(a->shape.begin(), a->shape.end() - 1);
  const std::size_t last = static_cast<std::size_t>(a->shape.back());
  auto out = detail::make_result<T>(std::move(shape), {a});
  for (std::size_t g = 0; g < out->numel(); ++g) {
    T s = T(0);
    for (std::size_t i = 0; i < last; ++i) s += a->value[g * last + i];
    out->value[g] = s;
  }
  out->backward_fn = [last](Node<T>& n) {
    if (!n.parents[0]->requires_grad) return;
    for (std::size_t g = 0; g < n.numel(); ++g)
      for (std::size_t i = 0; i < last; ++i) n.parents[0]->grad[g * last + i] += n.grad[g];
  };
  return out;
}

template <class T>
Var<T> mean_axis_last(const Var<T>& a) {
  const T inv = T(1) / static_cast<T>(a->shape.back());
  return mul_scalar(sum_axis_last(a), inv);
}

// --- dense / conv layers ----------------------------------------------------

// x: [B, Din], w: [Dout, Din], bias: [Dout]
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias) {
  if (x->shape.size() != 2 || w->shape.size() != 2 || x->shape[1] != w->shape[1] ||
      bias->shape != Shape{w->shape[0]})
    throw ShapeMismatch("linear: incompatible shapes");
  const int batch = x->shape[0], din = x->shape[1], dout = w->shape[0];
  auto out = detail::make_result<T>({batch, dout}, {x, w, bias});
  for (int i = 0; i < batch; ++i)
    for (int o = 0; o < dout; ++o) {
      T s = bias->value[static_cast<std::size_t>(o)];
      const T* xr = x->value.data() + static_cast<std::size_t>(i) * din;
      const T* wr = w->value.data() + static_cast<std::size_t>(o) * din;
      for (int k = 0; k < din; ++k) s += xr[k] * wr[k];
      out->value[static_cast<std::size_t>(i) * dout + o] = s;
    }
  out->backward_fn = [batch, din, dout](Node<T>& n) {
    Node<T>& x = *n.parents[0];
    Node<T>& w = *n.parents[1];
    Node<T>& b = *n.parents[2];
    for (int i = 0; i < batch; ++i)
      for (int o = 0; o < dout; ++o) {
        const T g = n.grad[static_cast<std::size_t>(i) * dout + o];
        if (g == T(0)) continue;
        if (b.requires_grad) b.grad[static_cast<std::size_t>(o)] += g;
        const T* wr = w.value.data() + static_cast<std::size_t>(o) * din;
        const T* xr = x.value.data() + static_cast<std::size_t>(i) * din;
        if (x.requires_grad) {
          T* xg = x.grad.data() + static_cast<std::size_t>(i) * din;
          for (int k = 0; k < din; ++k) xg[k] += g * wr[k];
        }
        if (w.requires_grad) {
          T* wg = w.grad.data() + static_cast<std::size_t>(o) * din;
          for (int k = 0; k < din; ++k) wg[k] += g * xr[k];
        }
      }
  };
  return out;
}

// x: [B, Cin, L], w: [Cout, Cin, K], bias: [Cout]
template <class T>
Var<T> conv1d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, int stride, int pad) {
  if (x->shape.size() != 3 || w->shape.size() != 3 || x->shape[1] != w->shape[1] ||
      bias->shape != Shape{w->shape[0]})
    throw ShapeMismatch("conv1d: incompatible shapes");
  const int batch = x->shape[0], cin = x->shape[1], len = x->shape[2];
  const int cout = w->shape[0], k = w->shape[2];
  const int lout = (len + 2 * pad - k) / stride + 1;
  if (lout <= 0) throw ShapeMismatch("conv1d: output length would be empty");
  auto out = detail::make_result<T>({batch, cout, lout}, {x, w, bias});
  for (int i = 0; i < batch; ++i)
    for (int co = 0; co < cout; ++co) {
      T* orow = out->value.data() + (static_cast<std::size_t>(i) * cout + co) * lout;
      for (int lo = 0; lo < lout; ++lo) orow[lo] = bias->value[static_cast<std::size_t>(co)];
      for (int ci = 0; ci < cin; ++ci) {
        const T* xr = x->value.data() + (static_cast<std::size_t>(i) * cin + ci) * len;
        const T* wr = w->value.data() + (static_cast<std::size_t>(co) * cin + ci) * k;
        for (int kk = 0; kk < k; ++kk) {
          const T wv = wr[kk];
          if (wv == T(0)) continue;
          for (int lo = 0; lo < lout; ++lo) {
            const int li = lo * stride + kk - pad;
            if (li >= 0 && li < len) orow[lo] += wv * xr[li];
          }
        }
      }
    }
  out->backward_fn = [batch, cin, len, cout, k, lout, stride, pad](Node<T>& n) {
    Node<T>& x = *n.parents[0];
    Node<T>& w = *n.parents[1];
    Node<T>& b = *n.parents[2];
    for (int i = 0; i < batch; ++i)
      for (int co = 0; co < cout; ++co) {
        const T* grow = n.grad.data() + (static_cast<std::size_t>(i) * cout + co) * lout;
        if (b.requires_grad) {
          T s = T(0);
          for (int lo = 0; lo < lout; ++lo) s += grow[lo];
          b.grad[static_cast<std::size_t>(co)] += s;
        }
        for (int ci = 0; ci < cin; ++ci) {
          const T* xr = x.value.data() + (static_cast<std::size_t>(i) * cin + ci) * len;
          const T* wr = w.value.data() + (static_cast<std::size_t>(co) * cin + ci) * k;
          T* xg = x.requires_grad ? x.grad.data() + (static_cast<std::size_t>(i) * cin + ci) * len : nullptr;
          T* wg = w.requires_grad ? w.grad.data() + (static_cast<std::size_t>(co) * cin + ci) * k : nullptr;
          for (int kk = 0; kk < k; ++kk) {
            T wgrad = T(0);
            const T wv = wr[kk];
            for (int lo = 0; lo < lout; ++lo) {
              const int li = lo * stride + kk - pad;
              if (li < 0 || li >= len) continue;
              const T g = grow[lo];
              if (xg) xg[li] += g * wv;
              wgrad += g * xr[li];
            }
            if (wg) wg[kk] += wgrad;
          }
        }
      }
  };
  return out;
}

// x: [B, Cin, H, W], w: [Cout, Cin, Kh, Kw], bias: [Cout]; square stride/pad
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, int stride, int pad) {
  if (x->shape.size() != 4 || w->shape.size() != 4 || x->shape[1] != w->shape[1] ||
      bias->shape != Shape{w->shape[0]})
    throw ShapeMismatch("conv2d: incompatible shapes");
  const int batch = x->shape[0], cin = x->shape[1], hin = x->shape[2], win = x->shape[3];
  const int cout = w->shape[0], kh = w->shape[2], kw = w->shape[3];
  const int hout = (hin + 2 * pad - kh) / stride + 1;
  const int wout = (win + 2 * pad - kw) / stride + 1;
  if (hout <= 0 || wout <= 0) throw ShapeMismatch("conv2d: output would be empty");
  auto out = detail::make_result<T>({batch, cout, hout, wout}, {x, w, bias});
  const std::size_t xplane = static_cast<std::size_t>(hin) * win;
  const std::size_t oplane = static_cast<std::size_t>(hout) * wout;
  for (int i = 0; i < batch; ++i)
    for (int co = 0; co < cout; ++co) {
      T* orow = out->value.data() + (static_cast<std::size_t>(i) * cout + co) * oplane;
      for (std::size_t p = 0; p < oplane; ++p) orow[p] = bias->value[static_cast<std::size_t>(co)];
      for (int ci = 0; ci < cin; ++ci) {
        const T* xr = x->value.data() + (static_cast<std::size_t>(i) * cin + ci) * xplane;
        const T* wr = w->value.data() + ((static_cast<std::size_t>(co) * cin + ci) * kh) * kw;
        for (int ki = 0; ki < kh; ++ki)
          for (int kj = 0; kj < kw; ++kj) {
            const T wv = wr[ki * kw + kj];
            if (wv == T(0)) continue;
            for (int ho = 0; ho < hout; ++ho) {
              const int hi = ho * stride + ki - pad;
              if (hi < 0 || hi >= hin) continue;
              for (int wo = 0; wo < wout; ++wo) {
                const int wi = wo * stride + kj - pad;
                if (wi >= 0 && wi < win) orow[ho * wout + wo] += wv * xr[hi * win + wi];
              }
            }
          }
      }
    }
  out->backward_fn = [batch, cin, hin, win, cout, kh, kw, hout, wout, stride, pad](Node<T>& n) {
    Node<T>& x = *n.parents[0];
    Node<T>& w = *n.parents[1];
    Node<T>& b = *n.parents[2];
    const std::size_t xplane = static_cast<std::size_t>(hin) * win;
    const std::size_t oplane = static_cast<std::size_t>(hout) * wout;
    for (int i = 0; i < batch; ++i)
      for (int co = 0; co < cout; ++co) {
        const T* grow = n.grad.data() + (static_cast<std::size_t>(i) * cout + co) * oplane;
        if (b.requires_grad) {
          T s = T(0);
          for (std::size_t p = 0; p < oplane; ++p) s += grow[p];
          b.grad[static_cast<std::size_t>(co)] += s;
        }
        for (int ci = 0; ci < cin; ++ci) {
          const T* xr = x.value.data() + (static_cast<std::size_t>(i) * cin + ci) * xplane;
          T* xg = x.requires_grad ? x.grad.data() + (static_cast<std::size_t>(i) * cin + ci) * xplane : nullptr;
          const T* wr = w.value.data() + ((static_cast<std::size_t>(co) * cin + ci) * kh) * kw;
          T* wg = w.requires_grad ? w.grad.data() + ((static_cast<std::size_t>(co) * cin + ci) * kh) * kw : nullptr;
          for (int ki = 0; ki < kh; ++ki)
            for (int kj = 0; kj < kw; ++kj) {
              const T wv = wr[ki * kw + kj];
              T wgrad = T(0);
              for (int ho = 0; ho < hout; ++ho) {
                const int hi = ho * stride + ki - pad;
                if (hi < 0 || hi >= hin) continue;
                for (int wo = 0; wo < wout; ++wo) {
                  const int wi = wo * stride + kj - pad;
                  if (wi < 0 || wi >= win) continue;
                  const T g = grow[ho * wout + wo];
                  if (xg) xg[hi * win + wi] += g * wv;
                  wgrad += g * xr[hi * win + wi];
                }
              }
              if (wg) wg[ki * kw + kj] += wgrad;
            }
        }
      }
  };
  return out;
}

template <class T>
Var<T> upsample_nearest2d(const Var<T>& x, int factor) {
  if (x->shape.size() != 4) throw ShapeMismatch("upsample_nearest2d: expects [B,C,H,W]");
  const int batch = x->shape[0], ch = x->shape[1], hin = x->shape[2], win = x->shape[3];
  const int hout = hin * factor, wout = win * factor;
  auto out = detail::make_result<T>({batch, ch, hout, wout}, {x});
  for (int bc = 0; bc < batch * ch; ++bc) {
    const T* xr = x->value.data() + static_cast<std::size_t>(bc) * hin * win;
    T* orow = out->value.data() + static_cast<std::size_t>(bc) * hout * wout;
    for (int ho = 0; ho < hout; ++ho)
      for (int wo = 0; wo < wout; ++wo) orow[ho * wout + wo] = xr[(ho / factor) * win + (wo / factor)];
  }
  out->backward_fn = [batch, ch, hin, win, factor](Node<T>& n) {
    if (!n.parents[0]->requires_grad) return;
    const int hout = hin * factor, wout = win * factor;
    for (int bc = 0; bc < batch * ch; ++bc) {
      T* xg = n.parents[0]->grad.data() + static_cast<std::size_t>(bc) * hin * win;
      const T* grow = n.grad.data() + static_cast<std::size_t>(bc) * hout * wout;
      for (int ho = 0; ho < hout; ++ho)
        for (int wo = 0; wo < wout; ++wo) xg[(ho / factor) * win + (wo / factor)] += grow[ho * wout + wo];
    }
  };
  return out;
}

// y[b,c,...] = x[b,c,...] + s[b,c]
template <class T>
Var<T> broadcast_add_channel(const Var<T>& x, const Var<T>& s) {
  if (x->shape.size() < 2 || s->shape.size() != 2 || x->shape[0] != s->shape[0] ||
      x->shape[1] != s->shape[1])
    throw ShapeMismatch("broadcast_add_channel: incompatible shapes");
  const int groups = x->shape[0] * x->shape[1];
  const std::size_t inner = x->numel() / static_cast<std::size_t>(groups);
  auto out = detail::make_result<T>(x->shape, {x, s});
  for (int g = 0; g < groups; ++g) {
    const T sv = s->value[static_cast<std::size_t>(g)];
    const T* xr = x->value.data() + g * inner;
    T* orow = out->value.data() + g * inner;
    for (std::size_t i = 0; i < inner; ++i) orow[i] = xr[i] + sv;
  }
  out->backward_fn = [groups, inner](Node<T>& n) {
    for (int g = 0; g < groups; ++g) {
      const T* grow = n.grad.data() + g * inner;
      if (n.parents[0]->requires_grad) {
        T* xg = n.parents[0]->grad.data() + g * inner;
        for (std::size_t i = 0; i < inner; ++i) xg[i] += grow[i];
      }
      if (n.parents[1]->requires_grad) {
        T s = T(0);
        for (std::size_t i = 0; i < inner; ++i) s += grow[i];
        n.parents[1]->grad[static_cast<std::size_t>(g)] += s;
      }
    }
  };
  return out;
}

// per-sample, per-channel standardization over the trailing spatial dims
// (no running statistics)
template <class T>
Var<T> channel_norm(const Var<T>& x, T eps = T(1e-5)) {
  if (x->shape.size() < 3) throw ShapeMismatch("channel_norm: expects [B,C,spatial...]");
  const int groups = x->shape[0] * x->shape[1];
  const std::size_t inner = x->numel() / static_cast<std::size_t>(groups);
  auto out = detail::make_result<T>(x->shape, {x});
  std::vector<T> inv_std(static_cast<std::size_t>(groups));
  for (int g = 0; g < groups; ++g) {
    const T* xr = x->value.data() + g * inner;
    T mean = T(0);
    for (std::size_t i = 0; i < inner; ++i) mean += xr[i];
    mean /= static_cast<T>(inner);
    T var = T(0);
    for (std::size_t i = 0; i < inner; ++i) var += (xr[i] - mean) * (xr[i] - mean);
    var /= static_cast<T>(inner);
    const T inv = T(1) / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(g)] = inv;
    T* orow = out->value.data() + g * inner;
    for (std::size_t i = 0; i < inner; ++i) orow[i] = (xr[i] - mean) * inv;
  }
  out->backward_fn = [groups, inner, inv_std = std::move(inv_std)](Node<T>& n) {
    if (!n.parents[0]->requires_grad) return;
    for (int g = 0; g < groups; ++g) {
      const T* y = n.value.data() + g * inner;
      const T* gy = n.grad.data() + g * inner;
      T* gx = n.parents[0]->grad.data() + g * inner;
      T mean_gy = T(0), mean_gyy = T(0);
      for (std::size_t i = 0; i < inner; ++i) {
        mean_gy += gy[i];
        mean_gyy += gy[i] * y[i];
      }
      mean_gy /= static_cast<T>(inner);
      mean_gyy /= static_cast<T>(inner);
      const T inv = inv_std[static_cast<std::size_t>(g)];
      for (std::size_t i = 0; i < inner; ++i) gx[i] += inv * (gy[i] - mean_gy - y[i] * mean_gyy);
    }
  };
  return out;
}

// --- backward --------------------------------------------------------------

template <class T>
void backward(const Var<T>& root) {
  if (root->numel() != 1) throw NonScalarRoot();
  // iterative post-order DFS; emission order is topological
  std::vector<Node<T>*> topo;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.get(), 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }
  if (root->requires_grad) {
    root->grad[0] += T(1);
    for (auto it = topo.rbegin(); it != topo.rend(); ++it)
      if ((*it)->backward_fn && (*it)->requires_grad) (*it)->backward_fn(**it);
  }
}

// --- optimizer ---------------------------------------------------------------

template <class T>
struct AdamState {
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
  long step = 0;
  std::vector<std::vector<T>> m, v;

  void init(const std::vector<Var<T>>& params) {
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.emplace_back(p->numel(), T(0));
      v.emplace_back(p->numel(), T(0));
    }
    step = 0;
  }
};

template <class T>
void adam_step(const std::vector<Var<T>>& params, AdamState<T>& state, T lr) {
  if (state.m.size() != params.size()) throw TensorError("adam_step: state not initialized");
  ++state.step;
  const T bc1 = T(1) - std::pow(state.beta1, static_cast<T>(state.step));
  const T bc2 = T(1) - std::pow(state.beta2, static_cast<T>(state.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Node<T>& param = *params[p];
    if (state.m[p].size() != param.numel()) throw TensorError("adam_step: shape drift");
    for (std::size_t i = 0; i < param.numel(); ++i) {
      const T g = param.grad[i];
      state.m[p][i] = state.beta1 * state.m[p][i] + (T(1) - state.beta1) * g;
      state.v[p][i] = state.beta2 * state.v[p][i] + (T(1) - state.beta2) * g * g;
      const T mhat = state.m[p][i] / bc1;
      const T vhat = state.v[p][i] / bc2;
      param.value[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

template <class T>
void zero_grad(const std::vector<Var<T>>& params) {
  for (const auto& p : params) std::fill(p->grad.begin(), p->grad.end(), T(0));
}

// --- learning-rate schedule ---------------------------------------------------

// Cosine annealing with warm restarts: each cycle ramps linearly from lr_min
// to lr_max over `warmup_steps`, then cosine-decays to lr_min by the cycle's
// last step. Cycle k has length cycle_steps * cycle_mult^k.
struct LrSchedule {
  double lr_max = 1e-2;
  double lr_min = 1e-6;
  int cycle_steps = 2000;   // T0
  double cycle_mult = 2.0;
  int warmup_steps = 200;
};

inline double lr_at(long step, const LrSchedule& s) {
  if (step < 0) throw TensorError("lr_at: negative step");
  long start = 0;
  long len = std::max(1, s.cycle_steps);
  while (step >= start + len) {
    start += len;
    len = std::max<long>(1, std::lround(static_cast<double>(len) * s.cycle_mult));
  }
  const long in_cycle = step - start;
  if (in_cycle < s.warmup_steps)
    return s.lr_min + (s.lr_max - s.lr_min) * static_cast<double>(in_cycle) / s.warmup_steps;
  const long denom = len - s.warmup_steps - 1;
  if (denom <= 0) return s.lr_min;
  const double phase = static_cast<double>(in_cycle - s.warmup_steps) / static_cast<double>(denom);
  return s.lr_min + 0.5 * (s.lr_max - s.lr_min) * (1.0 + std::cos(phase * 3.14159265358979323846));
}

// --- checkpoints ---------------------------------------------------------------

// binary layout: "ECHL" | u32 version | u32 count, then per parameter:
// u32 name_len | name | u32 rank | u32 dims[rank] | f32 payload (little-endian)
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <class T>
void save_checkpoint(const std::string& path, const std::vector<std::pair<std::string, Var<T>>>& params) {
  static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes little-endian");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path);
  out.write("ECHL", 4);
  auto put_u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  put_u32(kCheckpointVersion);
  put_u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, var] : params) {
    put_u32(static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(static_cast<std::uint32_t>(var->shape.size()));
    for (int d : var->shape) put_u32(static_cast<std::uint32_t>(d));
    for (const T v : var->value) {
      const float f = static_cast<float>(v);
      out.write(reinterpret_cast<const char*>(&f), 4);
    }
  }
  if (!out) throw CheckpointError("short write: " + path);
}

template <class T>
void load_checkpoint(const std::string& path, const std::vector<std::pair<std::string, Var<T>>>& params) {
  static_assert(std::endian::native == std::endian::little, "checkpoint reader assumes little-endian");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "ECHL", 4) != 0) throw CheckpointError("bad checkpoint magic: " + path);
  auto get_u32 = [&]() {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  if (get_u32() != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version");
  const std::uint32_t count = get_u32();
  if (count != params.size()) throw CheckpointError("checkpoint parameter count mismatch");
  for (std::uint32_t p = 0; p < count; ++p) {
    const std::uint32_t name_len = get_u32();
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (name != params[p].first) throw CheckpointError("checkpoint name mismatch: " + name);
    const std::uint32_t rank = get_u32();
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<int>(get_u32());
    if (shape != params[p].second->shape) throw CheckpointError("checkpoint shape mismatch: " + name);
    for (T& v : params[p].second->value) {
      float f = 0.0f;
      in.read(reinterpret_cast<char*>(&f), 4);
      v = static_cast<T>(f);
    }
    if (!in) throw CheckpointError("truncated checkpoint: " + path);
  }
}

}  // namespace echolab::nn
