#include "dgcw/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "gemm.hpp"

namespace dgcw {

using detail::accumulate;
using detail::make_result;
using detail::wants_grad;

Shape broadcast_shape(const Shape& a, const Shape& b) {
  std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    std::size_t ea = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    std::size_t eb = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (ea != eb && ea != 1 && eb != 1)
      throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    out[i] = std::max(ea, eb);
  }
  return out;
}

namespace {

// Walks an output shape while tracking the matching offsets of two broadcast
// inputs.
class BroadcastWalk {
 public:
  BroadcastWalk(const Shape& out, const Shape& a, const Shape& b)
      : shape_(out), sa_(strides_for(out, a)), sb_(strides_for(out, b)), idx_(out.size(), 0) {}

  template <typename F>
  void run(F&& f) {
    std::size_t n = shape_numel(shape_);
    std::size_t oa = 0, ob = 0;
    const std::size_t r = shape_.size();
    for (std::size_t i = 0; i < n; ++i) {
      f(i, oa, ob);
      for (std::size_t d = r; d-- > 0;) {
        ++idx_[d];
        oa += sa_[d];
        ob += sb_[d];
        if (idx_[d] < shape_[d]) break;
        oa -= sa_[d] * shape_[d];
        ob -= sb_[d] * shape_[d];
        idx_[d] = 0;
      }
    }
  }

 private:
  static std::vector<std::size_t> strides_for(const Shape& out, const Shape& in) {
    std::vector<std::size_t> s(out.size(), 0);
    std::size_t stride = 1;
    for (std::size_t k = 0; k < in.size(); ++k) {
      std::size_t d_in = in.size() - 1 - k;
      std::size_t d_out = out.size() - 1 - k;
      s[d_out] = in[d_in] == 1 ? 0 : stride;
      stride *= in[d_in];
    }
    return s;
  }

  Shape shape_;
  std::vector<std::size_t> sa_, sb_, idx_;
};

template <typename T>
T apply_binary(BinaryKind kind, T x, T y) {
  switch (kind) {
    case BinaryKind::Add: return x + y;
    case BinaryKind::Sub: return x - y;
    case BinaryKind::Mul: return x * y;
    case BinaryKind::Div: return x / y;
  }
  return T(0);
}

const char* binary_name(BinaryKind kind) {
  switch (kind) {
    case BinaryKind::Add: return "add";
    case BinaryKind::Sub: return "sub";
    case BinaryKind::Mul: return "mul";
    case BinaryKind::Div: return "div";
  }
  return "?";
}

// (outer, n, inner) view of a reduction axis.
struct AxisView {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisView axis_view(const Shape& s, std::size_t axis) {
  if (axis >= s.size())
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
  v.n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

}  // namespace

template <typename T>
Tensor<T> elementwise(BinaryKind kind, const Tensor<T>& a, const Tensor<T>& b) {
  Shape out_shape = broadcast_shape(a.shape(), b.shape());
  const std::size_t n = shape_numel(out_shape);
  auto ad = a.data();
  auto bd = b.data();
  if (kind == BinaryKind::Div)
    for (auto v : bd)
      if (v == T(0)) throw std::domain_error("division by zero in elementwise divide");

  Buffer<T> out(n);
  const bool same = a.shape() == b.shape();
  if (same) {
    for (std::size_t i = 0; i < n; ++i) out[i] = apply_binary(kind, ad[i], bd[i]);
  } else {
    BroadcastWalk(out_shape, a.shape(), b.shape()).run([&](std::size_t i, std::size_t ia, std::size_t ib) {
      out[i] = apply_binary(kind, ad[ia], bd[ib]);
    });
  }

  return make_result<T>(out_shape, std::move(out), {a, b}, binary_name(kind),
                        [a, b, kind, out_shape, same](std::span<const T> g) {
                          const bool need_a = wants_grad(a), need_b = wants_grad(b);
                          Buffer<T> ga(need_a ? a.numel() : 0), gb(need_b ? b.numel() : 0);
                          auto ad = a.data();
                          auto bd = b.data();
                          auto rule = [&](std::size_t i, std::size_t ia, std::size_t ib) {
                            const T gi = g[i];
                            switch (kind) {
                              case BinaryKind::Add:
                                if (need_a) ga[ia] += gi;
                                if (need_b) gb[ib] += gi;
                                break;
                              case BinaryKind::Sub:
                                if (need_a) ga[ia] += gi;
                                if (need_b) gb[ib] -= gi;
                                break;
                              case BinaryKind::Mul:
                                if (need_a) ga[ia] += gi * bd[ib];
                                if (need_b) gb[ib] += gi * ad[ia];
                                break;
                              case BinaryKind::Div:
                                if (need_a) ga[ia] += gi / bd[ib];
                                if (need_b) gb[ib] -= gi * ad[ia] / (bd[ib] * bd[ib]);
                                break;
                            }
                          };
                          if (same) {
                            for (std::size_t i = 0; i < g.size(); ++i) rule(i, i, i);
                          } else {
                            BroadcastWalk(out_shape, a.shape(), b.shape()).run(rule);
                          }
                          if (need_a) accumulate(a, std::span<const T>(ga));
                          if (need_b) accumulate(b, std::span<const T>(gb));
                        });
}

template <typename T>
Tensor<T> elementwise(BinaryKind kind, const Tensor<T>& a, T b) {
  if (kind == BinaryKind::Div && b == T(0))
    throw std::domain_error("division by zero in elementwise divide");
  auto ad = a.data();
  Buffer<T> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) out[i] = apply_binary(kind, ad[i], b);
  return make_result<T>(a.shape(), std::move(out), {a}, binary_name(kind), [a, b, kind](std::span<const T> g) {
    Buffer<T> ga(g.size());
    auto ad = a.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      switch (kind) {
        case BinaryKind::Add:
        case BinaryKind::Sub: ga[i] = g[i]; break;
        case BinaryKind::Mul: ga[i] = g[i] * b; break;
        case BinaryKind::Div: ga[i] = g[i] / b; break;
      }
    }
    (void)ad;
    accumulate(a, std::span<const T>(ga));
  });
}

template <typename T>
Tensor<T> elementwise(UnaryKind kind, const Tensor<T>& a) {
  auto ad = a.data();
  const std::size_t n = ad.size();
  Buffer<T> out(n);
  const char* name = "unary";
  switch (kind) {
    case UnaryKind::Neg:
      name = "neg";
      for (std::size_t i = 0; i < n; ++i) out[i] = -ad[i];
      break;
    case UnaryKind::Square:
      name = "square";
      for (std::size_t i = 0; i < n; ++i) out[i] = ad[i] * ad[i];
      break;
    case UnaryKind::Relu:
      name = "relu";
      for (std::size_t i = 0; i < n; ++i) out[i] = ad[i] > T(0) ? ad[i] : T(0);
      break;
    case UnaryKind::Tanh:
      name = "tanh";
      for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(ad[i]);
      break;
    case UnaryKind::Exp:
      name = "exp";
      for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(ad[i]);
      break;
    case UnaryKind::Log:
      name = "log";
      for (std::size_t i = 0; i < n; ++i) {
        if (!(ad[i] > T(0))) throw std::domain_error("log of a non-positive value");
        out[i] = std::log(ad[i]);
      }
      break;
    case UnaryKind::Sigmoid:
      name = "sigmoid";
      for (std::size_t i = 0; i < n; ++i)
        out[i] = ad[i] >= T(0) ? T(1) / (T(1) + std::exp(-ad[i]))
                               : std::exp(ad[i]) / (T(1) + std::exp(ad[i]));
      break;
  }
  // Rules that need the output keep a copy of it; the result itself is not
  // captured to avoid a reference cycle.
  Buffer<T> saved;
  if (kind == UnaryKind::Tanh || kind == UnaryKind::Exp || kind == UnaryKind::Sigmoid) saved = out;
  return make_result<T>(a.shape(), std::move(out), {a}, name,
                        [a, kind, saved = std::move(saved)](std::span<const T> g) {
                          auto ad = a.data();
                          Buffer<T> ga(g.size());
                          for (std::size_t i = 0; i < g.size(); ++i) {
                            switch (kind) {
                              case UnaryKind::Neg: ga[i] = -g[i]; break;
                              case UnaryKind::Square: ga[i] = T(2) * ad[i] * g[i]; break;
                              case UnaryKind::Relu: ga[i] = ad[i] > T(0) ? g[i] : T(0); break;
                              case UnaryKind::Tanh: ga[i] = g[i] * (T(1) - saved[i] * saved[i]); break;
                              case UnaryKind::Exp: ga[i] = g[i] * saved[i]; break;
                              case UnaryKind::Log: ga[i] = g[i] / ad[i]; break;
                              case UnaryKind::Sigmoid: ga[i] = g[i] * saved[i] * (T(1) - saved[i]); break;
                            }
                          }
                          accumulate(a, std::span<const T>(ga));
                        });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  std::size_t batch = 1, M, K, N;
  bool shared_b = false;
  Shape out_shape;
  if (sa.size() == 2 && sb.size() == 2) {
    M = sa[0];
    K = sa[1];
    N = sb[1];
    if (sb[0] != K) throw ShapeError("matmul inner extents differ: " + shape_str(sa) + " x " + shape_str(sb));
    out_shape = {M, N};
  } else if (sa.size() == 3 && sb.size() == 3) {
    batch = sa[0];
    M = sa[1];
    K = sa[2];
    N = sb[2];
    if (sb[0] != batch) throw ShapeError("matmul batch extents differ");
    if (sb[1] != K) throw ShapeError("matmul inner extents differ: " + shape_str(sa) + " x " + shape_str(sb));
    out_shape = {batch, M, N};
  } else if (sa.size() == 3 && sb.size() == 2) {
    batch = sa[0];
    M = sa[1];
    K = sa[2];
    N = sb[1];
    shared_b = true;
    if (sb[0] != K) throw ShapeError("matmul inner extents differ: " + shape_str(sa) + " x " + shape_str(sb));
    out_shape = {batch, M, N};
  } else {
    throw ShapeError("matmul expects rank-2 or rank-3 operands, got " + shape_str(sa) + " x " + shape_str(sb));
  }

  Buffer<T> out(batch * M * N);
  const T* A = a.data().data();
  const T* B = b.data().data();
  if (shared_b) {
    kernel::gemm_nn(batch * M, N, K, A, K, B, N, out.data(), N, false);
  } else {
    for (std::size_t s = 0; s < batch; ++s)
      kernel::gemm_nn(M, N, K, A + s * M * K, K, B + s * K * N, N, out.data() + s * M * N, N, false);
  }

  return make_result<T>(out_shape, std::move(out), {a, b}, "matmul",
                        [a, b, batch, M, K, N, shared_b](std::span<const T> g) {
                          const T* A = a.data().data();
                          const T* B = b.data().data();
                          const T* G = g.data();
                          if (wants_grad(a)) {
                            Buffer<T> ga(batch * M * K);
                            if (shared_b) {
                              kernel::gemm_nt(batch * M, K, N, G, N, B, N, ga.data(), K, false);
                            } else {
                              for (std::size_t s = 0; s < batch; ++s)
                                kernel::gemm_nt(M, K, N, G + s * M * N, N, B + s * K * N, N,
                                                ga.data() + s * M * K, K, false);
                            }
                            accumulate(a, std::span<const T>(ga));
                          }
                          if (wants_grad(b)) {
                            Buffer<T> gb(shared_b ? K * N : batch * K * N);
                            if (shared_b) {
                              kernel::gemm_tn(K, N, batch * M, A, K, G, N, gb.data(), N, false);
                            } else {
                              for (std::size_t s = 0; s < batch; ++s)
                                kernel::gemm_tn(K, N, M, A + s * M * K, K, G + s * M * N, N,
                                                gb.data() + s * K * N, N, false);
                            }
                            accumulate(b, std::span<const T>(gb));
                          }
                        });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw ShapeError("cannot reshape " + shape_str(a.shape()) + " to " + shape_str(shape));
  auto d = a.data();
  Buffer<T> out(d.begin(), d.end());
  return make_result<T>(std::move(shape), std::move(out), {a}, "reshape",
                        [a](std::span<const T> g) { accumulate(a, g); });
}

template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<std::size_t>& axes) {
  const auto& s = a.shape();
  const std::size_t r = s.size();
  if (axes.size() != r) throw ShapeError("permute axis count does not match rank");
  std::vector<bool> used(r, false);
  for (auto ax : axes) {
    if (ax >= r || used[ax]) throw ShapeError("permute axes must be a permutation");
    used[ax] = true;
  }
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t d = r; d-- > 1;) in_stride[d - 1] = in_stride[d] * s[d];
  Shape out_shape(r);
  std::vector<std::size_t> stride(r);
  for (std::size_t d = 0; d < r; ++d) {
    out_shape[d] = s[axes[d]];
    stride[d] = in_stride[axes[d]];
  }
  // gather[i] = input offset of output element i
  const std::size_t n = a.numel();
  std::vector<std::size_t> gather(n);
  {
    std::vector<std::size_t> idx(r, 0);
    std::size_t off = 0;
    for (std::size_t i = 0; i < n; ++i) {
      gather[i] = off;
      for (std::size_t d = r; d-- > 0;) {
        ++idx[d];
        off += stride[d];
        if (idx[d] < out_shape[d]) break;
        off -= stride[d] * out_shape[d];
        idx[d] = 0;
      }
    }
  }
  auto ad = a.data();
  Buffer<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = ad[gather[i]];
  return make_result<T>(out_shape, std::move(out), {a}, "permute",
                        [a, gather = std::move(gather)](std::span<const T> g) {
                          Buffer<T> ga(g.size());
                          for (std::size_t i = 0; i < g.size(); ++i) ga[gather[i]] = g[i];
                          accumulate(a, std::span<const T>(ga));
                        });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a, std::size_t axis0, std::size_t axis1) {
  std::vector<std::size_t> axes(a.rank());
  std::iota(axes.begin(), axes.end(), 0);
  if (axis0 >= axes.size() || axis1 >= axes.size()) throw ShapeError("transpose axis out of range");
  std::swap(axes[axis0], axes[axis1]);
  return permute(a, axes);
}

template <typename T>
Tensor<T> reduce(ReduceKind kind, const Tensor<T>& a, std::size_t axis, bool keepdim) {
  const auto v = axis_view(a.shape(), axis);
  Shape out_shape = a.shape();
  if (keepdim) {
    out_shape[axis] = 1;
  } else {
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
    if (out_shape.empty()) out_shape = {1};
  }
  auto ad = a.data();
  Buffer<T> out(v.outer * v.inner);
  std::vector<std::size_t> argmax;
  Buffer<T> means;
  if (kind == ReduceKind::Max) argmax.resize(out.size());
  if (kind == ReduceKind::Variance) means.resize(out.size());

  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t in = 0; in < v.inner; ++in) {
      const T* x = ad.data() + o * v.n * v.inner + in;
      const std::size_t dst = o * v.inner + in;
      switch (kind) {
        case ReduceKind::Sum:
        case ReduceKind::Mean: {
          T s = 0;
          for (std::size_t k = 0; k < v.n; ++k) s += x[k * v.inner];
          out[dst] = kind == ReduceKind::Mean ? s / static_cast<T>(v.n) : s;
          break;
        }
        case ReduceKind::Max: {
          std::size_t best = 0;
          for (std::size_t k = 1; k < v.n; ++k)
            if (x[k * v.inner] > x[best * v.inner]) best = k;
          out[dst] = x[best * v.inner];
          argmax[dst] = best;
          break;
        }
        case ReduceKind::Variance: {
          // Kahan-compensated sums of x and x^2.
          T s = 0, cs = 0, q = 0, cq = 0;
          for (std::size_t k = 0; k < v.n; ++k) {
            const T xv = x[k * v.inner];
            T y = xv - cs;
            T t = s + y;
            cs = (t - s) - y;
            s = t;
            T y2 = xv * xv - cq;
            T t2 = q + y2;
            cq = (t2 - q) - y2;
            q = t2;
          }
          const T count = static_cast<T>(v.n);
          const T mean = s / count;
          means[dst] = mean;
          out[dst] = std::max(T(0), q / count - mean * mean);
          break;
        }
      }
    }
  }

  return make_result<T>(out_shape, std::move(out), {a}, "reduce",
                        [a, kind, v, argmax = std::move(argmax), means = std::move(means)](std::span<const T> g) {
                          auto ad = a.data();
                          Buffer<T> ga(a.numel(), T(0));
                          for (std::size_t o = 0; o < v.outer; ++o) {
                            for (std::size_t in = 0; in < v.inner; ++in) {
                              const std::size_t src = o * v.inner + in;
                              const std::size_t base = o * v.n * v.inner + in;
                              switch (kind) {
                                case ReduceKind::Sum:
                                  for (std::size_t k = 0; k < v.n; ++k) ga[base + k * v.inner] = g[src];
                                  break;
                                case ReduceKind::Mean:
                                  for (std::size_t k = 0; k < v.n; ++k)
                                    ga[base + k * v.inner] = g[src] / static_cast<T>(v.n);
                                  break;
                                case ReduceKind::Max:
                                  ga[base + argmax[src] * v.inner] = g[src];
                                  break;
                                case ReduceKind::Variance:
                                  for (std::size_t k = 0; k < v.n; ++k)
                                    ga[base + k * v.inner] = g[src] * T(2) * (ad[base + k * v.inner] - means[src]) /
                                                             static_cast<T>(v.n);
                                  break;
                              }
                            }
                          }
                          accumulate(a, std::span<const T>(ga));
                        });
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
  auto ad = a.data();
  T s = 0;
  for (auto x : ad) s += x;
  Buffer<T> out{s};
  return make_result<T>({1}, std::move(out), {a}, "sum_all", [a](std::span<const T> g) {
    Buffer<T> ga(a.numel(), g[0]);
    accumulate(a, std::span<const T>(ga));
  });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& a) {
  return mul(sum_all(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& a, std::size_t axis) {
  const auto v = axis_view(a.shape(), axis);
  auto ad = a.data();
  Buffer<T> out(a.numel());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t in = 0; in < v.inner; ++in) {
      const std::size_t base = o * v.n * v.inner + in;
      T m = ad[base];
      for (std::size_t k = 1; k < v.n; ++k) m = std::max(m, ad[base + k * v.inner]);
      T s = 0;
      for (std::size_t k = 0; k < v.n; ++k) {
        T e = std::exp(ad[base + k * v.inner] - m);
        out[base + k * v.inner] = e;
        s += e;
      }
      for (std::size_t k = 0; k < v.n; ++k) out[base + k * v.inner] /= s;
    }
  }
  Buffer<T> y = out;
  return make_result<T>(a.shape(), std::move(out), {a}, "softmax", [a, v, y = std::move(y)](std::span<const T> g) {
    Buffer<T> ga(a.numel());
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t in = 0; in < v.inner; ++in) {
        const std::size_t base = o * v.n * v.inner + in;
        T dot = 0;
        for (std::size_t k = 0; k < v.n; ++k) dot += g[base + k * v.inner] * y[base + k * v.inner];
        for (std::size_t k = 0; k < v.n; ++k) {
          const std::size_t i = base + k * v.inner;
          ga[i] = y[i] * (g[i] - dot);
        }
      }
    }
    accumulate(a, std::span<const T>(ga));
  });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  Shape out_shape = parts.front().shape();
  if (axis >= out_shape.size()) throw ShapeError("concat axis out of range");
  std::size_t total = 0;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    if (s.size() != out_shape.size()) throw ShapeError("concat rank mismatch");
    for (std::size_t d = 0; d < s.size(); ++d)
      if (d != axis && s[d] != out_shape[d])
        throw ShapeError("concat extents differ: " + shape_str(s) + " vs " + shape_str(out_shape));
    total += s[axis];
  }
  out_shape[axis] = total;
  const auto v = axis_view(out_shape, axis);
  Buffer<T> out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t start = 0;
  for (const auto& p : parts) {
    offsets.push_back(start);
    const std::size_t len = p.shape()[axis] * v.inner;
    auto pd = p.data();
    for (std::size_t o = 0; o < v.outer; ++o)
      std::copy_n(pd.data() + o * len, len, out.data() + o * v.n * v.inner + start * v.inner);
    start += p.shape()[axis];
  }
  return make_result<T>(out_shape, std::move(out), parts, "concat",
                        [parts, offsets, v, axis](std::span<const T> g) {
                          for (std::size_t k = 0; k < parts.size(); ++k) {
                            if (!wants_grad(parts[k])) continue;
                            const std::size_t len = parts[k].shape()[axis] * v.inner;
                            Buffer<T> gp(parts[k].numel());
                            for (std::size_t o = 0; o < v.outer; ++o)
                              std::copy_n(g.data() + o * v.n * v.inner + offsets[k] * v.inner, len,
                                          gp.data() + o * len);
                            accumulate(parts[k], std::span<const T>(gp));
                          }
                        });
}

template <typename T>
Tensor<T> flip(const Tensor<T>& a, std::size_t axis) {
  const auto v = axis_view(a.shape(), axis);
  auto ad = a.data();
  Buffer<T> out(a.numel());
  auto mirror = [v](std::span<const T> src, T* dst) {
    for (std::size_t o = 0; o < v.outer; ++o)
      for (std::size_t k = 0; k < v.n; ++k)
        std::copy_n(src.data() + (o * v.n + k) * v.inner, v.inner, dst + (o * v.n + (v.n - 1 - k)) * v.inner);
  };
  mirror(ad, out.data());
  return make_result<T>(a.shape(), std::move(out), {a}, "flip", [a, mirror](std::span<const T> g) {
    Buffer<T> ga(g.size());
    mirror(g, ga.data());
    accumulate(a, std::span<const T>(ga));
  });
}

#define DGCW_INSTANTIATE_OPS(T)                                                               \
  template Tensor<T> elementwise(BinaryKind, const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> elementwise(BinaryKind, const Tensor<T>&, T);                            \
  template Tensor<T> elementwise(UnaryKind, const Tensor<T>&);                                \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                        \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);              \
  template Tensor<T> transpose(const Tensor<T>&, std::size_t, std::size_t);                   \
  template Tensor<T> reduce(ReduceKind, const Tensor<T>&, std::size_t, bool);                 \
  template Tensor<T> sum_all(const Tensor<T>&);                                               \
  template Tensor<T> mean_all(const Tensor<T>&);                                              \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                  \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                      \
  template Tensor<T> flip(const Tensor<T>&, std::size_t);

DGCW_INSTANTIATE_OPS(float)
DGCW_INSTANTIATE_OPS(double)

}  // namespace dgcw
