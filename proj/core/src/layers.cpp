#include "dgcw/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dgcw/ops.hpp"
#include "dgcw/rng.hpp"
#include "gemm.hpp"

namespace dgcw {

using detail::accumulate;
using detail::make_result;
using detail::wants_grad;

namespace {

struct Nchw {
  std::size_t n, c, h, w;
};

template <typename T>
Nchw nchw(const Tensor<T>& x, const char* op) {
  if (x.rank() != 4) throw ShapeError(std::string(op) + " expects N x C x H x W, got " + shape_str(x.shape()));
  const auto& s = x.shape();
  return {s[0], s[1], s[2], s[3]};
}

template <typename T>
Tensor<T> uniform_tensor(Shape shape, T bound, std::uint64_t seed, std::string_view name) {
  KeyedRng rng(seed, name);
  Buffer<T> v(shape_numel(shape));
  for (auto& e : v) e = static_cast<T>(rng.uniform(-1.0, 1.0)) * bound;
  return Tensor<T>::from(std::move(shape), std::move(v), true);
}

template <typename T>
void im2col(const T* x, std::size_t c, std::size_t h, std::size_t w, std::size_t k, std::size_t stride,
            std::size_t pad, std::size_t dil, std::size_t ho, std::size_t wo, T* col) {
  for (std::size_t ci = 0; ci < c; ++ci) {
    const T* xc = x + ci * h * w;
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        T* row = col + ((ci * k + ki) * k + kj) * ho * wo;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ki * dil) - static_cast<std::ptrdiff_t>(pad);
          T* dst = row + oy * wo;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(dst, dst + wo, T(0));
            continue;
          }
          const T* src = xc + static_cast<std::size_t>(iy) * w;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * stride + kj * dil) - static_cast<std::ptrdiff_t>(pad);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, std::size_t c, std::size_t h, std::size_t w, std::size_t k, std::size_t stride,
            std::size_t pad, std::size_t dil, std::size_t ho, std::size_t wo, T* x) {
  for (std::size_t ci = 0; ci < c; ++ci) {
    T* xc = x + ci * h * w;
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const T* row = col + ((ci * k + ki) * k + kj) * ho * wo;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ki * dil) - static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          T* dst = xc + static_cast<std::size_t>(iy) * w;
          const T* src = row + oy * wo;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * stride + kj * dil) - static_cast<std::ptrdiff_t>(pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

// Source coordinate for align_corners = false.
struct Tap {
  std::size_t i0, i1;
  double frac;
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    auto i0 = static_cast<std::size_t>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding,
                               std::size_t dilation) {
  const std::size_t span = dilation * (kernel - 1) + 1;
  if (in + 2 * padding < span) throw ShapeError("convolution window larger than padded input");
  return (in + 2 * padding - span) / stride + 1;
}

template <typename T>
LinearParams<T> make_linear(std::size_t in, std::size_t out, std::uint64_t seed, std::string_view name) {
  const T bound = T(1) / std::sqrt(static_cast<T>(in));
  LinearParams<T> p;
  p.weight = uniform_tensor<T>({out, in}, bound, seed, name);
  p.bias = Tensor<T>::zeros({out}, true);
  return p;
}

template <typename T>
Conv2dParams<T> make_conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                            std::size_t dilation, std::uint64_t seed, std::string_view name, bool bias) {
  if (kernel % 2 == 0) throw std::invalid_argument("make_conv2d expects an odd kernel");
  Conv2dParams<T> p;
  const T bound = T(1) / std::sqrt(static_cast<T>(in * kernel * kernel));
  p.weight = uniform_tensor<T>({out, in, kernel, kernel}, bound, seed, name);
  if (bias) p.bias = Tensor<T>::zeros({out}, true);
  p.stride = stride;
  p.dilation = dilation;
  p.padding = dilation * (kernel - 1) / 2;
  return p;
}

template <typename T>
BatchNormParams<T> make_batchnorm(std::size_t channels) {
  BatchNormParams<T> p;
  p.scale = Tensor<T>::full({channels}, T(1), true);
  p.shift = Tensor<T>::zeros({channels}, true);
  p.running_mean = Tensor<T>::zeros({channels});
  p.running_var = Tensor<T>::full({channels}, T(1));
  return p;
}

template <typename T>
Tensor<T> linear_1x1(const Tensor<T>& x, const LinearParams<T>& p) {
  const auto d = nchw(x, "linear_1x1");
  const std::size_t co = p.out_channels();
  if (p.in_channels() != d.c)
    throw ShapeError("linear_1x1 channel mismatch: input has " + std::to_string(d.c) + ", weight expects " +
                     std::to_string(p.in_channels()));
  const std::size_t hw = d.h * d.w;
  Buffer<T> out(d.n * co * hw);
  const T* W = p.weight.data().data();
  const T* B = p.bias.data().data();
  const T* X = x.data().data();
  for (std::size_t b = 0; b < d.n; ++b) {
    T* o = out.data() + b * co * hw;
    for (std::size_t c = 0; c < co; ++c) std::fill(o + c * hw, o + (c + 1) * hw, B[c]);
    kernel::gemm_nn(co, hw, d.c, W, d.c, X + b * d.c * hw, hw, o, hw, true);
  }
  auto weight = p.weight;
  auto bias = p.bias;
  return make_result<T>({d.n, co, d.h, d.w}, std::move(out), {x, weight, bias}, "linear_1x1",
                        [x, weight, bias, d, co, hw](std::span<const T> g) {
                          const T* W = weight.data().data();
                          const T* X = x.data().data();
                          const T* G = g.data();
                          if (wants_grad(x)) {
                            Buffer<T> gx(x.numel());
                            for (std::size_t b = 0; b < d.n; ++b)
                              kernel::gemm_tn(d.c, hw, co, W, d.c, G + b * co * hw, hw, gx.data() + b * d.c * hw, hw,
                                              false);
                            accumulate(x, std::span<const T>(gx));
                          }
                          if (wants_grad(weight)) {
                            Buffer<T> gw(co * d.c, T(0));
                            for (std::size_t b = 0; b < d.n; ++b)
                              kernel::gemm_nt(co, d.c, hw, G + b * co * hw, hw, X + b * d.c * hw, hw, gw.data(), d.c,
                                              true);
                            accumulate(weight, std::span<const T>(gw));
                          }
                          if (wants_grad(bias)) {
                            Buffer<T> gb(co, T(0));
                            for (std::size_t b = 0; b < d.n; ++b)
                              for (std::size_t c = 0; c < co; ++c) {
                                const T* gr = G + (b * co + c) * hw;
                                T s = 0;
                                for (std::size_t i = 0; i < hw; ++i) s += gr[i];
                                gb[c] += s;
                              }
                            accumulate(bias, std::span<const T>(gb));
                          }
                        });
}

template <typename T>
Tensor<T> linear_rows(const Tensor<T>& x, const LinearParams<T>& p) {
  const std::size_t in = p.in_channels(), out_c = p.out_channels();
  if (x.rank() < 1 || x.shape().back() != in)
    throw ShapeError("linear_rows expects last extent " + std::to_string(in) + ", got " + shape_str(x.shape()));
  const std::size_t rows = x.numel() / in;
  Shape out_shape = x.shape();
  out_shape.back() = out_c;
  Buffer<T> out(rows * out_c);
  const T* B = p.bias.data().data();
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(B, out_c, out.data() + r * out_c);
  kernel::gemm_nt(rows, out_c, in, x.data().data(), in, p.weight.data().data(), in, out.data(), out_c, true);
  auto weight = p.weight;
  auto bias = p.bias;
  return make_result<T>(out_shape, std::move(out), {x, weight, bias}, "linear_rows",
                        [x, weight, bias, rows, in, out_c](std::span<const T> g) {
                          if (wants_grad(x)) {
                            Buffer<T> gx(rows * in);
                            kernel::gemm_nn(rows, in, out_c, g.data(), out_c, weight.data().data(), in, gx.data(), in,
                                            false);
                            accumulate(x, std::span<const T>(gx));
                          }
                          if (wants_grad(weight)) {
                            Buffer<T> gw(out_c * in);
                            kernel::gemm_tn(out_c, in, rows, g.data(), out_c, x.data().data(), in, gw.data(), in, false);
                            accumulate(weight, std::span<const T>(gw));
                          }
                          if (wants_grad(bias)) {
                            Buffer<T> gb(out_c, T(0));
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t c = 0; c < out_c; ++c) gb[c] += g[r * out_c + c];
                            accumulate(bias, std::span<const T>(gb));
                          }
                        });
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Conv2dParams<T>& p) {
  const auto d = nchw(x, "conv2d");
  if (p.weight.rank() != 4 || p.weight.dim(2) != p.weight.dim(3))
    throw ShapeError("conv2d expects a square out x in x k x k weight");
  const std::size_t co = p.out_channels(), k = p.weight.dim(2);
  if (p.in_channels() != d.c)
    throw ShapeError("conv2d channel mismatch: input has " + std::to_string(d.c) + ", weight expects " +
                     std::to_string(p.in_channels()));
  if (p.stride == 0 || p.dilation == 0) throw ShapeError("conv2d stride and dilation must be positive");
  const std::size_t ho = conv_output_extent(d.h, k, p.stride, p.padding, p.dilation);
  const std::size_t wo = conv_output_extent(d.w, k, p.stride, p.padding, p.dilation);
  const std::size_t ckk = d.c * k * k, howo = ho * wo;
  const bool direct = k == 1 && p.stride == 1 && p.padding == 0;

  Buffer<T> out(d.n * co * howo);
  Buffer<T> col(direct ? 0 : ckk * howo);
  const T* W = p.weight.data().data();
  const T* X = x.data().data();
  for (std::size_t b = 0; b < d.n; ++b) {
    T* o = out.data() + b * co * howo;
    if (p.bias.defined()) {
      const T* B = p.bias.data().data();
      for (std::size_t c = 0; c < co; ++c) std::fill(o + c * howo, o + (c + 1) * howo, B[c]);
    } else {
      std::fill(o, o + co * howo, T(0));
    }
    const T* src = X + b * d.c * d.h * d.w;
    if (!direct) {
      im2col(src, d.c, d.h, d.w, k, p.stride, p.padding, p.dilation, ho, wo, col.data());
      src = col.data();
    }
    kernel::gemm_nn(co, howo, ckk, W, ckk, src, howo, o, howo, true);
  }
  col = Buffer<T>();

  auto weight = p.weight;
  auto bias = p.bias;
  const std::size_t stride = p.stride, pad = p.padding, dil = p.dilation;
  std::vector<Tensor<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result<T>(
      {d.n, co, ho, wo}, std::move(out), inputs, "conv2d",
      [x, weight, bias, d, co, k, ho, wo, ckk, howo, stride, pad, dil, direct](std::span<const T> g) {
        const T* W = weight.data().data();
        const T* X = x.data().data();
        const T* G = g.data();
        const bool need_x = wants_grad(x), need_w = wants_grad(weight);
        Buffer<T> gx(need_x ? x.numel() : 0, T(0));
        Buffer<T> gw(need_w ? co * ckk : 0, T(0));
        Buffer<T> col(direct ? 0 : ckk * howo);
        Buffer<T> dcol(direct || !need_x ? 0 : ckk * howo);
        for (std::size_t b = 0; b < d.n; ++b) {
          const T* gb = G + b * co * howo;
          if (need_w) {
            const T* src = X + b * d.c * d.h * d.w;
            if (!direct) {
              im2col(src, d.c, d.h, d.w, k, stride, pad, dil, ho, wo, col.data());
              src = col.data();
            }
            kernel::gemm_nt(co, ckk, howo, gb, howo, src, howo, gw.data(), ckk, true);
          }
          if (need_x) {
            T* gxb = gx.data() + b * d.c * d.h * d.w;
            if (direct) {
              kernel::gemm_tn(ckk, howo, co, W, ckk, gb, howo, gxb, howo, true);
            } else {
              kernel::gemm_tn(ckk, howo, co, W, ckk, gb, howo, dcol.data(), howo, false);
              col2im(dcol.data(), d.c, d.h, d.w, k, stride, pad, dil, ho, wo, gxb);
            }
          }
        }
        if (need_x) accumulate(x, std::span<const T>(gx));
        if (need_w) accumulate(weight, std::span<const T>(gw));
        if (wants_grad(bias)) {
          Buffer<T> gbias(co, T(0));
          for (std::size_t b = 0; b < d.n; ++b)
            for (std::size_t c = 0; c < co; ++c) {
              const T* gr = G + (b * co + c) * howo;
              T s = 0;
              for (std::size_t i = 0; i < howo; ++i) s += gr[i];
              gbias[c] += s;
            }
          accumulate(bias, std::span<const T>(gbias));
        }
      });
}

template <typename T>
Tensor<T> batchnorm(const Tensor<T>& x, BatchNormParams<T>& p, bool training) {
  const auto d = nchw(x, "batchnorm");
  if (p.scale.numel() != d.c) throw ShapeError("batchnorm channel mismatch");
  const std::size_t hw = d.h * d.w;
  const double count = static_cast<double>(d.n * hw);
  const T* X = x.data().data();
  Buffer<T> mean(d.c), inv_std(d.c);
  if (training) {
    auto rm = p.running_mean.mutable_data();
    auto rv = p.running_var.mutable_data();
    for (std::size_t c = 0; c < d.c; ++c) {
      double s = 0, q = 0;
      for (std::size_t b = 0; b < d.n; ++b) {
        const T* row = X + (b * d.c + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) s += row[i];
      }
      const double m = s / count;
      for (std::size_t b = 0; b < d.n; ++b) {
        const T* row = X + (b * d.c + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) q += (row[i] - m) * (row[i] - m);
      }
      const double var = q / count;
      mean[c] = static_cast<T>(m);
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(p.epsilon)));
      rm[c] = (T(1) - p.momentum) * rm[c] + p.momentum * static_cast<T>(m);
      rv[c] = (T(1) - p.momentum) * rv[c] + p.momentum * static_cast<T>(var);
    }
  } else {
    auto rm = p.running_mean.data();
    auto rv = p.running_var.data();
    for (std::size_t c = 0; c < d.c; ++c) {
      mean[c] = rm[c];
      inv_std[c] = T(1) / std::sqrt(rv[c] + p.epsilon);
    }
  }
  const T* gamma = p.scale.data().data();
  const T* beta = p.shift.data().data();
  Buffer<T> out(x.numel());
  Buffer<T> xhat(x.numel());
  for (std::size_t b = 0; b < d.n; ++b)
    for (std::size_t c = 0; c < d.c; ++c) {
      const std::size_t off = (b * d.c + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const T xh = (X[off + i] - mean[c]) * inv_std[c];
        xhat[off + i] = xh;
        out[off + i] = gamma[c] * xh + beta[c];
      }
    }
  auto scale = p.scale;
  auto shift = p.shift;
  return make_result<T>(
      x.shape(), std::move(out), {x, scale, shift}, "batchnorm",
      [x, scale, shift, d, hw, training, xhat = std::move(xhat), inv_std = std::move(inv_std)](std::span<const T> g) {
        const T* gamma = scale.data().data();
        Buffer<T> gs(d.c, T(0)), gsh(d.c, T(0));
        for (std::size_t b = 0; b < d.n; ++b)
          for (std::size_t c = 0; c < d.c; ++c) {
            const std::size_t off = (b * d.c + c) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              gsh[c] += g[off + i];
              gs[c] += g[off + i] * xhat[off + i];
            }
          }
        if (wants_grad(x)) {
          Buffer<T> gx(x.numel());
          const T count = static_cast<T>(d.n * hw);
          for (std::size_t b = 0; b < d.n; ++b)
            for (std::size_t c = 0; c < d.c; ++c) {
              const std::size_t off = (b * d.c + c) * hw;
              const T k = gamma[c] * inv_std[c];
              for (std::size_t i = 0; i < hw; ++i) {
                if (training)
                  gx[off + i] = k * (g[off + i] - gsh[c] / count - xhat[off + i] * gs[c] / count);
                else
                  gx[off + i] = k * g[off + i];
              }
            }
          accumulate(x, std::span<const T>(gx));
        }
        accumulate(scale, std::span<const T>(gs));
        accumulate(shift, std::span<const T>(gsh));
      });
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  return adaptive_avg_pool(x, 1, 1);
}

template <typename T>
Tensor<T> adaptive_avg_pool(const Tensor<T>& x, std::size_t out_h, std::size_t out_w) {
  const auto d = nchw(x, "adaptive_avg_pool");
  if (out_h == 0 || out_w == 0) throw ShapeError("pool target must be positive");
  auto window = [](std::size_t i, std::size_t in, std::size_t out) {
    std::size_t lo = (i * in) / out;
    std::size_t hi = ((i + 1) * in + out - 1) / out;
    return std::pair{lo, hi};
  };
  const T* X = x.data().data();
  Buffer<T> out(d.n * d.c * out_h * out_w);
  for (std::size_t p = 0; p < d.n * d.c; ++p)
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      auto [y0, y1] = window(oy, d.h, out_h);
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        auto [x0, x1] = window(ox, d.w, out_w);
        T s = 0;
        for (std::size_t y = y0; y < y1; ++y)
          for (std::size_t xx = x0; xx < x1; ++xx) s += X[(p * d.h + y) * d.w + xx];
        out[(p * out_h + oy) * out_w + ox] = s / static_cast<T>((y1 - y0) * (x1 - x0));
      }
    }
  return make_result<T>({d.n, d.c, out_h, out_w}, std::move(out), {x}, "adaptive_avg_pool",
                        [x, d, out_h, out_w, window](std::span<const T> g) {
                          Buffer<T> gx(x.numel(), T(0));
                          for (std::size_t p = 0; p < d.n * d.c; ++p)
                            for (std::size_t oy = 0; oy < out_h; ++oy) {
                              auto [y0, y1] = window(oy, d.h, out_h);
                              for (std::size_t ox = 0; ox < out_w; ++ox) {
                                auto [x0, x1] = window(ox, d.w, out_w);
                                const T gv = g[(p * out_h + oy) * out_w + ox] / static_cast<T>((y1 - y0) * (x1 - x0));
                                for (std::size_t y = y0; y < y1; ++y)
                                  for (std::size_t xx = x0; xx < x1; ++xx) gx[(p * d.h + y) * d.w + xx] += gv;
                              }
                            }
                          accumulate(x, std::span<const T>(gx));
                        });
}

template <typename T>
Tensor<T> resample_bilinear(const Tensor<T>& x, std::size_t out_h, std::size_t out_w) {
  const auto d = nchw(x, "resample_bilinear");
  if (out_h == 0 || out_w == 0) throw ShapeError("resample target must be positive");
  if (out_h == d.h && out_w == d.w) {
    return reshape(x, x.shape());
  }
  auto ty = bilinear_taps(d.h, out_h);
  auto tx = bilinear_taps(d.w, out_w);
  const T* X = x.data().data();
  Buffer<T> out(d.n * d.c * out_h * out_w);
  for (std::size_t p = 0; p < d.n * d.c; ++p) {
    const T* src = X + p * d.h * d.w;
    T* dst = out.data() + p * out_h * out_w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const auto& a = ty[oy];
      const T fy = static_cast<T>(a.frac);
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const auto& b = tx[ox];
        const T fx = static_cast<T>(b.frac);
        const T top = src[a.i0 * d.w + b.i0] * (T(1) - fx) + src[a.i0 * d.w + b.i1] * fx;
        const T bot = src[a.i1 * d.w + b.i0] * (T(1) - fx) + src[a.i1 * d.w + b.i1] * fx;
        dst[oy * out_w + ox] = top * (T(1) - fy) + bot * fy;
      }
    }
  }
  return make_result<T>({d.n, d.c, out_h, out_w}, std::move(out), {x}, "resample_bilinear",
                        [x, d, out_h, out_w, ty = std::move(ty), tx = std::move(tx)](std::span<const T> g) {
                          Buffer<T> gx(x.numel(), T(0));
                          for (std::size_t p = 0; p < d.n * d.c; ++p) {
                            T* dst = gx.data() + p * d.h * d.w;
                            const T* src = g.data() + p * out_h * out_w;
                            for (std::size_t oy = 0; oy < out_h; ++oy) {
                              const auto& a = ty[oy];
                              const T fy = static_cast<T>(a.frac);
                              for (std::size_t ox = 0; ox < out_w; ++ox) {
                                const auto& b = tx[ox];
                                const T fx = static_cast<T>(b.frac);
                                const T gv = src[oy * out_w + ox];
                                dst[a.i0 * d.w + b.i0] += gv * (T(1) - fy) * (T(1) - fx);
                                dst[a.i0 * d.w + b.i1] += gv * (T(1) - fy) * fx;
                                dst[a.i1 * d.w + b.i0] += gv * fy * (T(1) - fx);
                                dst[a.i1 * d.w + b.i1] += gv * fy * fx;
                              }
                            }
                          }
                          accumulate(x, std::span<const T>(gx));
                        });
}

LabelMap resample_nearest(const LabelMap& labels, std::size_t out_h, std::size_t out_w) {
  LabelMap out(labels.n, out_h, out_w);
  for (std::size_t b = 0; b < labels.n; ++b)
    for (std::size_t y = 0; y < out_h; ++y) {
      const std::size_t sy = std::min(labels.h - 1, (y * labels.h) / out_h);
      for (std::size_t x = 0; x < out_w; ++x) {
        const std::size_t sx = std::min(labels.w - 1, (x * labels.w) / out_w);
        out.at(b, y, x) = labels.at(b, sy, sx);
      }
    }
  return out;
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const LabelMap& labels, int ignore_index,
                        const std::vector<std::uint8_t>* keep) {
  const auto d = nchw(logits, "cross_entropy");
  if (labels.n != d.n || labels.h != d.h || labels.w != d.w)
    throw ShapeError("cross_entropy label map does not match logits " + shape_str(logits.shape()));
  if (keep && keep->size() != labels.size()) throw ShapeError("cross_entropy keep mask size mismatch");
  const std::size_t hw = d.h * d.w;
  const T* L = logits.data().data();
  Buffer<T> prob(logits.numel(), T(0));
  double total = 0;
  std::size_t counted = 0;
  for (std::size_t b = 0; b < d.n; ++b)
    for (std::size_t i = 0; i < hw; ++i) {
      const std::size_t pix = b * hw + i;
      const int y = labels.values[pix];
      if (y == ignore_index) continue;
      if (y < 0 || static_cast<std::size_t>(y) >= d.c)
        throw std::out_of_range("label " + std::to_string(y) + " outside [0, " + std::to_string(d.c) + ")");
      if (keep && !(*keep)[pix]) continue;
      const T* l = L + b * d.c * hw + i;
      T m = l[0];
      for (std::size_t c = 1; c < d.c; ++c) m = std::max(m, l[c * hw]);
      T s = 0;
      for (std::size_t c = 0; c < d.c; ++c) s += std::exp(l[c * hw] - m);
      const T lse = m + std::log(s);
      total += static_cast<double>(lse - l[static_cast<std::size_t>(y) * hw]);
      for (std::size_t c = 0; c < d.c; ++c) prob[b * d.c * hw + c * hw + i] = std::exp(l[c * hw] - lse);
      prob[b * d.c * hw + static_cast<std::size_t>(y) * hw + i] -= T(1);
      ++counted;
    }
  const T value = counted ? static_cast<T>(total / static_cast<double>(counted)) : T(0);
  const T inv = counted ? T(1) / static_cast<T>(counted) : T(0);
  return make_result<T>({1}, Buffer<T>{value}, {logits}, "cross_entropy",
                        [logits, inv, prob = std::move(prob)](std::span<const T> g) {
                          Buffer<T> gl(prob.size());
                          const T scale = g[0] * inv;
                          for (std::size_t i = 0; i < prob.size(); ++i) gl[i] = prob[i] * scale;
                          accumulate(logits, std::span<const T>(gl));
                        });
}

template <typename T>
std::vector<T> correct_class_probs(const Tensor<T>& logits, const LabelMap& labels, int ignore_index) {
  const auto d = nchw(logits, "correct_class_probs");
  if (labels.n != d.n || labels.h != d.h || labels.w != d.w)
    throw ShapeError("label map does not match logits " + shape_str(logits.shape()));
  const std::size_t hw = d.h * d.w;
  const T* L = logits.data().data();
  std::vector<T> out(labels.size(), T(-1));
  for (std::size_t b = 0; b < d.n; ++b)
    for (std::size_t i = 0; i < hw; ++i) {
      const int y = labels.values[b * hw + i];
      if (y == ignore_index) continue;
      if (y < 0 || static_cast<std::size_t>(y) >= d.c) throw std::out_of_range("label out of range");
      const T* l = L + b * d.c * hw + i;
      T m = l[0];
      for (std::size_t c = 1; c < d.c; ++c) m = std::max(m, l[c * hw]);
      T s = 0;
      for (std::size_t c = 0; c < d.c; ++c) s += std::exp(l[c * hw] - m);
      out[b * hw + i] = std::exp(l[static_cast<std::size_t>(y) * hw] - m) / s;
    }
  return out;
}

template <typename T>
LabelMap labels_from_tensor(const Tensor<T>& t) {
  const auto& s = t.shape();
  LabelMap out;
  if (s.size() == 2) {
    out = LabelMap(1, s[0], s[1]);
  } else if (s.size() == 3) {
    out = LabelMap(s[0], s[1], s[2]);
  } else {
    throw ShapeError("label tensor must be H x W or N x H x W");
  }
  auto d = t.data();
  for (std::size_t i = 0; i < d.size(); ++i) out.values[i] = static_cast<std::int32_t>(std::lround(d[i]));
  return out;
}

template <typename T>
Tensor<T> labels_to_tensor(const LabelMap& labels) {
  Buffer<T> v(labels.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(labels.values[i]);
  if (labels.n == 1) return Tensor<T>::from({labels.h, labels.w}, std::move(v));
  return Tensor<T>::from({labels.n, labels.h, labels.w}, std::move(v));
}

#define DGCW_INSTANTIATE_LAYERS(T)                                                                         \
  template LinearParams<T> make_linear<T>(std::size_t, std::size_t, std::uint64_t, std::string_view);      \
  template Conv2dParams<T> make_conv2d<T>(std::size_t, std::size_t, std::size_t, std::size_t, std::size_t, \
                                          std::uint64_t, std::string_view, bool);                          \
  template BatchNormParams<T> make_batchnorm<T>(std::size_t);                                               \
  template Tensor<T> linear_1x1(const Tensor<T>&, const LinearParams<T>&);                                 \
  template Tensor<T> linear_rows(const Tensor<T>&, const LinearParams<T>&);                                \
  template Tensor<T> conv2d(const Tensor<T>&, const Conv2dParams<T>&);                                     \
  template Tensor<T> batchnorm(const Tensor<T>&, BatchNormParams<T>&, bool);                               \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                                    \
  template Tensor<T> adaptive_avg_pool(const Tensor<T>&, std::size_t, std::size_t);                        \
  template Tensor<T> resample_bilinear(const Tensor<T>&, std::size_t, std::size_t);                        \
  template Tensor<T> cross_entropy(const Tensor<T>&, const LabelMap&, int, const std::vector<std::uint8_t>*); \
  template std::vector<T> correct_class_probs(const Tensor<T>&, const LabelMap&, int);                     \
  template LabelMap labels_from_tensor(const Tensor<T>&);                                                  \
  template Tensor<T> labels_to_tensor<T>(const LabelMap&);

DGCW_INSTANTIATE_LAYERS(float)
DGCW_INSTANTIATE_LAYERS(double)

}  // namespace dgcw
