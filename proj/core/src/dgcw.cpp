#include "dgcw/dgcw.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dgcw/ops.hpp"
#include "gemm.hpp"

namespace dgcw {

using detail::accumulate;
using detail::make_result;
using detail::wants_grad;

const char* norm_kind_name(NormKind k) {
  switch (k) {
    case NormKind::Dbs: return "dbs";
    case NormKind::Softmax: return "softmax";
    case NormKind::Tanh: return "tanh";
  }
  return "?";
}

NormKind parse_norm_kind(std::string_view s) {
  if (s == "dbs") return NormKind::Dbs;
  if (s == "softmax") return NormKind::Softmax;
  if (s == "tanh") return NormKind::Tanh;
  throw std::invalid_argument("unknown norm kind '" + std::string(s) + "' (dbs|softmax|tanh)");
}

const char* dgcw_impl_name(DgcwImpl k) { return k == DgcwImpl::Naive ? "naive" : "fused"; }

DgcwImpl parse_dgcw_impl(std::string_view s) {
  if (s == "naive") return DgcwImpl::Naive;
  if (s == "fused") return DgcwImpl::Fused;
  throw std::invalid_argument("unknown dgcw implementation '" + std::string(s) + "' (naive|fused)");
}

template <typename T>
DgcwParams<T> make_dgcw_params(const DgcwConfig& cfg, std::uint64_t seed, std::string_view prefix) {
  if (cfg.channels == 0 || cfg.downsample_ratio == 0 || cfg.block == 0)
    throw std::invalid_argument("dgcw channels, ratio and block must be positive");
  const std::string pre(prefix);
  const std::size_t c = cfg.channels, cg = cfg.hidden ? cfg.hidden : cfg.channels;
  DgcwParams<T> p;
  p.wq = make_linear<T>(c, c, seed, pre + ".wq");
  p.wk = make_linear<T>(c, c, seed, pre + ".wk");
  p.wv = make_linear<T>(c, c, seed, pre + ".wv");
  p.g1 = make_linear<T>(c, cg, seed, pre + ".g1");
  p.g2 = make_linear<T>(cg, c, seed, pre + ".g2");
  if (cfg.zero_init_g2) std::fill(p.g2.weight.mutable_data().begin(), p.g2.weight.mutable_data().end(), T(0));
  p.norm_kind = cfg.norm;
  p.downsample_ratio = cfg.downsample_ratio;
  p.downsample = cfg.downsample;
  p.block = cfg.block;
  p.epsilon = cfg.epsilon > 0 ? static_cast<T>(cfg.epsilon) : default_dbs_epsilon<T>();
  return p;
}

template <typename T>
void register_params(ParamSet<T>& set, const std::string& prefix, const DgcwParams<T>& p) {
  set.add(prefix + ".wq", p.wq);
  set.add(prefix + ".wk", p.wk);
  set.add(prefix + ".wv", p.wv);
  set.add(prefix + ".g1", p.g1);
  set.add(prefix + ".g2", p.g2);
}

std::pair<std::size_t, std::size_t> downsampled_extent(std::size_t h, std::size_t w, std::size_t ratio) {
  return {std::max<std::size_t>(1, h / ratio), std::max<std::size_t>(1, w / ratio)};
}

template <typename T>
Tensor<T> downsample(const Tensor<T>& f, std::size_t ratio, DownsampleKind kind) {
  auto [h, w] = downsampled_extent(f.dim(2), f.dim(3), ratio);
  if (kind == DownsampleKind::Bilinear) return resample_bilinear(f, h, w);
  return adaptive_avg_pool(f, h, w);
}

template <typename T>
Tensor<T> flatten_pixels(const Tensor<T>& x) {
  if (x.rank() != 4) throw ShapeError("flatten_pixels expects N x C x h x w");
  const auto& s = x.shape();
  return permute(reshape(x, {s[0], s[1], s[2] * s[3]}), {0, 2, 1});
}

template <typename T>
Tensor<T> unflatten_pixels(const Tensor<T>& x, std::size_t h, std::size_t w) {
  if (x.rank() != 3 || x.dim(1) != h * w) throw ShapeError("unflatten_pixels expects N x (h*w) x C");
  const auto& s = x.shape();
  return reshape(permute(x, {0, 2, 1}), {s[0], s[2], h, w});
}

template <typename T>
Qkv<T> qkv_project(const Tensor<T>& d, const DgcwParams<T>& p) {
  if (d.rank() != 4 || d.dim(1) != p.channels())
    throw ShapeError("qkv_project expects N x " + std::to_string(p.channels()) + " x h x w, got " +
                     shape_str(d.shape()));
  auto x = flatten_pixels(d);
  return {linear_rows(x, p.wq), linear_rows(x, p.wk), linear_rows(x, p.wv)};
}

template <typename T>
Tensor<T> channel_distance(const Tensor<T>& q, const Tensor<T>& k) {
  if (q.shape() != k.shape() || q.rank() != 3) throw ShapeError("channel_distance expects equal N x P x C inputs");
  const std::size_t n = q.dim(0), p = q.dim(1), c = q.dim(2);
  auto qi = reshape(q, {n, p, 1, c});
  auto kj = reshape(k, {n, 1, p, c});
  return square(sub(qi, kj));
}

namespace {

// Weights of one (i, j) pair over C channels.
template <typename T>
inline void pair_weights_from_distance(const T* m, std::size_t c, NormKind kind, T eps, T* w) {
  switch (kind) {
    case NormKind::Dbs: {
      T s = 0;
      for (std::size_t ch = 0; ch < c; ++ch) s += m[ch];
      const T denom = s + eps;
      for (std::size_t ch = 0; ch < c; ++ch) w[ch] = m[ch] / denom;
      break;
    }
    case NormKind::Softmax: {
      T mx = m[0];
      for (std::size_t ch = 1; ch < c; ++ch) mx = std::max(mx, m[ch]);
      T s = 0;
      for (std::size_t ch = 0; ch < c; ++ch) {
        w[ch] = std::exp(m[ch] - mx);
        s += w[ch];
      }
      for (std::size_t ch = 0; ch < c; ++ch) w[ch] /= s;
      break;
    }
    case NormKind::Tanh:
      for (std::size_t ch = 0; ch < c; ++ch) w[ch] = std::tanh(m[ch]);
      break;
  }
}

template <typename T>
inline void pair_weights(const T* q, const T* k, std::size_t c, NormKind kind, T eps, T* m, T* w) {
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T d = q[ch] - k[ch];
    m[ch] = d * d;
  }
  pair_weights_from_distance(m, c, kind, eps, w);
}

// dL/dM from dL/dW for one pair.
template <typename T>
inline void pair_weights_backward(const T* m, const T* w, const T* dw, std::size_t c, NormKind kind, T eps, T* dm) {
  switch (kind) {
    case NormKind::Dbs: {
      // dM_c = (sum_{c' != c} (dW_c - dW_c') M_c' + dW_c eps) / (S + eps)^2,
      // arranged so a dominant channel does not cancel against itself.
      T s = 0, dot = 0;
      for (std::size_t ch = 0; ch < c; ++ch) {
        s += m[ch];
        dot += dw[ch] * m[ch];
      }
      const T denom = s + eps;
      const T inv2 = T(1) / (denom * denom);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T others = s - m[ch];
        const T others_dot = dot - dw[ch] * m[ch];
        dm[ch] = (dw[ch] * others - others_dot + dw[ch] * eps) * inv2;
      }
      break;
    }
    case NormKind::Softmax: {
      T dot = 0;
      for (std::size_t ch = 0; ch < c; ++ch) dot += dw[ch] * w[ch];
      for (std::size_t ch = 0; ch < c; ++ch) dm[ch] = w[ch] * (dw[ch] - dot);
      break;
    }
    case NormKind::Tanh:
      for (std::size_t ch = 0; ch < c; ++ch) dm[ch] = dw[ch] * (T(1) - w[ch] * w[ch]);
      break;
  }
}

// DBS over the last axis with the same per-pair arithmetic as the fused path.
template <typename T>
Tensor<T> dbs_normalize(const Tensor<T>& m, T eps) {
  const std::size_t c = m.shape().back();
  const std::size_t rows = c ? m.numel() / c : 0;
  const T* M = m.data().data();
  Buffer<T> out(m.numel());
  for (std::size_t r = 0; r < rows; ++r) pair_weights_from_distance(M + r * c, c, NormKind::Dbs, eps, out.data() + r * c);
  return make_result<T>(m.shape(), std::move(out), {m}, "dbs_normalize", [m, c, rows, eps](std::span<const T> g) {
    const T* M = m.data().data();
    Buffer<T> dm(m.numel());
    for (std::size_t r = 0; r < rows; ++r)
      pair_weights_backward(M + r * c, static_cast<const T*>(nullptr), g.data() + r * c, c, NormKind::Dbs, eps,
                            dm.data() + r * c);
    accumulate(m, std::span<const T>(dm));
  });
}

}  // namespace

template <typename T>
Tensor<T> normalize_weights(const Tensor<T>& m, NormKind kind, T epsilon) {
  const std::size_t axis = m.rank() - 1;
  switch (kind) {
    case NormKind::Dbs: return dbs_normalize(m, epsilon);
    case NormKind::Softmax: return softmax(m, axis);
    case NormKind::Tanh: return tanh(m);
  }
  throw std::invalid_argument("bad norm kind");
}

template <typename T>
Tensor<T> weight_values(const Tensor<T>& w, const Tensor<T>& v) {
  if (w.rank() != 4 || v.rank() != 3) throw ShapeError("weight_values expects N x P x P x C and N x P x C");
  return mul(w, reshape(v, {v.dim(0), v.dim(1), 1, v.dim(2)}));
}

template <typename T>
Tensor<T> relationship(const Tensor<T>& w, const Tensor<T>& v, const DgcwParams<T>& p) {
  return linear_rows(relu(linear_rows(weight_values(w, v), p.g1)), p.g2);
}

template <typename T>
Tensor<T> sum_partners(const Tensor<T>& r) {
  if (r.rank() != 4) throw ShapeError("sum_partners expects N x P x P x C");
  return reduce(ReduceKind::Sum, r, 2);
}

template <typename T>
Tensor<T> residual_upsample(const Tensor<T>& s, const Tensor<T>& f, std::size_t ratio) {
  auto [h, w] = downsampled_extent(f.dim(2), f.dim(3), ratio);
  if (s.rank() != 3 || s.dim(1) != h * w)
    throw ShapeError("aggregated context has " + shape_str(s.shape()) + ", expected " + std::to_string(h * w) +
                     " pixels");
  return add(f, resample_bilinear(unflatten_pixels(s, h, w), f.dim(2), f.dim(3)));
}

template <typename T>
Tensor<T> aggregate(const Tensor<T>& r, const Tensor<T>& f, const DgcwParams<T>& p) {
  return residual_upsample(sum_partners(r), f, p.downsample_ratio);
}

namespace {

// Fills the weighted values (and optionally weights and distances) for rows
// i in [0, P) against keys j in [j0, j0 + jb). Row index is i * jb + (j - j0).
template <typename T>
void fill_block(const T* Q, const T* K, const T* V, std::size_t P, std::size_t C, std::size_t j0, std::size_t jb,
                NormKind kind, T eps, T* X, T* Wout, T* Mout, T* mscratch, T* wscratch) {
  for (std::size_t i = 0; i < P; ++i) {
    const T* qi = Q + i * C;
    const T* vi = V + i * C;
    for (std::size_t jj = 0; jj < jb; ++jj) {
      const std::size_t row = i * jb + jj;
      T* m = Mout ? Mout + row * C : mscratch;
      T* w = Wout ? Wout + row * C : wscratch;
      pair_weights(qi, K + (j0 + jj) * C, C, kind, eps, m, w);
      T* x = X + row * C;
      for (std::size_t ch = 0; ch < C; ++ch) x[ch] = w[ch] * vi[ch];
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> fused_pair_context(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, const DgcwParams<T>& p) {
  if (q.rank() != 3 || q.shape() != k.shape() || q.shape() != v.shape())
    throw ShapeError("fused_pair_context expects equal N x P x C inputs");
  const std::size_t N = q.dim(0), P = q.dim(1), C = q.dim(2);
  const std::size_t CG = p.g1.out_channels();
  if (p.g1.in_channels() != C || p.g2.in_channels() != CG || p.g2.out_channels() != C)
    throw ShapeError("fused_pair_context parameter shapes do not match channel count");
  const std::size_t B = std::max<std::size_t>(1, std::min(p.block, P));
  const NormKind kind = p.norm_kind;
  const T eps = p.epsilon;

  const T* Q = q.data().data();
  const T* K = k.data().data();
  const T* V = v.data().data();
  const T* G1 = p.g1.weight.data().data();
  const T* B1 = p.g1.bias.data().data();
  const T* G2 = p.g2.weight.data().data();
  const T* B2 = p.g2.bias.data().data();

  Buffer<T> out(N * P * C);
  // Per-sample sum over partners of the hidden activations, kept for backward.
  Buffer<T> hsum(N * P * CG, T(0));
  {
    Buffer<T> X(P * B * C), Z(P * B * CG), mscr(C), wscr(C);
    for (std::size_t n = 0; n < N; ++n) {
      const T* Qn = Q + n * P * C;
      const T* Kn = K + n * P * C;
      const T* Vn = V + n * P * C;
      T* H = hsum.data() + n * P * CG;
      for (std::size_t j0 = 0; j0 < P; j0 += B) {
        const std::size_t jb = std::min(B, P - j0);
        fill_block(Qn, Kn, Vn, P, C, j0, jb, kind, eps, X.data(), static_cast<T*>(nullptr),
                   static_cast<T*>(nullptr), mscr.data(), wscr.data());
        const std::size_t rows = P * jb;
        for (std::size_t r = 0; r < rows; ++r) std::copy_n(B1, CG, Z.data() + r * CG);
        kernel::gemm_nt(rows, CG, C, X.data(), C, G1, C, Z.data(), CG, true);
        for (std::size_t i = 0; i < P; ++i) {
          T* hi = H + i * CG;
          for (std::size_t jj = 0; jj < jb; ++jj) {
            const T* z = Z.data() + (i * jb + jj) * CG;
            for (std::size_t h = 0; h < CG; ++h) hi[h] += z[h] > T(0) ? z[h] : T(0);
          }
        }
      }
      T* On = out.data() + n * P * C;
      const T pcount = static_cast<T>(P);
      for (std::size_t i = 0; i < P; ++i)
        for (std::size_t c = 0; c < C; ++c) On[i * C + c] = pcount * B2[c];
      kernel::gemm_nt(P, C, CG, H, CG, G2, CG, On, C, true);
    }
  }

  auto g1w = p.g1.weight, g1b = p.g1.bias, g2w = p.g2.weight, g2b = p.g2.bias;
  return make_result<T>(
      {N, P, C}, std::move(out), std::vector<Tensor<T>>{q, k, v, g1w, g1b, g2w, g2b}, "dgcw_fused",
      [q, k, v, g1w, g1b, g2w, g2b, N, P, C, CG, B, kind, eps, hsum = std::move(hsum)](std::span<const T> g) {
        const T* Q = q.data().data();
        const T* K = k.data().data();
        const T* V = v.data().data();
        const T* G1 = g1w.data().data();
        const T* B1 = g1b.data().data();
        const T* G2 = g2w.data().data();
        const bool need_qk = wants_grad(q) || wants_grad(k);
        const bool need_inner = need_qk || wants_grad(v) || wants_grad(g1w) || wants_grad(g1b);

        Buffer<T> dq(N * P * C, T(0)), dk(N * P * C, T(0)), dv(N * P * C, T(0));
        Buffer<T> dg1w(CG * C, T(0)), dg1b(CG, T(0)), dg2w(C * CG, T(0)), dg2b(C, T(0));
        Buffer<T> dH(P * CG);
        Buffer<T> X(P * B * C), Wb(P * B * C), Mb(P * B * C), Z(P * B * CG), dZ(P * B * CG), dX(P * B * C);
        Buffer<T> dw(C), dm(C);

        for (std::size_t n = 0; n < N; ++n) {
          const T* Gn = g.data() + n * P * C;
          const T* Hn = hsum.data() + n * P * CG;
          // out = H G2^T + P b2
          kernel::gemm_tn(C, CG, P, Gn, C, Hn, CG, dg2w.data(), CG, true);
          for (std::size_t i = 0; i < P; ++i)
            for (std::size_t c = 0; c < C; ++c) dg2b[c] += static_cast<T>(P) * Gn[i * C + c];
          if (!need_inner) continue;
          kernel::gemm_nn(P, CG, C, Gn, C, G2, CG, dH.data(), CG, false);

          const T* Qn = Q + n * P * C;
          const T* Kn = K + n * P * C;
          const T* Vn = V + n * P * C;
          T* dQn = dq.data() + n * P * C;
          T* dKn = dk.data() + n * P * C;
          T* dVn = dv.data() + n * P * C;
          for (std::size_t j0 = 0; j0 < P; j0 += B) {
            const std::size_t jb = std::min(B, P - j0);
            const std::size_t rows = P * jb;
            fill_block(Qn, Kn, Vn, P, C, j0, jb, kind, eps, X.data(), Wb.data(), Mb.data(), static_cast<T*>(nullptr),
                       static_cast<T*>(nullptr));
            for (std::size_t r = 0; r < rows; ++r) std::copy_n(B1, CG, Z.data() + r * CG);
            kernel::gemm_nt(rows, CG, C, X.data(), C, G1, C, Z.data(), CG, true);
            // Every partner j of row i receives the same upstream gradient.
            for (std::size_t i = 0; i < P; ++i)
              for (std::size_t jj = 0; jj < jb; ++jj) {
                const std::size_t r = i * jb + jj;
                for (std::size_t h = 0; h < CG; ++h)
                  dZ[r * CG + h] = Z[r * CG + h] > T(0) ? dH[i * CG + h] : T(0);
              }
            kernel::gemm_tn(CG, C, rows, dZ.data(), CG, X.data(), C, dg1w.data(), C, true);
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t h = 0; h < CG; ++h) dg1b[h] += dZ[r * CG + h];
            kernel::gemm_nn(rows, C, CG, dZ.data(), CG, G1, C, dX.data(), C, false);
            for (std::size_t i = 0; i < P; ++i) {
              const T* qi = Qn + i * C;
              const T* vi = Vn + i * C;
              for (std::size_t jj = 0; jj < jb; ++jj) {
                const std::size_t r = i * jb + jj;
                const T* dx = dX.data() + r * C;
                const T* w = Wb.data() + r * C;
                for (std::size_t c = 0; c < C; ++c) {
                  dw[c] = dx[c] * vi[c];
                  dVn[i * C + c] += dx[c] * w[c];
                }
                if (!need_qk) continue;
                pair_weights_backward(Mb.data() + r * C, w, dw.data(), C, kind, eps, dm.data());
                const T* kj = Kn + (j0 + jj) * C;
                T* dkj = dKn + (j0 + jj) * C;
                for (std::size_t c = 0; c < C; ++c) {
                  const T t = T(2) * (qi[c] - kj[c]) * dm[c];
                  dQn[i * C + c] += t;
                  dkj[c] -= t;
                }
              }
            }
          }
        }
        accumulate(q, std::span<const T>(dq));
        accumulate(k, std::span<const T>(dk));
        accumulate(v, std::span<const T>(dv));
        accumulate(g1w, std::span<const T>(dg1w));
        accumulate(g1b, std::span<const T>(dg1b));
        accumulate(g2w, std::span<const T>(dg2w));
        accumulate(g2b, std::span<const T>(dg2b));
      });
}

template <typename T>
Tensor<T> dgcw_forward(const Tensor<T>& f, const DgcwParams<T>& p, DgcwImpl impl) {
  if (f.rank() != 4) throw ShapeError("dgcw_forward expects N x C x H x W");
  if (f.dim(2) < p.downsample_ratio || f.dim(3) < p.downsample_ratio)
    throw ShapeError("dgcw_forward: spatial extents " + shape_str(f.shape()) + " smaller than downsample ratio " +
                     std::to_string(p.downsample_ratio));
  auto qkv = qkv_project(downsample(f, p.downsample_ratio, p.downsample), p);
  if (impl == DgcwImpl::Fused) return residual_upsample(fused_pair_context(qkv.q, qkv.k, qkv.v, p), f, p.downsample_ratio);
  auto m = channel_distance(qkv.q, qkv.k);
  auto w = normalize_weights(m, p.norm_kind, p.epsilon);
  auto r = relationship(w, qkv.v, p);
  return aggregate(r, f, p);
}

#define DGCW_INSTANTIATE_MODULE(T)                                                                   \
  template DgcwParams<T> make_dgcw_params<T>(const DgcwConfig&, std::uint64_t, std::string_view);    \
  template void register_params(ParamSet<T>&, const std::string&, const DgcwParams<T>&);             \
  template Tensor<T> downsample(const Tensor<T>&, std::size_t, DownsampleKind);                      \
  template Tensor<T> flatten_pixels(const Tensor<T>&);                                               \
  template Tensor<T> unflatten_pixels(const Tensor<T>&, std::size_t, std::size_t);                   \
  template Qkv<T> qkv_project(const Tensor<T>&, const DgcwParams<T>&);                               \
  template Tensor<T> channel_distance(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> normalize_weights(const Tensor<T>&, NormKind, T);                               \
  template Tensor<T> weight_values(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> relationship(const Tensor<T>&, const Tensor<T>&, const DgcwParams<T>&);         \
  template Tensor<T> sum_partners(const Tensor<T>&);                                                 \
  template Tensor<T> residual_upsample(const Tensor<T>&, const Tensor<T>&, std::size_t);               \
  template Tensor<T> aggregate(const Tensor<T>&, const Tensor<T>&, const DgcwParams<T>&);            \
  template Tensor<T> fused_pair_context(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                        const DgcwParams<T>&);                                       \
  template Tensor<T> dgcw_forward(const Tensor<T>&, const DgcwParams<T>&, DgcwImpl);

DGCW_INSTANTIATE_MODULE(float)
DGCW_INSTANTIATE_MODULE(double)

}  // namespace dgcw
