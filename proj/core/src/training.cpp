#include "dgcw/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "dgcw/layers.hpp"
#include "dgcw/metrics.hpp"
#include "dgcw/ops.hpp"

namespace dgcw {

double poly_lr(double base_lr, std::size_t iter, std::size_t max_iter, double power) {
  if (iter > max_iter)
    throw std::out_of_range("poly_lr: iter " + std::to_string(iter) + " exceeds max_iter " + std::to_string(max_iter));
  if (iter == max_iter) return 0.0;
  return base_lr * std::pow(1.0 - static_cast<double>(iter) / static_cast<double>(max_iter), power);
}

template <typename T>
OptimState<T> make_optim_state(const ParamSet<T>& params, const SgdConfig& cfg, std::size_t max_iter) {
  OptimState<T> s;
  for (const auto& e : params.entries()) s.velocity.emplace_back(e.tensor.numel(), T(0));
  s.base_lr = cfg.base_lr;
  s.momentum = cfg.momentum;
  s.weight_decay = cfg.weight_decay;
  s.max_iter = max_iter;
  return s;
}

template <typename T>
void sgd_step(const ParamSet<T>& params, OptimState<T>& state, double lr) {
  const auto& entries = params.entries();
  if (state.velocity.size() != entries.size()) throw std::invalid_argument("optimizer state does not match parameters");
  const T rate = static_cast<T>(lr), mom = static_cast<T>(state.momentum);
  for (std::size_t p = 0; p < entries.size(); ++p) {
    const auto& e = entries[p];
    if (e.role == ParamRole::Buffer) continue;
    auto tensor = e.tensor;
    auto& v = state.velocity[p];
    if (v.size() != tensor.numel()) throw std::invalid_argument("optimizer state shape mismatch for " + e.name);
    const T decay = e.role == ParamRole::NormAffine ? T(0) : static_cast<T>(state.weight_decay);
    const bool has_grad = tensor.has_grad();
    std::span<const T> g = has_grad ? tensor.grad() : std::span<const T>{};
    auto w = tensor.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = mom * v[i] + (has_grad ? g[i] : T(0)) + decay * w[i];
      w[i] -= rate * v[i];
    }
  }
}

template <typename T>
std::vector<std::uint8_t> ohem_filter(std::span<const T> probs, double threshold, std::size_t min_kept) {
  std::vector<std::uint8_t> keep(probs.size(), 0);
  std::vector<std::size_t> valid;
  std::size_t hard = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] < T(0)) continue;
    valid.push_back(i);
    if (static_cast<double>(probs[i]) < threshold) {
      keep[i] = 1;
      ++hard;
    }
  }
  const std::size_t need = std::min(min_kept, valid.size());
  if (hard >= need) return keep;
  std::stable_sort(valid.begin(), valid.end(), [&](std::size_t a, std::size_t b) { return probs[a] < probs[b]; });
  std::fill(keep.begin(), keep.end(), 0);
  for (std::size_t i = 0; i < need; ++i) keep[valid[i]] = 1;
  return keep;
}

template <typename T>
Sample<T> augment(const Tensor<T>& image, const LabelMap& labels, const AugmentSpec& spec, KeyedRng& rng) {
  if (image.rank() != 3) throw ShapeError("augment expects a C x H x W image");
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (labels.n != 1 || labels.h != h || labels.w != w) throw ShapeError("augment: labels do not match the image");
  if (spec.crop == 0) throw std::invalid_argument("crop size must be positive");
  const double scale = rng.uniform(spec.scale_min, spec.scale_max);
  const bool mirror = rng.uniform() < spec.flip_probability;
  const double uy = rng.uniform(), ux = rng.uniform();

  NoGradGuard guard;
  const std::size_t sh = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(h * scale)));
  const std::size_t sw = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(w * scale)));
  auto x = reshape(image, {1, c, h, w});
  LabelMap lab = labels;
  if (sh != h || sw != w) {
    x = resample_bilinear(x, sh, sw);
    lab = resample_nearest(labels, sh, sw);
  }
  if (mirror) {
    x = flip(x, 3);
    for (std::size_t y = 0; y < sh; ++y) std::reverse(lab.values.begin() + y * sw, lab.values.begin() + (y + 1) * sw);
  }

  const std::size_t crop = spec.crop;
  const std::size_t ph = std::max(sh, crop), pw = std::max(sw, crop);
  const std::size_t oy = std::min(static_cast<std::size_t>(uy * static_cast<double>(ph - crop + 1)), ph - crop);
  const std::size_t ox = std::min(static_cast<std::size_t>(ux * static_cast<double>(pw - crop + 1)), pw - crop);
  Buffer<T> out(c * crop * crop, T(0));
  LabelMap out_lab(1, crop, crop, kIgnoreIndex);
  const T* src = x.data().data();
  for (std::size_t y = 0; y < crop; ++y) {
    const std::size_t sy = y + oy;
    if (sy >= sh) continue;
    for (std::size_t xx = 0; xx < crop; ++xx) {
      const std::size_t sx = xx + ox;
      if (sx >= sw) continue;
      for (std::size_t ch = 0; ch < c; ++ch) out[(ch * crop + y) * crop + xx] = src[(ch * sh + sy) * sw + sx];
      out_lab.at(0, y, xx) = lab.at(0, sy, sx);
    }
  }
  return {Tensor<T>::from({c, crop, crop}, std::move(out)), std::move(out_lab)};
}

namespace {

template <typename T>
SegBatch<T> stack_samples(const std::vector<Sample<T>>& samples) {
  const std::size_t n = samples.size(), c = samples[0].image.dim(0), h = samples[0].image.dim(1),
                    w = samples[0].image.dim(2), per = c * h * w;
  Buffer<T> data(n * per);
  LabelMap labels(n, h, w);
  for (std::size_t b = 0; b < n; ++b) {
    if (samples[b].image.shape() != samples[0].image.shape()) throw ShapeError("batch images differ in shape");
    std::copy(samples[b].image.data().begin(), samples[b].image.data().end(), data.begin() + b * per);
    std::copy(samples[b].labels.values.begin(), samples[b].labels.values.end(), labels.values.begin() + b * h * w);
  }
  return {Tensor<T>::from({n, c, h, w}, std::move(data)), std::move(labels)};
}

std::vector<std::size_t> epoch_permutation(std::uint64_t seed, std::size_t epoch, std::size_t n) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  KeyedRng rng(seed, "shuffle", epoch);
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  return perm;
}

}  // namespace

template <typename T>
SegBatch<T> make_batch(const Dataset& data, std::span<const std::size_t> indices) {
  std::vector<Sample<T>> samples;
  for (auto i : indices) samples.push_back({cast<T>(data.images.at(i)), data.labels.at(i)});
  return stack_samples(samples);
}

template <typename T>
double evaluate_miou(DgcwNet<T>& net, const Dataset& data, std::size_t batch) {
  NoGradGuard guard;
  ConfusionMatrix cm(net.config().class_count);
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch) {
    idx.clear();
    for (std::size_t i = start; i < std::min(data.size(), start + batch); ++i) idx.push_back(i);
    auto b = make_batch<T>(data, idx);
    cm.add(argmax_labels(net.forward(b.images, false).main_logits), b.labels);
  }
  return miou(cm).miou;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<TrainLogRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "iter,lr,loss_main,loss_aux,val_miou\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g\n", r.iter, r.lr, r.loss_main, r.loss_aux, r.val_miou);
    out << buf;
  }
}

template <typename T>
TrainResult train(DgcwNet<T>& net, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg,
                  const std::filesystem::path& out_dir, const std::function<void(const TrainLogRow&)>& on_log) {
  if (train_set.size() == 0 || val_set.size() == 0) throw std::invalid_argument("training needs non-empty train and val sets");
  if (cfg.batch == 0) throw std::invalid_argument("batch size must be positive");
  const auto& params = net.params();
  auto state = make_optim_state(params, cfg.sgd, cfg.iterations);
  const std::size_t n = train_set.size();
  const std::size_t epoch_iters = std::max<std::size_t>(1, (n + cfg.batch - 1) / cfg.batch);
  const std::size_t eval_every = cfg.eval_every ? cfg.eval_every : epoch_iters;
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  TrainResult result;
  double best = -1, sum_main = 0, sum_aux = 0;
  std::size_t steps = 0;
  auto checkpoint = [&](std::size_t iter, double lr) {
    TrainLogRow row{iter, lr, steps ? sum_main / steps : 0.0, steps ? sum_aux / steps : 0.0,
                    evaluate_miou(net, val_set, cfg.batch)};
    result.log.push_back(row);
    if (row.val_miou > best) {
      best = row.val_miou;
      result.best_val_miou = row.val_miou;
      result.best_iter = iter;
      if (!out_dir.empty()) save_checkpoint(out_dir / "checkpoint", params);
    }
    sum_main = sum_aux = 0;
    steps = 0;
    if (on_log) on_log(row);
  };

  if (cfg.iterations == 0) checkpoint(0, poly_lr(cfg.sgd.base_lr, 0, 0, cfg.sgd.power));

  std::size_t perm_epoch = static_cast<std::size_t>(-1);
  std::vector<std::size_t> perm;
  std::vector<Sample<T>> samples;
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const double lr = poly_lr(cfg.sgd.base_lr, it, cfg.iterations, cfg.sgd.power);
    samples.clear();
    for (std::size_t s = 0; s < cfg.batch; ++s) {
      const std::size_t g = it * cfg.batch + s;
      if (g / n != perm_epoch) {
        perm_epoch = g / n;
        perm = epoch_permutation(cfg.seed, perm_epoch, n);
      }
      const std::size_t idx = perm[g % n];
      auto image = cast<T>(train_set.images[idx]);
      if (cfg.augment_enabled) {
        KeyedRng rng(cfg.seed, "augment", g);
        samples.push_back(augment(image, train_set.labels[idx], cfg.augment, rng));
      } else {
        samples.push_back({image, train_set.labels[idx]});
      }
    }
    auto batch = stack_samples(samples);
    auto out = net.forward(batch.images, true);
    std::vector<std::uint8_t> keep;
    if (cfg.ohem.enabled) {
      const auto probs = correct_class_probs(out.main_logits, batch.labels);
      keep = ohem_filter<T>(probs, cfg.ohem.threshold, cfg.ohem.min_kept);
    }
    auto loss = total_loss(out, batch.labels, net.config().aux_weight, cfg.ohem.enabled ? &keep : nullptr);
    const double total = static_cast<double>(loss.total.item());
    if (!std::isfinite(total))
      throw NumericalError("non-finite loss " + std::to_string(total) + " at iteration " + std::to_string(it));
    params.zero_grad();
    loss.total.backward();
    sgd_step(params, state, lr);
    ++state.iter;
    sum_main += static_cast<double>(loss.main.item());
    sum_aux += static_cast<double>(loss.aux.item());
    ++steps;
    if ((it + 1) % eval_every == 0 || it + 1 == cfg.iterations) checkpoint(it + 1, lr);
  }
  if (!out_dir.empty()) write_metrics_csv(out_dir / "metrics.csv", result.log);
  return result;
}

#define DGCW_INSTANTIATE(T)                                                                                   \
  template OptimState<T> make_optim_state(const ParamSet<T>&, const SgdConfig&, std::size_t);                 \
  template void sgd_step(const ParamSet<T>&, OptimState<T>&, double);                                         \
  template std::vector<std::uint8_t> ohem_filter(std::span<const T>, double, std::size_t);                    \
  template Sample<T> augment(const Tensor<T>&, const LabelMap&, const AugmentSpec&, KeyedRng&);               \
  template SegBatch<T> make_batch(const Dataset&, std::span<const std::size_t>);                              \
  template double evaluate_miou(DgcwNet<T>&, const Dataset&, std::size_t);                                    \
  template TrainResult train(DgcwNet<T>&, const Dataset&, const Dataset&, const TrainConfig&,                 \
                             const std::filesystem::path&, const std::function<void(const TrainLogRow&)>&);

DGCW_INSTANTIATE(float)
DGCW_INSTANTIATE(double)

}  // namespace dgcw
