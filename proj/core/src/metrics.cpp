#include "dgcw/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>

#include "dgcw/ops.hpp"

namespace dgcw {

ConfusionMatrix::ConfusionMatrix(std::size_t classes) : k_(classes), counts_(classes * classes, 0) {
  if (classes < 2) throw std::invalid_argument("confusion matrix needs at least 2 classes");
}

void ConfusionMatrix::add(const LabelMap& prediction, const LabelMap& truth, int ignore_index) {
  if (prediction.n != truth.n || prediction.h != truth.h || prediction.w != truth.w)
    throw ShapeError("prediction and truth label maps differ in shape");
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth.values[i];
    if (t == ignore_index) continue;
    const int p = prediction.values[i];
    if (t < 0 || static_cast<std::size_t>(t) >= k_ || p < 0 || static_cast<std::size_t>(p) >= k_)
      throw std::out_of_range("label outside [0, " + std::to_string(k_) + ")");
    ++counts_[static_cast<std::size_t>(t) * k_ + static_cast<std::size_t>(p)];
  }
}

void ConfusionMatrix::add(std::size_t truth, std::size_t prediction, std::uint64_t count) {
  if (truth >= k_ || prediction >= k_) throw std::out_of_range("class index outside confusion matrix");
  counts_[truth * k_ + prediction] += count;
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw std::invalid_argument("merging confusion matrices of different size");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

MiouResult miou(const ConfusionMatrix& cm) {
  const std::size_t k = cm.classes();
  MiouResult r;
  r.iou.assign(k, std::numeric_limits<double>::quiet_NaN());
  r.present.assign(k, false);
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::uint64_t row = 0, col = 0;
    for (std::size_t j = 0; j < k; ++j) {
      row += cm.at(c, j);
      col += cm.at(j, c);
    }
    const std::uint64_t tp = cm.at(c, c);
    const std::uint64_t uni = row + col - tp;
    if (uni == 0) continue;
    r.present[c] = true;
    r.iou[c] = static_cast<double>(tp) / static_cast<double>(uni);
    sum += r.iou[c];
    ++n;
  }
  r.miou = n ? sum / static_cast<double>(n) : 0.0;
  return r;
}

template <typename T>
LabelMap argmax_labels(const Tensor<T>& logits) {
  if (logits.rank() != 4) throw ShapeError("argmax_labels expects N x K x H x W");
  const std::size_t n = logits.dim(0), k = logits.dim(1), h = logits.dim(2), w = logits.dim(3), hw = h * w;
  LabelMap out(n, h, w);
  const T* d = logits.data().data();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t i = 0; i < hw; ++i) {
      std::size_t best = 0;
      T bv = d[b * k * hw + i];
      for (std::size_t c = 1; c < k; ++c) {
        const T v = d[(b * k + c) * hw + i];
        if (v > bv) {
          bv = v;
          best = c;
        }
      }
      out.values[b * hw + i] = static_cast<std::int32_t>(best);
    }
  return out;
}

std::size_t scaled_extent(std::size_t extent, double scale, std::size_t multiple) {
  if (!(scale > 0) || multiple == 0) throw std::invalid_argument("scale and multiple must be positive");
  const double target = static_cast<double>(extent) * scale / static_cast<double>(multiple);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(target))) * multiple;
}

template <typename T>
Tensor<T> ms_flip_infer(const Tensor<T>& image, const LogitsFn<T>& net, const std::vector<double>& scales, bool flip,
                        std::size_t multiple) {
  if (scales.empty()) throw std::invalid_argument("ms_flip_infer needs at least one scale");
  if (image.rank() != 4) throw ShapeError("ms_flip_infer expects N x C x H x W");
  NoGradGuard guard;
  const std::size_t h = image.dim(2), w = image.dim(3);
  Tensor<T> total;
  auto accumulate_logits = [&](const Tensor<T>& logits) {
    auto back = resample_bilinear(logits, h, w);
    total = total.defined() ? add(total, back) : back;
  };
  for (double s : scales) {
    const std::size_t sh = scaled_extent(h, s, multiple), sw = scaled_extent(w, s, multiple);
    auto x = (sh == h && sw == w) ? image : resample_bilinear(image, sh, sw);
    accumulate_logits(net(x));
    if (flip) accumulate_logits(dgcw::flip(net(dgcw::flip(x, 3)), 3));
  }
  return total;
}

std::size_t ClassStats::present_count() const {
  return static_cast<std::size_t>(std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }));
}

double ClassStats::mean_variance() const {
  if (variance.empty()) return 0;
  double s = 0;
  for (double v : variance) s += v;
  return s / static_cast<double>(variance.size());
}

ClassStatsAccumulator::ClassStatsAccumulator(std::size_t classes, std::size_t channels)
    : k_(classes), d_(channels), sums_(classes * channels, 0.0), counts_(classes, 0) {}

template <typename T>
void ClassStatsAccumulator::add(const Tensor<T>& features, const LabelMap& labels, int ignore_index) {
  if (features.rank() != 4 || features.dim(1) != d_)
    throw ShapeError("class statistics expect N x " + std::to_string(d_) + " x h x w features, got " +
                     shape_str(features.shape()));
  if (labels.n != features.dim(0)) throw ShapeError("feature and label batch sizes differ");
  const std::size_t n = features.dim(0), h = features.dim(2), w = features.dim(3), hw = h * w;
  const LabelMap lab = (labels.h == h && labels.w == w) ? labels : resample_nearest(labels, h, w);
  const T* f = features.data().data();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t i = 0; i < hw; ++i) {
      const int y = lab.values[b * hw + i];
      if (y == ignore_index) continue;
      if (y < 0 || static_cast<std::size_t>(y) >= k_) throw std::out_of_range("label outside class range");
      const std::size_t k = static_cast<std::size_t>(y);
      ++counts_[k];
      for (std::size_t c = 0; c < d_; ++c) sums_[k * d_ + c] += static_cast<double>(f[(b * d_ + c) * hw + i]);
    }
}

void ClassStatsAccumulator::merge(const ClassStatsAccumulator& other) {
  if (other.k_ != k_ || other.d_ != d_) throw std::invalid_argument("merging mismatched class statistics");
  for (std::size_t i = 0; i < sums_.size(); ++i) sums_[i] += other.sums_[i];
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

ClassStats ClassStatsAccumulator::finish() const {
  ClassStats s;
  s.classes = k_;
  s.channels = d_;
  s.counts = counts_;
  s.class_avg.assign(k_ * d_, 0.0);
  const std::size_t present = s.present_count();
  if (present < 2) throw std::domain_error("class-wise variance needs at least 2 present classes");
  for (std::size_t k = 0; k < k_; ++k) {
    if (!counts_[k]) continue;
    for (std::size_t c = 0; c < d_; ++c)
      s.class_avg[k * d_ + c] = sums_[k * d_ + c] / static_cast<double>(counts_[k]);
  }
  s.variance.assign(d_, 0.0);
  for (std::size_t c = 0; c < d_; ++c) {
    double mean = 0;
    for (std::size_t k = 0; k < k_; ++k)
      if (counts_[k]) mean += s.class_avg[k * d_ + c];
    mean /= static_cast<double>(present);
    double var = 0;
    for (std::size_t k = 0; k < k_; ++k)
      if (counts_[k]) var += (s.class_avg[k * d_ + c] - mean) * (s.class_avg[k * d_ + c] - mean);
    s.variance[c] = var / static_cast<double>(present);
  }
  return s;
}

template <typename T>
ClassStats class_average_features(const std::vector<Tensor<T>>& features, const std::vector<LabelMap>& labels,
                                  std::size_t classes) {
  if (features.empty() || features.size() != labels.size())
    throw std::invalid_argument("class_average_features needs matching, non-empty feature and label lists");
  ClassStatsAccumulator acc(classes, features.front().dim(1));
  for (std::size_t i = 0; i < features.size(); ++i) acc.add(features[i], labels[i]);
  return acc.finish();
}

std::vector<std::uint64_t> variance_histogram(const std::vector<double>& variance, const std::vector<double>& edges) {
  if (edges.size() < 2) throw std::invalid_argument("histogram needs at least two edges");
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (!(edges[i] > edges[i - 1])) throw std::invalid_argument("histogram edges must be strictly increasing");
  const std::size_t bins = edges.size() - 1;
  std::vector<std::uint64_t> counts(bins, 0);
  for (double v : variance) {
    auto it = std::upper_bound(edges.begin(), edges.end(), v);
    std::size_t b = it == edges.begin() ? 0 : static_cast<std::size_t>(it - edges.begin()) - 1;
    ++counts[std::min(b, bins - 1)];
  }
  return counts;
}

std::vector<double> uniform_edges(double lo, double hi, std::size_t bins) {
  if (bins == 0) throw std::invalid_argument("histogram needs at least one bin");
  if (!(hi > lo)) hi = lo + 1;
  std::vector<double> e(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) e[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
  e[bins] = hi;
  return e;
}

void write_label_pgm(const std::filesystem::path& path, const LabelMap& labels, std::size_t index,
                     std::size_t classes) {
  if (index >= labels.n) throw std::out_of_range("label map index out of range");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << labels.w << ' ' << labels.h << "\n255\n";
  const std::size_t denom = classes > 1 ? classes - 1 : 1;
  for (std::size_t y = 0; y < labels.h; ++y)
    for (std::size_t x = 0; x < labels.w; ++x) {
      const int v = labels.at(index, y, x);
      const int g = (v < 0 || static_cast<std::size_t>(v) >= classes)
                        ? 255
                        : static_cast<int>(static_cast<std::size_t>(v) * 255 / denom);
      out.put(static_cast<char>(g));
    }
}

#define DGCW_INSTANTIATE(T)                                                                                    \
  template LabelMap argmax_labels(const Tensor<T>&);                                                           \
  template Tensor<T> ms_flip_infer(const Tensor<T>&, const LogitsFn<T>&, const std::vector<double>&, bool,     \
                                   std::size_t);                                                               \
  template void ClassStatsAccumulator::add(const Tensor<T>&, const LabelMap&, int);                            \
  template ClassStats class_average_features(const std::vector<Tensor<T>>&, const std::vector<LabelMap>&,      \
                                             std::size_t);

DGCW_INSTANTIATE(float)
DGCW_INSTANTIATE(double)

}  // namespace dgcw
