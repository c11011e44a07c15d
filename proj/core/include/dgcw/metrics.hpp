#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "dgcw/labels.hpp"
#include "dgcw/layers.hpp"
#include "dgcw/tensor.hpp"

namespace dgcw {

// K x K counts, rows = ground truth, columns = prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes);

  // Pixels whose truth equals `ignore_index` are skipped. Throws
  // std::out_of_range for any other label outside [0, K).
  void add(const LabelMap& prediction, const LabelMap& truth, int ignore_index = kIgnoreIndex);
  void add(std::size_t truth, std::size_t prediction, std::uint64_t count = 1);
  void merge(const ConfusionMatrix& other);

  std::size_t classes() const { return k_; }
  std::uint64_t at(std::size_t truth, std::size_t prediction) const { return counts_[truth * k_ + prediction]; }
  std::uint64_t total() const;

 private:
  std::size_t k_;
  std::vector<std::uint64_t> counts_;
};

struct MiouResult {
  double miou = 0;
  std::vector<double> iou;    // NaN where absent
  std::vector<bool> present;  // in truth or prediction
};

// IoU_k = cm[k,k] / (row_k + col_k - cm[k,k]); classes absent from both
// truth and prediction are left out of the mean.
MiouResult miou(const ConfusionMatrix& cm);

// N x K x H x W -> N x H x W, lowest class index wins ties.
template <typename T>
LabelMap argmax_labels(const Tensor<T>& logits);

template <typename T>
using LogitsFn = std::function<Tensor<T>(const Tensor<T>&)>;

// round(extent * scale) snapped to the nearest positive multiple.
std::size_t scaled_extent(std::size_t extent, double scale, std::size_t multiple);

// Sum over scales (and mirrored copies when `flip`) of logits resized back
// to the input extents. Runs without recording gradients.
template <typename T>
Tensor<T> ms_flip_infer(const Tensor<T>& image, const LogitsFn<T>& net, const std::vector<double>& scales, bool flip,
                        std::size_t multiple = 8);

struct ClassStats {
  std::size_t classes = 0, channels = 0;
  std::vector<double> class_avg;  // K x D, zero rows for absent classes
  std::vector<std::uint64_t> counts;
  std::vector<double> variance;  // D, population variance over present classes

  bool present(std::size_t k) const { return counts[k] > 0; }
  std::size_t present_count() const;
  double mean_variance() const;
};

// Mergeable masked sums for class average features.
class ClassStatsAccumulator {
 public:
  ClassStatsAccumulator(std::size_t classes, std::size_t channels);

  // features N x D x h x w; labels N x H x W are nearest-resampled to h x w.
  template <typename T>
  void add(const Tensor<T>& features, const LabelMap& labels, int ignore_index = kIgnoreIndex);
  void merge(const ClassStatsAccumulator& other);

  // Throws std::domain_error when fewer than two classes were seen.
  ClassStats finish() const;

 private:
  std::size_t k_, d_;
  std::vector<double> sums_;
  std::vector<std::uint64_t> counts_;
};

template <typename T>
ClassStats class_average_features(const std::vector<Tensor<T>>& features, const std::vector<LabelMap>& labels,
                                  std::size_t classes);

// Channel counts per [edge_b, edge_{b+1}); the last bin is closed. Values
// outside the edges land in the nearest end bin, so counts sum to D.
std::vector<std::uint64_t> variance_histogram(const std::vector<double>& variance, const std::vector<double>& edges);

// `bins` uniform bins over [lo, hi]; a degenerate range widens to [lo, lo + 1].
std::vector<double> uniform_edges(double lo, double hi, std::size_t bins);

// Binary PGM of image `index` of a label map, class k drawn as gray
// k * 255 / (K - 1); ignored pixels are white.
void write_label_pgm(const std::filesystem::path& path, const LabelMap& labels, std::size_t index,
                     std::size_t classes);

}  // namespace dgcw
