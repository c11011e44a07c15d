#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dgcw/labels.hpp"
#include "dgcw/memory.hpp"
#include "dgcw/network.hpp"
#include "dgcw/params.hpp"
#include "dgcw/rng.hpp"
#include "dgcw/synth.hpp"
#include "dgcw/tensor.hpp"

namespace dgcw {

// Raised when training produces a non-finite loss.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// base_lr * (1 - iter / max_iter)^power. Throws std::out_of_range when
// iter > max_iter.
double poly_lr(double base_lr, std::size_t iter, std::size_t max_iter, double power = 0.9);

struct SgdConfig {
  double base_lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double power = 0.9;
};

template <typename T>
struct OptimState {
  std::vector<Buffer<T>> velocity;  // one per ParamSet entry
  double base_lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t iter = 0;
  std::size_t max_iter = 0;
};

template <typename T>
OptimState<T> make_optim_state(const ParamSet<T>& params, const SgdConfig& cfg, std::size_t max_iter);

// v <- momentum * v + grad + decay * param; param <- param - lr * v.
// Norm scale/shift are not decayed; buffers are skipped; a parameter without
// a gradient is treated as having a zero gradient.
template <typename T>
void sgd_step(const ParamSet<T>& params, OptimState<T>& state, double lr);

// Keeps every pixel with probability below `threshold`; when fewer than
// min(min_kept, valid) qualify, keeps that many lowest-probability pixels,
// ties going to the lower index. Negative entries mark ignored pixels and are
// never kept.
template <typename T>
std::vector<std::uint8_t> ohem_filter(std::span<const T> probs, double threshold, std::size_t min_kept);

struct OhemConfig {
  bool enabled = false;
  double threshold = 0.7;
  std::size_t min_kept = 1000;
};

struct AugmentSpec {
  std::size_t crop = 64;
  double scale_min = 0.5;
  double scale_max = 2.0;
  double flip_probability = 0.5;
};

template <typename T>
struct Sample {
  Tensor<T> image;  // C x H x W
  LabelMap labels;  // 1 x H x W
};

// Random scale (bilinear image, nearest labels), horizontal flip and crop to
// spec.crop with zero image padding and ignore-label padding at the bottom
// and right. Draws exactly four values from `rng`.
template <typename T>
Sample<T> augment(const Tensor<T>& image, const LabelMap& labels, const AugmentSpec& spec, KeyedRng& rng);

struct TrainConfig {
  std::size_t iterations = 1500;
  std::size_t batch = 8;
  SgdConfig sgd;
  OhemConfig ohem;
  AugmentSpec augment;
  bool augment_enabled = true;
  std::size_t eval_every = 0;  // 0: once per epoch
  std::uint64_t seed = 0;
};

struct TrainLogRow {
  std::size_t iter = 0;
  double lr = 0;
  double loss_main = 0;
  double loss_aux = 0;
  double val_miou = 0;
};

struct TrainResult {
  std::vector<TrainLogRow> log;
  double best_val_miou = 0;
  std::size_t best_iter = 0;
};

// Validation mIoU with single-scale inference in evaluation mode.
template <typename T>
double evaluate_miou(DgcwNet<T>& net, const Dataset& data, std::size_t batch = 8);

// Stacks dataset entries [indices] into a batch.
template <typename T>
SegBatch<T> make_batch(const Dataset& data, std::span<const std::size_t> indices);

// Runs the loop: augment, forward, loss, backward, SGD with poly lr. Writes
// metrics.csv and the best checkpoint (by validation mIoU) to `out_dir` when
// it is non-empty. Throws NumericalError on a non-finite loss.
template <typename T>
TrainResult train(DgcwNet<T>& net, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg,
                  const std::filesystem::path& out_dir, const std::function<void(const TrainLogRow&)>& on_log = {});

void write_metrics_csv(const std::filesystem::path& path, const std::vector<TrainLogRow>& rows);

}  // namespace dgcw
