#pragma once

// Procedural segmentation data. Every image has a smooth background
// (class 0), a striped "key" patch and a few discs or rectangles. Objects of
// classes 1 and 2 share one checker texture; the orientation of the key's
// stripes (vertical: 1, horizontal: 2) decides their class, so they can only
// be told apart from image-wide context.
//
// With K >= 4 the key patch is labelled 3 and classes 4.. are dotted objects
// with class-specific dot spacing. With K = 3 the key is part of the
// background; with K = 2 there is no key and objects are class 1.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dgcw/labels.hpp"
#include "dgcw/tensor.hpp"

namespace dgcw {

struct SynthSpec {
  std::size_t image_size = 64;
  std::size_t class_count = 4;
  std::size_t min_shapes = 2;
  std::size_t max_shapes = 4;
  double noise = 0.05;
  double stripe_period = 6;
  double checker_period = 8;
  std::uint64_t seed = 0;
  std::size_t train_count = 256;
  std::size_t val_count = 64;

  void validate() const;
};

enum class Primitive { Rect, Disc };
enum class Texture { Checker, StripesVertical, StripesHorizontal, Dots };

// Rect covers pixel centers with x0 <= x < x1 and y0 <= y < y1; Disc covers
// centers with (x - cx)^2 + (y - cy)^2 <= r^2. Pixel (i, j) has center
// (j + 0.5, i + 0.5).
struct SceneObject {
  Primitive kind = Primitive::Rect;
  Texture texture = Texture::Checker;
  int label = 0;
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  double cx = 0, cy = 0, r = 0;
  double phase = 0;
  double dot_spacing = 4;

  bool covers(double x, double y) const;
};

struct Scene {
  std::array<double, 3> background{0.3, 0.3, 0.3};
  std::array<double, 2> gradient{0, 0};  // change per pixel along x and y
  std::vector<SceneObject> objects;      // later objects paint over earlier ones
};

template <typename T>
struct SynthSample {
  Tensor<T> image;  // 3 x S x S, values in [0, 1]
  LabelMap labels;  // 1 x S x S
};

Scene sample_scene(const SynthSpec& spec, std::string_view split, std::size_t index);

// Noise is drawn from a stream keyed by (seed, split, index).
SynthSample<float> render_scene(const SynthSpec& spec, const Scene& scene, std::string_view split, std::size_t index);

SynthSample<float> gen_synthetic(const SynthSpec& spec, std::string_view split, std::size_t index);

struct Dataset {
  std::vector<Tensor<float>> images;  // 3 x S x S
  std::vector<LabelMap> labels;       // 1 x S x S

  std::size_t size() const { return images.size(); }
};

Dataset generate_dataset(const SynthSpec& spec, std::string_view split, std::size_t count);

std::string image_file_name(std::string_view split, std::size_t index);
std::string label_file_name(std::string_view split, std::size_t index);

// Writes img_/lbl_ pairs for the train and val splits plus manifest.csv
// (split,index,image,label). Returns the number of pairs written.
std::size_t write_dataset(const std::filesystem::path& dir, const SynthSpec& spec);

// Loads every manifest pair of `split`.
Dataset load_dataset(const std::filesystem::path& dir, std::string_view split);

}  // namespace dgcw
