#include "dgcw/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dgcw/dgt.hpp"
#include "dgcw/rng.hpp"

namespace dgcw {

namespace {

constexpr double kTwoPi = 6.283185307179586;

constexpr std::array<double, 3> kCheckerA{0.85, 0.45, 0.20};
constexpr std::array<double, 3> kCheckerB{0.20, 0.40, 0.80};
constexpr std::array<double, 3> kStripeLight{0.90, 0.90, 0.35};
constexpr std::array<double, 3> kStripeDark{0.30, 0.20, 0.10};
constexpr std::array<double, 3> kDotInk{0.95, 0.95, 0.95};
constexpr std::array<double, 3> kDotPaper{0.10, 0.50, 0.30};

std::array<double, 3> mix(const std::array<double, 3>& a, const std::array<double, 3>& b, double t) {
  return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
}

std::array<double, 3> texture_color(const SceneObject& o, const SynthSpec& spec, double x, double y) {
  switch (o.texture) {
    case Texture::Checker: {
      const auto cx = static_cast<long>(std::floor((x + o.phase) / spec.checker_period));
      const auto cy = static_cast<long>(std::floor((y + o.phase) / spec.checker_period));
      return ((cx + cy) & 1) ? kCheckerA : kCheckerB;
    }
    case Texture::StripesVertical:
    case Texture::StripesHorizontal: {
      const double t = o.texture == Texture::StripesVertical ? x : y;
      return mix(kStripeDark, kStripeLight, 0.5 + 0.5 * std::sin(kTwoPi * (t + o.phase) / spec.stripe_period));
    }
    case Texture::Dots: {
      const double s = o.dot_spacing;
      const double dx = std::fmod(x + o.phase, s) - s / 2, dy = std::fmod(y + o.phase, s) - s / 2;
      return (dx * dx + dy * dy <= s * s / 9) ? kDotInk : kDotPaper;
    }
  }
  return kDotPaper;
}

bool boxes_overlap(const SceneObject& a, const SceneObject& b) {
  auto box = [](const SceneObject& o) {
    if (o.kind == Primitive::Disc) return std::array<double, 4>{o.cx - o.r, o.cy - o.r, o.cx + o.r, o.cy + o.r};
    return std::array<double, 4>{o.x0, o.y0, o.x1, o.y1};
  };
  const auto p = box(a), q = box(b);
  return p[0] < q[2] && q[0] < p[2] && p[1] < q[3] && q[1] < p[3];
}

std::string stream_name(std::string_view what, std::string_view split) {
  return std::string(what) + ":" + std::string(split);
}

}  // namespace

void SynthSpec::validate() const {
  if (image_size < 8) throw std::invalid_argument("image_size must be at least 8");
  if (class_count < 2 || class_count > 255) throw std::invalid_argument("class_count must be in [2, 255]");
  if (min_shapes > max_shapes) throw std::invalid_argument("min_shapes exceeds max_shapes");
  if (!(noise >= 0)) throw std::invalid_argument("noise must be non-negative");
  if (!(stripe_period > 0) || !(checker_period > 0)) throw std::invalid_argument("texture periods must be positive");
}

bool SceneObject::covers(double x, double y) const {
  if (kind == Primitive::Disc) return (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r;
  return x >= x0 && x < x1 && y >= y0 && y < y1;
}

Scene sample_scene(const SynthSpec& spec, std::string_view split, std::size_t index) {
  spec.validate();
  KeyedRng rng(spec.seed, stream_name("synth-scene", split), index);
  const double s = static_cast<double>(spec.image_size);
  const std::size_t k = spec.class_count;
  Scene scene;
  for (auto& c : scene.background) c = rng.uniform(0.15, 0.55);
  const double angle = rng.uniform(0, kTwoPi), amp = rng.uniform(0, 0.2) / s;
  scene.gradient = {amp * std::cos(angle), amp * std::sin(angle)};

  const bool vertical = rng.bernoulli(0.5);
  if (k >= 3) {
    SceneObject key;
    key.kind = Primitive::Rect;
    key.texture = vertical ? Texture::StripesVertical : Texture::StripesHorizontal;
    key.label = k >= 4 ? 3 : 0;
    const double w = rng.uniform(s / 4, s / 2), h = rng.uniform(s / 4, s / 2);
    key.x0 = std::floor(rng.uniform(0, s - w));
    key.y0 = std::floor(rng.uniform(0, s - h));
    key.x1 = key.x0 + std::round(w);
    key.y1 = key.y0 + std::round(h);
    key.phase = rng.uniform(0, spec.stripe_period);
    scene.objects.push_back(key);
  }

  const std::size_t extra = k >= 5 ? k - 4 : 0;
  const std::size_t count = spec.min_shapes + rng.below(spec.max_shapes - spec.min_shapes + 1);
  for (std::size_t n = 0; n < count; ++n) {
    SceneObject o;
    const std::size_t choice = rng.below(1 + extra);
    if (choice == 0) {
      o.texture = Texture::Checker;
      o.label = k == 2 ? 1 : (vertical ? 1 : 2);
      o.phase = rng.uniform(0, spec.checker_period);
    } else {
      o.texture = Texture::Dots;
      o.label = static_cast<int>(3 + choice);
      o.dot_spacing = 3.0 + static_cast<double>(choice);
      o.phase = rng.uniform(0, o.dot_spacing);
    }
    o.kind = rng.bernoulli(0.5) ? Primitive::Disc : Primitive::Rect;
    // A few placement attempts keep objects off the key patch.
    for (int attempt = 0; attempt < 8; ++attempt) {
      if (o.kind == Primitive::Disc) {
        o.r = rng.uniform(s / 10, s / 5);
        o.cx = rng.uniform(o.r, s - o.r);
        o.cy = rng.uniform(o.r, s - o.r);
      } else {
        const double w = rng.uniform(s / 6, s / 3), h = rng.uniform(s / 6, s / 3);
        o.x0 = std::floor(rng.uniform(0, s - w));
        o.y0 = std::floor(rng.uniform(0, s - h));
        o.x1 = o.x0 + std::round(w);
        o.y1 = o.y0 + std::round(h);
      }
      if (k < 3 || !boxes_overlap(o, scene.objects.front())) break;
    }
    scene.objects.push_back(o);
  }
  return scene;
}

SynthSample<float> render_scene(const SynthSpec& spec, const Scene& scene, std::string_view split, std::size_t index) {
  const std::size_t s = spec.image_size, plane = s * s;
  KeyedRng noise(spec.seed, stream_name("synth-noise", split), index);
  Buffer<float> img(3 * plane);
  LabelMap labels(1, s, s, 0);
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < s; ++j) {
      const double x = static_cast<double>(j) + 0.5, y = static_cast<double>(i) + 0.5;
      std::array<double, 3> color = scene.background;
      for (auto& c : color) c += scene.gradient[0] * x + scene.gradient[1] * y;
      for (const auto& o : scene.objects)
        if (o.covers(x, y)) {
          color = texture_color(o, spec, x, y);
          labels.at(0, i, j) = o.label;
        }
      for (std::size_t c = 0; c < 3; ++c) {
        double v = color[c];
        if (spec.noise > 0) v += spec.noise * noise.normal();
        img[c * plane + i * s + j] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  return {Tensor<float>::from({3, s, s}, std::move(img)), std::move(labels)};
}

SynthSample<float> gen_synthetic(const SynthSpec& spec, std::string_view split, std::size_t index) {
  return render_scene(spec, sample_scene(spec, split, index), split, index);
}

Dataset generate_dataset(const SynthSpec& spec, std::string_view split, std::size_t count) {
  Dataset d;
  d.images.reserve(count);
  d.labels.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto sample = gen_synthetic(spec, split, i);
    d.images.push_back(std::move(sample.image));
    d.labels.push_back(std::move(sample.labels));
  }
  return d;
}

std::string image_file_name(std::string_view split, std::size_t index) {
  return "img_" + std::string(split) + "_" + std::to_string(index) + ".dgt";
}

std::string label_file_name(std::string_view split, std::size_t index) {
  return "lbl_" + std::string(split) + "_" + std::to_string(index) + ".dgt";
}

std::size_t write_dataset(const std::filesystem::path& dir, const SynthSpec& spec) {
  spec.validate();
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.csv", std::ios::trunc);
  if (!manifest) throw std::runtime_error("cannot write dataset manifest in " + dir.string());
  manifest << "split,index,image,label\n";
  std::size_t written = 0;
  for (auto [split, count] : {std::pair<std::string_view, std::size_t>{"train", spec.train_count},
                              std::pair<std::string_view, std::size_t>{"val", spec.val_count}}) {
    for (std::size_t i = 0; i < count; ++i) {
      auto sample = gen_synthetic(spec, split, i);
      const auto img = image_file_name(split, i), lbl = label_file_name(split, i);
      write_dgt(dir / img, sample.image);
      write_dgt(dir / lbl, labels_to_tensor<float>(sample.labels));
      manifest << split << ',' << i << ',' << img << ',' << lbl << '\n';
      ++written;
    }
  }
  if (!manifest) throw std::runtime_error("failed writing dataset manifest in " + dir.string());
  return written;
}

Dataset load_dataset(const std::filesystem::path& dir, std::string_view split) {
  std::ifstream manifest(dir / "manifest.csv");
  if (!manifest) throw std::runtime_error("no dataset manifest in " + dir.string());
  std::string line;
  std::getline(manifest, line);
  Dataset d;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string sp, idx, img, lbl;
    std::getline(ls, sp, ',');
    std::getline(ls, idx, ',');
    std::getline(ls, img, ',');
    std::getline(ls, lbl, ',');
    if (sp != split) continue;
    auto image = read_dgt<float>(dir / img);
    if (image.rank() != 3 || image.dim(0) != 3) throw FormatError(img + ": expected a 3 x S x S image");
    auto labels = labels_from_tensor(read_dgt<float>(dir / lbl));
    if (labels.h != image.dim(1) || labels.w != image.dim(2)) throw FormatError(lbl + ": label extents differ from image");
    d.images.push_back(std::move(image));
    d.labels.push_back(std::move(labels));
  }
  if (d.images.empty()) throw std::runtime_error("dataset in " + dir.string() + " has no '" + std::string(split) + "' split");
  return d;
}

}  // namespace dgcw
