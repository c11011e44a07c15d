#include "dgcw_cli/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace dgcw::cli {

namespace {

const std::vector<KeyInfo> kKeys = {
    {"seed", "0", "master seed for data generation, initialization and training"},
    {"out", "runs", "parent directory for timestamped run directories"},
    {"precision", "f32", "floating point width: f32 or f64"},
    {"threads", "0", "worker threads; 0 uses DGCW_THREADS or the hardware count"},

    {"data.dir", "", "dataset directory (gen-data writes to <run>/data when empty)"},
    {"data.image_size", "64", "square image extent in pixels"},
    {"data.classes", "4", "class count K"},
    {"data.min_shapes", "2", "fewest objects per image"},
    {"data.max_shapes", "4", "most objects per image"},
    {"data.noise", "0.05", "pixel noise standard deviation"},
    {"data.stripe_period", "6", "key patch stripe period in pixels"},
    {"data.checker_period", "8", "checker texture period in pixels"},
    {"data.train_count", "256", "training images"},
    {"data.val_count", "64", "validation images"},

    {"net.context", "none", "context module: none|conv|gap|se|nlh|nld|dgcw"},
    {"net.head", "none", "base head: none|ppm|aspp"},
    {"net.widths", "16,32,64,64", "backbone stage widths"},
    {"net.reduced", "32", "channels after reduction (context module width)"},
    {"net.aux_weight", "0.4", "auxiliary loss weight"},
    {"net.aspp_rates", "2,4,6", "ASPP dilation rates"},
    {"net.aspp_channels", "64", "ASPP output channels"},
    {"net.ppm_branch", "0", "PPM branch width; 0 means input width / 4"},
    {"net.se_reduction", "4", "SE hidden width divisor"},
    {"net.batchnorm", "true", "batch norm after convolutions"},

    {"dgcw.norm", "dbs", "weight normalization: dbs|softmax|tanh"},
    {"dgcw.impl", "fused", "implementation: naive|fused"},
    {"dgcw.ratio", "4", "downsample ratio before pairing pixels"},
    {"dgcw.downsample", "avgpool", "downsample kind: avgpool|bilinear"},
    {"dgcw.hidden", "0", "hidden width of g; 0 means the module width"},
    {"dgcw.block", "16", "partner block size of the fused path"},
    {"dgcw.epsilon", "0", "DBS offset; 0 picks 1e-6 (f32) or 1e-12 (f64)"},
    {"dgcw.zero_init", "true", "zero-initialize the last layer of g"},

    {"train.iterations", "1500", "SGD iterations"},
    {"train.batch", "8", "images per iteration"},
    {"train.lr", "0.01", "base learning rate"},
    {"train.momentum", "0.9", "SGD momentum"},
    {"train.weight_decay", "0.0005", "L2 weight decay"},
    {"train.power", "0.9", "poly schedule exponent"},
    {"train.ohem", "false", "online hard example mining on the main loss"},
    {"train.ohem_threshold", "0.7", "OHEM probability threshold"},
    {"train.ohem_min_kept", "1000", "OHEM minimum kept pixels per batch"},
    {"train.augment", "true", "random scale, flip and crop"},
    {"train.crop", "64", "crop extent"},
    {"train.scale_min", "0.5", "smallest random scale"},
    {"train.scale_max", "2.0", "largest random scale"},
    {"train.flip", "0.5", "horizontal flip probability"},
    {"train.eval_every", "0", "validation interval in iterations; 0 means once per epoch"},

    {"eval.checkpoint", "", "checkpoint directory for eval and variance"},
    {"eval.split", "val", "dataset split to evaluate"},
    {"eval.scales", "1", "inference scales, e.g. 0.75,1,1.25,1.5"},
    {"eval.flip", "false", "add mirrored inference"},
    {"eval.batch", "8", "images per forward pass"},
    {"eval.previews", "4", "predicted label maps written as PGM"},

    {"variance.compare", "", "second checkpoint for side-by-side histograms"},
    {"variance.bins", "8", "uniform histogram bins over the observed range"},
    {"variance.edges", "", "explicit ascending bin edges; overrides variance.bins"},

    {"gradcheck.target", "all", "suite: ops|dgcw|net|all"},

    {"bench.impl", "naive,fused", "implementations to time"},
    {"bench.shapes", "4x4,6x6,8x8,12x12,16x16", "downsampled grids HxW; P = H*W"},
    {"bench.channels", "16", "module width C"},
    {"bench.batch", "1", "batch size N"},
    {"bench.repeats", "3", "timed repetitions; the minimum is reported"},
    {"bench.memory_cap_mb", "2048", "skip naive shapes whose pair tensors would exceed this"},
};

std::string trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto t = trim(item);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

double parse_double(std::string_view key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key " + std::string(key) + ": '" + text + "' is not a number");
  }
}

long long parse_int(std::string_view key, const std::string& text) {
  long long v = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty())
    throw ConfigError("key " + std::string(key) + ": '" + text + "' is not an integer");
  return v;
}

std::size_t parse_size(std::string_view key, const std::string& text) {
  const auto v = parse_int(key, text);
  if (v < 0) throw ConfigError("key " + std::string(key) + " must not be negative");
  return static_cast<std::size_t>(v);
}

}  // namespace

const std::vector<KeyInfo>& config_keys() { return kKeys; }

bool is_known_key(std::string_view key) {
  return std::any_of(kKeys.begin(), kKeys.end(), [&](const KeyInfo& k) { return k.name == key; });
}

bool is_network_key(std::string_view key) {
  return key.starts_with("net.") || key.starts_with("dgcw.") || key == "data.classes" || key == "precision";
}

RunConfig::RunConfig() {
  for (const auto& k : kKeys) values_.emplace(std::string(k.name), std::string(k.default_value));
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  load_text(ss.str(), path.string());
}

void RunConfig::load_text(std::string_view text, std::string_view source) {
  std::set<std::string, std::less<>> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    const auto where = std::string(source) + ":" + std::to_string(number);
    if (eq == std::string::npos) throw ConfigError(where + ": expected key=value");
    auto key = trim(std::string_view(t).substr(0, eq));
    auto value = trim(std::string_view(t).substr(eq + 1));
    if (!is_known_key(key)) throw ConfigError(where + ": unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + ": key '" + key + "' repeated");
    set(key, value);
  }
}

void RunConfig::set(std::string_view key, std::string value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown key '" + std::string(key) + "'");
  it->second = std::move(value);
  explicit_.insert(std::string(key));
}

const std::string& RunConfig::get(std::string_view key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw std::logic_error("unregistered key " + std::string(key));
  return it->second;
}

long long RunConfig::get_int(std::string_view key) const { return parse_int(key, get(key)); }

std::size_t RunConfig::get_size(std::string_view key) const { return parse_size(key, get(key)); }

double RunConfig::get_double(std::string_view key) const { return parse_double(key, get(key)); }

bool RunConfig::get_bool(std::string_view key) const {
  const auto& v = get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("key " + std::string(key) + ": '" + v + "' is not a boolean");
}

std::vector<std::size_t> RunConfig::get_size_list(std::string_view key) const {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(get(key))) out.push_back(parse_size(key, item));
  return out;
}

std::vector<double> RunConfig::get_double_list(std::string_view key) const {
  std::vector<double> out;
  for (const auto& item : split_list(get(key))) out.push_back(parse_double(key, item));
  return out;
}

std::string RunConfig::resolved_text() const {
  std::string out;
  for (const auto& k : kKeys) {
    out += k.name;
    out += '=';
    out += get(k.name);
    out += '\n';
  }
  return out;
}

void RunConfig::write_resolved(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << resolved_text();
}

bool use_f64(const RunConfig& cfg) {
  const auto& p = cfg.get("precision");
  if (p == "f64") return true;
  if (p == "f32") return false;
  throw ConfigError("precision must be f32 or f64, got '" + p + "'");
}

SynthSpec synth_spec(const RunConfig& cfg) {
  SynthSpec s;
  s.image_size = cfg.get_size("data.image_size");
  s.class_count = cfg.get_size("data.classes");
  s.min_shapes = cfg.get_size("data.min_shapes");
  s.max_shapes = cfg.get_size("data.max_shapes");
  s.noise = cfg.get_double("data.noise");
  s.stripe_period = cfg.get_double("data.stripe_period");
  s.checker_period = cfg.get_double("data.checker_period");
  s.seed = static_cast<std::uint64_t>(cfg.get_size("seed"));
  s.train_count = cfg.get_size("data.train_count");
  s.val_count = cfg.get_size("data.val_count");
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid dataset spec: ") + e.what());
  }
  return s;
}

NetworkConfig network_config(const RunConfig& cfg) {
  NetworkConfig n;
  try {
    n.class_count = cfg.get_size("data.classes");
    n.context = parse_context_kind(cfg.get("net.context"));
    n.head = parse_head_kind(cfg.get("net.head"));
    n.backbone_widths = cfg.get_size_list("net.widths");
    n.reduced_channels = cfg.get_size("net.reduced");
    n.aux_weight = cfg.get_double("net.aux_weight");
    n.aspp_rates = cfg.get_size_list("net.aspp_rates");
    n.aspp_out_channels = cfg.get_size("net.aspp_channels");
    n.ppm_branch_channels = cfg.get_size("net.ppm_branch");
    n.se_reduction = cfg.get_size("net.se_reduction");
    n.batchnorm = cfg.get_bool("net.batchnorm");
    n.dgcw.norm = parse_norm_kind(cfg.get("dgcw.norm"));
    n.dgcw_impl = parse_dgcw_impl(cfg.get("dgcw.impl"));
    n.dgcw.downsample_ratio = cfg.get_size("dgcw.ratio");
    const auto& ds = cfg.get("dgcw.downsample");
    if (ds == "avgpool")
      n.dgcw.downsample = DownsampleKind::AvgPool;
    else if (ds == "bilinear")
      n.dgcw.downsample = DownsampleKind::Bilinear;
    else
      throw ConfigError("dgcw.downsample must be avgpool or bilinear, got '" + ds + "'");
    n.dgcw.hidden = cfg.get_size("dgcw.hidden");
    n.dgcw.block = cfg.get_size("dgcw.block");
    n.dgcw.epsilon = cfg.get_double("dgcw.epsilon");
    n.dgcw.zero_init_g2 = cfg.get_bool("dgcw.zero_init");
    n.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid network config: ") + e.what());
  }
  return n;
}

TrainConfig train_config(const RunConfig& cfg) {
  TrainConfig t;
  t.iterations = cfg.get_size("train.iterations");
  t.batch = cfg.get_size("train.batch");
  t.sgd.base_lr = cfg.get_double("train.lr");
  t.sgd.momentum = cfg.get_double("train.momentum");
  t.sgd.weight_decay = cfg.get_double("train.weight_decay");
  t.sgd.power = cfg.get_double("train.power");
  t.ohem.enabled = cfg.get_bool("train.ohem");
  t.ohem.threshold = cfg.get_double("train.ohem_threshold");
  t.ohem.min_kept = cfg.get_size("train.ohem_min_kept");
  t.augment_enabled = cfg.get_bool("train.augment");
  t.augment.crop = cfg.get_size("train.crop");
  t.augment.scale_min = cfg.get_double("train.scale_min");
  t.augment.scale_max = cfg.get_double("train.scale_max");
  t.augment.flip_probability = cfg.get_double("train.flip");
  t.eval_every = cfg.get_size("train.eval_every");
  t.seed = static_cast<std::uint64_t>(cfg.get_size("seed"));
  if (t.batch == 0) throw ConfigError("train.batch must be positive");
  if (t.sgd.base_lr < 0) throw ConfigError("train.lr must not be negative");
  if (t.augment.scale_min <= 0 || t.augment.scale_max < t.augment.scale_min)
    throw ConfigError("train.scale_min/scale_max must satisfy 0 < min <= max");
  if (t.augment.flip_probability < 0 || t.augment.flip_probability > 1)
    throw ConfigError("train.flip must lie in [0, 1]");
  if (t.augment.crop % 8 != 0 || t.augment.crop == 0) throw ConfigError("train.crop must be a positive multiple of 8");
  return t;
}

}  // namespace dgcw::cli
