#include "dgcw_cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "dgcw/dgt.hpp"
#include "dgcw/memory.hpp"
#include "dgcw/metrics.hpp"
#include "dgcw/ops.hpp"
#include "dgcw/params.hpp"
#include "dgcw/parallel.hpp"
#include "dgcw/rng.hpp"
#include "dgcw/synth.hpp"
#include "dgcw/training.hpp"

namespace dgcw::cli {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

fs::path require_dir(const RunConfig& cfg, std::string_view key) {
  const auto& v = cfg.get(key);
  if (v.empty()) throw ConfigError(std::string(key) + " is required for this command");
  fs::path p(v);
  if (!fs::is_directory(p)) throw ConfigError(std::string(key) + ": no directory " + v);
  return p;
}

Dataset load_split(const fs::path& dir, std::string_view split) {
  try {
    auto d = load_dataset(dir, split);
    if (d.size() == 0) throw ConfigError("dataset " + dir.string() + " has no '" + std::string(split) + "' images");
    return d;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("cannot load dataset " + dir.string() + ": " + e.what());
  }
}

// Network keys come from the copy stored with the checkpoint; explicitly set
// keys must agree with it.
RunConfig checkpoint_config(const RunConfig& cfg, const fs::path& ckpt) {
  const auto stored_path = ckpt / "config.resolved";
  if (!fs::exists(stored_path)) return cfg;
  RunConfig stored;
  stored.load_file(stored_path);
  RunConfig merged = cfg;
  for (const auto& k : config_keys()) {
    if (!is_network_key(k.name)) continue;
    if (cfg.is_explicit(k.name) && cfg.get(k.name) != stored.get(k.name))
      throw ConfigError("checkpoint/config mismatch: " + std::string(k.name) + " is " + cfg.get(k.name) +
                        " but the checkpoint was trained with " + stored.get(k.name));
    merged.set(k.name, stored.get(k.name));
  }
  return merged;
}

template <typename T>
DgcwNet<T> load_network(const RunConfig& cfg, const fs::path& ckpt) {
  DgcwNet<T> net(network_config(cfg), static_cast<std::uint64_t>(cfg.get_size("seed")));
  try {
    load_checkpoint(ckpt, net.params());
  } catch (const std::exception& e) {
    throw ConfigError(std::string("checkpoint/config mismatch: ") + e.what());
  }
  return net;
}

std::vector<std::size_t> range(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> v;
  for (std::size_t i = begin; i < end; ++i) v.push_back(i);
  return v;
}

// ---- train ---------------------------------------------------------------

template <typename T>
int train_impl(const RunConfig& cfg, const fs::path& run_dir, std::ostream& log) {
  const auto data_dir = require_dir(cfg, "data.dir");
  const auto train_set = load_split(data_dir, "train");
  const auto val_set = load_split(data_dir, "val");
  const auto nc = network_config(cfg);
  const auto tc = train_config(cfg);
  DgcwNet<T> net(nc, tc.seed);
  fs::create_directories(run_dir / "checkpoint");
  cfg.write_resolved(run_dir / "checkpoint" / "config.resolved");
  log << "train: context=" << context_kind_name(nc.context) << " head=" << head_kind_name(nc.head)
      << " params=" << net.params().element_count() << " iterations=" << tc.iterations << "\n";
  try {
    auto result = train(net, train_set, val_set, tc, run_dir, [&](const TrainLogRow& r) {
      log << "iter " << r.iter << " lr " << fmt(r.lr) << " loss_main " << fmt(r.loss_main) << " loss_aux "
          << fmt(r.loss_aux) << " val_miou " << fmt(r.val_miou) << "\n";
    });
    log << "best_val_miou=" << fmt(result.best_val_miou) << " best_iter=" << result.best_iter << "\n";
  } catch (const NumericalError& e) {
    log << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitOk;
}

// ---- eval ----------------------------------------------------------------

template <typename T>
int eval_impl(const RunConfig& cfg, const fs::path& ckpt, const fs::path& run_dir, std::ostream& log) {
  auto net = load_network<T>(cfg, ckpt);
  const auto data = load_split(require_dir(cfg, "data.dir"), cfg.get("eval.split"));
  const auto scales = cfg.get_double_list("eval.scales");
  if (scales.empty()) throw ConfigError("eval.scales needs at least one scale");
  for (double s : scales)
    if (!(s > 0)) throw ConfigError("eval.scales entries must be positive");
  const bool flip = cfg.get_bool("eval.flip");
  const std::size_t batch = std::max<std::size_t>(1, cfg.get_size("eval.batch"));
  const std::size_t previews = cfg.get_size("eval.previews");
  const std::size_t k = net.config().class_count;

  LogitsFn<T> logits = [&net](const Tensor<T>& x) { return net.forward(x, false).main_logits; };
  ConfusionMatrix cm(k);
  for (std::size_t start = 0; start < data.size(); start += batch) {
    const auto idx = range(start, std::min(data.size(), start + batch));
    auto b = make_batch<T>(data, idx);
    auto pred = argmax_labels(ms_flip_infer(b.images, logits, scales, flip));
    cm.add(pred, b.labels);
    for (std::size_t i = 0; i < idx.size(); ++i)
      if (idx[i] < previews) {
        char name[48];
        std::snprintf(name, sizeof name, "pred_%04zu.pgm", idx[i]);
        write_label_pgm(run_dir / name, pred, i, k);
      }
  }
  const auto m = miou(cm);
  auto per_class = open_out(run_dir / "per_class.csv");
  per_class << "class,iou,present\n";
  for (std::size_t c = 0; c < k; ++c)
    per_class << c << ',' << (m.present[c] ? fmt(m.iou[c]) : std::string()) << ',' << (m.present[c] ? 1 : 0)
              << '\n';
  auto summary = open_out(run_dir / "summary.csv");
  summary << "split,images,scales,flip,miou\n";
  std::string scale_text;
  for (std::size_t i = 0; i < scales.size(); ++i) scale_text += (i ? " " : "") + fmt(scales[i]);
  summary << cfg.get("eval.split") << ',' << data.size() << ',' << scale_text << ',' << (flip ? 1 : 0) << ','
          << fmt(m.miou) << '\n';
  log << "miou=" << fmt(m.miou) << " scales=" << scale_text << " flip=" << (flip ? "on" : "off") << "\n";
  return kExitOk;
}

// ---- variance ------------------------------------------------------------

template <typename T>
ClassStats class_stats_for(DgcwNet<T>& net, const Dataset& data, std::size_t batch) {
  NoGradGuard guard;
  ClassStatsAccumulator acc(net.config().class_count, net.config().reduced_channels);
  for (std::size_t start = 0; start < data.size(); start += batch) {
    auto b = make_batch<T>(data, range(start, std::min(data.size(), start + batch)));
    acc.add(net.forward(b.images, false).features, b.labels);
  }
  try {
    return acc.finish();
  } catch (const std::domain_error& e) {
    throw ConfigError(std::string("variance needs at least two classes: ") + e.what());
  }
}

void dump_stats(const fs::path& dir, const ClassStats& s) {
  fs::create_directories(dir);
  Buffer<double> counts(s.counts.begin(), s.counts.end());
  write_dgt(dir / "class_avg.dgt",
            Tensor<double>::from({s.classes, s.channels}, Buffer<double>(s.class_avg.begin(), s.class_avg.end())));
  write_dgt(dir / "counts.dgt", Tensor<double>::from({s.classes}, std::move(counts)));
  write_dgt(dir / "variance.dgt",
            Tensor<double>::from({s.channels}, Buffer<double>(s.variance.begin(), s.variance.end())));
}

template <typename T>
ClassStats stats_from_checkpoint(const RunConfig& cfg, const fs::path& ckpt, const Dataset& data) {
  const auto merged = checkpoint_config(cfg, ckpt);
  auto net = load_network<T>(merged, ckpt);
  return class_stats_for(net, data, std::max<std::size_t>(1, cfg.get_size("eval.batch")));
}

ClassStats stats_any_precision(const RunConfig& cfg, const fs::path& ckpt, const Dataset& data) {
  return use_f64(checkpoint_config(cfg, ckpt)) ? stats_from_checkpoint<double>(cfg, ckpt, data)
                                               : stats_from_checkpoint<float>(cfg, ckpt, data);
}

// ---- bench ---------------------------------------------------------------

DgcwImpl parse_impl_or_throw(const std::string& s) {
  try {
    return parse_dgcw_impl(s);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("bench.impl: ") + e.what());
  }
}


struct BenchShape {
  std::size_t h = 0, w = 0;
};

std::vector<BenchShape> parse_shapes(const std::string& text) {
  std::vector<BenchShape> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto x = item.find('x');
    BenchShape s;
    try {
      if (x == std::string::npos) throw std::invalid_argument("missing x");
      std::size_t used = 0;
      s.h = std::stoul(item.substr(0, x), &used);
      s.w = std::stoul(item.substr(x + 1));
    } catch (const std::exception&) {
      throw ConfigError("bench.shapes entries look like 8x8, got '" + item + "'");
    }
    if (s.h == 0 || s.w == 0) throw ConfigError("bench.shapes extents must be positive");
    out.push_back(s);
  }
  if (out.empty()) throw ConfigError("bench.shapes is empty");
  return out;
}

struct Fit {
  double slope = 0, intercept = 0;
  std::size_t points = 0;
};

// Least squares line through (log x, log y).
Fit loglog_fit(const std::vector<double>& x, const std::vector<double>& y) {
  Fit f;
  f.points = x.size();
  if (x.size() < 2) return f;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  f.slope = sxx > 0 ? sxy / sxx : 0;
  f.intercept = my - f.slope * mx;
  return f;
}

template <typename T>
double normwise_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double diff = 0, scale = 0;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    diff = std::max(diff, std::abs(static_cast<double>(da[i]) - static_cast<double>(db[i])));
    scale = std::max(scale, std::abs(static_cast<double>(db[i])));
  }
  return diff / std::max(scale, 1e-300);
}

struct Measured {
  std::size_t infer_bytes = 0, train_bytes = 0;
  double infer_ms = std::numeric_limits<double>::infinity();
  double train_ms = std::numeric_limits<double>::infinity();
};

template <typename T>
Measured measure(const Tensor<T>& f, const DgcwParams<T>& p, DgcwImpl impl, const Tensor<T>& upstream,
                 std::size_t repeats) {
  using clock = std::chrono::steady_clock;
  Measured m;
  for (std::size_t r = 0; r < std::max<std::size_t>(1, repeats); ++r) {
    {
      NoGradGuard guard;
      const auto base = MemoryTracker::reset_peak();
      const auto t0 = clock::now();
      auto y = dgcw_forward(f, p, impl);
      const auto t1 = clock::now();
      m.infer_bytes = std::max(m.infer_bytes, MemoryTracker::peak() - base);
      m.infer_ms = std::min(m.infer_ms, std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    {
      const auto base = MemoryTracker::reset_peak();
      const auto t0 = clock::now();
      auto y = sum_all(mul(dgcw_forward(f, p, impl), upstream));
      backward(y);
      const auto t1 = clock::now();
      m.train_bytes = std::max(m.train_bytes, MemoryTracker::peak() - base);
      m.train_ms = std::min(m.train_ms, std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    for (auto* lp : {&p.wq, &p.wk, &p.wv, &p.g1, &p.g2}) {
      auto w = lp->weight;
      auto b = lp->bias;
      w.zero_grad();
      b.zero_grad();
    }
  }
  return m;
}

template <typename T>
int bench_impl(const RunConfig& cfg, const fs::path& run_dir, std::ostream& log) {
  const auto shapes = parse_shapes(cfg.get("bench.shapes"));
  bool want_naive = false, want_fused = false;
  {
    std::stringstream ss(cfg.get("bench.impl"));
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (parse_impl_or_throw(item) == DgcwImpl::Naive)
        want_naive = true;
      else
        want_fused = true;
    }
  }
  if (!want_naive && !want_fused) throw ConfigError("bench.impl is empty");
  const std::size_t c = cfg.get_size("bench.channels");
  const std::size_t n = cfg.get_size("bench.batch");
  const std::size_t repeats = cfg.get_size("bench.repeats");
  const double cap_bytes = cfg.get_double("bench.memory_cap_mb") * 1024.0 * 1024.0;
  if (c == 0 || n == 0) throw ConfigError("bench.channels and bench.batch must be positive");
  const auto nc = network_config(cfg);
  const std::uint64_t seed = cfg.get_size("seed");
  const double tolerance = sizeof(T) >= 8 ? 1e-10 : 1e-4;

  DgcwConfig dc = nc.dgcw;
  dc.channels = c;
  dc.downsample_ratio = 1;  // the grid is the pair grid
  dc.zero_init_g2 = false;  // a zero g2 would make the equivalence check vacuous
  const auto p = make_dgcw_params<T>(dc, seed, "bench");

  struct Row {
    std::string impl;
    BenchShape s;
    std::size_t pairs;
    Measured m;
  };
  std::vector<Row> rows;
  for (const auto& s : shapes) {
    const std::size_t pairs = s.h * s.w;
    KeyedRng rng(seed, "bench-input", pairs);
    Buffer<T> fv(n * c * pairs), uv(n * c * pairs);
    for (auto& v : fv) v = static_cast<T>(rng.uniform(-1, 1));
    for (auto& v : uv) v = static_cast<T>(rng.uniform(-1, 1));
    auto f = Tensor<T>::from({n, c, s.h, s.w}, std::move(fv));
    auto upstream = Tensor<T>::from({n, c, s.h, s.w}, std::move(uv));
    const double naive_estimate = 6.0 * static_cast<double>(n * c * pairs * pairs * sizeof(T));
    const bool naive_fits = naive_estimate <= cap_bytes;
    if (!naive_fits)
      log << "shape " << s.h << "x" << s.w << ": naive needs about " << fmt(naive_estimate / 1048576.0)
          << " MiB, over bench.memory_cap_mb; skipped\n";
    if (naive_fits) {
      NoGradGuard guard;
      const double d = normwise_diff(dgcw_forward(f, p, DgcwImpl::Fused), dgcw_forward(f, p, DgcwImpl::Naive));
      if (!(d <= tolerance)) {
        log << "equivalence failure at " << s.h << "x" << s.w << ": fused vs naive relative difference " << fmt(d)
            << " exceeds " << fmt(tolerance) << "; no timings reported\n";
        return kExitNumerical;
      }
    } else if (want_fused) {
      log << "shape " << s.h << "x" << s.w << ": fused not verified against naive; skipped\n";
      continue;
    }
    if (want_naive && naive_fits) rows.push_back({"naive", s, pairs, measure(f, p, DgcwImpl::Naive, upstream, repeats)});
    if (want_fused) rows.push_back({"fused", s, pairs, measure(f, p, DgcwImpl::Fused, upstream, repeats)});
  }

  auto memory = open_out(run_dir / "memory.csv");
  memory << "impl,h,w,P,C,N,block,infer_peak_aux_bytes,train_peak_aux_bytes\n";
  auto timing = open_out(run_dir / "timing.csv");
  timing << "impl,h,w,P,C,N,block,infer_ms,train_ms\n";
  for (const auto& r : rows) {
    const std::string key = r.impl + "," + std::to_string(r.s.h) + "," + std::to_string(r.s.w) + "," +
                            std::to_string(r.pairs) + "," + std::to_string(c) + "," + std::to_string(n) + "," +
                            std::to_string(dc.block);
    memory << key << ',' << r.m.infer_bytes << ',' << r.m.train_bytes << '\n';
    timing << key << ',' << fmt(r.m.infer_ms) << ',' << fmt(r.m.train_ms) << '\n';
    log << r.impl << " P=" << r.pairs << " infer " << fmt(r.m.infer_ms) << " ms, " << r.m.infer_bytes
        << " B aux; train " << fmt(r.m.train_ms) << " ms, " << r.m.train_bytes << " B aux\n";
  }
  auto fits = open_out(run_dir / "fit.csv");
  fits << "impl,measure,slope,intercept,points\n";
  for (const char* impl : {"naive", "fused"})
    for (bool train_mode : {false, true}) {
      std::vector<double> xs, ys;
      for (const auto& r : rows)
        if (r.impl == impl) {
          xs.push_back(static_cast<double>(r.pairs));
          ys.push_back(static_cast<double>(train_mode ? r.m.train_bytes : r.m.infer_bytes));
        }
      if (xs.empty()) continue;
      const auto fit = loglog_fit(xs, ys);
      const char* what = train_mode ? "train_peak_aux_bytes" : "infer_peak_aux_bytes";
      fits << impl << ',' << what << ',' << fmt(fit.slope) << ',' << fmt(fit.intercept) << ',' << fit.points << '\n';
      log << impl << " " << what << " log-log slope " << fmt(fit.slope) << " over " << fit.points << " shapes\n";
    }
  return kExitOk;
}

}  // namespace

fs::path make_run_dir(const fs::path& out, std::string_view command) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
  const std::string base = std::string(stamp) + "-" + std::string(command);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw ConfigError("cannot create output directory " + out.string() + ": " + ec.message());
  for (int suffix = 1;; ++suffix) {
    const auto dir = out / (suffix == 1 ? base : base + "-" + std::to_string(suffix));
    if (fs::create_directory(dir, ec)) return dir;
    if (ec) throw ConfigError("cannot create run directory " + dir.string() + ": " + ec.message());
  }
}

int cmd_gen_data(const RunConfig& cfg, const fs::path& run_dir, std::ostream& log) {
  const auto spec = synth_spec(cfg);
  const fs::path dir = cfg.get("data.dir").empty() ? run_dir / "data" : fs::path(cfg.get("data.dir"));
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create dataset directory " + dir.string() + ": " + ec.message());
  std::size_t pairs = 0;
  try {
    pairs = write_dataset(dir, spec);
  } catch (const std::exception& e) {
    throw ConfigError("cannot write dataset: " + std::string(e.what()));
  }
  log << "data_dir: " << dir.string() << "\n";
  log << "pairs=" << pairs << " train=" << spec.train_count << " val=" << spec.val_count << "\n";
  return kExitOk;
}

int cmd_train(const RunConfig& cfg, const fs::path& run_dir, std::ostream& log) {
  return use_f64(cfg) ? train_impl<double>(cfg, run_dir, log) : train_impl<float>(cfg, run_dir, log);
}

int cmd_eval(const RunConfig& cfg, const fs::path& run_dir, std::ostream& log) {
  const auto ckpt = require_dir(cfg, "eval.checkpoint");
  const auto merged = checkpoint_config(cfg, ckpt);
  return use_f64(merged) ? eval_impl<double>(merged, ckpt, run_dir, log)
                         : eval_impl<float>(merged, ckpt, run_dir, log);
}

int cmd_variance(const RunConfig& cfg, const fs::path& run_dir, std::ostream& log) {
  const auto ckpt = require_dir(cfg, "eval.checkpoint");
  const auto data = load_split(require_dir(cfg, "data.dir"), cfg.get("eval.split"));
  std::vector<ClassStats> stats{stats_any_precision(cfg, ckpt, data)};
  if (!cfg.get("variance.compare").empty())
    stats.push_back(stats_any_precision(cfg, require_dir(cfg, "variance.compare"), data));

  std::vector<double> edges = cfg.get_double_list("variance.edges");
  if (edges.empty()) {
    const std::size_t bins = cfg.get_size("variance.bins");
    if (bins == 0) throw ConfigError("variance.bins must be positive");
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& s : stats)
      for (double v : s.variance) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    edges = uniform_edges(lo, hi, bins);
  } else {
    if (edges.size() < 2 || !std::is_sorted(edges.begin(), edges.end()) ||
        std::adjacent_find(edges.begin(), edges.end()) != edges.end())
      throw ConfigError("variance.edges needs at least two strictly ascending values");
  }
  std::vector<std::vector<std::uint64_t>> hists;
  for (const auto& s : stats) hists.push_back(variance_histogram(s.variance, edges));

  auto hist = open_out(run_dir / "histogram.csv");
  hist << "bin_lo,bin_hi,count" << (stats.size() > 1 ? ",count_compare" : "") << '\n';
  for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
    hist << fmt(edges[b]) << ',' << fmt(edges[b + 1]);
    for (const auto& h : hists) hist << ',' << h[b];
    hist << '\n';
  }
  auto summary = open_out(run_dir / "summary.csv");
  summary << "checkpoint,channels,present_classes,mean_variance\n";
  const std::vector<fs::path> names{ckpt, fs::path(cfg.get("variance.compare"))};
  for (std::size_t i = 0; i < stats.size(); ++i) {
    summary << (i == 0 ? "main" : "compare") << ',' << stats[i].channels << ',' << stats[i].present_count() << ','
            << fmt(stats[i].mean_variance()) << '\n';
    dump_stats(run_dir / (i == 0 ? "class_stats" : "class_stats_compare"), stats[i]);
    log << (i == 0 ? "main" : "compare") << " " << names[i].string() << ": mean_variance=" << fmt(stats[i].mean_variance())
        << " (mean of the class-wise variance vector; summary statistic added by this tool)\n";
  }
  return kExitOk;
}

int cmd_gradcheck(const RunConfig& cfg, const fs::path& run_dir, std::ostream& log) {
  const auto& target = cfg.get("gradcheck.target");
  std::vector<std::string> targets;
  if (target == "all")
    targets = {"ops", "dgcw", "net"};
  else
    targets = {target};
  if (cfg.get("precision") != "f64") log << "gradcheck always runs at 64 bits\n";
  auto csv = open_out(run_dir / "gradcheck.csv");
  csv << "target,case,error,threshold,pass\n";
  bool all_pass = true;
  for (const auto& t : targets) {
    const auto start = std::chrono::steady_clock::now();
    const auto cases = run_gradcheck_suite(t);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    double worst = 0;
    bool pass = true;
    for (const auto& c : cases) {
      csv << c.target << ',' << c.name << ',' << fmt(c.error) << ',' << fmt(c.threshold) << ',' << (c.pass ? 1 : 0)
          << '\n';
      worst = std::max(worst, c.error);
      if (!c.pass) {
        pass = false;
        log << "FAIL " << c.target << "/" << c.name << ": " << fmt(c.error) << " >= " << fmt(c.threshold) << "\n";
      }
    }
    all_pass = all_pass && pass;
    char line[160];
    std::snprintf(line, sizeof line, "%s: %zu cases, max error %.3g (threshold %.0e), %.1f s: %s\n", t.c_str(),
                  cases.size(), worst, cases.empty() ? 0.0 : cases.front().threshold, secs, pass ? "PASS" : "FAIL");
    log << line;
  }
  return all_pass ? kExitOk : kExitNumerical;
}

int cmd_bench(const RunConfig& cfg, const fs::path& run_dir, std::ostream& log) {
  return use_f64(cfg) ? bench_impl<double>(cfg, run_dir, log) : bench_impl<float>(cfg, run_dir, log);
}

}  // namespace dgcw::cli
