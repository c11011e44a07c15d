// Acceptance harness: prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails. Training-based criteria drive the dgcw
// executable; the rest run in process.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dgcw/baselines.hpp"
#include "dgcw/dgcw.hpp"
#include "dgcw/dgt.hpp"
#include "dgcw/metrics.hpp"
#include "dgcw/network.hpp"
#include "dgcw/ops.hpp"
#include "dgcw/rng.hpp"
#include "dgcw/training.hpp"

using namespace dgcw;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, const char* f = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---- process helpers -----------------------------------------------------

struct Run {
  int code = -1;
  std::string output;
  fs::path run_dir;
  double seconds = 0;
};

Run dgcw_run(const std::string& args) {
  Run r;
  const auto t0 = std::chrono::steady_clock::now();
  const std::string cmd = std::string(DGCW_EXE) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto pos = r.output.find("run_dir: ");
  if (pos != std::string::npos) {
    const auto end = r.output.find('\n', pos);
    r.run_dir = r.output.substr(pos + 9, end - pos - 9);
  }
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double value_after(const std::string& text, const std::string& key) {
  const auto pos = text.rfind(key);
  if (pos == std::string::npos) return std::nan("");
  return std::stod(text.substr(pos + key.size()));
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---- numeric helpers -----------------------------------------------------

template <typename T>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, double lo = -1, double hi = 1) {
  KeyedRng rng(seed, "acceptance");
  Buffer<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
  return Tensor<T>::from(std::move(shape), std::move(v));
}

void randomize(Tensor<double>& t, std::uint64_t seed) {
  KeyedRng rng(seed, "acceptance-param");
  for (auto& x : t.mutable_data()) x = rng.uniform(-1, 1);
}

// max |a - b| / max |b|; exact agreement when b is all zero.
double normwise(std::span<const double> a, std::span<const double> b) {
  double diff = 0, scale = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max(scale, std::abs(b[i]));
  }
  if (scale == 0) return diff == 0 ? 0 : INFINITY;
  return diff / scale;
}

std::vector<Tensor<double>> param_list(const DgcwParams<double>& p) {
  return {p.wq.weight, p.wq.bias, p.wk.weight, p.wk.bias, p.wv.weight,
          p.wv.bias,   p.g1.weight, p.g1.bias, p.g2.weight, p.g2.bias};
}

// ---- criteria ------------------------------------------------------------

Verdict gradient_suite(const fs::path& work) {
  const std::map<std::string, double> limits{{"ops", 1e-6}, {"dgcw", 1e-5}, {"net", 1e-4}};
  bool pass = true;
  double total = 0;
  std::string detail;
  for (const auto& [target, limit] : limits) {
    auto r = dgcw_run("gradcheck --precision f64 --target " + target + " --out " + q(work / "runs"));
    total += r.seconds;
    double worst = 0;
    std::size_t cases = 0;
    if (r.code == 0)
      for (const auto& row : read_csv(r.run_dir / "gradcheck.csv")) {
        worst = std::max(worst, std::stod(row[2]));
        ++cases;
      }
    const bool ok = r.code == 0 && cases > 0 && worst < limit;
    pass = pass && ok;
    detail += target + " max " + fmt(worst, "%.2e") + " < " + fmt(limit, "%.0e") + " over " + std::to_string(cases) +
              " cases; ";
  }
  pass = pass && total < 120;
  return {pass, detail + "total " + fmt(total, "%.1f") + " s (< 120 s)"};
}

Verdict oracle_equivalence() {
  KeyedRng rng(2024, "acceptance-cases");
  const NormKind norms[] = {NormKind::Dbs, NormKind::Softmax, NormKind::Tanh};
  double worst_forward = 0, worst_grad = 0;
  std::size_t cases = 0;
  for (std::size_t t = 0; t < 120; ++t) {
    DgcwConfig cfg;
    cfg.channels = 1 + rng.below(16);
    cfg.norm = norms[t % 3];
    cfg.downsample_ratio = 1 + rng.below(2);
    cfg.block = 1 + rng.below(20);
    cfg.zero_init_g2 = false;
    std::size_t hd = 1 + rng.below(8), wd = 1 + rng.below(8);  // P = hd * wd <= 64
    const std::size_t n = 1 + rng.below(2);
    auto p = make_dgcw_params<double>(cfg, 3000 + t, "dgcw");
    std::uint64_t s = 4000 + 10 * t;
    for (auto* b : {&p.wq.bias, &p.wk.bias, &p.wv.bias, &p.g1.bias, &p.g2.bias}) randomize(*b, ++s);
    const Shape shape{n, cfg.channels, hd * cfg.downsample_ratio, wd * cfg.downsample_ratio};
    const auto w = random_tensor<double>(shape, 5000 + t);

    std::vector<Buffer<double>> grads[2];
    Tensor<double> outs[2];
    for (int impl = 0; impl < 2; ++impl) {
      auto f = random_tensor<double>(shape, 6000 + t);
      f.set_requires_grad(true);
      auto params = param_list(p);
      for (auto& x : params) {
        x.set_requires_grad(true);
        x.zero_grad();
      }
      outs[impl] = dgcw_forward(f, p, impl == 0 ? DgcwImpl::Naive : DgcwImpl::Fused);
      backward(sum_all(mul(outs[impl], w)));
      grads[impl].emplace_back(f.grad().begin(), f.grad().end());
      for (auto& x : params) grads[impl].emplace_back(x.grad().begin(), x.grad().end());
    }
    worst_forward = std::max(worst_forward, normwise(outs[1].data(), outs[0].data()));
    for (std::size_t g = 0; g < grads[0].size(); ++g) {
      const double e = normwise(grads[1][g], grads[0][g]);
      if (e > 1e-12) std::cerr << "  case " << t << " gradient " << g << " differs by " << e << "\n";
      worst_grad = std::max(worst_grad, e);
    }
    ++cases;
  }
  const bool pass = cases >= 100 && worst_forward <= 1e-12 && worst_grad <= 1e-12;
  return {pass, std::to_string(cases) + " cases (C <= 16, P <= 64, 3 norms): forward " + fmt(worst_forward, "%.2e") +
                    ", gradients " + fmt(worst_grad, "%.2e") + " (<= 1e-12)"};
}

template <typename T>
std::size_t identity_mismatches(std::size_t inputs) {
  NetworkConfig base;
  NetworkConfig with = base;
  with.context = ContextKind::Dgcw;
  std::size_t bad = 0;
  for (auto impl : {DgcwImpl::Naive, DgcwImpl::Fused}) {
    with.dgcw_impl = impl;
    DgcwNet<T> a(base, 77), b(with, 77);
    NoGradGuard guard;
    for (std::size_t i = 0; i < inputs; ++i) {
      auto x = random_tensor<T>({1, 3, 64, 64}, 7000 + i, 0, 1);
      auto la = a.forward(x, false).main_logits;
      auto lb = b.forward(x, false).main_logits;
      auto da = la.data();
      auto db = lb.data();
      if (la.shape() != lb.shape() || std::memcmp(da.data(), db.data(), da.size() * sizeof(T)) != 0) ++bad;
    }
  }
  return bad;
}

Verdict identity_law() {
  const auto bad32 = identity_mismatches<float>(20);
  const auto bad64 = identity_mismatches<double>(20);
  return {bad32 == 0 && bad64 == 0, "20 inputs x {naive, fused} x {f32, f64}: " +
                                        std::to_string(bad32 + bad64) + " logit tensors differ bitwise"};
}

Verdict zero_distance_law() {
  std::size_t checked = 0, nonzero = 0, positive_elsewhere = 0, others = 0;
  // Full projection path: with W_q = W_k every pixel pairs with itself at distance zero.
  DgcwConfig cfg;
  cfg.channels = 8;
  cfg.downsample_ratio = 1;
  auto p = make_dgcw_params<double>(cfg, 91, "dgcw");
  randomize(p.wq.bias, 92);
  p.wk.weight = p.wq.weight.clone();
  p.wk.bias = p.wq.bias.clone();
  auto d = random_tensor<double>({2, 8, 3, 3}, 93);
  auto qkv = qkv_project(d, p);
  auto w = normalize_weights(channel_distance(qkv.q, qkv.k), NormKind::Dbs, 1e-12);
  const std::size_t n = 2, pp = 9, c = 8;
  auto wd = w.data();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t i = 0; i < pp; ++i)
      for (std::size_t ch = 0; ch < c; ++ch) {
        ++checked;
        if (wd[((b * pp + i) * pp + i) * c + ch] != 0.0) ++nonzero;
      }
  // Hand-built Q, K equal on a single channel only.
  auto qh = Tensor<double>::from({1, 2, 3}, std::vector<double>{0.5, -1, 2, 3, 1, -2});
  auto kh = Tensor<double>::from({1, 2, 3}, std::vector<double>{0.5, 4, 7, -1, 1, 5});
  const std::size_t same[] = {0, (1 * 2 + 1) * 3 + 1};  // pair (0,0) channel 0, pair (1,1) channel 1
  auto m32 = normalize_weights(channel_distance(cast<float>(qh), cast<float>(kh)), NormKind::Dbs, 1e-6f);
  auto v32 = m32.data();
  for (auto i : same) {
    ++checked;
    if (v32[i] != 0.0f) ++nonzero;
  }
  auto m = normalize_weights(channel_distance(qh, kh), NormKind::Dbs, 1e-12);
  auto v = m.data();
  for (auto i : same) {
    ++checked;
    if (v[i] != 0.0) ++nonzero;
  }
  for (std::size_t i = 0; i < v.size(); ++i)
    if (i != same[0] && i != same[1]) {
      ++others;
      if (v[i] > 0) ++positive_elsewhere;
    }
  return {nonzero == 0 && positive_elsewhere == others,
          std::to_string(checked) + " equal (Q_i, K_j) channel entries, " + std::to_string(nonzero) +
              " nonzero DBS weights; unequal channels positive: " + std::to_string(positive_elsewhere) + "/" +
              std::to_string(others)};
}

struct AblationRuns {
  std::map<std::string, std::vector<double>> miou;            // context -> per seed
  std::map<std::string, std::vector<fs::path>> checkpoints;  // context -> per seed
  double longest = 0;
  bool ok = true;
  std::string error;
};

AblationRuns train_ablation(const fs::path& work, const fs::path& data, std::size_t seeds, const std::string& extra) {
  AblationRuns a;
  for (std::size_t s = 0; s < seeds; ++s)
    for (const char* ctx : {"none", "conv", "dgcw"}) {
      auto r = dgcw_run("train --seed " + std::to_string(s) + " --net.context " + ctx + " --data.dir " + q(data) +
                        " --out " + q(work / "runs") + extra);
      const double best = value_after(r.output, "best_val_miou=");
      std::cout << "  train seed " << s << " " << ctx << ": best val mIoU " << fmt(best, "%.4f") << " in "
                << fmt(r.seconds, "%.0f") << " s\n"
                << std::flush;
      if (r.code != 0 || std::isnan(best)) {
        a.ok = false;
        a.error = std::string("train ") + ctx + " seed " + std::to_string(s) + " exited " + std::to_string(r.code);
      }
      a.miou[ctx].push_back(best);
      a.checkpoints[ctx].push_back(r.run_dir / "checkpoint");
      a.longest = std::max(a.longest, r.seconds);
    }
  return a;
}

Verdict toy_ablation(const AblationRuns& a) {
  if (!a.ok) return {false, a.error};
  const auto& none = a.miou.at("none");
  const auto& conv = a.miou.at("conv");
  const auto& dg = a.miou.at("dgcw");
  std::size_t beats_none = 0, beats_conv = 0;
  for (std::size_t s = 0; s < dg.size(); ++s) {
    beats_none += dg[s] > none[s];
    beats_conv += dg[s] > conv[s];
  }
  const std::size_t need = dg.size() - dg.size() / 5;  // 4 of 5
  const bool pass = median(dg) > median(none) && beats_none >= need && beats_conv >= need && a.longest <= 900;
  return {pass, "median mIoU none " + fmt(median(none), "%.4f") + ", conv " + fmt(median(conv), "%.4f") +
                    ", dgcw " + fmt(median(dg), "%.4f") + "; dgcw > none in " + std::to_string(beats_none) + "/" +
                    std::to_string(dg.size()) + ", dgcw > conv in " + std::to_string(beats_conv) + "/" +
                    std::to_string(dg.size()) + " seeds (need " + std::to_string(need) + "); longest run " +
                    fmt(a.longest, "%.0f") + " s (<= 900 s)"};
}

Verdict discriminativeness(const fs::path& work, const fs::path& data, const AblationRuns& a) {
  if (!a.ok) return {false, a.error};
  std::size_t higher = 0;
  std::string values;
  const auto& dg = a.checkpoints.at("dgcw");
  const auto& base = a.checkpoints.at("none");
  for (std::size_t s = 0; s < dg.size(); ++s) {
    auto r = dgcw_run("variance --eval.checkpoint " + q(dg[s]) + " --variance.compare " + q(base[s]) +
                      " --data.dir " + q(data) + " --out " + q(work / "runs"));
    if (r.code != 0) return {false, "variance seed " + std::to_string(s) + " exited " + std::to_string(r.code)};
    const auto rows = read_csv(r.run_dir / "summary.csv");
    const double vd = std::stod(rows.at(0).at(3)), vb = std::stod(rows.at(1).at(3));
    higher += vd > vb;
    values += fmt(vd, "%.4g") + " vs " + fmt(vb, "%.4g") + (s + 1 < dg.size() ? ", " : "");
  }
  const std::size_t need = dg.size() - dg.size() / 5;
  return {higher >= need, "mean class-wise variance dgcw vs base: " + values + "; higher in " +
                              std::to_string(higher) + "/" + std::to_string(dg.size()) + " (need " +
                              std::to_string(need) + ")"};
}

Verdict strategies(const fs::path& work, const fs::path& data, const AblationRuns& a, const std::string& extra) {
  if (!a.ok) return {false, a.error};
  const auto baseline = a.checkpoints.at("dgcw").at(0);
  auto t = dgcw_run("train --seed 0 --net.context dgcw --train.ohem true --data.dir " + q(data) + " --out " +
                    q(work / "runs") + extra);
  if (t.code != 0) return {false, "OHEM training exited " + std::to_string(t.code)};
  const auto ohem = t.run_dir / "checkpoint";
  struct Config {
    const char* name;
    fs::path ckpt;
    std::string flags;
  };
  const std::vector<Config> configs{
      {"baseline", baseline, ""},
      {"+OHEM", ohem, ""},
      {"+OHEM+MS", ohem, " --eval.scales 0.75,1,1.25,1.5"},
      {"+OHEM+MS+Flip", ohem, " --eval.scales 0.75,1,1.25,1.5 --eval.flip true"},
  };
  std::vector<std::string> csvs;
  std::string detail;
  bool reproducible = true;
  double prev = std::nan("");
  for (const auto& c : configs) {
    std::string both[2];
    double m = 0;
    for (int rep = 0; rep < 2; ++rep) {
      auto r = dgcw_run("eval --eval.checkpoint " + q(c.ckpt) + " --data.dir " + q(data) + " --out " +
                        q(work / "runs") + c.flags);
      if (r.code != 0) return {false, std::string("eval ") + c.name + " exited " + std::to_string(r.code)};
      both[rep] = slurp(r.run_dir / "summary.csv") + slurp(r.run_dir / "per_class.csv");
      m = value_after(r.output, "miou=");
    }
    reproducible = reproducible && both[0] == both[1];
    csvs.push_back(both[0]);
    detail += std::string(c.name) + " " + fmt(m, "%.4f");
    if (!std::isnan(prev)) detail += " (" + fmt(m - prev, "%+.4f") + ")";
    detail += "; ";
    prev = m;
  }
  std::sort(csvs.begin(), csvs.end());
  const bool distinct = std::adjacent_find(csvs.begin(), csvs.end()) == csvs.end();
  return {reproducible && distinct, detail + (distinct ? "4 distinct" : "duplicate") + " CSVs, " +
                                        (reproducible ? "reproducible" : "NOT reproducible")};
}

Verdict cost_scaling(const fs::path& work) {
  auto r = dgcw_run("bench --out " + q(work / "runs"));
  if (r.code != 0) return {false, "bench exited " + std::to_string(r.code)};
  double slope = std::nan("");
  for (const auto& row : read_csv(r.run_dir / "fit.csv"))
    if (row[0] == "naive" && row[1] == "infer_peak_aux_bytes") slope = std::stod(row[2]);
  double naive64 = 0, fused64 = 0;
  for (const auto& row : read_csv(r.run_dir / "memory.csv"))
    if (row[3] == "64") (row[0] == "naive" ? naive64 : fused64) = std::stod(row[7]);
  const double ratio = naive64 > 0 ? fused64 / naive64 : INFINITY;
  const bool pass = std::abs(slope - 2) <= 0.1 && fused64 > 0 && ratio <= 0.25;
  return {pass, "naive log-log slope " + fmt(slope, "%.3f") + " (2 +- 0.1); fused/naive peak aux at P=64 " +
                    fmt(fused64, "%.0f") + "/" + fmt(naive64, "%.0f") + " = " + fmt(ratio, "%.3f") + " (<= 0.25)"};
}

Verdict mechanics(const fs::path& work) {
  std::vector<std::string> failed;
  auto expect = [&](bool ok, const char* what) {
    if (!ok) failed.push_back(what);
  };
  // OHEM: hard pixels below 0.7, else the lowest-probability min_kept.
  const std::vector<double> probs{0.9, 0.5, 0.95, 0.2, -1, 0.69};
  auto keep = ohem_filter<double>(probs, 0.7, 1);
  expect(keep == std::vector<std::uint8_t>{0, 1, 0, 1, 0, 1}, "ohem threshold");
  keep = ohem_filter<double>(probs, 0.7, 4);
  expect(keep == std::vector<std::uint8_t>{1, 1, 0, 1, 0, 1}, "ohem min_kept");
  keep = ohem_filter<double>(probs, 0.1, 100);
  expect(std::count(keep.begin(), keep.end(), 1) == 5 && keep[4] == 0, "ohem keeps all valid");

  expect(poly_lr(0.01, 0, 1500) == 0.01, "poly_lr start");
  expect(poly_lr(0.01, 1500, 1500) == 0.0, "poly_lr end");
  expect(poly_lr(0.02, 7, 7, 0.9) == 0.0, "poly_lr end 2");

  // mIoU: truth [0 0 1 1], prediction [0 1 1 1] -> IoU 1/2 and 2/3.
  ConfusionMatrix cm(3);
  LabelMap truth(1, 1, 4), pred(1, 1, 4);
  truth.values = {0, 0, 1, 1};
  pred.values = {0, 1, 1, 1};
  cm.add(pred, truth);
  const auto m = miou(cm);
  expect(std::abs(m.miou - (0.5 + 2.0 / 3.0) / 2) < 1e-15 && !m.present[2], "miou hand case");
  ConfusionMatrix perfect(2);
  perfect.add(truth, truth);
  expect(miou(perfect).miou == 1.0, "miou perfect");

  // DGT1 round trip, including signed zero, subnormals and infinities.
  auto t64 = random_tensor<double>({2, 3, 4}, 31);
  auto d64 = t64.mutable_data();
  d64[0] = -0.0;
  d64[1] = 4.9e-324;
  d64[2] = INFINITY;
  d64[3] = -1e308;
  auto t32 = random_tensor<float>({5, 7}, 32);
  t32.mutable_data()[0] = 1e-45f;
  write_dgt(work / "rt64.dgt", t64);
  write_dgt(work / "rt32.dgt", t32);
  auto b64 = read_dgt<double>(work / "rt64.dgt");
  auto b32 = read_dgt<float>(work / "rt32.dgt");
  expect(b64.shape() == t64.shape() &&
             std::memcmp(b64.data().data(), t64.data().data(), t64.numel() * sizeof(double)) == 0,
         "dgt f64 round trip");
  expect(b32.shape() == t32.shape() &&
             std::memcmp(b32.data().data(), t32.data().data(), t32.numel() * sizeof(float)) == 0,
         "dgt f32 round trip");

  std::string detail = "OHEM keep-count, poly-lr endpoints, mIoU hand cases, DGT1 round trip";
  if (!failed.empty()) {
    detail += "; failed:";
    for (const auto& f : failed) detail += " " + f;
  }
  return {failed.empty(), detail};
}

Verdict unification() {
  double worst = 0;
  std::size_t cases = 0;
  for (auto norm : {NormKind::Dbs, NormKind::Softmax, NormKind::Tanh})
    for (std::size_t ratio : {1, 2}) {
      DgcwConfig cfg;
      cfg.channels = 4;
      cfg.norm = norm;
      cfg.downsample_ratio = ratio;
      cfg.zero_init_g2 = false;
      auto p = make_dgcw_params<double>(cfg, 200 + cases, "dgcw");
      randomize(p.g2.bias, 300 + cases);
      auto f = random_tensor<double>({2, 4, 4, 6}, 400 + cases);
      worst = std::max(worst, normwise(make_dgcw_operator(p)(f).data(), dgcw_forward(f, p, DgcwImpl::Naive).data()));
      worst = std::max(worst, normwise(make_dgcw_operator(p)(f).data(), dgcw_forward(f, p, DgcwImpl::Fused).data()));
      ++cases;
    }
  for (auto mode : {NonLocalMode::Hold, NonLocalMode::Downsample}) {
    auto p = make_nonlocal_params<double>(4, mode, 2, 500 + cases, "nl");
    randomize(p.out.weight, 600 + cases);
    auto f = random_tensor<double>({2, 4, 4, 4}, 700 + cases);
    worst = std::max(worst, normwise(make_nonlocal_operator(p)(f).data(), nonlocal_context(f, p).data()));
    ++cases;
  }
  return {worst <= 1e-12, std::to_string(cases) + " micro cases (DGCW x 3 norms x 2 ratios, NL-H, NL-D): max " +
                              "relative difference " + fmt(worst, "%.2e") + " (<= 1e-12)"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria for the DGCW toolkit"};
  fs::path work = "acceptance_work";
  std::size_t seeds = 5;
  std::size_t iterations = 0;
  app.add_option("--work", work, "scratch directory");
  app.add_option("--seeds", seeds, "training seeds for the ablation criteria")->check(CLI::Range(1, 100));
  app.add_option("--iterations", iterations, "override train.iterations (0 keeps the default config)");
  CLI11_PARSE(app, argc, argv);

  fs::remove_all(work);
  fs::create_directories(work);
  const std::string extra = iterations ? " --train.iterations " + std::to_string(iterations) : "";

  std::vector<std::pair<int, Verdict>> results;
  auto report = [&](int id, const char* title, Verdict v) {
    std::cout << "criterion " << id << " [" << (v.pass ? "PASS" : "FAIL") << "] " << title << ": " << v.detail
              << "\n"
              << std::flush;
    results.emplace_back(id, std::move(v));
  };

  report(1, "gradient suite", gradient_suite(work));
  report(2, "fused vs naive equivalence", oracle_equivalence());
  report(3, "identity law", identity_law());
  report(4, "zero-distance law", zero_distance_law());

  const auto data = work / "data";
  auto g = dgcw_run("gen-data --data.dir " + q(data) + " --out " + q(work / "runs"));
  AblationRuns runs;
  if (g.code != 0) {
    runs.ok = false;
    runs.error = "gen-data exited " + std::to_string(g.code);
  } else {
    runs = train_ablation(work, data, seeds, extra);
  }
  report(5, "toy ablation", toy_ablation(runs));
  report(6, "discriminativeness shift", discriminativeness(work, data, runs));
  report(7, "strategy runs", strategies(work, data, runs, extra));
  report(8, "cost scaling", cost_scaling(work));
  report(9, "mechanics", mechanics(work));
  report(10, "context-operator unification", unification());

  const auto passed = std::count_if(results.begin(), results.end(), [](const auto& r) { return r.second.pass; });
  std::cout << passed << "/" << results.size() << " criteria passed\n";
  return passed == static_cast<long>(results.size()) ? 0 : 1;
}
