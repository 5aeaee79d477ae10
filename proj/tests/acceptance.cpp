// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any selected criterion fails.
//
//   acceptance [--work DIR] [--fresh] [criterion numbers...]
//
// Long runs (criteria 7, 9, 11) keep their outputs under the work directory
// and resume from completed stages on a rerun; --fresh wipes it first.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "scanpriv/codec.hpp"
#include "scanpriv/config.hpp"
#include "scanpriv/errors.hpp"
#include "scanpriv/manip_agent.hpp"
#include "scanpriv/models.hpp"
#include "scanpriv/nn/layers.hpp"
#include "scanpriv/nn/loss.hpp"
#include "scanpriv/pipeline.hpp"
#include "scanpriv/privacy.hpp"

namespace fs = std::filesystem;
using namespace scanpriv;

namespace {

// Tolerances.
constexpr double kCodecSeconds = 1.0;
constexpr double kGradRelError = 1e-3;
constexpr double kGradSeconds = 60.0;
constexpr std::size_t kSweepEntries = 13996;
constexpr double kDqlRegression = 0.05;
// Ten full-batch steps: momentum 0.9 has no time to settle, so plain SGD.
constexpr double kDqlLr = 0.03;
constexpr double kDqlMomentum = 0.0;
constexpr double kDqlSeconds = 300.0;
constexpr double kSubjectChance = 0.125;
constexpr double kChanceBand = 0.10;
constexpr double kStimulusFloor = 0.60;
constexpr double kAdaptationDrop = 0.10;
constexpr double kKsMax = 0.01;
constexpr double kSpearmanMin = 0.8;
constexpr double kTransferGain = 0.10;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path g_work;

void say(const std::string& s) { std::fprintf(stderr, "  %s\n", s.c_str()); std::fflush(stderr); }

ExperimentConfig desk_config() {
  return load_config(fs::path(SCANPRIV_SOURCE_DIR) / "configs/desk.ini");
}

// ------------------------------------------------------------------ 1

Scanpath random_path(Rng& rng) {
  Scanpath p;
  p.subject_id = "s";
  p.stimulus_id = "i";
  const int n = 1 + static_cast<int>(rng.index(60));
  double t = 0.0;
  for (int i = 0; i < n; ++i) {
    p.points.push_back({t, rng.uniform(), rng.uniform()});
    t += rng.uniform(0.0, 0.2);
  }
  p.duration = t + rng.uniform(0.0, 0.5);
  return p;
}

// Membership test straight from the definition: on the segment a-b a pixel is
// lit when it lies in the major-axis range and its minor coordinate is the
// nearest integer to the ideal line at that column (ties towards b).
bool on_segment(int col, int row, int ac, int ar, int bc, int br) {
  const int dx = bc - ac, dy = br - ar;
  const int n = std::max(std::abs(dx), std::abs(dy));
  if (n == 0) return col == ac && row == ar;
  const bool x_major = std::abs(dx) >= std::abs(dy);
  const int major = x_major ? col - ac : row - ar;
  const int major_d = x_major ? dx : dy;
  const int minor = x_major ? row - ar : col - ac;
  const int minor_d = x_major ? dy : dx;
  if (major_d > 0 ? (major < 0 || major > n) : (major > 0 || major < -n)) return false;
  const long i = std::labs(major);
  // distance of `minor` from minor_d * i / n, scaled by 2n
  const long d = 2L * n * minor - 2L * minor_d * i;
  if (std::labs(d) < n) return true;
  if (std::labs(d) > n) return false;
  return minor_d > 0 ? d > 0 : d < 0;
}

Outcome criterion_codec() {
  Rng rng(2024);
  std::vector<Scanpath> paths;
  for (int i = 0; i < 100; ++i) paths.push_back(random_path(rng));
  const int res = 64;
  const auto t0 = Clock::now();
  std::vector<EncodedImage> got;
  for (const auto& p : paths) got.push_back(encode_scanpath(p));
  const double secs = seconds_since(t0);

  std::size_t mismatches = 0;
  for (std::size_t k = 0; k < paths.size(); ++k) {
    const Scanpath& p = paths[k];
    std::vector<std::pair<int, int>> px;
    for (const auto& g : p.points) {
      px.push_back({static_cast<int>(std::floor(g.x * (res - 1) + 0.5)),
                    static_cast<int>(std::floor(g.y * (res - 1) + 0.5))});
    }
    for (int r = 0; r < res; ++r) {
      for (int c = 0; c < res; ++c) {
        float red = 0, green = 0, blue = 0;
        for (std::size_t i = 0; i < px.size(); ++i) {
          if (px[i].first == c && px[i].second == r) {
            red = 1.0f;
            const double ratio = p.duration > 0 ? p.points[i].t / p.duration : 0.0;
            green = std::max(green, static_cast<float>(ratio * 0.9 + 0.1));
          }
          if (i > 0 && on_segment(c, r, px[i - 1].first, px[i - 1].second, px[i].first,
                                  px[i].second)) {
            blue = 1.0f;
          }
        }
        const auto& img = got[k];
        if (img.at(kRed, r, c) != red || img.at(kGreen, r, c) != green ||
            img.at(kBlue, r, c) != blue) {
          ++mismatches;
        }
      }
    }
  }
  return {mismatches == 0 && secs < kCodecSeconds,
          "100 paths, " + std::to_string(mismatches) + " mismatched pixels, encode " +
              fmt("%.3f s", secs)};
}

// ------------------------------------------------------------------ 2

using D = double;

double rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(na) + std::sqrt(nb), 1e-12);
}

// Worst relative error over input and parameter gradients.
double layer_error(nn::Layer<D>& layer, nn::Shape in_shape, std::uint64_t seed) {
  Rng rng(seed);
  layer.init(rng);
  for (auto& p : layer.params()) {
    for (D& v : p.values()) v += rng.uniform(-0.1, 0.1);
  }
  nn::Tensor<D> x(in_shape);
  for (D& v : x.values()) v = rng.uniform(-1, 1);
  nn::Tensor<D> proj(layer.output_shape(x.shape()));
  for (D& v : proj.values()) v = rng.uniform(-1, 1);
  const std::uint64_t mask_seed = rng.next();
  auto f = [&] {
    Rng r(mask_seed);
    nn::LayerCache<D> cache;
    auto y = layer.forward(x, &cache, &r);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * proj[i];
    return s;
  };
  Rng r(mask_seed);
  nn::LayerCache<D> cache;
  layer.forward(x, &cache, &r);
  std::vector<nn::Tensor<D>> grads;
  for (const auto& p : std::as_const(layer).params()) grads.emplace_back(p.shape());
  auto dx = layer.backward(proj, cache, grads, true);

  auto numeric = [&](D* v, std::size_t n) {
    std::vector<double> out;
    for (std::size_t i = 0; i < n; ++i) {
      const D s = v[i];
      v[i] = s + 1e-6;
      const double up = f();
      v[i] = s - 1e-6;
      const double down = f();
      v[i] = s;
      out.push_back((up - down) / 2e-6);
    }
    return out;
  };
  double worst = rel_error({dx.values().begin(), dx.values().end()}, numeric(x.data(), x.size()));
  auto params = layer.params();
  for (std::size_t p = 0; p < params.size(); ++p) {
    worst = std::max(worst, rel_error({grads[p].values().begin(), grads[p].values().end()},
                                      numeric(params[p].data(), params[p].size())));
  }
  return worst;
}

template <class Loss>
double loss_error(nn::Tensor<D> pred, Loss loss) {
  const auto r = loss(pred);
  std::vector<double> n;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const D s = pred[i];
    pred[i] = s + 1e-6;
    const double up = loss(pred).value;
    pred[i] = s - 1e-6;
    const double down = loss(pred).value;
    pred[i] = s;
    n.push_back((up - down) / 2e-6);
  }
  return rel_error({r.grad.values().begin(), r.grad.values().end()}, n);
}

Outcome criterion_gradients() {
  const auto t0 = Clock::now();
  std::map<std::string, double> worst;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto note = [&](const std::string& name, double e) { worst[name] = std::max(worst[name], e); };
    {
      nn::Conv2d<D> l(2, 3, 5, 2);
      note("conv", layer_error(l, {2, 2, 8, 8}, seed));
    }
    {
      nn::ConvTranspose2d<D> l(3, 2, 5, 2);
      note("tconv", layer_error(l, {2, 3, 3, 3}, seed));
    }
    {
      nn::Linear<D> l(12, 5);
      note("linear", layer_error(l, {3, 3, 2, 2}, seed));
    }
    {
      nn::Relu<D> l;
      note("relu", layer_error(l, {2, 3, 4, 4}, seed));
    }
    {
      nn::MaxPool2<D> l;
      note("maxpool", layer_error(l, {2, 3, 4, 6}, seed));
    }
    {
      nn::Dropout<D> l(0.5);
      note("dropout", layer_error(l, {4, 10}, seed));
    }
    Rng rng(seed * 977);
    nn::Tensor<D> a({3, 4}), b({3, 4}), logits({4, 5});
    for (D& v : a.values()) v = rng.uniform(-1, 1);
    for (D& v : b.values()) v = rng.uniform(-1, 1);
    for (D& v : logits.values()) v = rng.uniform(-3, 3);
    note("l2", loss_error(a, [&](const nn::Tensor<D>& p) { return nn::l2_loss(p, b); }));
    const std::vector<int> labels{0, 4, 2, 2};
    note("softmax_log", loss_error(logits, [&](const nn::Tensor<D>& p) {
           return nn::softmax_log_loss<D>(p, labels);
         }));
  }
  const double secs = seconds_since(t0);
  double max_err = 0;
  std::string worst_name;
  for (const auto& [k, v] : worst) {
    if (v >= max_err) {
      max_err = v;
      worst_name = k;
    }
  }
  return {max_err < kGradRelError && secs < kGradSeconds,
          std::to_string(worst.size()) + " kinds x 5 seeds, worst " + worst_name + " " +
              fmt("%.2e", max_err) + ", " + fmt("%.1f s", secs)};
}

// ------------------------------------------------------------------ 3

Outcome criterion_architecture() {
  using nn::Shape;
  // (name, shape) by hand: 7x7 convs 3->32->64, 5x5 convs 64->128->256 with
  // 2x2 pooling after the first three, so 64 -> 32 -> 16 -> 8 -> 4.
  const std::vector<std::pair<std::string, Shape>> enc{
      {"conv1.weight", {32, 3, 7, 7}},    {"conv1.bias", {32}},
      {"conv2.weight", {64, 32, 7, 7}},   {"conv2.bias", {64}},
      {"conv3.weight", {128, 64, 5, 5}},  {"conv3.bias", {128}},
      {"conv4.weight", {256, 128, 5, 5}}, {"conv4.bias", {256}}};
  const std::vector<std::pair<std::string, Shape>> dec{
      {"tconv1.weight", {256, 128, 5, 5}}, {"tconv1.bias", {128}},
      {"tconv2.weight", {128, 64, 5, 5}},  {"tconv2.bias", {64}},
      {"tconv3.weight", {64, 32, 7, 7}},   {"tconv3.bias", {32}},
      {"tconv4.weight", {32, 3, 7, 7}},    {"tconv4.bias", {3}}};
  auto cls = [&](int n) {
    auto t = enc;
    t.push_back({"fc1.weight", {512, 4096}});
    t.push_back({"fc1.bias", {512}});
    t.push_back({"fc2.weight", {n, 512}});
    t.push_back({"fc2.bias", {n}});
    return t;
  };
  auto dql = enc;
  dql.resize(6);
  dql.push_back({"fc1.weight", {4096, 8 * 8 * 128}});
  dql.push_back({"fc1.bias", {4096}});

  int bad = 0;
  auto check = [&](const nn::Network<float>& net, const auto& want) {
    const auto names = net.parameter_names();
    const auto params = net.parameters();
    if (names.size() != want.size()) {
      ++bad;
      return;
    }
    for (std::size_t i = 0; i < want.size(); ++i) {
      if (names[i] != want[i].first || params[i]->shape() != want[i].second) ++bad;
    }
  };
  Rng rng(3);
  AutoencoderModel ae(64, rng);
  check(ae.encoder(), enc);
  check(ae.decoder(), dec);
  ClassifierModel c8(64, 8, rng), c4(64, 4, rng);
  check(c8.network(), cls(8));
  check(c4.network(), cls(4));
  DqlModel q(64, rng);
  check(q.network(), dql);
  const bool bottleneck = ae.encoder().output_sample_shape() == Shape{256, 4, 4} &&
                          ae.bottleneck_size() == 4096 &&
                          ae.decoder().output_sample_shape() == Shape{3, 64, 64} &&
                          q.action_count() == 4096;
  return {bad == 0 && bottleneck, "5 networks, " + std::to_string(bad) +
                                      " mismatched tensors, bottleneck " +
                                      std::to_string(ae.bottleneck_size())};
}

// ------------------------------------------------------------------ 4

std::shared_ptr<const Sample> random_state(Rng& rng, int res) {
  auto s = std::make_shared<Sample>();
  s->image = encode_scanpath(random_path(rng), {res});
  return s;
}

ClassifierSet untrained_set(int res, Rng& rng) {
  ClassifierSet set;
  set.tasks = {{"stimulus", LabelKind::kStimulus, 4}, {"subject", LabelKind::kSubject, 8}};
  set.models.emplace_back(res, 4, rng);
  set.models.emplace_back(res, 8, rng);
  return set;
}

Outcome criterion_replay_init() {
  Rng rng(4);
  AutoencoderModel ae(64, rng);
  const auto set = untrained_set(64, rng);
  const auto state = random_state(rng, 64);
  ReplayMemory mem;
  const auto t0 = Clock::now();
  init_memory(mem, std::span(&state, 1), ae, set, RewardSpec{{0}, {1}}, rng);
  std::map<std::size_t, std::size_t> by_k;
  std::vector<int> singles(4096, 0);
  for (const auto& e : mem.snapshot()) {
    const std::size_t k = e.action.count();
    ++by_k[k];
    if (k == 1) ++singles[e.action.ones()[0]];
  }
  bool ok = mem.size() == kSweepEntries && by_k.size() == 100 && by_k[1] == 4096 &&
            std::all_of(singles.begin(), singles.end(), [](int c) { return c == 1; });
  for (std::size_t k = 2; k <= 100; ++k) ok = ok && by_k[k] == 100;
  return {ok, std::to_string(mem.size()) + " entries, " + std::to_string(by_k[1]) +
                  " singletons, k=2..100 at 100 each: " + (ok ? "yes" : "no") + ", " +
                  fmt("%.0f s", seconds_since(t0))};
}

// ------------------------------------------------------------------ 5

double dql_regression_error(double lr, int res) {
  Rng rng(5);
  DqlAgent agent(res, rng);
  ReplayMemory mem(100);
  auto state = random_state(rng, res);
  const std::size_t actions = static_cast<std::size_t>(res / 16) * (res / 16) * 256;
  const auto pos = rng.distinct(actions, 100);
  std::vector<float> reward(100);
  for (std::size_t i = 0; i < 100; ++i) {
    ActionMask m(actions);
    m.set(pos[i]);
    reward[i] = static_cast<float>(rng.uniform(-1, 1));
    mem.push({state, m, reward[i]});
  }
  DqlTrainOptions o;
  o.schedule.max_epochs = 10;
  o.schedule.initial_lr = lr;
  o.schedule.momentum = kDqlMomentum;
  train_dql(agent, mem, 0.0, o, rng);
  const auto q = q_forward(agent.dql1, state->image);
  double err = 0;
  for (std::size_t i = 0; i < 100; ++i) err += std::abs(q[pos[i]] - reward[i]);
  return err / 100.0;
}

Outcome criterion_dql_regression() {
  const auto t0 = Clock::now();
  const double err = dql_regression_error(kDqlLr, 64);
  const double secs = seconds_since(t0);
  return {err < kDqlRegression && secs < kDqlSeconds,
          "mean |Q - R| " + fmt("%.4f", err) + " at lr " + fmt("%g", kDqlLr) +
              fmt(" momentum %g, ", kDqlMomentum) + fmt("%.0f s", secs)};
}

// ------------------------------------------------------------------ 6

Outcome criterion_fixed_target() {
  Rng rng(6);
  DqlAgent agent(16, rng);
  ReplayMemory mem(8);
  for (int i = 0; i < 4; ++i) {
    ActionMask m(256);
    m.set(static_cast<std::size_t>(i) * 17);
    mem.push({random_state(rng, 16), m, 0.5f});
  }
  DqlTrainOptions o;
  o.schedule.max_epochs = 1;
  o.schedule.initial_lr = 1e-2;
  std::uint64_t target = agent.dql2.network().parameter_hash();
  bool ok = target == agent.dql1.network().parameter_hash();
  int syncs = 0;
  for (long run = 1; run <= 35; ++run) {
    train_dql(agent, mem, 0.9, o, rng);
    const auto h1 = agent.dql1.network().parameter_hash();
    const auto h2 = agent.dql2.network().parameter_hash();
    if (run % 10 == 0) {
      ok = ok && h1 == h2 && h2 != target;
      ++syncs;
      target = h2;
    } else {
      ok = ok && h2 == target && h1 != h2;
    }
  }
  return {ok, "35 runs, " + std::to_string(syncs) + " syncs at runs 10/20/30 only"};
}

// ------------------------------------------------------------------ 7

struct SeedRun {
  std::uint64_t seed;
  RunResult result;
  fs::path out;
};

std::map<std::uint64_t, SeedRun> g_runs;

const SeedRun& desk_run(std::uint64_t seed) {
  auto it = g_runs.find(seed);
  if (it != g_runs.end()) return it->second;
  auto cfg = desk_config();
  cfg.seed = seed;
  cfg.out = g_work / ("run_seed" + std::to_string(seed));
  say("run seed " + std::to_string(seed) + " -> " + cfg.out.string());
  const auto t0 = Clock::now();
  auto r = cmd_run(cfg, [](const std::string& s) { say(s); });
  say(fmt("seed run done in %.0f s", seconds_since(t0)));
  return g_runs.emplace(seed, SeedRun{seed, std::move(r), cfg.out}).first->second;
}

std::size_t index_of(const RunResult& r, const std::string& name) {
  const auto it = std::find(r.classifier_names.begin(), r.classifier_names.end(), name);
  if (it == r.classifier_names.end()) throw std::runtime_error("no classifier " + name);
  return static_cast<std::size_t>(it - r.classifier_names.begin());
}

Outcome criterion_dynamics() {
  const auto t0 = Clock::now();
  int passed = 0, tried = 0;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    if (passed == 2 || tried - passed == 2) break;
    ++tried;
    const auto& run = desk_run(seed).result;
    const std::size_t sub = index_of(run, "subject");
    const std::size_t stim = index_of(run, "stimulus");
    bool ok = run.iterations.size() == 3;
    std::string d = "seed " + std::to_string(seed) + ":";
    for (const auto& it : run.iterations) {
      const double s = it.pre_adaptation[sub], t = it.pre_adaptation[stim];
      ok = ok && std::abs(s - kSubjectChance) <= kChanceBand && t >= kStimulusFloor;
      d += fmt(" pre(sub %.3f", s) + fmt(", stim %.3f)", t);
    }
    if (run.iterations.size() == 3) {
      const double p1 = run.iterations[0].post_adaptation[sub];
      const double p3 = run.iterations[2].post_adaptation[sub];
      ok = ok && p1 - p3 >= kAdaptationDrop;
      d += fmt(" post sub %.3f", p1) + fmt(" -> %.3f", p3);
    }
    d += ok ? " ok" : " fail";
    passed += ok;
    detail += (detail.empty() ? "" : "; ") + d;
  }
  return {passed >= 2, std::to_string(passed) + "/" + std::to_string(tried) + " seeds; " +
                           detail + fmt("; %.0f s", seconds_since(t0))};
}

// ------------------------------------------------------------------ 8

double ks_laplace(std::vector<double> x, double lambda) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double z = x[i];
    const double f = z < 0 ? 0.5 * std::exp(z / lambda) : 1.0 - 0.5 * std::exp(-z / lambda);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return d;
}

Outcome criterion_laplace() {
  const auto t0 = Clock::now();
  double worst = 0;
  for (double lambda : {0.5, 1.0, 3.0}) {
    Rng rng(static_cast<std::uint64_t>(lambda * 100) + 8);
    worst = std::max(worst, ks_laplace(laplace_noise(100000, lambda, rng), lambda));
  }
  const double lo = effective_epsilon(DpDomain::kImage, 1, 64);
  const double hi = effective_epsilon(DpDomain::kImage, 1500, 64);
  return {worst < kKsMax && lo == 40.96 && hi == 61440.0 && seconds_since(t0) < 60,
          "KS max " + fmt("%.4f", worst) + ", endpoints " + fmt("%.2f", lo) + " / " +
              fmt("%.0f", hi) + fmt(", %.1f s", seconds_since(t0))};
}

// ------------------------------------------------------------------ 9

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = (i + j) / 2.0 + 1;
    i = j + 1;
  }
  return r;
}

// NaN when either side is constant.
double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i] / n;
    mb += rb[i] / n;
  }
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  return cov / std::sqrt(va * vb);
}

Outcome criterion_dp_frontier() {
  const auto t0 = Clock::now();
  auto cfg = desk_config();
  cfg.out = g_work / "dp";
  std::optional<DpResult> r;
  std::string note;
  try {
    r = cmd_dp(cfg, [](const std::string& s) { say(s); });
  } catch (const NoFeasibleEpsilon& e) {
    note = e.what();
  }
  if (!r) return {false, "no feasible epsilon: " + note};
  bool ok = true;
  std::string detail;
  for (const auto* rows : {&r->raw, &r->image}) {
    if (rows->size() != 5) return {false, "sweep is not 5 points"};
    std::vector<double> eps, stim, sub;
    for (const auto& row : *rows) {
      eps.push_back(row.epsilon);
      stim.push_back(row.stim_acc);
      sub.push_back(row.sub_acc);
    }
    const double rs = spearman(eps, stim), rb = spearman(eps, sub);
    ok = ok && rs > kSpearmanMin && rb > kSpearmanMin;
    detail += std::string(to_string(rows->front().domain)) + fmt(": rho stim %.2f", rs) +
              fmt(" sub %.2f", rb) + "; ";
  }
  const double band = cfg.dp.chance_tolerance;
  for (const auto& [rows, choice] :
       {std::pair{&r->raw, r->raw_choice}, std::pair{&r->image, r->image_choice}}) {
    const bool member =
        choice && std::any_of(rows->begin(), rows->end(), [&](const FrontierRow& x) {
          return x.hundredths == choice->hundredths;
        });
    ok = ok && member && std::abs(choice->sub_acc - kSubjectChance) <= band;
    if (choice) {
      detail += std::string(to_string(choice->domain)) + fmt(" choice eps %.2f", choice->epsilon) +
                fmt(" sub %.3f; ", choice->sub_acc);
    }
  }
  return {ok, detail + fmt("%.0f s", seconds_since(t0))};
}

// ------------------------------------------------------------------ 10

Outcome criterion_gan() {
  Rng rng(10);
  bool ok = true;
  for (int i = 0; i < 10000; ++i) {
    const double a = rng.uniform(), b = rng.uniform();
    const double d = gan_discriminator(a, b);
    ok = ok && d >= 0.0 && d <= 1.0 && gan_discriminator(a, a) == 0.5 &&
         gan_discriminator(b, b) == 0.5;
  }
  ok = ok && gan_discriminator(1, 0) == 1.0 && gan_discriminator(0, 1) == 0.0;
  return {ok, "10000 pairs in [0,1], equal inputs give 0.5"};
}

// ------------------------------------------------------------------ 11

Outcome criterion_transfer() {
  const auto t0 = Clock::now();
  int passed = 0, tried = 0;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    if (passed == 2 || tried - passed == 2) break;
    ++tried;
    const auto& src = desk_run(seed);
    auto cfg = desk_config();
    cfg.seed = seed + 100;
    cfg.data.synth.curve_variant = 1;
    cfg.out = g_work / ("transfer_seed" + std::to_string(seed));
    const auto r = cmd_transfer(cfg, src.out, [](const std::string& s) { say(s); });
    const std::size_t sub = index_of(src.result, "subject");
    const double base = std::abs(r.baseline[sub] - kSubjectChance);
    const double adapted = std::abs(r.adapted[sub] - kSubjectChance);
    const bool frozen = r.autoencoder_hash_before == r.autoencoder_hash_after &&
                        r.dql_hash_before == r.dql_hash_after;
    const bool ok = frozen && base - adapted >= kTransferGain;
    passed += ok;
    detail += (detail.empty() ? "" : "; ") + ("seed " + std::to_string(seed)) +
              fmt(": sub baseline %.3f", r.baseline[sub]) +
              fmt(" adapted %.3f", r.adapted[sub]) + (frozen ? " hashes same" : " hashes CHANGED") +
              (ok ? " ok" : " fail");
  }
  return {passed >= 2, std::to_string(passed) + "/" + std::to_string(tried) + " seeds; " +
                           detail + fmt("; %.0f s", seconds_since(t0))};
}

// ------------------------------------------------------------------ 12

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome criterion_determinism() {
  const auto t0 = Clock::now();
  auto cfg = desk_config();
  // Same geometry and agent; fewer trials, epochs and memory entries.
  cfg.data.trials = 5;
  cfg.autoencoder.max_epochs = 5;
  cfg.classifier.max_epochs = 5;
  cfg.replay.init.max_images = 1;
  cfg.replay.init.max_k = 10;
  cfg.replay.init.masks_per_k = 10;
  cfg.iterations = 2;
  cfg.run.steps = 5;
  cfg.run.images_per_step = 2;
  std::vector<fs::path> outs;
  for (const char* name : {"det_a", "det_b"}) {
    cfg.out = g_work / name;
    fs::remove_all(cfg.out);
    cmd_run(cfg);
    outs.push_back(cfg.out);
  }
  std::size_t files = 0, differ = 0;
  for (const auto& e : fs::directory_iterator(outs[0] / "reports")) {
    if (e.path().extension() != ".csv") continue;
    ++files;
    if (slurp(e.path()) != slurp(outs[1] / "reports" / e.path().filename())) ++differ;
  }
  return {files >= 2 && differ == 0, std::to_string(files) + " report CSVs, " +
                                         std::to_string(differ) + " differ" +
                                         fmt(", %.0f s", seconds_since(t0))};
}

}  // namespace

int main(int argc, char** argv) {
  g_work = "acceptance_work";
  bool fresh = false;
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work" && i + 1 < argc) {
      g_work = argv[++i];
    } else if (a == "--fresh") {
      fresh = true;
    } else {
      only.insert(std::stoi(a));
    }
  }
  if (fresh) fs::remove_all(g_work);
  fs::create_directories(g_work);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"codec matches brute-force oracle", criterion_codec},
      {"layer gradients vs finite differences", criterion_gradients},
      {"architecture geometry", criterion_architecture},
      {"replay memory sweep on one image", criterion_replay_init},
      {"DQL regression with y=0", criterion_dql_regression},
      {"fixed target sync every 10 runs", criterion_fixed_target},
      {"scaled adversarial dynamics", criterion_dynamics},
      {"Laplace statistics and budget endpoints", criterion_laplace},
      {"DP frontier monotone, chance-level choice", criterion_dp_frontier},
      {"GAN discriminator composition", criterion_gan},
      {"transfer to a new dataset", criterion_transfer},
      {"deterministic reports", criterion_determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(n)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", n, criteria[i].first,
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
