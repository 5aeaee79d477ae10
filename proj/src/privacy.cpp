#include "scanpriv/privacy.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "scanpriv/errors.hpp"
#include "scanpriv/parallel.hpp"

namespace scanpriv {

Scanpath resample(const Scanpath& path, std::size_t length) {
  if (path.points.empty() || length == 0) {
    throw InvalidScanpath("cannot resample an empty scanpath");
  }
  Scanpath out = path;
  out.points.clear();
  const std::size_t m = path.points.size();
  for (std::size_t j = 0; j < length; ++j) {
    const double pos = length == 1 ? 0.0
                                   : static_cast<double>(j) * static_cast<double>(m - 1) /
                                         static_cast<double>(length - 1);
    const auto i0 = static_cast<std::size_t>(std::floor(pos));
    const std::size_t i1 = std::min(i0 + 1, m - 1);
    const double f = pos - static_cast<double>(i0);
    const GazePoint& a = path.points[i0];
    const GazePoint& b = path.points[i1];
    out.points.push_back({a.t + f * (b.t - a.t), a.x + f * (b.x - a.x), a.y + f * (b.y - a.y)});
  }
  return out;
}

std::size_t median_point_count(std::span<const Scanpath> paths) {
  if (paths.empty()) throw InsufficientData("no scanpaths");
  std::vector<std::size_t> n;
  for (const auto& p : paths) n.push_back(p.points.size());
  std::sort(n.begin(), n.end());
  // Lower median keeps the value an actual point count.
  return n[(n.size() - 1) / 2];
}

double l1_sensitivity_raw(std::span<const Scanpath> paths, std::size_t length) {
  if (paths.size() < 2) throw InsufficientData("sensitivity needs at least 2 records");
  if (length == 0) length = median_point_count(paths);
  std::vector<Scanpath> r;
  r.reserve(paths.size());
  for (const auto& p : paths) r.push_back(resample(p, length));
  double best = 0.0;
  for (std::size_t a = 0; a < r.size(); ++a) {
    for (std::size_t b = a + 1; b < r.size(); ++b) {
      double d = 0.0;
      for (std::size_t j = 0; j < length; ++j) {
        d += std::abs(r[a].points[j].x - r[b].points[j].x) +
             std::abs(r[a].points[j].y - r[b].points[j].y);
      }
      best = std::max(best, d);
    }
  }
  return best;
}

ChannelSensitivity l1_sensitivity_image(std::span<const EncodedImage> images) {
  if (images.size() < 2) throw InsufficientData("sensitivity needs at least 2 images");
  const std::size_t n = images.front().size();
  std::vector<float> lo(images.front().values().begin(), images.front().values().end());
  std::vector<float> hi = lo;
  for (const auto& img : images) {
    if (img.size() != n) throw ShapeError("images differ in size");
    const auto v = img.values();
    for (std::size_t i = 0; i < n; ++i) {
      lo[i] = std::min(lo[i], v[i]);
      hi[i] = std::max(hi[i], v[i]);
    }
  }
  ChannelSensitivity s{};
  const std::size_t plane = images.front().plane();
  for (std::size_t i = 0; i < n; ++i) {
    auto& c = s[i / plane];
    c = std::max(c, static_cast<double>(hi[i] - lo[i]));
  }
  return s;
}

namespace {

void check_scale(double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw InvalidScale("Laplace scale must be finite and > 0, got " + std::to_string(lambda));
  }
}

double laplace_sample(double lambda, Rng& rng) {
  // Inverse CDF on u in (-1/2, 1/2).
  const double u = rng.uniform_open() - 0.5;
  return -lambda * std::copysign(1.0, u) * std::log1p(-2.0 * std::abs(u));
}

}  // namespace

std::vector<double> laplace_noise(std::size_t n, double lambda, Rng& rng) {
  check_scale(lambda);
  std::vector<double> out(n);
  for (auto& v : out) v = laplace_sample(lambda, rng);
  return out;
}

double laplace_cdf(double z, double lambda) {
  check_scale(lambda);
  return z < 0.0 ? 0.5 * std::exp(z / lambda) : 1.0 - 0.5 * std::exp(-z / lambda);
}

std::optional<Scanpath> dp_raw(const Scanpath& path, double sensitivity, double epsilon,
                               Rng& rng) {
  if (!(epsilon > 0.0)) throw InvalidScale("epsilon must be > 0");
  if (sensitivity < 0.0) throw InvalidScale("sensitivity must be >= 0");
  Scanpath out = path;
  if (sensitivity > 0.0) {
    const double lambda = sensitivity / epsilon;
    check_scale(lambda);
    out.points.clear();
    for (const auto& p : path.points) {
      const double x = p.x + laplace_sample(lambda, rng);
      const double y = p.y + laplace_sample(lambda, rng);
      if (x < 0.0 || x > 1.0 || y < 0.0 || y > 1.0) continue;
      out.points.push_back({p.t, x, y});
    }
  }
  if (out.points.size() < 3) return std::nullopt;
  return out;
}

EncodedImage dp_image(const EncodedImage& image, const ChannelSensitivity& sensitivity,
                      double epsilon_pixel, Rng& rng) {
  if (!(epsilon_pixel > 0.0)) throw InvalidScale("epsilon must be > 0");
  EncodedImage out = image;
  for (int c = 0; c < EncodedImage::kChannels; ++c) {
    const double s = sensitivity[static_cast<std::size_t>(c)];
    if (s < 0.0) throw InvalidScale("sensitivity must be >= 0");
    if (s == 0.0) continue;
    const double lambda = s / epsilon_pixel;
    check_scale(lambda);
    auto v = out.values().subspan(static_cast<std::size_t>(c) * out.plane(), out.plane());
    for (auto& x : v) {
      x = static_cast<float>(std::clamp(x + laplace_sample(lambda, rng), 0.0, 1.0));
    }
  }
  return out;
}

const char* to_string(DpDomain d) { return d == DpDomain::kRaw ? "raw" : "image"; }

EpsilonSweep EpsilonSweep::full(DpDomain domain) {
  return domain == DpDomain::kImage ? EpsilonSweep{domain, 1, 1500, 1}
                                    : EpsilonSweep{domain, 1000, 50000, 1};
}

void EpsilonSweep::validate() const {
  if (lo < 1 || hi < lo || step < 1) {
    throw ConfigError("epsilon sweep needs 0 < lo <= hi and step > 0");
  }
}

std::vector<long> EpsilonSweep::values() const {
  validate();
  std::vector<long> v;
  for (long e = lo; e <= hi; e += step) v.push_back(e);
  return v;
}

double effective_epsilon(DpDomain domain, long hundredths, int resolution) {
  const long pixels = domain == DpDomain::kImage ? static_cast<long>(resolution) * resolution : 1;
  return static_cast<double>(hundredths * pixels) / 100.0;
}

int majority_vote(std::span<const int> votes, int n_classes) {
  if (votes.empty()) throw InsufficientData("no votes");
  std::vector<int> count(static_cast<std::size_t>(n_classes), 0);
  for (int v : votes) {
    if (v < 0 || v >= n_classes) throw ShapeError("vote outside class range");
    ++count[static_cast<std::size_t>(v)];
  }
  return static_cast<int>(std::max_element(count.begin(), count.end()) - count.begin());
}

std::vector<FrontierRow> dp_evaluate(const EpsilonSweep& sweep,
                                     std::span<const LabeledRecord> test,
                                     const ClassifierSet& classifiers,
                                     const DpEvalOptions& options) {
  if (test.empty()) throw InsufficientData("no test records");
  if (options.repetitions < 1) throw ConfigError("repetitions must be >= 1");
  int stim_c = -1, sub_c = -1;
  for (std::size_t c = 0; c < classifiers.size(); ++c) {
    (classifiers.tasks[c].kind == LabelKind::kStimulus ? stim_c : sub_c) = static_cast<int>(c);
  }
  if (stim_c < 0 || sub_c < 0) throw ConfigError("need a stimulus and a subject classifier");

  std::vector<EncodedImage> clean;
  for (const auto& r : test) clean.push_back(encode_scanpath(r.scanpath, options.encode));

  std::vector<FrontierRow> rows;
  for (long h : sweep.values()) {
    const double eps = static_cast<double>(h) / 100.0;
    // votes[item][classifier] -> predicted class, -1 when skipped.
    std::vector<std::array<int, 2>> pred(test.size(), {-1, -1});
    parallel_chunks(test.size(), options.threads, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) {
        std::vector<EncodedImage> copies;
        for (int r = 0; r < options.repetitions; ++r) {
          Rng rng(derive_seed(options.seed, "dp", (static_cast<std::uint64_t>(h) << 40) ^
                                                      (i * 1000003u + static_cast<std::uint64_t>(r))));
          if (sweep.domain == DpDomain::kRaw) {
            auto noised = dp_raw(test[i].scanpath, options.raw_sensitivity, eps, rng);
            if (noised) copies.push_back(encode_scanpath(*noised, options.encode));
          } else {
            copies.push_back(dp_image(clean[i], options.image_sensitivity, eps, rng));
          }
        }
        if (copies.empty()) continue;
        for (int k = 0; k < 2; ++k) {
          const auto& model = classifiers.models[static_cast<std::size_t>(k == 0 ? stim_c : sub_c)];
          const auto votes = predict_batch(model, copies);
          pred[i][static_cast<std::size_t>(k)] = majority_vote(votes, model.n_classes());
        }
      }
    });
    FrontierRow row;
    row.hundredths = h;
    row.domain = sweep.domain;
    row.epsilon = effective_epsilon(sweep.domain, h, options.encode.resolution);
    std::size_t voted = 0, stim_hit = 0, sub_hit = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
      if (pred[i][0] < 0) continue;
      ++voted;
      stim_hit += pred[i][0] == test[i].stimulus_label;
      sub_hit += pred[i][1] == test[i].subject_label;
    }
    row.skipped_fraction = 1.0 - static_cast<double>(voted) / static_cast<double>(test.size());
    row.skipped = voted == 0;
    if (voted > 0) {
      row.stim_acc = static_cast<double>(stim_hit) / static_cast<double>(voted);
      row.sub_acc = static_cast<double>(sub_hit) / static_cast<double>(voted);
    }
    rows.push_back(row);
  }
  return rows;
}

const FrontierRow& select_optimal_epsilon(std::span<const FrontierRow> rows,
                                          double chance_level, double tolerance) {
  if (rows.empty()) throw NoFeasibleEpsilon("empty frontier");
  const FrontierRow* best = nullptr;
  for (const auto& r : rows) {
    if (r.skipped || std::abs(r.sub_acc - chance_level) > tolerance) continue;
    if (!best || r.stim_acc - r.sub_acc > best->stim_acc - best->sub_acc) best = &r;
  }
  if (!best) {
    throw NoFeasibleEpsilon("no epsilon puts subject accuracy within " +
                            std::to_string(tolerance) + " of chance");
  }
  return *best;
}

void write_frontier_csv(std::ostream& out, std::span<const FrontierRow> rows) {
  out << "epsilon,domain,stim_acc,sub_acc,skipped_fraction\n";
  char buf[160];
  for (const auto& r : rows) {
    if (r.skipped) {
      std::snprintf(buf, sizeof buf, "%.2f,%s,,,%.6f\n", r.epsilon, to_string(r.domain),
                    r.skipped_fraction);
    } else {
      std::snprintf(buf, sizeof buf, "%.2f,%s,%.6f,%.6f,%.6f\n", r.epsilon,
                    to_string(r.domain), r.stim_acc, r.sub_acc, r.skipped_fraction);
    }
    out << buf;
  }
}

}  // namespace scanpriv
