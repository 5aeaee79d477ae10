#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "scanpriv/privacy.hpp"

namespace scanpriv {
namespace {

Scanpath random_path(Rng& rng, std::size_t n) {
  Scanpath p;
  for (std::size_t i = 0; i < n; ++i) {
    p.points.push_back({0.1 * static_cast<double>(i), rng.uniform(), rng.uniform()});
  }
  p.duration = 0.1 * static_cast<double>(n);
  return p;
}

double ks_statistic(std::vector<double> x, double lambda) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = laplace_cdf(x[i], lambda);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return d;
}

// ------------------------------------------------------------ sensitivity

TEST(Resample, IdentityAndMidpoints) {
  Rng rng(1);
  const Scanpath p = random_path(rng, 7);
  EXPECT_EQ(resample(p, 7).points, p.points);
  Scanpath two;
  two.points = {{0.0, 0.0, 0.0}, {1.0, 1.0, 0.5}};
  const auto r = resample(two, 3);
  ASSERT_EQ(r.points.size(), 3u);
  EXPECT_DOUBLE_EQ(r.points[1].x, 0.5);
  EXPECT_DOUBLE_EQ(r.points[1].y, 0.25);
  EXPECT_DOUBLE_EQ(r.points[1].t, 0.5);
}

TEST(SensitivityRaw, Examples) {
  Rng rng(2);
  const Scanpath p = random_path(rng, 5);
  const std::vector<Scanpath> same{p, p};
  EXPECT_DOUBLE_EQ(l1_sensitivity_raw(same), 0.0);
  Scanpath a, b;
  a.points = {{0, 0, 0}};
  b.points = {{0, 1, 1}};
  const std::vector<Scanpath> ab{a, b};
  EXPECT_DOUBLE_EQ(l1_sensitivity_raw(ab), 2.0);
  EXPECT_THROW(l1_sensitivity_raw(std::span<const Scanpath>(&p, 1)), InsufficientData);
}

TEST(SensitivityRaw, MatchesPairwiseMaximum) {
  Rng rng(3);
  std::vector<Scanpath> paths;
  for (int i = 0; i < 5; ++i) paths.push_back(random_path(rng, 9));
  double want = 0.0;
  for (const auto& x : paths) {
    for (const auto& y : paths) {
      double d = 0.0;
      for (std::size_t j = 0; j < 9; ++j) {
        d += std::abs(x.points[j].x - y.points[j].x) + std::abs(x.points[j].y - y.points[j].y);
      }
      want = std::max(want, d);
    }
  }
  EXPECT_NEAR(l1_sensitivity_raw(paths), want, 1e-12);
}

TEST(SensitivityRaw, MedianAlignment) {
  Rng rng(4);
  std::vector<Scanpath> paths{random_path(rng, 3), random_path(rng, 11), random_path(rng, 6)};
  EXPECT_EQ(median_point_count(paths), 6u);
  EXPECT_DOUBLE_EQ(l1_sensitivity_raw(paths), l1_sensitivity_raw(paths, 6));
}

TEST(SensitivityImage, Examples) {
  EncodedImage zero(8), red(8);
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 8; ++c) red.at(0, r, c) = 1.0f;
  }
  const std::vector<EncodedImage> same{red, red};
  EXPECT_EQ(l1_sensitivity_image(same), (ChannelSensitivity{0, 0, 0}));
  const std::vector<EncodedImage> pair{zero, red};
  EXPECT_EQ(l1_sensitivity_image(pair), (ChannelSensitivity{1, 0, 0}));
  EXPECT_THROW(l1_sensitivity_image(std::span<const EncodedImage>(&red, 1)), InsufficientData);
}

TEST(SensitivityImage, MatchesBruteForce) {
  Rng rng(5);
  std::vector<EncodedImage> imgs(6, EncodedImage(8));
  for (auto& im : imgs) {
    for (auto& v : im.values()) v = static_cast<float>(rng.uniform());
  }
  ChannelSensitivity want{};
  for (const auto& a : imgs) {
    for (const auto& b : imgs) {
      for (int c = 0; c < 3; ++c) {
        for (int r = 0; r < 8; ++r) {
          for (int k = 0; k < 8; ++k) {
            want[c] = std::max(want[c], static_cast<double>(std::abs(a.at(c, r, k) - b.at(c, r, k))));
          }
        }
      }
    }
  }
  const auto got = l1_sensitivity_image(imgs);
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(got[c], want[c], 1e-7);
}

// ---------------------------------------------------------------- Laplace

TEST(Laplace, MomentsAtOneMillion) {
  Rng rng(6);
  const auto x = laplace_noise(1000000, 1.0, rng);
  double m = 0.0, v = 0.0;
  for (double z : x) m += z;
  m /= static_cast<double>(x.size());
  for (double z : x) v += (z - m) * (z - m);
  v /= static_cast<double>(x.size());
  EXPECT_LT(std::abs(m), 0.01);
  EXPECT_NEAR(v, 2.0, 0.05);
}

TEST(Laplace, KolmogorovSmirnov) {
  for (double lambda : {0.5, 1.0, 3.0}) {
    Rng rng(7);
    EXPECT_LT(ks_statistic(laplace_noise(100000, lambda, rng), lambda), 0.01) << lambda;
  }
}

TEST(Laplace, InvalidScale) {
  Rng rng(8);
  EXPECT_THROW(laplace_noise(3, 0.0, rng), InvalidScale);
  EXPECT_THROW(laplace_noise(3, -1.0, rng), InvalidScale);
  EXPECT_THROW(laplace_noise(3, std::nan(""), rng), InvalidScale);
}

// ----------------------------------------------------------------- DP raw

TEST(DpRaw, VanishingNoise) {
  Rng rng(9);
  Scanpath p = random_path(rng, 10);
  for (auto& pt : p.points) pt.x = 0.1 + 0.8 * pt.x;
  for (auto& pt : p.points) pt.y = 0.1 + 0.8 * pt.y;
  const auto out = dp_raw(p, 1.0, 1e9, rng);
  ASSERT_TRUE(out);
  ASSERT_EQ(out->points.size(), p.points.size());
  for (std::size_t i = 0; i < p.points.size(); ++i) {
    EXPECT_NEAR(out->points[i].x, p.points[i].x, 1e-6);
    EXPECT_EQ(out->points[i].t, p.points[i].t);
  }
}

TEST(DpRaw, FewerThanThreePointsSkipped) {
  Rng rng(10);
  const Scanpath two = random_path(rng, 2);
  for (int i = 0; i < 50; ++i) EXPECT_FALSE(dp_raw(two, 0.5, 1.0, rng));
  EXPECT_FALSE(dp_raw(two, 0.0, 1.0, rng));
}

TEST(DpRaw, SurvivorsStayInsideTheUnitSquare) {
  Rng rng(11);
  Scanpath p = random_path(rng, 40);
  p.points[0].x = 1.0;  // any positive push leaves the square
  std::size_t dropped = 0;
  for (int i = 0; i < 200; ++i) {
    const auto out = dp_raw(p, 1.0, 20.0, rng);
    if (!out) continue;
    for (const auto& q : out->points) {
      EXPECT_GE(q.x, 0.0);
      EXPECT_LE(q.x, 1.0);
      EXPECT_GE(q.y, 0.0);
      EXPECT_LE(q.y, 1.0);
    }
    dropped += out->points.front().t != 0.0;
  }
  // The point at x = 1 survives only with negative x noise.
  EXPECT_NEAR(static_cast<double>(dropped) / 200.0, 0.5, 0.15);
}

TEST(DpRaw, DropRateNonIncreasingInEpsilon) {
  Rng rng(12);
  const Scanpath p = random_path(rng, 30);
  std::vector<double> rate;
  for (double eps : {2.0, 8.0, 32.0}) {
    std::size_t kept = 0;
    for (int i = 0; i < 1000; ++i) {
      const auto out = dp_raw(p, 1.0, eps, rng);
      kept += out ? out->points.size() : 0;
    }
    rate.push_back(1.0 - static_cast<double>(kept) / (1000.0 * 30.0));
  }
  EXPECT_GE(rate[0], rate[1]);
  EXPECT_GE(rate[1], rate[2]);
}

// --------------------------------------------------------------- DP image

TEST(DpImage, ZeroSensitivityChannelUnchanged) {
  Rng rng(13);
  EncodedImage im(8);
  for (auto& v : im.values()) v = static_cast<float>(rng.uniform());
  const auto out = dp_image(im, {0.0, 1.0, 0.0}, 0.5, rng);
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 8; ++c) {
      EXPECT_EQ(out.at(0, r, c), im.at(0, r, c));
      EXPECT_EQ(out.at(2, r, c), im.at(2, r, c));
    }
  }
  for (float v : out.values()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  EXPECT_THROW(dp_image(im, {1, 1, 1}, 0.0, rng), InvalidScale);
}

TEST(DpImage, EffectiveEpsilonEndpoints) {
  EXPECT_EQ(effective_epsilon(DpDomain::kImage, 1, 64), 40.96);
  EXPECT_EQ(effective_epsilon(DpDomain::kImage, 1500, 64), 61440.0);
  EXPECT_EQ(effective_epsilon(DpDomain::kImage, 256, 64), 10485.76);
  EXPECT_EQ(effective_epsilon(DpDomain::kRaw, 23883, 64), 238.83);
}

TEST(Sweep, FullGrids) {
  const auto img = EpsilonSweep::full(DpDomain::kImage).values();
  EXPECT_EQ(img.size(), 1500u);
  EXPECT_EQ(img.front(), 1);
  EXPECT_EQ(img.back(), 1500);
  const auto raw = EpsilonSweep::full(DpDomain::kRaw).values();
  EXPECT_EQ(raw.size(), 49001u);
  EXPECT_EQ(raw.front(), 1000);
  EXPECT_EQ(raw.back(), 50000);
  EXPECT_THROW((EpsilonSweep{DpDomain::kRaw, 0, 10, 1}.values()), ConfigError);
}

// ------------------------------------------------------------- selection

TEST(Vote, TiesGoToLowestClass) {
  std::vector<int> v(50, 3);
  v.insert(v.end(), 50, 1);
  EXPECT_EQ(majority_vote(v, 4), 1);
  EXPECT_EQ(majority_vote(std::vector<int>{2, 2, 0}, 4), 2);
  EXPECT_THROW(majority_vote(std::vector<int>{}, 4), InsufficientData);
}

TEST(Select, Examples) {
  std::vector<FrontierRow> rows(2);
  rows[0] = {1, DpDomain::kImage, 1.0, 0.30, 0.12, 0.0, false};
  rows[1] = {2, DpDomain::kImage, 2.0, 0.41, 0.12, 0.0, false};
  const auto& best = select_optimal_epsilon(rows, 0.12);
  EXPECT_EQ(&best, &rows[1]);
  EXPECT_EQ(&select_optimal_epsilon(std::span(rows).first(1), 0.12), &rows[0]);
  rows[0].sub_acc = rows[1].sub_acc = 0.5;
  EXPECT_THROW(select_optimal_epsilon(rows, 0.12), NoFeasibleEpsilon);
  EXPECT_THROW(select_optimal_epsilon({}, 0.12), NoFeasibleEpsilon);
}

TEST(Select, ReturnsATableMember) {
  Rng rng(14);
  for (int t = 0; t < 200; ++t) {
    std::vector<FrontierRow> rows(1 + rng.index(8));
    for (auto& r : rows) {
      r.stim_acc = rng.uniform();
      r.sub_acc = rng.uniform(0.05, 0.2);
    }
    try {
      const auto& r = select_optimal_epsilon(rows, 0.125, 0.03);
      EXPECT_GE(&r, rows.data());
      EXPECT_LT(&r, rows.data() + rows.size());
      EXPECT_LE(std::abs(r.sub_acc - 0.125), 0.03);
    } catch (const NoFeasibleEpsilon&) {
      for (const auto& r : rows) EXPECT_GT(std::abs(r.sub_acc - 0.125), 0.03);
    }
  }
}

TEST(Frontier, CsvLayout) {
  std::vector<FrontierRow> rows(2);
  rows[0] = {1, DpDomain::kImage, 40.96, 0.5, 0.25, 0.0, false};
  rows[1] = {1000, DpDomain::kRaw, 10.0, 0.0, 0.0, 1.0, true};
  std::ostringstream out;
  write_frontier_csv(out, rows);
  EXPECT_EQ(out.str(),
            "epsilon,domain,stim_acc,sub_acc,skipped_fraction\n"
            "40.96,image,0.500000,0.250000,0.000000\n"
            "10.00,raw,,,1.000000\n");
}

class DpEvaluate : public ::testing::Test {
 protected:
  void SetUp() override {
    Rng rng(15);
    set_.tasks = {{"stimulus", LabelKind::kStimulus, 2}, {"subject", LabelKind::kSubject, 3}};
    set_.models.emplace_back(16, 2, rng);
    set_.models.emplace_back(16, 3, rng);
    for (int i = 0; i < 6; ++i) {
      test_.push_back({random_path(rng, 12), i % 3, i % 2});
    }
    opt_.repetitions = 5;
    opt_.encode.resolution = 16;
    opt_.raw_sensitivity = 2.0;
    opt_.image_sensitivity = {1, 1, 1};
    opt_.seed = 3;
  }
  ClassifierSet set_;
  std::vector<LabeledRecord> test_;
  DpEvalOptions opt_;
};

TEST_F(DpEvaluate, Deterministic) {
  const EpsilonSweep s{DpDomain::kImage, 50, 150, 50};
  const auto a = dp_evaluate(s, test_, set_, opt_);
  opt_.threads = 3;
  const auto b = dp_evaluate(s, test_, set_, opt_);
  ASSERT_EQ(a.size(), 3u);
  std::ostringstream x, y;
  write_frontier_csv(x, a);
  write_frontier_csv(y, b);
  EXPECT_EQ(x.str(), y.str());
}

TEST_F(DpEvaluate, NoiseFreeLimitMatchesCleanAccuracy) {
  opt_.raw_sensitivity = 1e-9;
  const auto rows = dp_evaluate({DpDomain::kRaw, 100000, 100000, 1}, test_, set_, opt_);
  std::vector<EncodedImage> clean;
  std::vector<Sample> samples;
  for (const auto& r : test_) {
    Sample s;
    s.image = encode_scanpath(r.scanpath, opt_.encode);
    s.subject = r.subject_label;
    s.stimulus = r.stimulus_label;
    clean.push_back(s.image);
    samples.push_back(s);
  }
  std::vector<const Sample*> labels;
  for (const auto& s : samples) labels.push_back(&s);
  const auto acc = accuracies(set_, clean, labels);
  EXPECT_DOUBLE_EQ(rows[0].stim_acc, acc[0]);
  EXPECT_DOUBLE_EQ(rows[0].sub_acc, acc[1]);
  EXPECT_EQ(rows[0].skipped_fraction, 0.0);
}

TEST_F(DpEvaluate, HeavyNoiseSkipsEveryItem) {
  opt_.raw_sensitivity = 1e6;
  const auto rows = dp_evaluate({DpDomain::kRaw, 1, 1, 1}, test_, set_, opt_);
  EXPECT_TRUE(rows[0].skipped);
  EXPECT_EQ(rows[0].skipped_fraction, 1.0);
}

// -------------------------------------------------------------------- GAN

TEST(Gan, DiscriminatorBoundsAndSymmetry) {
  Rng rng(16);
  for (int i = 0; i < 10000; ++i) {
    const double a = rng.uniform(), b = rng.uniform();
    const double d = gan_discriminator(a, b);
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 1.0);
    EXPECT_DOUBLE_EQ(gan_discriminator(a, a), 0.5);
    EXPECT_NEAR(d + gan_discriminator(b, a), 1.0, 1e-12);
  }
  EXPECT_DOUBLE_EQ(gan_discriminator(1.0, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(gan_discriminator(0.0, 1.0), 0.0);
  EXPECT_TRUE(std::isfinite(gan_generator_loss(1.0)));
  EXPECT_NEAR(gan_generator_loss(1.0), std::log(1e-6), 1e-9);
  EXPECT_DOUBLE_EQ(gan_generator_loss(0.0), 0.0);
}

TEST(Gan, ObjectiveGradientMatchesFiniteDifferences) {
  Rng rng(17);
  ClassifierSet set;
  set.tasks = {{"stimulus", LabelKind::kStimulus, 2}, {"subject", LabelKind::kSubject, 3}};
  set.models.emplace_back(16, 2, rng);
  set.models.emplace_back(16, 3, rng);
  std::vector<Sample> s(2);
  s[0].stimulus = 1;
  s[0].subject = 2;
  const std::vector<const Sample*> labels{&s[0], &s[1]};
  nn::Tensor<float> g(nn::Shape{2, 3, 16, 16});
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<float>(rng.uniform());
  auto eval = [&](const nn::Tensor<float>& x) {
    Rng drop(99);
    return gan_adversarial_objective(set, {0}, {1}, x, labels, drop);
  };
  const auto base = eval(g);
  const float h = 1e-2f;
  for (std::size_t k = 0; k < 40; ++k) {
    const std::size_t i = rng.index(g.size());
    auto up = g, down = g;
    up[i] += h;
    down[i] -= h;
    const double num = (eval(up).loss - eval(down).loss) / (2.0 * h);
    EXPECT_NEAR(base.grad[i], num, 2e-3 * std::max(1.0, std::abs(num)) + 1e-5) << "index " << i;
  }
}

TEST(Gan, ShortRunTrainsCopies) {
  Rng rng(18);
  AutoencoderModel ae(16, rng);
  ClassifierSet set;
  set.tasks = {{"stimulus", LabelKind::kStimulus, 2}, {"subject", LabelKind::kSubject, 2}};
  set.models.emplace_back(16, 2, rng);
  set.models.emplace_back(16, 2, rng);
  std::vector<Sample> train(8);
  for (std::size_t i = 0; i < train.size(); ++i) {
    train[i].image = EncodedImage(16);
    for (auto& v : train[i].image.values()) v = rng.bernoulli(0.1) ? 1.0f : 0.0f;
    train[i].stimulus = static_cast<int>(i % 2);
    train[i].subject = static_cast<int>(i / 4);
  }
  GanOptions o;
  o.pretrain_epochs = 1;
  o.adversarial_epochs = 2;
  o.batch_size = 4;
  const auto before = ae.parameter_hash();
  const auto r = gan_train(ae, set, {0}, {1}, train, o, rng);
  EXPECT_EQ(ae.parameter_hash(), before);
  EXPECT_NE(r.generator.parameter_hash(), before);
  ASSERT_EQ(r.epochs.size(), 3u);
  EXPECT_FALSE(r.epochs[0].adversarial);
  EXPECT_TRUE(r.epochs[2].adversarial);
  for (const auto& e : r.epochs) {
    EXPECT_GE(e.mean_d, 0.0);
    EXPECT_LE(e.mean_d, 1.0);
  }
  EXPECT_LT(r.epochs[2].generator_loss, 0.0);
  EXPECT_THROW(gan_train(ae, set, {0}, {0}, train, o, rng), InvalidRewardSpec);
}

}  // namespace
}  // namespace scanpriv
