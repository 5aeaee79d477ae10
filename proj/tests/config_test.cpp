#include <gtest/gtest.h>

#include "scanpriv/config.hpp"
#include "scanpriv/errors.hpp"

namespace scanpriv {
namespace {

TEST(ConfigDefaults, MatchPublishedConstants) {
  const ExperimentConfig c;
  EXPECT_EQ(c.iterations, 20);
  EXPECT_EQ(c.run.steps, 1000);
  EXPECT_EQ(c.run.window, 50);
  EXPECT_DOUBLE_EQ(c.run.tolerance, 0.005);
  EXPECT_EQ(c.replay.capacity, 200000u);
  EXPECT_EQ(c.replay.init.max_k, 100);
  EXPECT_EQ(c.replay.init.masks_per_k, 100);
  EXPECT_EQ(c.encode.resolution, 64);

  EXPECT_DOUBLE_EQ(c.autoencoder.initial_lr, 1e-2);
  EXPECT_EQ(c.autoencoder.decay_every, 200);
  EXPECT_EQ(c.autoencoder.batch_size, 40);
  EXPECT_DOUBLE_EQ(c.classifier.initial_lr, 1e-4);
  EXPECT_EQ(c.classifier.decay_every, 500);
  EXPECT_EQ(c.classifier.batch_size, 50);
  EXPECT_EQ(c.transfer_classifier.decay_every, 100);
  for (const auto* s : {&c.autoencoder, &c.classifier, &c.transfer_classifier}) {
    EXPECT_DOUBLE_EQ(s->stop_lr, 1e-7);
    EXPECT_DOUBLE_EQ(s->weight_decay, 5e-4);
    EXPECT_DOUBLE_EQ(s->momentum, 0.9);
  }
  EXPECT_DOUBLE_EQ(c.dql.schedule.initial_lr, 1e-4);
  EXPECT_TRUE(c.dql.schedule.fixed_lr);
  EXPECT_DOUBLE_EQ(c.dql.schedule.weight_decay, 1e-5);
  EXPECT_EQ(c.dql.schedule.batch_size, 100);
  EXPECT_EQ(c.dql.schedule.max_epochs, 10);

  EXPECT_DOUBLE_EQ(c.augment.params.noise_max, 0.20);
  EXPECT_DOUBLE_EQ(c.augment.params.crop_min_fraction, 0.60);
  EXPECT_DOUBLE_EQ(c.augment.params.shift_max_fraction, 0.30);

  EXPECT_EQ(c.dp.image.lo, 1);
  EXPECT_EQ(c.dp.image.hi, 1500);
  EXPECT_EQ(c.dp.raw.lo, 1000);
  EXPECT_EQ(c.dp.raw.hi, 50000);
  EXPECT_EQ(c.dp.raw.step, 1);
  EXPECT_EQ(c.dp.repetitions, 100);
  EXPECT_EQ(c.gan.pretrain_epochs, 100);
  EXPECT_EQ(c.keep, std::vector<std::string>{"stimulus"});
  EXPECT_EQ(c.hide, std::vector<std::string>{"subject"});
  EXPECT_NO_THROW(c.validate());
}

TEST(ConfigParse, SectionsCommentsAndQuotes) {
  const auto c = parse_config(R"(
# leading comment
seed = 9
[data]
source = "synth"   
subjects = 6 # trailing
; another comment
[encode]
resolution = 32
[reward]
keep = stimulus
hide = 'subject'
[dp]
image_min = 0.01
image_max = 15
image_step = 0.5
)");
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.data.source, "synth");
  EXPECT_EQ(c.data.subjects, 6);
  EXPECT_EQ(c.encode.resolution, 32);
  EXPECT_EQ(c.dp.image.lo, 1);
  EXPECT_EQ(c.dp.image.hi, 1500);
  EXPECT_EQ(c.dp.image.step, 50);
}

TEST(ConfigParse, Errors) {
  EXPECT_THROW(parse_config("[data]\nsubjcts = 3\n"), ConfigError);
  EXPECT_THROW(parse_config("[data]\nsubjects = three\n"), ConfigError);
  EXPECT_THROW(parse_config("[data\nsubjects = 3\n"), ConfigError);
  EXPECT_THROW(parse_config("just words\n"), ConfigError);
  EXPECT_THROW(parse_config("[encode]\nresolution = 20\n"), ConfigError);
  EXPECT_THROW(parse_config("[dp]\nimage_step = 0.015\n"), ConfigError);
  EXPECT_THROW(parse_config("[reward]\nkeep = subject\n"), ConfigError);
  EXPECT_THROW(parse_config("[reward]\nhide = gender\n"), ConfigError);
  EXPECT_THROW(parse_config("[augment]\nenabled = maybe\n"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/x.ini"), ConfigError);
}

TEST(ConfigCanonical, RoundTripsAndHashes) {
  ExperimentConfig c;
  set_config_value(c, "encode.resolution", "32");
  set_config_value(c, "dql.lr", "0.001");
  set_config_value(c, "seed", "17");
  const auto back = parse_config(c.canonical());
  EXPECT_EQ(back.canonical(), c.canonical());
  EXPECT_EQ(back.hash(), c.hash());
  EXPECT_EQ(back.seed, 17u);
  EXPECT_DOUBLE_EQ(back.dql.schedule.initial_lr, 0.001);
}

TEST(ConfigCanonical, OutputDirectoryNotHashed) {
  ExperimentConfig a, b;
  b.out = "elsewhere";
  EXPECT_EQ(a.hash(), b.hash());
  b.threads = 2;
  EXPECT_NE(a.hash(), b.hash());
}

TEST(ConfigCanonical, SectionHashIsLocal) {
  ExperimentConfig a, b;
  set_config_value(b, "run.steps", "7");
  EXPECT_EQ(a.section_hash({"data", "autoencoder"}), b.section_hash({"data", "autoencoder"}));
  EXPECT_NE(a.section_hash({"run"}), b.section_hash({"run"}));
  EXPECT_NE(a.hash(), b.hash());
}

TEST(ConfigOverride, FlagValuesWin) {
  auto c = parse_config("[run]\nsteps = 5\n");
  set_config_value(c, "run.steps", "9");
  EXPECT_EQ(c.run.steps, 9);
  set_config_value(c, "out", "/tmp/x");
  EXPECT_EQ(c.out, "/tmp/x");
  EXPECT_THROW(set_config_value(c, "run.nope", "1"), ConfigError);
}

}  // namespace
}  // namespace scanpriv
