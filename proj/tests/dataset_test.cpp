#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "scanpriv/codec.hpp"
#include "scanpriv/dataset.hpp"
#include "scanpriv/errors.hpp"

namespace scanpriv {
namespace {

LoadResult load(const std::string& text, const CsvSchema& schema = {}) {
  std::istringstream in(text);
  return load_gaze_csv(in, schema);
}

TEST(LoadCsv, GroupsAndSortsOneTrial) {
  const auto r = load(
      "subject,stimulus,trial,t,x,y\n"
      "a,img1,0,0.5,0.2,0.3\n"
      "a,img1,0,0.0,0.1,0.4\n");
  ASSERT_EQ(r.dataset.records.size(), 1u);
  const auto& pts = r.dataset.records[0].scanpath.points;
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_EQ(pts[0], (GazePoint{0.0, 0.1, 0.4}));
  EXPECT_EQ(pts[1], (GazePoint{0.5, 0.2, 0.3}));
  EXPECT_DOUBLE_EQ(r.dataset.records[0].scanpath.duration, 0.5);
}

TEST(LoadCsv, ClampsOffStimulusSamples) {
  const auto r = load(
      "subject,stimulus,trial,t,x,y,extent_x,extent_y\n"
      "a,s,0,0,1900,-20,1600,1200\n");
  const auto& p = r.dataset.records.at(0).scanpath.points.at(0);
  EXPECT_EQ(p.x, 1.0);
  EXPECT_EQ(p.y, 0.0);
}

TEST(LoadCsv, NormalizesByExtent) {
  const auto r = load(
      "subject,stimulus,trial,t,x,y,extent_x,extent_y\n"
      "a,s,0,0,400,300,1600,1200\n");
  const auto& p = r.dataset.records.at(0).scanpath.points.at(0);
  EXPECT_DOUBLE_EQ(p.x, 0.25);
  EXPECT_DOUBLE_EQ(p.y, 0.25);
}

TEST(LoadCsv, RejectModeDropsPointsAndCountsEmptyGroups) {
  CsvSchema schema;
  schema.coordinate_mode = CoordinateMode::kReject;
  const auto r = load(
      "subject,stimulus,trial,t,x,y\n"
      "a,s,0,0,1.5,0.5\n"
      "a,s,0,1,0.5,0.5\n"
      "b,s,0,0,2.0,0.5\n",
      schema);
  EXPECT_EQ(r.rejected_points, 2u);
  EXPECT_EQ(r.skipped_groups, 1u);
  ASSERT_EQ(r.dataset.records.size(), 1u);
  EXPECT_EQ(r.dataset.records[0].scanpath.points.size(), 1u);
  EXPECT_EQ(r.dataset.labels.subjects, std::vector<std::string>{"a"});
}

TEST(LoadCsv, ShuffledRowsGiveIdenticalRecords) {
  Rng rng(4);
  auto ds = synth_generate(3, 2, 2, 0.5, rng);
  std::ostringstream out;
  write_gaze_csv(out, ds);
  std::vector<std::string> lines;
  std::istringstream in(out.str());
  std::string header, line;
  std::getline(in, header);
  while (std::getline(in, line)) lines.push_back(line);

  auto join = [&](const std::vector<std::string>& rows) {
    std::string s = header + "\n";
    for (const auto& r : rows) s += r + "\n";
    return s;
  };
  const auto sorted = load(join(lines));
  Rng shuffler(99);
  shuffler.shuffle(lines);
  const auto shuffled = load(join(lines));
  ASSERT_EQ(sorted.dataset.records.size(), shuffled.dataset.records.size());
  for (std::size_t i = 0; i < sorted.dataset.records.size(); ++i) {
    const auto& a = sorted.dataset.records[i];
    const auto& b = shuffled.dataset.records[i];
    EXPECT_EQ(a.scanpath, b.scanpath);
    EXPECT_EQ(a.subject_label, b.subject_label);
    EXPECT_EQ(a.stimulus_label, b.stimulus_label);
  }
}

TEST(LoadCsv, RoundTripsSyntheticData) {
  Rng rng(8);
  const auto ds = synth_generate(2, 3, 2, 1.0, rng);
  std::ostringstream out;
  write_gaze_csv(out, ds);
  const auto back = load(out.str());
  ASSERT_EQ(back.dataset.records.size(), ds.records.size());
  // Record order after loading is by (subject, stimulus, trial) name.
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    EXPECT_EQ(back.dataset.records[i].scanpath.points,
              ds.records[i].scanpath.points);
  }
  EXPECT_EQ(back.dataset.labels.subjects, ds.labels.subjects);
  EXPECT_EQ(back.dataset.labels.stimuli, ds.labels.stimuli);
}

TEST(LoadCsv, NaturalLabelOrder) {
  const auto r = load(
      "subject,stimulus,trial,t,x,y\n"
      "s10,a,0,0,0.1,0.1\n"
      "s2,a,0,0,0.1,0.1\n"
      "s1,a,0,0,0.1,0.1\n");
  EXPECT_EQ(r.dataset.labels.subjects,
            (std::vector<std::string>{"s1", "s2", "s10"}));
}

TEST(LoadCsv, TimeGapSegmentsTrialsWithoutTrialColumn) {
  const auto r = load(
      "subject,stimulus,t,x,y\n"
      "a,s,0.0,0.1,0.1\n"
      "a,s,0.5,0.1,0.1\n"
      "a,s,3.0,0.2,0.2\n"
      "a,s,3.2,0.2,0.2\n");
  ASSERT_EQ(r.dataset.records.size(), 2u);
  EXPECT_EQ(r.dataset.records[1].scanpath.points.front().t, 0.0);
}

TEST(LoadCsv, Errors) {
  EXPECT_THROW(load("subject,stimulus,t,x\na,s,0,0.1\n"), SchemaError);
  EXPECT_THROW(load(""), SchemaError);
  try {
    load("subject,stimulus,t,x,y\na,s,0,0.1,0.1\na,s,zz,0.1,0.1\n");
    FAIL() << "expected RowError";
  } catch (const RowError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  EXPECT_THROW(load("subject,stimulus,t,x,y\na,s,0,0.1\n"), RowError);
}

TEST(LoadCsv, QuotedFieldsAndBom) {
  const auto r = load(
      "\xEF\xBB\xBFsubject,stimulus,t,x,y\n"
      "\"sub, one\",s,0,0.1,0.2\n");
  ASSERT_EQ(r.dataset.records.size(), 1u);
  EXPECT_EQ(r.dataset.records[0].scanpath.subject_id, "sub, one");
}

std::vector<LabeledRecord> grid_records(int subjects, int stimuli, int per_cell) {
  std::vector<LabeledRecord> out;
  int id = 0;
  for (int s = 0; s < subjects; ++s) {
    for (int m = 0; m < stimuli; ++m) {
      for (int k = 0; k < per_cell; ++k) {
        LabeledRecord r;
        r.subject_label = s;
        r.stimulus_label = m;
        r.scanpath.subject_id = "s" + std::to_string(s);
        r.scanpath.stimulus_id = "m" + std::to_string(m);
        r.scanpath.points = {{0.0, 0.5, 0.5}};
        r.scanpath.duration = static_cast<double>(id++);  // identity tag
        out.push_back(r);
      }
    }
  }
  return out;
}

std::multiset<double> ids(const std::vector<LabeledRecord>& rs) {
  std::multiset<double> s;
  for (const auto& r : rs) s.insert(r.scanpath.duration);
  return s;
}

void expect_balanced(const std::vector<LabeledRecord>& all, const DatasetSplit& sp) {
  ASSERT_EQ(sp.train.size() + sp.test.size(), all.size());
  EXPECT_LE(std::abs(static_cast<long>(sp.train.size()) -
                     static_cast<long>(sp.test.size())),
            1);
  auto tr = ids(sp.train), te = ids(sp.test);
  for (double x : tr) EXPECT_EQ(te.count(x), 0u);
  std::multiset<double> both = tr;
  both.insert(te.begin(), te.end());
  EXPECT_EQ(both, ids(all));

  std::map<int, int> sub_tr, sub_te, stim_tr, stim_te;
  for (const auto& r : sp.train) {
    ++sub_tr[r.subject_label];
    ++stim_tr[r.stimulus_label];
  }
  for (const auto& r : sp.test) {
    ++sub_te[r.subject_label];
    ++stim_te[r.stimulus_label];
  }
  for (const auto& r : all) {
    EXPECT_LE(std::abs(sub_tr[r.subject_label] - sub_te[r.subject_label]), 1);
    EXPECT_LE(std::abs(stim_tr[r.stimulus_label] - stim_te[r.stimulus_label]), 1);
    EXPECT_GT(sub_tr[r.subject_label], 0);
    EXPECT_GT(stim_tr[r.stimulus_label], 0);
  }
}

TEST(Split, SingletonCellsGoToTrainWithWarnings) {
  const auto all = grid_records(2, 2, 1);
  Rng rng(1);
  const auto sp = split_fifty_fifty(all, rng);
  EXPECT_EQ(sp.train.size(), 4u);
  EXPECT_TRUE(sp.test.empty());
  EXPECT_EQ(sp.warnings.size(), 4u);
}

TEST(Split, PerfectBalance) {
  const auto all = grid_records(2, 2, 2);
  Rng rng(1);
  const auto sp = split_fifty_fifty(all, rng);
  std::map<std::pair<int, int>, int> tr, te;
  for (const auto& r : sp.train) ++tr[{r.subject_label, r.stimulus_label}];
  for (const auto& r : sp.test) ++te[{r.subject_label, r.stimulus_label}];
  for (int s = 0; s < 2; ++s) {
    for (int m = 0; m < 2; ++m) {
      EXPECT_EQ(tr[std::make_pair(s, m)], 1);
      EXPECT_EQ(te[std::make_pair(s, m)], 1);
    }
  }
  EXPECT_TRUE(sp.warnings.empty());
}

TEST(Split, NineHundredSixtySyntheticRecords) {
  Rng gen(2);
  const auto ds = synth_generate(8, 4, 30, 1.0, gen);
  ASSERT_EQ(ds.records.size(), 960u);
  Rng rng(3);
  auto sp = split_fifty_fifty(ds.records, rng);
  EXPECT_EQ(sp.train.size(), 480u);
  EXPECT_EQ(sp.test.size(), 480u);
  std::vector<LabeledRecord> all = ds.records;
  // Synthetic scanpaths are unique; tag them through the duration field.
  for (auto* v : {&all, &sp.train, &sp.test}) {
    for (auto& r : *v) {
      r.scanpath.duration = r.scanpath.points[0].x + 3.0 * r.scanpath.points[1].y;
    }
  }
  expect_balanced(all, sp);
}

class SplitProperties : public ::testing::TestWithParam<int> {};

TEST_P(SplitProperties, BalancedForOddCells) {
  Rng cfg(static_cast<std::uint64_t>(GetParam()));
  const int subjects = 2 + static_cast<int>(cfg.index(6));
  const int stimuli = 2 + static_cast<int>(cfg.index(5));
  std::vector<LabeledRecord> all;
  int id = 0;
  for (int s = 0; s < subjects; ++s) {
    for (int m = 0; m < stimuli; ++m) {
      const int n = 2 + static_cast<int>(cfg.index(5));
      for (int k = 0; k < n; ++k) {
        LabeledRecord r;
        r.subject_label = s;
        r.stimulus_label = m;
        r.scanpath.points = {{0.0, 0.5, 0.5}};
        r.scanpath.duration = id++;
        all.push_back(r);
      }
    }
  }
  Rng a(7), b(7);
  const auto sp = split_fifty_fifty(all, a);
  expect_balanced(all, sp);
  EXPECT_TRUE(sp.warnings.empty());
  const auto again = split_fifty_fifty(all, b);
  EXPECT_EQ(ids(again.train), ids(sp.train));
}

INSTANTIATE_TEST_SUITE_P(Seeds, SplitProperties, ::testing::Range(0, 40));

TEST(Synth, Deterministic) {
  Rng a(12), b(12);
  const auto x = synth_generate(4, 3, 3, 0.7, a);
  const auto y = synth_generate(4, 3, 3, 0.7, b);
  ASSERT_EQ(x.records.size(), 36u);
  for (std::size_t i = 0; i < x.records.size(); ++i) {
    EXPECT_EQ(x.records[i].scanpath, y.records[i].scanpath);
  }
}

TEST(Synth, ValidScanpaths) {
  Rng rng(13);
  const auto ds = synth_generate(8, 4, 2, 1.0, rng);
  for (const auto& r : ds.records) EXPECT_NO_THROW(validate(r.scanpath));
}

TEST(Synth, RejectsBadArguments) {
  Rng rng(1);
  EXPECT_THROW(synth_generate(1, 4, 2, 0.5, rng), ConfigError);
  EXPECT_THROW(synth_generate(2, 4, 2, 1.5, rng), ConfigError);
}

// Nearest-centroid accuracy on encoded images: a cheap proxy for how much
// subject information the data carries.
double centroid_subject_accuracy(double strength, std::uint64_t seed) {
  Rng rng(seed);
  const auto ds = synth_generate(8, 4, 20, strength, rng);
  Rng srng(seed + 1);
  const auto sp = split_fifty_fifty(ds.records, srng);
  EncodeOptions opt;
  opt.resolution = 32;
  const std::size_t dim = 3 * 32 * 32;
  // Centroids per (subject, stimulus) so stimulus variation does not swamp
  // the subject signal; prediction takes the nearest centroid of the known
  // stimulus.
  std::map<std::pair<int, int>, std::vector<double>> sum;
  std::map<std::pair<int, int>, int> count;
  for (const auto& r : sp.train) {
    const auto img = encode_scanpath(r.scanpath, opt);
    auto& s = sum[{r.subject_label, r.stimulus_label}];
    s.resize(dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) s[i] += img.values()[i];
    ++count[{r.subject_label, r.stimulus_label}];
  }
  int correct = 0;
  for (const auto& r : sp.test) {
    const auto img = encode_scanpath(r.scanpath, opt);
    double best = 1e300;
    int arg = -1;
    for (int s = 0; s < 8; ++s) {
      const auto& c = sum[{s, r.stimulus_label}];
      const double n = count[{s, r.stimulus_label}];
      double d = 0.0;
      for (std::size_t i = 0; i < dim; ++i) {
        const double e = img.values()[i] - c[i] / n;
        d += e * e;
      }
      if (d < best) {
        best = d;
        arg = s;
      }
    }
    correct += arg == r.subject_label;
  }
  return static_cast<double>(correct) / static_cast<double>(sp.test.size());
}

TEST(Synth, SubjectInformationGrowsWithStrength) {
  const double a0 = centroid_subject_accuracy(0.0, 21);
  const double a5 = centroid_subject_accuracy(0.5, 21);
  const double a1 = centroid_subject_accuracy(1.0, 21);
  EXPECT_NEAR(a0, 0.125, 0.05);
  EXPECT_GE(a5 + 0.02, a0);
  EXPECT_GE(a1 + 0.02, a5);
  EXPECT_GT(a1, 3 * 0.125);
}

}  // namespace
}  // namespace scanpriv
