#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "scanpriv/rng.hpp"
#include "scanpriv/scanpath.hpp"

namespace scanpriv {

struct LabeledRecord {
  Scanpath scanpath;
  int subject_label = 0;
  int stimulus_label = 0;
};

// Class names in label order; label i corresponds to names[i].
struct LabelSet {
  std::vector<std::string> subjects;
  std::vector<std::string> stimuli;
};

struct Dataset {
  std::vector<LabeledRecord> records;
  LabelSet labels;
};

enum class CoordinateMode { kClamp, kReject };

// Column mapping for gaze CSV input. Empty optional names mean "absent".
struct CsvSchema {
  std::string subject = "subject";
  std::string stimulus = "stimulus";
  std::string trial = "trial";
  std::string t = "t";
  std::string x = "x";
  std::string y = "y";
  std::string extent_x = "extent_x";
  std::string extent_y = "extent_y";
  // Used when the extent columns are missing.
  double default_extent_x = 1.0;
  double default_extent_y = 1.0;
  // Trial segmentation when there is no trial column.
  double trial_gap_seconds = 1.0;
  CoordinateMode coordinate_mode = CoordinateMode::kClamp;
};

struct LoadResult {
  Dataset dataset;
  std::size_t skipped_groups = 0;
  std::size_t rejected_points = 0;
};

// One record per (subject, stimulus, trial) group with time-sorted points
// rebased to start at t = 0. Records and labels are ordered by name so the
// result does not depend on row order.
LoadResult load_gaze_csv(std::istream& in, const CsvSchema& schema = {});

// Writes `subject,stimulus,trial,t,x,y`; trial is the record's index within
// its (subject, stimulus) cell.
void write_gaze_csv(std::ostream& out, const Dataset& dataset);

struct DatasetSplit {
  std::vector<LabeledRecord> train;
  std::vector<LabeledRecord> test;
  std::vector<std::string> warnings;
};

// Stratified 50/50 split. Every (subject, stimulus) cell contributes
// floor(n/2) or ceil(n/2) records to train, chosen so that train/test counts
// per subject, per stimulus and in total differ by at most one. Singleton
// cells go to train with a warning.
DatasetSplit split_fifty_fifty(const std::vector<LabeledRecord>& records,
                               Rng& rng);

struct SynthOptions {
  int points_per_scanpath = 48;
  double sample_interval = 0.05;  // seconds between samples before dwell
  double trial_jitter = 0.01;     // per-point gaussian jitter
  // Selects the stimulus curve family; different variants give unrelated
  // curves from the same generator.
  int curve_variant = 0;
};

// Desk-scale synthetic data: each stimulus is a closed curve, each subject
// adds a fixed spatial bias (offset and anisotropic scale) and a fixed dwell
// pattern, blended in with `signature_strength`.
Dataset synth_generate(int n_subjects, int n_stimuli, int trials_per_pair,
                       double signature_strength, Rng& rng,
                       const SynthOptions& options = {});

}  // namespace scanpriv
