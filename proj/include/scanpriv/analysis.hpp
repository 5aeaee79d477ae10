#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scanpriv/image.hpp"

namespace scanpriv {

struct ChannelImportance {
  double red_pct = 0.0;
  double green_pct = 0.0;
  double blue_pct = 0.0;
  std::array<std::size_t, 3> changed{};  // raw counts per channel
  bool degenerate = false;               // nothing changed
};

// Share of changed values (|after - before| > tau) falling in each channel.
ChannelImportance channel_importance(const EncodedImage& before, const EncodedImage& after,
                                     double tau = 1.0 / 255.0);
// Counts pooled over aligned image lists.
ChannelImportance channel_importance(std::span<const EncodedImage> before,
                                     std::span<const EncodedImage> after,
                                     double tau = 1.0 / 255.0);

struct IterationAccuracy {
  int iteration = 0;
  double stim_no_adapt = 0.0;
  double sub_no_adapt = 0.0;
  std::optional<double> stim_adapt;
  std::optional<double> sub_adapt;
};

struct AccuracyRow {
  std::string label;  // iteration number, "chance", or "gap N"
  std::array<std::optional<double>, 4> values;
};

// One row per iteration from 1 to the largest logged one (missing iterations
// become gap rows), then the chance row.
std::vector<AccuracyRow> accuracy_table(std::span<const IterationAccuracy> logs,
                                        int n_stimuli, int n_subjects);

std::string accuracy_csv(std::span<const AccuracyRow> rows);
std::string accuracy_text(std::span<const AccuracyRow> rows);

}  // namespace scanpriv
