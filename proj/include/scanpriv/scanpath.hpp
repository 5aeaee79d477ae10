#pragma once

#include <string>
#include <vector>

namespace scanpriv {

// One gaze sample. Coordinates are normalized to the stimulus extent.
struct GazePoint {
  double t = 0.0;  // seconds since recording start
  double x = 0.0;  // [0, 1]
  double y = 0.0;  // [0, 1]

  friend bool operator==(const GazePoint&, const GazePoint&) = default;
};

struct Scanpath {
  std::string subject_id;
  std::string stimulus_id;
  std::vector<GazePoint> points;
  double duration = 0.0;

  friend bool operator==(const Scanpath&, const Scanpath&) = default;
};

// Throws InvalidScanpath when the invariants do not hold: at least one point,
// finite values, non-decreasing t >= 0, coordinates in [0,1] and
// duration >= last t.
void validate(const Scanpath& path);

}  // namespace scanpriv
