#pragma once

#include <utility>
#include <vector>

#include "scanpriv/image.hpp"
#include "scanpriv/rng.hpp"
#include "scanpriv/scanpath.hpp"

namespace scanpriv {

struct EncodeOptions {
  int resolution = 64;
  // Green intensity for a point at t = 0; t = duration maps to 1.0.
  double green_floor = 0.1;
  // Pixels with squared distance < radius^2 from the gaze pixel are painted,
  // so radius 1 paints the gaze pixel only.
  int dot_radius = 1;
};

struct PixelPos {
  int col = 0;
  int row = 0;
  friend bool operator==(const PixelPos&, const PixelPos&) = default;
};

PixelPos to_pixel(const GazePoint& p, int resolution);

// Integer Bresenham line, endpoints included, in the direction a -> b.
std::vector<PixelPos> rasterize_line(PixelPos a, PixelPos b);

// R: gaze dots, G: dot intensity ramped by time, B: connecting lines.
EncodedImage encode_scanpath(const Scanpath& path,
                             const EncodeOptions& options = {});

struct AugmentParams {
  double noise_max = 0.20;
  double crop_min_fraction = 0.60;
  double crop_max_fraction = 1.00;
  double shift_max_fraction = 0.30;

  static AugmentParams identity() { return {0.0, 1.0, 1.0, 0.0}; }
  void validate() const;
};

// Random contiguous crop, constant shift, per-point uniform noise; coordinates
// clamped to [0, 1]. Timestamps and duration are kept unchanged.
Scanpath augment(const Scanpath& path, const AugmentParams& params, Rng& rng);

}  // namespace scanpriv
