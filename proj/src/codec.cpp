#include "scanpriv/codec.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "scanpriv/errors.hpp"

namespace scanpriv {

void validate(const Scanpath& path) {
  if (path.points.empty()) throw InvalidScanpath("scanpath has no points");
  double prev_t = 0.0;
  for (std::size_t i = 0; i < path.points.size(); ++i) {
    const GazePoint& p = path.points[i];
    if (!std::isfinite(p.t) || !std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw InvalidScanpath("non-finite value at point " + std::to_string(i));
    }
    if (p.t < 0.0) throw InvalidScanpath("negative timestamp");
    if (i > 0 && p.t < prev_t) {
      throw InvalidScanpath("timestamps decrease at point " +
                            std::to_string(i));
    }
    if (p.x < 0.0 || p.x > 1.0 || p.y < 0.0 || p.y > 1.0) {
      throw InvalidScanpath("coordinate outside [0,1] at point " +
                            std::to_string(i));
    }
    prev_t = p.t;
  }
  if (!std::isfinite(path.duration) || path.duration < prev_t) {
    throw InvalidScanpath("duration shorter than last timestamp");
  }
}

PixelPos to_pixel(const GazePoint& p, int resolution) {
  const double scale = resolution - 1;
  return {static_cast<int>(std::lround(p.x * scale)),
          static_cast<int>(std::lround(p.y * scale))};
}

std::vector<PixelPos> rasterize_line(PixelPos a, PixelPos b) {
  std::vector<PixelPos> out;
  const int dx = std::abs(b.col - a.col);
  const int dy = -std::abs(b.row - a.row);
  const int sx = a.col < b.col ? 1 : -1;
  const int sy = a.row < b.row ? 1 : -1;
  int err = dx + dy;
  out.reserve(static_cast<std::size_t>(std::max(dx, -dy)) + 1);
  PixelPos p = a;
  for (;;) {
    out.push_back(p);
    if (p == b) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      p.col += sx;
    }
    if (e2 <= dx) {
      err += dx;
      p.row += sy;
    }
  }
  return out;
}

EncodedImage encode_scanpath(const Scanpath& path,
                             const EncodeOptions& options) {
  if (options.resolution < 8) {
    throw ShapeError("encoding resolution must be at least 8");
  }
  validate(path);
  const int res = options.resolution;
  EncodedImage image(res);

  std::vector<PixelPos> pixels;
  pixels.reserve(path.points.size());
  for (const GazePoint& p : path.points) pixels.push_back(to_pixel(p, res));

  for (std::size_t i = 1; i < pixels.size(); ++i) {
    for (PixelPos q : rasterize_line(pixels[i - 1], pixels[i])) {
      image.at(kBlue, q.row, q.col) = 1.0f;
    }
  }

  const int r = std::max(options.dot_radius, 1);
  const double floor = options.green_floor;
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const double ratio =
        path.duration > 0.0
            ? std::clamp(path.points[i].t / path.duration, 0.0, 1.0)
            : 0.0;
    const float green = static_cast<float>(ratio * (1.0 - floor) + floor);
    for (int dr = -(r - 1); dr <= r - 1; ++dr) {
      for (int dc = -(r - 1); dc <= r - 1; ++dc) {
        if (dr * dr + dc * dc >= r * r) continue;
        const int row = pixels[i].row + dr;
        const int col = pixels[i].col + dc;
        if (row < 0 || row >= res || col < 0 || col >= res) continue;
        image.at(kRed, row, col) = 1.0f;
        float& g = image.at(kGreen, row, col);
        g = std::max(g, green);
      }
    }
  }
  return image;
}

void AugmentParams::validate() const {
  auto in = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
  if (!in(noise_max, 0.0, 0.20) || !in(crop_min_fraction, 0.60, 1.0) ||
      !in(crop_max_fraction, 0.60, 1.0) ||
      crop_min_fraction > crop_max_fraction ||
      !in(shift_max_fraction, 0.0, 0.30)) {
    throw ConfigError("augmentation parameters outside their ranges");
  }
}

Scanpath augment(const Scanpath& path, const AugmentParams& params, Rng& rng) {
  scanpriv::validate(path);
  params.validate();
  const std::size_t n = path.points.size();

  const double fraction =
      rng.uniform(params.crop_min_fraction, params.crop_max_fraction);
  std::size_t len = static_cast<std::size_t>(
      std::lround(fraction * static_cast<double>(n)));
  len = std::clamp<std::size_t>(len, 1, n);
  const std::size_t start = rng.index(n - len + 1);

  const double shift_x =
      rng.uniform(-params.shift_max_fraction, params.shift_max_fraction);
  const double shift_y =
      rng.uniform(-params.shift_max_fraction, params.shift_max_fraction);
  const double noise = rng.uniform(0.0, params.noise_max);

  Scanpath out;
  out.subject_id = path.subject_id;
  out.stimulus_id = path.stimulus_id;
  out.duration = path.duration;
  out.points.reserve(len);
  for (std::size_t i = start; i < start + len; ++i) {
    GazePoint p = path.points[i];
    const double nx = rng.uniform(-noise, noise);
    const double ny = rng.uniform(-noise, noise);
    p.x = std::clamp(p.x + shift_x + nx, 0.0, 1.0);
    p.y = std::clamp(p.y + shift_y + ny, 0.0, 1.0);
    out.points.push_back(p);
  }
  return out;
}

}  // namespace scanpriv
