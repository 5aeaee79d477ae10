#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "scanpriv/errors.hpp"

namespace scanpriv {

enum Channel : int { kRed = 0, kGreen = 1, kBlue = 2 };

// Square 3-channel float image stored channel-major (C, H, W). Values are in
// [0, 1] for every image produced by the codec or a decoder.
class EncodedImage {
 public:
  static constexpr int kChannels = 3;

  EncodedImage() = default;
  explicit EncodedImage(int resolution)
      : resolution_(resolution),
        values_(static_cast<std::size_t>(kChannels) * resolution * resolution,
                0.0f) {}
  EncodedImage(int resolution, std::vector<float> values)
      : resolution_(resolution), values_(std::move(values)) {
    if (values_.size() !=
        static_cast<std::size_t>(kChannels) * resolution * resolution) {
      throw ShapeError("image buffer does not match resolution");
    }
  }

  int resolution() const { return resolution_; }
  std::size_t size() const { return values_.size(); }
  std::size_t plane() const {
    return static_cast<std::size_t>(resolution_) * resolution_;
  }

  float& at(int c, int row, int col) {
    return values_[static_cast<std::size_t>(c) * plane() +
                   static_cast<std::size_t>(row) * resolution_ + col];
  }
  float at(int c, int row, int col) const {
    return values_[static_cast<std::size_t>(c) * plane() +
                   static_cast<std::size_t>(row) * resolution_ + col];
  }

  std::span<float> values() { return values_; }
  std::span<const float> values() const { return values_; }
  std::span<const float> channel(int c) const {
    return std::span<const float>(values_).subspan(
        static_cast<std::size_t>(c) * plane(), plane());
  }

  friend bool operator==(const EncodedImage&, const EncodedImage&) = default;

 private:
  int resolution_ = 0;
  std::vector<float> values_;
};

}  // namespace scanpriv
