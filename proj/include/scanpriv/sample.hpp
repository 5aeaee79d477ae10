#pragma once

#include <cstdint>

#include "scanpriv/image.hpp"

namespace scanpriv {

enum class Provenance : std::uint8_t { kTrain = 0, kTest = 1 };

enum class LabelKind : std::uint8_t { kSubject = 0, kStimulus = 1 };

// An encoded image with both labels and the split it came from.
struct Sample {
  EncodedImage image;
  int subject = 0;
  int stimulus = 0;
  Provenance provenance = Provenance::kTrain;
  std::uint32_t source = 0;  // index of the originating record
};

inline int label_of(const Sample& s, LabelKind kind) {
  return kind == LabelKind::kSubject ? s.subject : s.stimulus;
}

inline const char* to_string(LabelKind k) {
  return k == LabelKind::kSubject ? "subject" : "stimulus";
}

}  // namespace scanpriv
