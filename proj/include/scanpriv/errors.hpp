#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace scanpriv {

// Process exit status associated with an error family.
enum class ErrorCategory { kConfig = 2, kData = 3, kDivergence = 4 };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}
  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

#define SCANPRIV_DEFINE_ERROR(Name, Category)                  \
  class Name : public Error {                                  \
   public:                                                     \
    explicit Name(const std::string& what)                     \
        : Error(ErrorCategory::Category, #Name ": " + what) {} \
  };

SCANPRIV_DEFINE_ERROR(ConfigError, kConfig)
SCANPRIV_DEFINE_ERROR(InvalidScanpath, kData)
SCANPRIV_DEFINE_ERROR(SchemaError, kData)
SCANPRIV_DEFINE_ERROR(ShapeError, kData)
SCANPRIV_DEFINE_ERROR(MissingClass, kData)
SCANPRIV_DEFINE_ERROR(InvalidQValues, kData)
SCANPRIV_DEFINE_ERROR(InvalidRewardSpec, kConfig)
SCANPRIV_DEFINE_ERROR(EmptyMemory, kData)
SCANPRIV_DEFINE_ERROR(ProvenanceError, kData)
SCANPRIV_DEFINE_ERROR(InsufficientData, kData)
SCANPRIV_DEFINE_ERROR(InvalidScale, kConfig)
SCANPRIV_DEFINE_ERROR(NoFeasibleEpsilon, kData)
SCANPRIV_DEFINE_ERROR(CheckpointError, kData)
SCANPRIV_DEFINE_ERROR(InvalidReward, kData)

#undef SCANPRIV_DEFINE_ERROR

class RowError : public Error {
 public:
  RowError(std::size_t line, const std::string& what)
      : Error(ErrorCategory::kData,
              "RowError: line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(long epoch, const std::string& what)
      : Error(ErrorCategory::kDivergence,
              "TrainingDiverged: epoch " + std::to_string(epoch) + ": " + what),
        epoch_(epoch) {}
  long epoch() const noexcept { return epoch_; }

 private:
  long epoch_;
};

class CapacityError : public Error {
 public:
  CapacityError(std::size_t required, std::size_t capacity)
      : Error(ErrorCategory::kConfig,
              "CapacityError: replay capacity " + std::to_string(capacity) +
                  " below the per-image minimum " + std::to_string(required)),
        required_(required) {}
  std::size_t required() const noexcept { return required_; }

 private:
  std::size_t required_;
};

}  // namespace scanpriv
