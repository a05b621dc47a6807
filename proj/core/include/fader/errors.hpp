#pragma once

#include <stdexcept>
#include <string>

namespace fader {

// Error taxonomy shared by all modules. Each maps to a distinct failure
// class so callers (and the CLI exit-code mapping) can tell them apart.

struct NotFound : std::runtime_error {
  explicit NotFound(const std::string& m) : std::runtime_error(m) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& m) : std::runtime_error(m) {}
};

struct DecodeError : std::runtime_error {
  explicit DecodeError(const std::string& m) : std::runtime_error(m) {}
};

struct MissingGroundTruth : std::runtime_error {
  explicit MissingGroundTruth(const std::string& m) : std::runtime_error(m) {}
};

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& m) : std::runtime_error(m) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};

struct ConfigMismatch : std::runtime_error {
  explicit ConfigMismatch(const std::string& m) : std::runtime_error(m) {}
};

struct InvalidTrainingData : std::runtime_error {
  explicit InvalidTrainingData(const std::string& m) : std::runtime_error(m) {}
};

struct InsufficientPatches : std::runtime_error {
  explicit InsufficientPatches(const std::string& m) : std::runtime_error(m) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& m) : std::runtime_error(m) {}
};

struct DegenerateLabels : std::runtime_error {
  explicit DegenerateLabels(const std::string& m) : std::runtime_error(m) {}
};

}  // namespace fader
