#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace netadapt {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// netgraph
struct ChannelMismatch : Error {
  using Error::Error;
};
struct EmptySpatial : Error {
  using Error::Error;
};
struct InvalidAlpha : Error {
  using Error::Error;
};

// file formats (models, datasets, LUTs)
struct FormatError : Error {
  FormatError(std::size_t offset, const std::string& reason)
      : Error("format error at byte " + std::to_string(offset) + ": " + reason),
        offset(offset) {}
  std::size_t offset = 0;
};

// microtrain
struct ShapeMismatch : Error {
  using Error::Error;
};
struct NumericalFailure : Error {
  NumericalFailure(std::size_t iteration, const std::string& what)
      : Error("numerical failure at iteration " + std::to_string(iteration) +
              ": " + what),
        iteration(iteration) {}
  std::size_t iteration = 0;
};
struct InsufficientSamples : Error {
  using Error::Error;
};

// costmodel
struct ClockFailure : Error {
  using Error::Error;
};
struct UnknownFamily : Error {
  using Error::Error;
};

// pruner
struct NotPrunable : Error {
  using Error::Error;
};
struct Inconsistent : Error {
  using Error::Error;
};

// adapt
struct NoFeasibleProposal : Error {
  using Error::Error;
};
struct CoverageError : Error {
  using Error::Error;
};

}  // namespace netadapt
