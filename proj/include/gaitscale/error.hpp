#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gaitscale {

enum class ErrorKind {
  // dataio
  MissingColumn,
  NonUniformSampling,
  EmptyFile,
  IoFailure,
  SchemaVersionMismatch,
  RejectedEmpty,
  ArchitectureMismatch,
  InvalidTrial,
  // preprocess
  TooShort,
  InvalidCutoff,
  LengthMismatch,
  NoGaitDetected,
  AllCyclesRejected,
  // sampling
  NoPriorOppositeStrike,
  InvalidPhase,
  InsufficientHistory,
  UnknownMarker,
  // synthgait
  InvalidConfig,
  // gradcore
  ShapeMismatch,
  DimNotDivisible,
  OddDim,
  InvalidRate,
  NonFiniteLoss,
  // modelzoo
  InvalidSpec,
  InsufficientSamples,
  UnknownTrial,
  // crossval
  TooFewSamples,
  ZeroRMSE,
  TooFewPoints,
  // timescale / stats
  GridMismatch,
  TooFewFolds,
  NoPeak,
  TooFewPairs,
  AllZeroDiffs,
  ConstantInput,
  DegenerateX,
  InsufficientDf,
  // cli
  ConfigInvalid,
  MissingCurves,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace gaitscale
