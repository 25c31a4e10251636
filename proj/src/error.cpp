#include "gaitscale/error.hpp"

namespace gaitscale {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::NonUniformSampling: return "NonUniformSampling";
    case ErrorKind::EmptyFile: return "EmptyFile";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::SchemaVersionMismatch: return "SchemaVersionMismatch";
    case ErrorKind::RejectedEmpty: return "RejectedEmpty";
    case ErrorKind::ArchitectureMismatch: return "ArchitectureMismatch";
    case ErrorKind::InvalidTrial: return "InvalidTrial";
    case ErrorKind::TooShort: return "TooShort";
    case ErrorKind::InvalidCutoff: return "InvalidCutoff";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::NoGaitDetected: return "NoGaitDetected";
    case ErrorKind::AllCyclesRejected: return "AllCyclesRejected";
    case ErrorKind::NoPriorOppositeStrike: return "NoPriorOppositeStrike";
    case ErrorKind::InvalidPhase: return "InvalidPhase";
    case ErrorKind::InsufficientHistory: return "InsufficientHistory";
    case ErrorKind::UnknownMarker: return "UnknownMarker";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::DimNotDivisible: return "DimNotDivisible";
    case ErrorKind::OddDim: return "OddDim";
    case ErrorKind::InvalidRate: return "InvalidRate";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::InsufficientSamples: return "InsufficientSamples";
    case ErrorKind::UnknownTrial: return "UnknownTrial";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::ZeroRMSE: return "ZeroRMSE";
    case ErrorKind::TooFewPoints: return "TooFewPoints";
    case ErrorKind::GridMismatch: return "GridMismatch";
    case ErrorKind::TooFewFolds: return "TooFewFolds";
    case ErrorKind::NoPeak: return "NoPeak";
    case ErrorKind::TooFewPairs: return "TooFewPairs";
    case ErrorKind::AllZeroDiffs: return "AllZeroDiffs";
    case ErrorKind::ConstantInput: return "ConstantInput";
    case ErrorKind::DegenerateX: return "DegenerateX";
    case ErrorKind::InsufficientDf: return "InsufficientDf";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
    case ErrorKind::MissingCurves: return "MissingCurves";
  }
  return "Unknown";
}

}  // namespace gaitscale
