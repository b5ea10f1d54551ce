#include "cosy/error.hpp"

namespace cosy {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::DuplicateKey: return "DuplicateKey";
    case ErrorCode::EmptyExplanation: return "EmptyExplanation";
    case ErrorCode::NonBinaryCell: return "NonBinaryCell";
    case ErrorCode::ConstantConceptColumn: return "ConstantConceptColumn";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::MissingKey: return "MissingKey";
    case ErrorCode::InvalidValue: return "InvalidValue";
    case ErrorCode::UnknownKey: return "UnknownKey";
    case ErrorCode::MissingPlaceholder: return "MissingPlaceholder";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::GenerationRefused: return "GenerationRefused";
    case ErrorCode::CacheCorrupt: return "CacheCorrupt";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::UnknownLayer: return "UnknownLayer";
    case ErrorCode::AdapterFailure: return "AdapterFailure";
    case ErrorCode::NonFiniteActivation: return "NonFiniteActivation";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::CorruptManifest: return "CorruptManifest";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::StoreMismatch: return "StoreMismatch";
    case ErrorCode::NeuronOutOfRange: return "NeuronOutOfRange";
    case ErrorCode::EmptyCell: return "EmptyCell";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::SingleConceptUniverse: return "SingleConceptUniverse";
    case ErrorCode::UnknownConcept: return "UnknownConcept";
    case ErrorCode::DegenerateMembership: return "DegenerateMembership";
    case ErrorCode::EmptyBeam: return "EmptyBeam";
    case ErrorCode::AllZeroActivations: return "AllZeroActivations";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::Io: return "Io";
    case ErrorCode::ConfigHashMismatch: return "ConfigHashMismatch";
  }
  return "Unknown";
}

bool is_validation_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedRow:
    case ErrorCode::DuplicateKey:
    case ErrorCode::EmptyExplanation:
    case ErrorCode::NonBinaryCell:
    case ErrorCode::ConstantConceptColumn:
    case ErrorCode::EmptyDataset:
    case ErrorCode::MissingKey:
    case ErrorCode::InvalidValue:
    case ErrorCode::UnknownKey:
    case ErrorCode::MissingPlaceholder:
    case ErrorCode::InvalidConfig:
    case ErrorCode::UnknownLayer:
    case ErrorCode::ConfigHashMismatch:
      return true;
    default:
      return false;
  }
}

}  // namespace cosy
