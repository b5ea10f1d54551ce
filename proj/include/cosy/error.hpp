#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cosy {

// Every failure surfaced by the library carries one of these codes. The CLI
// maps validation codes to exit status 1 and everything else to 2.
enum class ErrorCode {
  // concepts-io
  MalformedRow,
  DuplicateKey,
  EmptyExplanation,
  NonBinaryCell,
  ConstantConceptColumn,
  EmptyDataset,
  MissingKey,
  InvalidValue,
  UnknownKey,
  // imagegen
  MissingPlaceholder,
  BackendUnavailable,
  GenerationRefused,
  CacheCorrupt,
  // activation
  IndexOutOfRange,
  UnknownLayer,
  AdapterFailure,
  NonFiniteActivation,
  VersionMismatch,
  LengthMismatch,
  CorruptManifest,
  // scoring
  EmptyInput,
  NonFiniteValue,
  StoreMismatch,
  NeuronOutOfRange,
  EmptyCell,
  // metaeval
  DimensionMismatch,
  ZeroVector,
  SingleConceptUniverse,
  // explainers
  UnknownConcept,
  DegenerateMembership,
  EmptyBeam,
  AllZeroActivations,
  InvalidConfig,
  // generic
  Io,
  ConfigHashMismatch,
};

std::string_view to_string(ErrorCode code);

// True for errors caused by bad user input (config, files, arguments) as
// opposed to failures while running the pipeline.
bool is_validation_error(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cosy
