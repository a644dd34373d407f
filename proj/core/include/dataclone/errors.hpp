#pragma once

#include <stdexcept>
#include <string>

namespace dataclone {

// Failure codes for every contract violation the library reports. Tests match
// on the code; messages are for humans.
enum class ErrorCode {
  // corpus
  EmptyProfile,
  InvalidProfile,
  InvalidFraction,
  ParseError,
  DuplicateId,
  // instruct
  TemplateUnsatisfied,
  InvalidTemplate,
  NoTemplates,
  NoSatisfiablePrompts,
  // model
  VocabTooSmall,
  InvalidTokenId,
  InvalidHParams,
  ContextOverflow,
  EmptyLoss,
  AdapterMismatch,
  TooShort,
  // dp
  NonFiniteGradient,
  UnclippedInput,
  InvalidRate,
  Diverged,
  UnresolvedSpec,
  CalibrationOutOfRange,
  InvalidArgument,
  // evalsuite
  DegenerateModel,
  EmptyCorpus,
  AlignmentError,
  EmptyPopulation,
  SingleClass,
  // cli / pipeline
  MissingDependency,
  ConfigError,
  IoError,
  BadCheckpoint,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyProfile: return "EmptyProfile";
    case ErrorCode::InvalidProfile: return "InvalidProfile";
    case ErrorCode::InvalidFraction: return "InvalidFraction";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::TemplateUnsatisfied: return "TemplateUnsatisfied";
    case ErrorCode::InvalidTemplate: return "InvalidTemplate";
    case ErrorCode::NoTemplates: return "NoTemplates";
    case ErrorCode::NoSatisfiablePrompts: return "NoSatisfiablePrompts";
    case ErrorCode::VocabTooSmall: return "VocabTooSmall";
    case ErrorCode::InvalidTokenId: return "InvalidTokenId";
    case ErrorCode::InvalidHParams: return "InvalidHParams";
    case ErrorCode::ContextOverflow: return "ContextOverflow";
    case ErrorCode::EmptyLoss: return "EmptyLoss";
    case ErrorCode::AdapterMismatch: return "AdapterMismatch";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::UnclippedInput: return "UnclippedInput";
    case ErrorCode::InvalidRate: return "InvalidRate";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::UnresolvedSpec: return "UnresolvedSpec";
    case ErrorCode::CalibrationOutOfRange: return "CalibrationOutOfRange";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DegenerateModel: return "DegenerateModel";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::AlignmentError: return "AlignmentError";
    case ErrorCode::EmptyPopulation: return "EmptyPopulation";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::MissingDependency: return "MissingDependency";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::BadCheckpoint: return "BadCheckpoint";
  }
  return "UnknownError";
}

}  // namespace dataclone
