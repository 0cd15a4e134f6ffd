/**
 * @file error.h
 * @brief Typed domain errors shared by every muspike module.
 */
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace muspike {

enum class ErrorCode {
  // midi
  MalformedHeader,
  TruncatedTrack,
  UnsupportedFormat,
  EmptyScore,
  MalformedSidecar,
  // tokenizer
  MalformedSequence,
  UnknownIndex,
  EmptyCorpus,
  UnsupportedTimeSignature,
  MalformedVocab,
  // spiking model
  InvalidParams,
  DimensionMismatch,
  NonFiniteLoss,
  InvalidPrompt,
  MalformedCheckpoint,
  // metrics
  InsufficientNotes,
  InsufficientBars,
  MissingChords,
  // stats
  DegenerateGroups,
  InsufficientData,
  EmptyResponses,
  // study
  InsufficientCatalog,
  UnknownParticipant,
  UnknownPiece,
  UnissuedAssignment,
  DuplicateResponse,
  InvalidResponse,
  CorruptLog,
  // generic
  InvalidArgument,
  IoError,
};

/// Stable name of an error code, used verbatim in CLI output and HTTP bodies.
std::string_view error_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(error_name(code)) + ": " + detail), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  std::string_view name() const { return error_name(code_); }

 private:
  ErrorCode code_;
};

}  // namespace muspike
