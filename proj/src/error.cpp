#include "muspike/error.h"

namespace muspike {

std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::TruncatedTrack: return "TruncatedTrack";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::EmptyScore: return "EmptyScore";
    case ErrorCode::MalformedSidecar: return "MalformedSidecar";
    case ErrorCode::MalformedSequence: return "MalformedSequence";
    case ErrorCode::UnknownIndex: return "UnknownIndex";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::UnsupportedTimeSignature: return "UnsupportedTimeSignature";
    case ErrorCode::MalformedVocab: return "MalformedVocab";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::InvalidPrompt: return "InvalidPrompt";
    case ErrorCode::MalformedCheckpoint: return "MalformedCheckpoint";
    case ErrorCode::InsufficientNotes: return "InsufficientNotes";
    case ErrorCode::InsufficientBars: return "InsufficientBars";
    case ErrorCode::MissingChords: return "MissingChords";
    case ErrorCode::DegenerateGroups: return "DegenerateGroups";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::EmptyResponses: return "EmptyResponses";
    case ErrorCode::InsufficientCatalog: return "InsufficientCatalog";
    case ErrorCode::UnknownParticipant: return "UnknownParticipant";
    case ErrorCode::UnknownPiece: return "UnknownPiece";
    case ErrorCode::UnissuedAssignment: return "UnissuedAssignment";
    case ErrorCode::DuplicateResponse: return "DuplicateResponse";
    case ErrorCode::InvalidResponse: return "InvalidResponse";
    case ErrorCode::CorruptLog: return "CorruptLog";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace muspike
