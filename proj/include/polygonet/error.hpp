#pragma once

#include <stdexcept>
#include <string>

namespace polygonet {

enum class ErrorCode {
  Decode,
  UnsupportedFormat,
  DegenerateImage,
  NoObject,
  DegenerateCover,
  DegeneratePolygon,
  SequenceTooLong,
  EmptySequence,
  MagicMismatch,
  Truncated,
  CountMismatch,
  EmptyDataset,
  DatasetQuality,
  Config,
  Checkpoint,
  Io,
  Precondition,
};

const char* to_string(ErrorCode code) noexcept;

/// All recoverable failures in the library surface as this exception; `code()`
/// distinguishes the failure class for callers that branch on it.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace polygonet
