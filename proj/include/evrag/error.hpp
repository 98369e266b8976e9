#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace evrag {

enum class ErrorCode {
  // ingest
  ExtractionFailed,
  UnsupportedFormat,
  NoTracks,
  MalformedCaptionFile,
  BadManifest,
  // embedding / index
  EmptyText,
  DimensionMismatch,
  ZeroVector,
  ProviderUnavailable,
  DuplicateId,
  BadK,
  CorruptFile,
  VersionMismatch,
  IndexUnavailable,
  // literature
  TransportError,
  RateLimited,
  ParseError,
  // tools
  UnknownTool,
  ArgValidation,
  HandlerError,
  // orchestration / evaluation
  MarkerOutOfRange,
  EmptyGroup,
  LengthMismatch,
  Empty,
  UnmappedQuestion,
  // sessions
  CorruptSession,
  NotFound,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace evrag
