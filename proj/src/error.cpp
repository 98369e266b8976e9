#include "evrag/error.hpp"

namespace evrag {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ExtractionFailed: return "ExtractionFailed";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::NoTracks: return "NoTracks";
    case ErrorCode::MalformedCaptionFile: return "MalformedCaptionFile";
    case ErrorCode::BadManifest: return "BadManifest";
    case ErrorCode::EmptyText: return "EmptyText";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::ProviderUnavailable: return "ProviderUnavailable";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::BadK: return "BadK";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::IndexUnavailable: return "IndexUnavailable";
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::RateLimited: return "RateLimited";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnknownTool: return "UnknownTool";
    case ErrorCode::ArgValidation: return "ArgValidation";
    case ErrorCode::HandlerError: return "HandlerError";
    case ErrorCode::MarkerOutOfRange: return "MarkerOutOfRange";
    case ErrorCode::EmptyGroup: return "EmptyGroup";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::Empty: return "Empty";
    case ErrorCode::UnmappedQuestion: return "UnmappedQuestion";
    case ErrorCode::CorruptSession: return "CorruptSession";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace evrag
