#include "setgan/error.hpp"

namespace setgan {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kImageTooSmall: return "image_too_small";
    case ErrorCode::kDimsMismatch: return "dims_mismatch";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kScaleUnavailable: return "scale_unavailable";
    case ErrorCode::kBadFormat: return "bad_format";
    case ErrorCode::kVersionMismatch: return "version_mismatch";
    case ErrorCode::kHashMismatch: return "hash_mismatch";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kCorruptStream: return "corrupt_stream";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kNotReady: return "not_ready";
    case ErrorCode::kUnauthorized: return "unauthorized";
    case ErrorCode::kProtocol: return "protocol";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kSensorUnavailable: return "sensor_unavailable";
  }
  return "unknown";
}

}  // namespace setgan
