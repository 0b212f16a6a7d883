#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace setgan {

enum class ErrorCode {
  kInvalidArgument,
  kImageTooSmall,
  kDimsMismatch,
  kDivergence,
  kScaleUnavailable,
  kBadFormat,
  kVersionMismatch,
  kHashMismatch,
  kTruncated,
  kCorruptStream,
  kNotFound,
  kNotReady,
  kUnauthorized,
  kProtocol,
  kIo,
  kSensorUnavailable,
};

std::string_view to_string(ErrorCode code);

// Every module reports failures through this exception; the code is stable
// and is what the CLI maps onto exit statuses.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace setgan
