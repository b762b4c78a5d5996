#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qac {

enum class ErrorCode {
    invalid_input,
    not_found,
    corrupt_file,
    unavailable,
    parse,
    io,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code)
    {}

    ErrorCode code() const noexcept { return code_; }

  private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message)
{
    throw Error(code, message);
}

}  // namespace qac
