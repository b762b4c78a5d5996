#include "qac/error.hpp"

namespace qac {

std::string_view to_string(ErrorCode code)
{
    switch (code) {
    case ErrorCode::invalid_input: return "invalid_input";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::corrupt_file: return "corrupt_file";
    case ErrorCode::unavailable: return "unavailable";
    case ErrorCode::parse: return "parse_error";
    case ErrorCode::io: return "io_error";
    }
    return "unknown";
}

}  // namespace qac
