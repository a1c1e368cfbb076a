#include "krot/error.hpp"

namespace krot {

void throw_invalid(const std::string& message) { throw Error(ErrorCode::kInvalidArgument, message); }

void throw_domain(const std::string& message) { throw Error(ErrorCode::kDomain, message); }

}  // namespace krot
