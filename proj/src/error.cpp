#include "subnet/error.hpp"

namespace subnet {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::contract: return "contract";
    case ErrorKind::config: return "config";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::io: return "io";
    case ErrorKind::parse: return "parse";
    case ErrorKind::version: return "version";
    case ErrorKind::corrupt: return "corrupt";
    case ErrorKind::degenerate: return "degenerate";
  }
  return "unknown";
}

}  // namespace subnet
