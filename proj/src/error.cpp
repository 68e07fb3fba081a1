#include "socnav/error.hpp"

namespace socnav {

namespace {
std::string format_parse_error(const std::string& source, int line, const std::string& what) {
  std::string out = source;
  if (line > 0) out += ":" + std::to_string(line);
  return out + ": " + what;
}
}  // namespace

ParseError::ParseError(const std::string& source, int line, const std::string& what)
    : Error(format_parse_error(source, line, what)), line_(line) {}

}  // namespace socnav
