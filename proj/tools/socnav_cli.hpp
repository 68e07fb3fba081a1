#pragma once

#include <iosfwd>

namespace socnav::cli {

// Exit codes: 0 ok, 1 usage, 2 I/O, 3 parse, 4 config, 5 numeric.
enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kIo = 2,
  kParse = 3,
  kConfig = 4,
  kNumeric = 5,
};

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace socnav::cli
