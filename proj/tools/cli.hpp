#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mdiqkd::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kConfigUnreadable = 3,
  kOutputUnwritable = 4,
  kInvalidInput = 5,
  kProtocolFault = 6,
};

/// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mdiqkd::cli
