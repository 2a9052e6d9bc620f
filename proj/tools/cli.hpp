#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace onorm::cli {

enum ExitCode { kOk = 0, kUsage = 1, kConfig = 2, kRuntime = 3 };

// args excludes the program name. Normal output goes to `out`, the one-line
// diagnostic for a failure to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace onorm::cli
