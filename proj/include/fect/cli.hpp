#pragma once

#include <string>
#include <vector>

namespace fect {

// Full command-line entry point (args includes the program name).
// Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.
int run_cli(const std::vector<std::string>& args);

} // namespace fect
