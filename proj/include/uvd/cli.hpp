#pragma once

#include <string>
#include <vector>

namespace uvd {

// Full command surface, runnable in-process. `args` excludes the program
// name. Returns the process exit code: 0 success, 2 usage, 3 config,
// 4 I/O, 5 numerical failure.
int run_cli(std::vector<std::string> args);

}  // namespace uvd
