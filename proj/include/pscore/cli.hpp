// In-process command-line entry point: args are argv[1..] in order. Returns
// the process exit code: 0 success, 1 failed run, 2 bad usage.

#pragma once

#include <string>
#include <vector>

namespace pscore {

int run(std::vector<std::string> args);

} // namespace pscore
