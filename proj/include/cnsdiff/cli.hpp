#pragma once

#include <string>
#include <vector>

namespace cnsdiff {

// Exit codes: 0 success, 1 runtime failure, 2 usage/config error.
int run_command(const std::vector<std::string>& args);

}  // namespace cnsdiff
