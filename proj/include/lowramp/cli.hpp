#pragma once

#include <string>
#include <vector>

namespace lowramp {

// Exit codes: 0 success, 2 config error, 3 numerical failure.
int run_cli(const std::vector<std::string>& args);

}  // namespace lowramp
