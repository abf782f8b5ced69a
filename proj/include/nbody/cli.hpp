#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace nbody {

// Runs one `nbody` invocation. args excludes the program name. Returns the exit code:
// 0 on success, 2 for invalid input, 3 for numerical failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nbody
