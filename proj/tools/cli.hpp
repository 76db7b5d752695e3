#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace dgcl::cli {

// Runs the dgcl command line. Errors are written to `err` as one JSON
// object; the return value is the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Worker cap for parallel seeds, from DOT_ENGINE_THREADS when set.
unsigned thread_cap();

}  // namespace dgcl::cli
