#pragma once

#include <ostream>

namespace malpoison {

/// Entry point of the malpoison tool. Returns 0 on success, 2 on usage
/// errors and 1 on runtime failures.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace malpoison
