#pragma once

#include <iostream>

namespace leakprobe::cli {

/// Exit codes: 0 success, 1 usage or validation error, 2 runtime or backend failure.
int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr);

}  // namespace leakprobe::cli
