#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dctgen {

// Runs the command line with args[0] as the program name. Returns the
// process exit code: 0 success, 2 bad input, 3 malformed file, 4 numeric
// failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dctgen
