#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace polarsim::cli {

enum ExitCode : int { kOk = 0, kInvalid = 1, kFailed = 2 };

/// Runs one command. args excludes the program name. On success the produced
/// directory is printed to out.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace polarsim::cli
