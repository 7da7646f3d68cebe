#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace nilm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitIo = 1;
inline constexpr int kExitValidation = 2;

/// Runs the `nilm` command line. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nilm::cli
