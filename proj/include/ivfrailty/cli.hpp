#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ivfrailty {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInputError = 1;
inline constexpr int kExitNonConvergence = 2;

/// Entry point for the `ivfrailty` tool. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ivfrailty
