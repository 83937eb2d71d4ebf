#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace rdcbias {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumerical = 3;

// Command-line entry point; args[0] is the program name. Results go to `out`,
// diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rdcbias
