#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace odx::cli {

// Exit codes.
inline constexpr int kSuccess = 0;
inline constexpr int kInputError = 1;
inline constexpr int kMathFail = 2;

// args[0] is the program name. Primary JSON goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace odx::cli
