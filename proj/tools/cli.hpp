#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace bcdnet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitIo = 2;

/// Runs one of `simulate`, `train`, `recover`, `eval`. args excludes the
/// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace bcdnet::cli
