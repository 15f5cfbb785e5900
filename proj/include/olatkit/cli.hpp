#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "olatkit/error.hpp"

namespace olat::cli {

// 0 ok, 2 validation, 3 I/O, 4 numeric failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitNumeric = 4;

int exit_code(ErrorKind kind);

// Runs one invocation; args excludes the program name. Diagnostics go to
// `err` as a single line, reports to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace olat::cli
