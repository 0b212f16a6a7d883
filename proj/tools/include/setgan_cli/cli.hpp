#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "setgan/error.hpp"

namespace setgan::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitDivergence = 3;
inline constexpr int kExitProtocol = 4;
inline constexpr int kExitIo = 5;

int exit_code_for(ErrorCode code);

// Runs one command; args exclude the program name. Output goes to the
// given streams so tests can capture it.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace setgan::cli
