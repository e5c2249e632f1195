#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "rmcts/games.hpp"

namespace rmcts {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs the command line `args` (without the program name). Returns the exit
/// code: 0 on success, 2 on a usage error, 1 when the run itself fails.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// "connect4", "connect4:4x4:3" (width x height : k), "othello", "othello:6",
/// "dots", "dots:2x3" (box rows x box columns). Throws std::invalid_argument.
GameConfig parse_game_spec(const std::string& spec);

}  // namespace rmcts
