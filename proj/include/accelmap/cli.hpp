#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "accelmap/tuner.hpp"

namespace accelmap {

enum class Action { validate, run, tune, sweep };

struct Command {
    Action action = Action::validate;
    std::string model;
    std::string config;
    std::string mappings;
    std::string input;
    std::string output;
    std::string history;
    std::string layer;  // sweep: restrict to one layer
    std::string param;
    std::vector<std::string> values;
    std::optional<std::uint64_t> seed;
    bool verify = false;
    bool tune_first = false;
    bool low_memory = false;
    Objective objective = Objective::psums;
    TunerOptions tuner;
    /// Set when help was requested; `help_text` holds the rendered usage.
    bool help = false;
    std::string help_text;
};

/// Parses arguments without the program name. Throws UsageError on unknown
/// flags, missing required flags, conflicts, or unparsable values.
Command parse_args(const std::vector<std::string>& args);

/// Runs a parsed command. Diagnostics go to `err`; data goes to files only.
/// Returns 0 on success or the failure class's exit code.
int execute(const Command& cmd, std::ostream& err);

/// parse_args + execute with error reporting; the program entry point.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Mapping spaces larger than this are refused by the grid tuner.
inline constexpr std::uint64_t kGridSpaceLimit = 1'000'000;

}  // namespace accelmap
