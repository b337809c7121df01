#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace eotlab::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int {
    kExitOk = 0,
    kExitConfig = 2,
    kExitNonConvergence = 3,
    kExitDomain = 4,
};

struct Request {
    std::string command;     // "solve" or "experiment"
    std::string experiment;  // experiment name when command == "experiment"
    std::filesystem::path config;
    std::optional<std::filesystem::path> out;
    std::optional<std::uint64_t> seed;
};

[[nodiscard]] const std::vector<std::string>& experiment_names();

/// Runs one command end to end and returns the process exit code. Diagnostics
/// go to `log`; results go to the output directory.
[[nodiscard]] int run(const Request& req, std::ostream& log);

}  // namespace eotlab::cli
