#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace spark {

struct ProcessOptions {
    std::chrono::milliseconds timeout{std::chrono::seconds(60)};
    std::filesystem::path working_dir;  // empty: inherit
    /// When non-empty the child sees only these variables (and PATH).
    std::vector<std::string> env_passthrough;
};

struct ProcessResult {
    int exit_code = -1;  // valid when !timed_out; 128+N when killed by signal N
    bool timed_out = false;
    std::string out;
    std::string err;
    std::chrono::milliseconds elapsed{0};

    bool ok() const noexcept { return !timed_out && exit_code == 0; }
};

/// Runs argv[0] (PATH lookup) with the remaining arguments, capturing stdout and
/// stderr. On timeout the whole process group is killed. Throws ConfigError if
/// the program cannot be executed at all (not found, not executable).
ProcessResult run_process(const std::vector<std::string>& argv, const ProcessOptions& options);

}  // namespace spark
