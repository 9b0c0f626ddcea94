#pragma once

#include <filesystem>
#include <string>

namespace coevo::subprocess {

struct CommandResult {
    std::string output;  // interleaved stdout+stderr
    int exit_status = -1;
    double wall_s = 0.0;
    bool timed_out = false;
};

// Runs `command` via /bin/sh -c inside `workdir`, capturing combined output.
// On timeout the whole process group is killed and timed_out is set.
CommandResult run_command(const std::filesystem::path& workdir, const std::string& command,
                          double timeout_s);

}  // namespace coevo::subprocess
