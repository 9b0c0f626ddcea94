#include "coevo/subprocess.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>

#include "coevo/errors.hpp"

namespace coevo::subprocess {

CommandResult run_command(const std::filesystem::path& workdir, const std::string& command,
                          double timeout_s) {
    int pipefd[2];
    if (pipe(pipefd) != 0) fail("SpawnFailure", std::strerror(errno));

    const auto start = std::chrono::steady_clock::now();
    pid_t pid = fork();
    if (pid < 0) {
        close(pipefd[0]);
        close(pipefd[1]);
        fail("SpawnFailure", std::strerror(errno));
    }
    if (pid == 0) {
        setpgid(0, 0);  // own process group so a timeout kill reaps children too
        close(pipefd[0]);
        dup2(pipefd[1], STDOUT_FILENO);
        dup2(pipefd[1], STDERR_FILENO);
        close(pipefd[1]);
        if (chdir(workdir.c_str()) != 0) _exit(127);
        execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }
    close(pipefd[1]);

    CommandResult result;
    char buf[4096];
    const auto deadline = start + std::chrono::duration<double>(timeout_s);
    bool open = true;
    while (open) {
        auto now = std::chrono::steady_clock::now();
        int wait_ms = static_cast<int>(
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count());
        if (wait_ms < 0) wait_ms = 0;
        struct pollfd pfd{pipefd[0], POLLIN, 0};
        int rc = poll(&pfd, 1, wait_ms);
        if (rc > 0) {
            ssize_t n = read(pipefd[0], buf, sizeof buf);
            if (n > 0) result.output.append(buf, static_cast<std::size_t>(n));
            else open = false;  // EOF or error
        }
        if (std::chrono::steady_clock::now() >= deadline) {
            result.timed_out = true;
            kill(-pid, SIGKILL);
            // drain whatever made it into the pipe
            while (true) {
                ssize_t n = read(pipefd[0], buf, sizeof buf);
                if (n <= 0) break;
                result.output.append(buf, static_cast<std::size_t>(n));
            }
            open = false;
        }
    }
    close(pipefd[0]);

    int status = 0;
    waitpid(pid, &status, 0);
    if (WIFEXITED(status)) result.exit_status = WEXITSTATUS(status);
    else if (WIFSIGNALED(status)) result.exit_status = 128 + WTERMSIG(status);

    result.wall_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

}  // namespace coevo::subprocess
