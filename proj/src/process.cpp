#include "spark/process.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>

#include "spark/errors.hpp"

extern char** environ;

namespace spark {

namespace {

struct Pipe {
    int fd[2] = {-1, -1};
    Pipe() {
        if (::pipe2(fd, O_CLOEXEC) != 0) throw SparkError(std::string("pipe2: ") + std::strerror(errno));
    }
    ~Pipe() {
        close_read();
        close_write();
    }
    Pipe(const Pipe&) = delete;
    Pipe& operator=(const Pipe&) = delete;
    void close_read() {
        if (fd[0] >= 0) ::close(fd[0]);
        fd[0] = -1;
    }
    void close_write() {
        if (fd[1] >= 0) ::close(fd[1]);
        fd[1] = -1;
    }
};

std::vector<std::string> child_environment(const std::vector<std::string>& passthrough) {
    std::vector<std::string> env;
    if (passthrough.empty()) {
        for (char** e = environ; *e; ++e) env.emplace_back(*e);
        return env;
    }
    auto add = [&](const std::string& name) {
        if (const char* v = std::getenv(name.c_str())) env.push_back(name + "=" + v);
    };
    add("PATH");
    for (const auto& name : passthrough) {
        if (name != "PATH") add(name);
    }
    return env;
}

}  // namespace

ProcessResult run_process(const std::vector<std::string>& argv, const ProcessOptions& options) {
    if (argv.empty() || argv[0].empty()) throw ConfigError("empty command");

    std::vector<char*> cargv;
    for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
    cargv.push_back(nullptr);

    const auto env_strings = child_environment(options.env_passthrough);
    std::vector<char*> cenv;
    for (const auto& e : env_strings) cenv.push_back(const_cast<char*>(e.c_str()));
    cenv.push_back(nullptr);

    Pipe out, err, exec_status;
    const auto start = std::chrono::steady_clock::now();
    const pid_t pid = ::fork();
    if (pid < 0) throw SparkError(std::string("fork: ") + std::strerror(errno));

    if (pid == 0) {
        ::setpgid(0, 0);
        ::dup2(out.fd[1], STDOUT_FILENO);
        ::dup2(err.fd[1], STDERR_FILENO);
        const int devnull = ::open("/dev/null", O_RDONLY);
        if (devnull >= 0) ::dup2(devnull, STDIN_FILENO);
        if (!options.working_dir.empty() && ::chdir(options.working_dir.c_str()) != 0) {
            const int e = errno;
            [[maybe_unused]] auto n = ::write(exec_status.fd[1], &e, sizeof e);
            ::_exit(127);
        }
        ::execvpe(cargv[0], cargv.data(), cenv.data());
        const int e = errno;
        [[maybe_unused]] auto n = ::write(exec_status.fd[1], &e, sizeof e);
        ::_exit(127);
    }

    out.close_write();
    err.close_write();
    exec_status.close_write();

    // The status pipe is close-on-exec: EOF means exec succeeded.
    int exec_errno = 0;
    const auto got = ::read(exec_status.fd[0], &exec_errno, sizeof exec_errno);
    if (got == static_cast<ssize_t>(sizeof exec_errno)) {
        int status;
        ::waitpid(pid, &status, 0);
        throw ConfigError("cannot execute '" + argv[0] + "': " + std::strerror(exec_errno));
    }

    ProcessResult result;
    const auto deadline = start + options.timeout;
    pollfd fds[2] = {{out.fd[0], POLLIN, 0}, {err.fd[0], POLLIN, 0}};
    std::string* sinks[2] = {&result.out, &result.err};
    int open_streams = 2;
    char buf[8192];
    while (open_streams > 0) {
        const auto now = std::chrono::steady_clock::now();
        if (now >= deadline) {
            result.timed_out = true;
            break;
        }
        const auto wait_ms = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count();
        const int rc = ::poll(fds, 2, static_cast<int>(std::min<long long>(wait_ms + 1, 1000)));
        if (rc < 0) {
            if (errno == EINTR) continue;
            break;
        }
        for (int k = 0; k < 2; ++k) {
            if (fds[k].fd < 0 || !(fds[k].revents & (POLLIN | POLLHUP | POLLERR))) continue;
            const auto n = ::read(fds[k].fd, buf, sizeof buf);
            if (n > 0) {
                sinks[k]->append(buf, static_cast<std::size_t>(n));
            } else if (n == 0 || errno != EINTR) {
                fds[k].fd = -1;
                --open_streams;
            }
        }
    }

    if (result.timed_out) ::kill(-pid, SIGKILL);

    int status = 0;
    while (true) {
        if (!result.timed_out) {
            // Streams closed; the child may still be running (e.g. it closed
            // stdout early). Honour the deadline while reaping.
            const pid_t r = ::waitpid(pid, &status, WNOHANG);
            if (r == pid) break;
            if (std::chrono::steady_clock::now() >= deadline) {
                result.timed_out = true;
                ::kill(-pid, SIGKILL);
                continue;
            }
            ::usleep(1000);
        } else {
            if (::waitpid(pid, &status, 0) == pid || errno != EINTR) break;
        }
    }

    if (!result.timed_out) {
        if (WIFEXITED(status)) {
            result.exit_code = WEXITSTATUS(status);
        } else if (WIFSIGNALED(status)) {
            result.exit_code = 128 + WTERMSIG(status);
        }
    }
    result.elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
    return result;
}

}  // namespace spark
