#include "process.hpp"

#include "cotlab/errors.hpp"

#include <cerrno>
#include <csignal>
#include <cstring>
#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

namespace cotlab::detail {

namespace {

[[noreturn]] void fail(const std::string& command, const std::string& what) {
    throw BackendError("backend '" + command + "': " + what);
}

}  // namespace

ChildProcess::ChildProcess(const std::string& command) : command_(command) {
    // A dead child must surface as a write error, not kill the harness.
    std::signal(SIGPIPE, SIG_IGN);
    int in_pipe[2], out_pipe[2];
    if (pipe2(in_pipe, O_CLOEXEC) != 0) fail(command, std::strerror(errno));
    if (pipe2(out_pipe, O_CLOEXEC) != 0) {
        close(in_pipe[0]);
        close(in_pipe[1]);
        fail(command, std::strerror(errno));
    }
    pid_ = fork();
    if (pid_ < 0) fail(command, std::strerror(errno));
    if (pid_ == 0) {
        dup2(in_pipe[0], STDIN_FILENO);
        dup2(out_pipe[1], STDOUT_FILENO);
        execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }
    close(in_pipe[0]);
    close(out_pipe[1]);
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];
}

ChildProcess::~ChildProcess() {
    if (to_child_ >= 0) close(to_child_);
    if (from_child_ >= 0) close(from_child_);
    if (pid_ > 0) {
        int status = 0;
        waitpid(pid_, &status, 0);
    }
}

std::string ChildProcess::exchange(const std::string& line) {
    std::string out = line + "\n";
    std::size_t written = 0;
    while (written < out.size()) {
        const ssize_t n = write(to_child_, out.data() + written, out.size() - written);
        if (n < 0) {
            if (errno == EINTR) continue;
            fail(command_, std::string("write failed: ") + std::strerror(errno));
        }
        written += static_cast<std::size_t>(n);
    }
    for (;;) {
        const auto nl = buffer_.find('\n');
        if (nl != std::string::npos) {
            std::string reply = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            return reply;
        }
        char chunk[4096];
        const ssize_t n = read(from_child_, chunk, sizeof chunk);
        if (n < 0) {
            if (errno == EINTR) continue;
            fail(command_, std::string("read failed: ") + std::strerror(errno));
        }
        if (n == 0) fail(command_, "process closed its output");
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
}

}  // namespace cotlab::detail
