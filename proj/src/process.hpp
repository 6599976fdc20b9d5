#pragma once

#include <string>
#include <sys/types.h>

namespace cotlab::detail {

// A `/bin/sh -c command` child with line-oriented pipes on stdin/stdout.
class ChildProcess {
public:
    explicit ChildProcess(const std::string& command);
    ~ChildProcess();
    ChildProcess(const ChildProcess&) = delete;
    ChildProcess& operator=(const ChildProcess&) = delete;

    // Writes `line` plus a newline and returns the next reply line without
    // its newline. Throws BackendError if the child has gone away.
    std::string exchange(const std::string& line);

private:
    pid_t pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    std::string buffer_;
    std::string command_;
};

}  // namespace cotlab::detail
