#pragma once

#include <stdexcept>
#include <string>

namespace cotlab {

// Base for every error raised by the library. The CLI maps subclasses to
// process exit codes (see cli.hpp).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid configuration values: sizes, choice sets, recipe parameters.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed operation inputs: empty parent lists, special tokens where normal
// ones are required, out-of-range indices.
class InputError : public Error {
public:
    using Error::Error;
};

// Filesystem and format failures while reading or writing artifacts.
class IoError : public Error {
public:
    using Error::Error;
};

// A generation backend failed to produce a token or completion.
class BackendError : public Error {
public:
    using Error::Error;
};

}  // namespace cotlab
