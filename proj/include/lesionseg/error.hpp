#pragma once

#include <stdexcept>
#include <string>

namespace lesionseg {

// Base error for everything the library throws.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Bad invocation: malformed flags, unknown config keys, impossible parameters.
class UsageError : public Error {
public:
    explicit UsageError(const std::string& what) : Error(what) {}
};

// Bad data: unreadable files, shape mismatches, corrupt checkpoints, id mismatches.
class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(what) {}
};

} // namespace lesionseg
