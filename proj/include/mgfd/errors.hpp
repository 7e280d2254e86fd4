#pragma once

#include <stdexcept>
#include <string>

namespace mgfd {

/// Bad inputs or malformed files. The CLI maps this to exit code 2.
class ValidationError : public std::invalid_argument {
public:
    explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

/// Failures at run time (non-finite loss, unwritable output, ...). Exit code 1.
class RuntimeFailure : public std::runtime_error {
public:
    explicit RuntimeFailure(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mgfd
