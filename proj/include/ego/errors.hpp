#pragma once

#include <stdexcept>
#include <string>

namespace ego {

// Bad arguments, violated preconditions, malformed content. CLI exit code 1.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Missing or unreadable/unwritable files. CLI exit code 2.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ego
