#pragma once

#include <stdexcept>
#include <string>

namespace stopsafe {

// Base class for every error the pipeline raises. Subclasses carry the
// contract name so callers can catch by failure kind.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace stopsafe
