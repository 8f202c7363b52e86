#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace csicl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (task files, registries, sheet files).
class DataError : public Error {
public:
    using Error::Error;
};

/// Caller violated an operation's precondition.
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Failure attached to one element of a batch, e.g. a single demonstration.
class IndexedError : public Error {
public:
    IndexedError(std::size_t index, std::string detail, const std::string& context = {})
        : Error(context + (context.empty() ? "" : ": ") + "index " + std::to_string(index) + ": " + detail),
          index_(index), detail_(std::move(detail)) {}

    std::size_t index() const noexcept { return index_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    std::size_t index_;
    std::string detail_;
};

} // namespace csicl
