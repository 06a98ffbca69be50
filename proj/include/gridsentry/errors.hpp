#pragma once

#include <stdexcept>
#include <string>

namespace gridsentry {

/// Input-file error carrying file name and 1-based line number.
class ParseError : public std::runtime_error {
public:
    ParseError(std::string file, int line, const std::string& what)
        : std::runtime_error(file + ":" + std::to_string(line) + ": " + what),
          file_(std::move(file)),
          line_(line) {}

    const std::string& file() const { return file_; }
    int line() const { return line_; }

private:
    std::string file_;
    int line_;
};

/// Cross-reference or consistency violation in an assembled model.
class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Wire-protocol violation. Truncated frames are retryable: the caller
/// may wait for more bytes and decode again.
class ProtocolError : public std::runtime_error {
public:
    explicit ProtocolError(const std::string& what, bool retryable = false)
        : std::runtime_error(what), retryable_(retryable) {}

    bool retryable() const { return retryable_; }

private:
    bool retryable_;
};

/// Power-flow failure other than plain non-convergence (which is data).
class PowerflowError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace gridsentry
