#pragma once

#include <stdexcept>
#include <string>

namespace mabdqa {

// Precondition / contract violations (bad dimensions, invalid params).
class ContractError : public std::invalid_argument {
public:
    explicit ContractError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Filesystem-level failures: open/read/write.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed persisted data. Subclasses distinguish the failure kind.
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

class BadMagicError : public FormatError {
public:
    explicit BadMagicError(const std::string& msg) : FormatError(msg) {}
};

class BadVersionError : public FormatError {
public:
    explicit BadVersionError(const std::string& msg) : FormatError(msg) {}
};

class TruncatedError : public FormatError {
public:
    explicit TruncatedError(const std::string& msg) : FormatError(msg) {}
};

// Model gateway failures (network, auth, timeout). retriable() tells the
// caller whether another attempt could plausibly succeed.
class GatewayError : public std::runtime_error {
public:
    GatewayError(const std::string& msg, bool retriable)
        : std::runtime_error(msg), retriable_(retriable) {}
    bool retriable() const { return retriable_; }

private:
    bool retriable_;
};

// Unparsable model reply (no rating digit, malformed JSON grade, ...).
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad user-facing configuration (missing env var, malformed config file).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mabdqa
