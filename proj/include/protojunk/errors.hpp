#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace protojunk {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Caller handed us something that violates a precondition (bad dimension,
// empty class, out-of-range index, undefined statistic, ...).
class InvalidInput : public Error {
public:
    using Error::Error;
};

// File is not in the expected format (wrong magic, unsupported version).
class FormatError : public Error {
public:
    using Error::Error;
};

// Text input failed to parse; carries the 1-based line number.
class ParseError : public FormatError {
public:
    ParseError(const std::string& msg, std::size_t line)
        : FormatError(msg + " (line " + std::to_string(line) + ")"), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

// Binary input ended early or is internally inconsistent; carries the byte
// offset at which the problem was detected.
class CorruptionError : public FormatError {
public:
    CorruptionError(const std::string& msg, std::uint64_t offset)
        : FormatError(msg + " (byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
    std::uint64_t offset() const { return offset_; }

private:
    std::uint64_t offset_;
};

// Data parsed fine but violates a semantic invariant (duplicate id,
// non-finite value).
class IntegrityError : public Error {
public:
    using Error::Error;
};

}  // namespace protojunk
