#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ocsvm_cpd {

/// Malformed or inconsistent input data (bad rows, gaps in cycles, unseen conditions).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Text that does not follow the expected format. Carries the 1-based line number.
class ParseError : public DataError {
public:
    ParseError(std::size_t line, const std::string& what)
        : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// A serialized artifact that does not match its schema.
class SchemaError : public DataError {
public:
    using DataError::DataError;
};

/// Every candidate of a calibration run was infeasible.
class CalibrationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace ocsvm_cpd
