#pragma once

#include <stdexcept>
#include <string>

namespace gaets {

// Error categories map one-to-one onto CLI exit codes (see tools/gaets.cpp).

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Schema mismatch while reading a CSV (missing column, duplicate name).
class SchemaError : public DataError {
public:
    using DataError::DataError;
};

/// Unparseable cell. Carries the 1-based file line number.
class ParseError : public DataError {
public:
    ParseError(const std::string& what, long line) : DataError(what), line_(line) {}
    long line() const { return line_; }

private:
    long line_;
};

class EmptyInputError : public DataError {
public:
    using DataError::DataError;
};

/// A variable with zero variance cannot be z-scored.
class DegenerateVariableError : public DataError {
public:
    DegenerateVariableError(const std::string& what, std::string variable)
        : DataError(what), variable_(std::move(variable)) {}
    const std::string& variable() const { return variable_; }

private:
    std::string variable_;
};

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Non-finite value encountered. `term` names the gate or loss term.
class NumericError : public std::runtime_error {
public:
    NumericError(const std::string& what, std::string term)
        : std::runtime_error(what), term_(std::move(term)) {}
    const std::string& term() const { return term_; }

private:
    std::string term_;
};

}  // namespace gaets
