#pragma once

#include <stdexcept>
#include <string>

namespace csbrnn {

// Root of every error the library throws. Subclasses map onto the CLI exit
// codes (see tools/csb_main.cpp).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class EmptyInputError : public Error {
public:
    using Error::Error;
};

class IndexError : public Error {
public:
    using Error::Error;
};

enum class FormatErrorKind { bad_magic, truncated, invariant, trailing_bytes, syntax };

const char* to_string(FormatErrorKind kind);

class FormatError : public Error {
public:
    FormatError(FormatErrorKind kind, const std::string& what)
        : Error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    FormatErrorKind kind() const noexcept { return kind_; }

private:
    FormatErrorKind kind_;
};

class TrainingError : public Error {
public:
    using Error::Error;
};

class InfeasibleTargetError : public Error {
public:
    using Error::Error;
};

class UnsupportedCellError : public Error {
public:
    using Error::Error;
};

class LinkageError : public Error {
public:
    using Error::Error;
};

// Raised by the simulator when a micro program does not cover the matrix it
// is run against.
class MismatchError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace csbrnn
