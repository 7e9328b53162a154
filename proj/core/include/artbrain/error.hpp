#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace artbrain {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shapes, channel counts or hyperparameters that do not fit together.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A NaN or infinity appeared; `layer()` names where it was first seen.
class NumericError : public Error {
public:
    NumericError(std::string layer, const std::string &what)
        : Error(what + " (at " + layer + ")"), layer_(std::move(layer)) {}

    const std::string &layer() const noexcept { return layer_; }

private:
    std::string layer_;
};

class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Operation called on an object that is not ready for it (no weights, empty history).
class StateError : public Error {
public:
    using Error::Error;
};

/// Bad sample labels, empty splits and similar dataset problems.
class DataError : public Error {
public:
    using Error::Error;
};

/// Undecodable or unsupported image data.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Feature blocks that cannot be brought to a common spatial size.
class AlignmentError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Structured parse failure. The kind lets callers tell corrupt archives apart.
class ParseError : public Error {
public:
    enum class Kind {
        bad_magic,
        truncated,
        duplicate_name,
        bad_header,
        bad_filename,
        seed_range,
    };

    ParseError(Kind kind, const std::string &what) : Error(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

/// Filename convention violation; `segment()` is the offending part of the name.
class FilenameError : public ParseError {
public:
    FilenameError(Kind kind, std::string segment, const std::string &what)
        : ParseError(kind, what), segment_(std::move(segment)) {}

    const std::string &segment() const noexcept { return segment_; }

private:
    std::string segment_;
};

}  // namespace artbrain
