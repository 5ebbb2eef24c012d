#pragma once

#include <stdexcept>
#include <string>

namespace eegmtl {

/// Geometry or shape misuse: mismatched extents, invalid axes, inadmissible
/// kernel/stride/padding combinations. Messages always name the shapes involved.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed, truncated, or otherwise unreadable files. Each failure mode has
/// a distinct kind so callers (and exit codes) can tell them apart.
class IoError : public std::runtime_error {
public:
    enum class Kind {
        open_failed,
        bad_magic,
        bad_version,
        truncated,
        count_mismatch,
        name_mismatch,
        shape_mismatch,
        write_failed,
    };

    IoError(Kind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

/// Non-finite values where finite ones are required (diverged loss, bad gradient).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace eegmtl
