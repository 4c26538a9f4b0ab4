#pragma once

#include <functional>
#include <stdexcept>
#include <string>

namespace svfd {

/// Failure categories. They map one-to-one onto the C API status codes and
/// the CLI exit codes.
enum class ErrorKind {
    Validation = 1,
    Numeric = 2,
    Io = 3,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] void throw_validation(const std::string& msg);
[[noreturn]] void throw_numeric(const std::string& msg);
[[noreturn]] void throw_io(const std::string& msg);

// Warnings go through a replaceable sink (stderr by default).
using WarningSink = std::function<void(const std::string&)>;
void set_warning_sink(WarningSink sink);
void warn(const std::string& msg);

}  // namespace svfd
