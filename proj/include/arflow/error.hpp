#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace arflow {

// Error categories map 1:1 onto CLI exit codes (config=2, format=3, numeric=4).
enum class ErrorKind {
    dimension,   // shape/length mismatch between operands
    contract,    // precondition violated by the caller
    config,      // bad configuration value or unknown key
    format,      // malformed file on disk
    numeric,     // NaN/Inf detected or singular request (e.g. score at t=0)
    io,          // filesystem failure
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string msg)
        : std::runtime_error(std::move(msg)), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
    throw Error(kind, msg);
}

} // namespace arflow

#define ARF_CHECK(cond, kind, msg)                        \
    do {                                                  \
        if (!(cond)) {                                    \
            std::ostringstream arf_oss_;                  \
            arf_oss_ << msg;                              \
            ::arflow::fail((kind), arf_oss_.str());       \
        }                                                 \
    } while (0)
