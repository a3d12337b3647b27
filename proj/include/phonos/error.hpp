#pragma once

#include <stdexcept>
#include <string>

namespace phonos {

// Error classes map to distinct process exit codes in the CLI.
enum class Errc {
    config  = 2,  // bad configuration, flags, or file formats
    data    = 3,  // malformed or inconsistent input data
    numeric = 4,  // non-finite values, infeasible losses
    partial = 5,  // some manifest entries failed, others succeeded
};

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    Errc code() const { return code_; }
    int exit_code() const { return static_cast<int>(code_); }

private:
    Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& what) {
    throw Error(code, what);
}

} // namespace phonos
