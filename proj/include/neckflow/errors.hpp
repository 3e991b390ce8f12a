#pragma once

#include <stdexcept>
#include <string>

namespace neckflow {

// Exit-code contract for the CLI:
//   0 success, 2 usage, 3 I/O, 4 numerical/contraction failure,
//   5 internal consistency (formula vs oracle mismatch).
struct error : std::runtime_error {
    explicit error(const std::string& msg) : std::runtime_error(msg) {}
    virtual int exit_code() const { return 4; }
};

struct usage_error : error {
    explicit usage_error(const std::string& msg) : error(msg) {}
    int exit_code() const override { return 2; }
};

struct io_error : error {
    explicit io_error(const std::string& msg) : error(msg) {}
    int exit_code() const override { return 3; }
};

// Bad inputs to library operations (preconditions, domains, dimensions).
struct domain_error : error {
    explicit domain_error(const std::string& msg) : error(msg) {}
    int exit_code() const override { return 2; }
};

struct dimension_error : domain_error {
    explicit dimension_error(const std::string& msg) : domain_error(msg) {}
};

// Integration blowup, contraction failure, series divergence.
struct numerical_error : error {
    explicit numerical_error(const std::string& msg) : error(msg) {}
    int exit_code() const override { return 4; }
};

// A closed-form formula disagreed with its numerical oracle.  Never
// patched silently; surfaced to the caller.
struct consistency_error : error {
    explicit consistency_error(const std::string& msg) : error(msg) {}
    int exit_code() const override { return 5; }
};

}  // namespace neckflow
