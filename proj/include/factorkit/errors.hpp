#pragma once

#include <stdexcept>
#include <string>

namespace factorkit {

// Invalid user input: malformed files, shape mismatches, violated
// preconditions. The command line tool maps this to exit code 2.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace factorkit
