#pragma once

#include <stdexcept>
#include <string>

namespace sparselab {

// Error taxonomy shared by every module. All derive from std::runtime_error so
// callers that only care about "something failed" can catch one type.

struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IndexError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct LengthError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MonotonicityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace sparselab
