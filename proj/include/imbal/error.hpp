#pragma once

#include <stdexcept>
#include <string>

namespace imbal {

// Error categories map one-to-one onto the CLI exit codes:
// ConfigError -> 1, DataError -> 2, NumericalError -> 3.

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace imbal
