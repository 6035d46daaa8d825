#pragma once

#include <stdexcept>
#include <string>

namespace fakegaze {

// Error taxonomy shared by the whole stack. The CLI maps each class to a
// fixed process exit code (see exit_code), so library code must throw the
// most specific class that applies:
//   ConfigError   - invalid user-supplied configuration or arguments
//   ContractError - an API precondition was violated by the caller
//   DataError     - dataset/image files missing, malformed, or inconsistent
//   NumericError  - numeric divergence (non-finite values) during computation
//   WeightsError  - weight files corrupt, truncated, or from another model
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class ContractError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class WeightsError : public Error {
public:
    using Error::Error;
};

inline int exit_code(const Error& e) {
    if (dynamic_cast<const DataError*>(&e)) return 3;
    if (dynamic_cast<const NumericError*>(&e)) return 4;
    if (dynamic_cast<const WeightsError*>(&e)) return 5;
    return 2;  // ConfigError, ContractError, and anything else user-facing
}

}  // namespace fakegaze
