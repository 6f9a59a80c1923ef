#pragma once

#include <stdexcept>
#include <string>

namespace texsyn {

// Input-validation failures (bad shapes, bad files, bad flags). The CLI maps
// every subclass of ValidationError to exit code 1.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class ParseError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class UsageError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Non-finite values or other failures discovered while computing.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace texsyn
