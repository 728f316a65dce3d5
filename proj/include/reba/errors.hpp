#pragma once

#include <stdexcept>
#include <string>

namespace reba {

// Error taxonomy mirrored by the CLI exit codes:
//   ValidationError -> 2, MissingArtifactError -> 3, NumericalError -> 4.

class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class MissingArtifactError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace reba
