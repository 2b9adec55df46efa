#pragma once

#include <stdexcept>
#include <string>

namespace atv {

// Parameter estimation could not complete: tau outside the attainable range,
// the pseudo-likelihood optimizer failed to bracket a maximum, or too many
// bootstrap refits failed.
class EstimationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed or unreadable input data (CSV ingestion, unwritable output path).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid configuration of a test, search, or study.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace atv
