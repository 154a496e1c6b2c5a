#pragma once

#include <stdexcept>
#include <string>

namespace migt {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Incompatible tensor extents.
struct DimensionError : Error {
    using Error::Error;
};

/// Invalid hyperparameter or operation argument (p >= 1, even kernel, ...).
struct ParameterError : Error {
    using Error::Error;
};

/// Operation invoked in the wrong lifecycle state (e.g. backward twice).
struct StateError : Error {
    using Error::Error;
};

/// Violated call contract (non-scalar loss, missing rng in train mode, ...).
struct ContractError : Error {
    using Error::Error;
};

/// Malformed file content: bad magic, truncated payload, shape disagreement.
struct FormatError : Error {
    using Error::Error;
};

/// Invalid run, model, or cohort configuration.
struct ConfigError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace migt
