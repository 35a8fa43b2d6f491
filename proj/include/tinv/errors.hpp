#pragma once

#include <stdexcept>
#include <string>

namespace tinv {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

struct NumericError : Error {
    using Error::Error;
};

struct NonPositiveVolume : NumericError {
    int cell;
    int timestep;
    NonPositiveVolume(int cell_, int timestep_)
        : NumericError("non-positive cell volume: cell " + std::to_string(cell_) +
                       " at timestep " + std::to_string(timestep_)),
          cell(cell_), timestep(timestep_) {}
};

struct NonPositiveJacobian : NumericError {
    using NumericError::NumericError;
};

struct InvalidPoisson : ConfigError {
    using ConfigError::ConfigError;
};

struct GuardBandViolation : NumericError {
    using NumericError::NumericError;
};

struct AxisNotEven : ConfigError {
    using ConfigError::ConfigError;
};

struct ThresholdOrder : ConfigError {
    using ConfigError::ConfigError;
};

struct Diverged : NumericError {
    using NumericError::NumericError;
};

struct NonFiniteGradient : NumericError {
    using NumericError::NumericError;
};

struct EmptyCore : Error {
    using Error::Error;
};

struct EmptyRecurrence : Error {
    using Error::Error;
};

struct UnreachableVolume : Error {
    using Error::Error;
};

struct ChecksumMismatch : IoError {
    using IoError::IoError;
};

struct ShapeMismatch : IoError {
    using IoError::IoError;
};

struct UnsupportedSchema : IoError {
    using IoError::IoError;
};

} // namespace tinv
