#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace flowfilt {

// Base for every error the library raises on purpose.
class FlowError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public FlowError {
public:
    using FlowError::FlowError;
};

class RangeError : public FlowError {
public:
    using FlowError::FlowError;
};

// Raised for non-SPD covariances and for parameterizations whose diffusion
// would not be positive semi-definite.
class AdmissibilityError : public FlowError {
public:
    using FlowError::FlowError;
};

class ParameterError : public FlowError {
public:
    using FlowError::FlowError;
};

class InsufficientSampleError : public FlowError {
public:
    using FlowError::FlowError;
};

class LinearSolveError : public FlowError {
public:
    using FlowError::FlowError;
};

class ParseError : public FlowError {
public:
    using FlowError::FlowError;
};

class DivergenceError : public FlowError {
public:
    DivergenceError(const std::string& what, std::size_t step, std::ptrdiff_t particle = -1)
        : FlowError(what), step_(step), particle_(particle) {}

    std::size_t step() const noexcept { return step_; }
    // -1 when the failure is not tied to a particle.
    std::ptrdiff_t particle() const noexcept { return particle_; }

private:
    std::size_t step_;
    std::ptrdiff_t particle_;
};

}  // namespace flowfilt
