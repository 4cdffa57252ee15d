#pragma once

#include <stdexcept>
#include <string>

namespace tag {

// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// A vector with (near-)zero norm was used where a direction is required.
struct DegenerateState : Error {
    explicit DegenerateState(const std::string& msg) : Error(msg) {}
};

// Operands have incompatible dimensions.
struct DimensionError : Error {
    explicit DimensionError(const std::string& msg) : Error(msg) {}
};

// Invalid user-supplied configuration (file contents, parameter ranges).
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Inconsistent or invalid noise-schedule data.
struct ScheduleError : Error {
    explicit ScheduleError(const std::string& msg) : Error(msg) {}
};

// Index outside the valid range of a schedule or container.
struct IndexError : Error {
    explicit IndexError(const std::string& msg) : Error(msg) {}
};

// A noise level at which the requested quantity is undefined (sigma = 0 or
// alpha_bar = 0).
struct DegenerateNoiseLevel : Error {
    explicit DegenerateNoiseLevel(const std::string& msg) : Error(msg) {}
};

// A batch operation received fewer samples than it needs.
struct EmptyBatch : Error {
    explicit EmptyBatch(const std::string& msg) : Error(msg) {}
};

// Failure inside the sampling loop, annotated with sample/step context.
struct SamplingError : Error {
    explicit SamplingError(const std::string& msg) : Error(msg) {}
};

}  // namespace tag
