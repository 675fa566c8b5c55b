#pragma once

#include <stdexcept>
#include <string>

namespace pairdiff {

// Invalid argument values (ranges, counts, configuration).
struct ParameterError : std::invalid_argument {
    explicit ParameterError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Tensor/image shape disagreements, wrong arity of modality lists.
struct ShapeError : std::invalid_argument {
    explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Timestep or array index out of range.
struct IndexError : std::out_of_range {
    explicit IndexError(const std::string& msg) : std::out_of_range(msg) {}
};

// Bad or missing data (empty datasets, unreadable files, degenerate volumes).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numeric validation (non-finite values, non-binary masks).
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace pairdiff
