#pragma once

#include <stdexcept>
#include <string>

namespace sparsepaint {

// Malformed or unsupported file content; the message names the offending field.
struct format_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Incompatible sizes or shapes.
struct dimension_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Values outside the documented input domain (range violations, bad configs).
struct domain_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Iterative solver failed to reach its tolerance within the iteration cap.
struct convergence_error : std::runtime_error {
    convergence_error(const std::string& msg, double residual)
        : std::runtime_error(msg), final_residual(residual) {}
    double final_residual;
};

} // namespace sparsepaint
