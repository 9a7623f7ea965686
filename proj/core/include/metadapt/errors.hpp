#pragma once

#include <stdexcept>
#include <string>

namespace metadapt {

// Caller broke a documented precondition (shape mismatch, bad label, ...).
struct ContractViolation : std::logic_error {
    using std::logic_error::logic_error;
};

// Computation produced NaN/Inf where a finite value is required.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
    if (!cond) throw ContractViolation(what);
}

} // namespace metadapt
