#pragma once

#include "metadapt/model.hpp"

#include <functional>
#include <utility>
#include <vector>

namespace metadapt {

// Loss callback: value plus tape gradient in flatten order. The checker only
// uses the value during the finite-difference sweep.
using LossWithGrad = std::function<std::pair<double, std::vector<double>>(const ParamSet&)>;

// Central differences (L(t+e) - L(t-e)) / 2e against the tape adjoints.
// Returns max over coordinates of |fd - ad| / max(1e-8, |fd| + |ad|).
// The loss must be deterministic; a non-finite loss raises NumericError.
// Note grad_reverse is not a true derivative: run this on unreversed graphs.
double check_gradients_fd(const LossWithGrad& loss, const ParamSet& params,
                          const Architecture& arch, double eps);

} // namespace metadapt
