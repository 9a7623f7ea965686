#include "metadapt/gradcheck.hpp"

#include "metadapt/errors.hpp"

#include <algorithm>
#include <cmath>

namespace metadapt {

double check_gradients_fd(const LossWithGrad& loss, const ParamSet& params,
                          const Architecture& arch, double eps) {
    require(eps > 0.0, "check_gradients_fd: eps must be positive");

    const auto [value, ad] = loss(params);
    if (!std::isfinite(value)) throw NumericError("check_gradients_fd: non-finite loss");
    require(ad.size() == param_count(arch),
            "check_gradients_fd: gradient length does not match architecture");

    std::vector<double> theta = flatten(params);
    double worst = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double saved = theta[i];
        theta[i] = saved + eps;
        const double up = loss(unflatten(theta, arch)).first;
        theta[i] = saved - eps;
        const double down = loss(unflatten(theta, arch)).first;
        theta[i] = saved;
        if (!std::isfinite(up) || !std::isfinite(down))
            throw NumericError("check_gradients_fd: non-finite loss during sweep");
        const double fd = (up - down) / (2.0 * eps);
        const double err = std::abs(fd - ad[i]) / std::max(1e-8, std::abs(fd) + std::abs(ad[i]));
        worst = std::max(worst, err);
    }
    return worst;
}

} // namespace metadapt
