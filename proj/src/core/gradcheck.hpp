#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "tensor.hpp"

namespace hamlet {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
};

/// Central-difference check of reverse-mode gradients. f rebuilds its graph
/// from the current parameter values on every call; params are the leaves to
/// perturb. Relative error per element:
///   |analytic - fd| / (|analytic| + |fd| + 1e-12)
/// Throws if f evaluates non-finite.
GradCheckReport check_gradients(const std::function<Tensor()>& f,
                                const std::vector<std::pair<std::string, Tensor>>& params,
                                double eps);

}  // namespace hamlet
