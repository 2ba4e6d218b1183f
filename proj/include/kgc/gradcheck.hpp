#pragma once

#include <functional>
#include <string>

#include "kgc/autodiff.hpp"

namespace kgc::ad {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_parameter;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    std::size_t components = 0;
};

/// Builds a scalar loss on a fresh tape from the current parameter values.
using LossExpression = std::function<Var<double>(Tape<double>&)>;

/// Central-difference check of every component of every parameter in `params`.
/// Relative error per component is |a - n| / max(|a|, |n|, 1e-8).
/// `eps` must lie in [1e-7, 1e-4]. Parameters are restored on return.
GradCheckResult check_gradients(const LossExpression& expr, ParameterStore<double>& params, double eps = 1e-5);

}  // namespace kgc::ad
