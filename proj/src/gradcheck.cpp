#include "kgc/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace kgc::ad {

namespace {

double evaluate(const LossExpression& expr) {
    Tape<double> tape;
    Var<double> loss = expr(tape);
    if (loss.value().size() != 1) throw ContractError("check_gradients: expression is not scalar");
    const double v = loss.value()[0];
    if (!std::isfinite(v)) throw NumericError("check_gradients: non-finite loss");
    return v;
}

}  // namespace

GradCheckResult check_gradients(const LossExpression& expr, ParameterStore<double>& params, double eps) {
    if (!(eps >= 1e-7 && eps <= 1e-4))
        throw ContractError("check_gradients: eps " + std::to_string(eps) + " outside [1e-7, 1e-4]");

    Gradients<double> analytic;
    {
        Tape<double> tape;
        Var<double> loss = expr(tape);
        analytic = tape.backward(loss, params);
    }

    GradCheckResult result;
    for (const auto& name : params.names()) {
        Tensor<double>& p = params.get(name);
        const Tensor<double>& g = analytic.at(name);
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double saved = p[i];
            p[i] = saved + eps;
            const double up = evaluate(expr);
            p[i] = saved - eps;
            const double down = evaluate(expr);
            p[i] = saved;

            const double numeric = (up - down) / (2.0 * eps);
            const double a = g[i];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            const double rel = std::abs(a - numeric) / denom;
            ++result.components;
            if (result.worst_parameter.empty() || rel > result.max_rel_error) {
                result.max_rel_error = rel;
                result.worst_parameter = name;
                result.worst_index = i;
                result.analytic = a;
                result.numeric = numeric;
            }
        }
    }
    return result;
}

}  // namespace kgc::ad
