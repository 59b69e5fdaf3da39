#include "pkt/core/grad_check.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "pkt/core/errors.hpp"

namespace pkt {

namespace {

double evaluate(const LossBuilder& f, std::span<Array* const> params) {
    Graph g;
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (Array* p : params) vars.push_back(g.borrow(*p, false));
    return g.value(f(g, vars))[0];
}

}  // namespace

GradCheckResult grad_check(const LossBuilder& f, std::span<Array* const> params, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("grad_check: step must be positive");

    std::vector<Array> analytic;
    {
        Graph g;
        std::vector<Var> vars;
        for (Array* p : params) vars.push_back(g.borrow(*p, true));
        Var loss = f(g, vars);
        if (!std::isfinite(g.value(loss)[0])) throw NumericError("grad_check: loss is non-finite at the base point");
        g.backward(loss);
        for (Var v : vars) analytic.push_back(g.grad(v));
    }

    GradCheckResult result;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Array& p = *params[pi];
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double saved = p[i];
            p[i] = saved + h;
            const double plus = evaluate(f, params);
            p[i] = saved - h;
            const double minus = evaluate(f, params);
            p[i] = saved;
            result.evaluations += 2;
            if (!std::isfinite(plus) || !std::isfinite(minus)) {
                throw NumericError("grad_check: non-finite loss when perturbing parameter " + std::to_string(pi) +
                                   " element " + std::to_string(i));
            }
            const double numeric = (plus - minus) / (2.0 * h);
            const double a = analytic[pi][i];
            const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
            if (err > result.max_rel_error) {
                result.max_rel_error = err;
                result.worst_param = pi;
                result.worst_index = i;
            }
        }
    }
    return result;
}

}  // namespace pkt
