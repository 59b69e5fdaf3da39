#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "pkt/core/graph.hpp"

namespace pkt {

/// Builds a scalar loss on `g` from leaves bound to the checked parameters.
using LossBuilder = std::function<Var(Graph& g, std::span<const Var> params)>;

struct GradCheckResult {
    double max_rel_error = 0.0;  // max |analytic - numeric| / max(1, |analytic|)
    std::size_t worst_param = 0;
    std::size_t worst_index = 0;
    std::size_t evaluations = 0;
};

/// Compares reverse-mode gradients against central differences with step h.
/// Parameters are perturbed in place and restored. Throws NumericError if the
/// loss is non-finite at any perturbed point, naming the parameter element.
GradCheckResult grad_check(const LossBuilder& f, std::span<Array* const> params, double h);

}  // namespace pkt
