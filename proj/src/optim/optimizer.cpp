#include "pkt/optim/optimizer.hpp"

#include <cmath>

#include "pkt/core/errors.hpp"

namespace pkt::optim {

namespace {

void validate(std::span<const NamedArray> params, std::span<const Array> grads) {
    if (params.size() != grads.size()) {
        throw ShapeError("optimizer: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(grads.size()) + " gradients");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].value->same_shape(grads[i])) {
            throw ShapeError("optimizer: gradient " + shape_str(grads[i].shape()) + " does not match parameter " +
                             params[i].name + " " + shape_str(params[i].value->shape()));
        }
        if (!grads[i].all_finite()) throw NumericError("optimizer: non-finite gradient for " + params[i].name);
    }
}

}  // namespace

void sgd_step(std::span<const NamedArray> params, std::span<const Array> grads, double lr) {
    validate(params, grads);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Array& p = *params[i].value;
        const Array& g = grads[i];
        for (std::size_t j = 0; j < p.size(); ++j) p[j] -= lr * g[j];
    }
}

AdamW::AdamW(AdamWConfig config, std::span<const NamedArray> params) : config_(config) {
    for (const auto& p : params) {
        m_.push_back(Array::zeros_like(*p.value));
        v_.push_back(Array::zeros_like(*p.value));
    }
}

void AdamW::step(std::span<const NamedArray> params, std::span<const Array> grads, double lr) {
    validate(params, grads);
    if (params.size() != m_.size()) throw ShapeError("adamw: parameter list changed since construction");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!m_[i].same_shape(*params[i].value)) {
            throw ShapeError("adamw: moment shape mismatch for " + params[i].name);
        }
    }
    ++steps_;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    const double decay = 1.0 - lr * config_.weight_decay;
    for (std::size_t i = 0; i < params.size(); ++i) {
        Array& p = *params[i].value;
        const Array& g = grads[i];
        Array& m = m_[i];
        Array& v = v_[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            const double mhat = c1 > 0.0 ? m[j] / c1 : m[j];
            const double vhat = c2 > 0.0 ? v[j] / c2 : v[j];
            p[j] = p[j] * decay - lr * mhat / (std::sqrt(vhat) + config_.eps);
        }
    }
}

double LinearSchedule::rate(std::size_t step) const {
    if (step >= total) return 0.0;
    if (step < warmup) return base * static_cast<double>(step) / static_cast<double>(warmup);
    return base * static_cast<double>(total - step) / static_cast<double>(total - warmup);
}

double clip_grad_norm(std::span<Array> grads, double max_norm) {
    double sq = 0.0;
    for (const Array& g : grads)
        for (double v : g.data()) sq += v * v;
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double s = max_norm / norm;
        for (Array& g : grads)
            for (double& v : g.data()) v *= s;
    }
    return norm;
}

}  // namespace pkt::optim
