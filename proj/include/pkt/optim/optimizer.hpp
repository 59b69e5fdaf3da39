#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pkt/core/array.hpp"

namespace pkt::optim {

/// p <- p - lr * g for every parameter. All gradients are validated (shape,
/// finiteness) before anything is written; failures name the parameter.
void sgd_step(std::span<const NamedArray> params, std::span<const Array> grads, double lr);

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

/// AdamW with decoupled weight decay: p <- p (1 - lr wd) - lr mhat / (sqrt(vhat) + eps).
class AdamW {
   public:
    AdamW(AdamWConfig config, std::span<const NamedArray> params);

    void step(std::span<const NamedArray> params, std::span<const Array> grads, double lr);

    std::size_t step_count() const { return steps_; }
    const AdamWConfig& config() const { return config_; }
    const std::vector<Array>& first_moments() const { return m_; }
    const std::vector<Array>& second_moments() const { return v_; }

   private:
    AdamWConfig config_;
    std::size_t steps_ = 0;
    std::vector<Array> m_, v_;
};

/// Linear warmup 0 -> base over `warmup` steps, then linear decay to 0 at `total`.
struct LinearSchedule {
    double base = 0.0;
    std::size_t total = 0;
    std::size_t warmup = 0;

    /// Steps past `total` clamp to 0.
    double rate(std::size_t step) const;
};

/// Scales gradients in place so their global L2 norm is at most max_norm
/// (no-op when max_norm <= 0). Returns the norm before clipping.
double clip_grad_norm(std::span<Array> grads, double max_norm);

}  // namespace pkt::optim
