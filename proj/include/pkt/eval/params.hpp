#pragma once

#include <cstdint>

namespace pkt::eval {

struct ParamAccounting {
    std::uint64_t deployed = 0;  // 2 * n_layers * L * d_model
    std::uint64_t backbone = 0;
    double ratio = 0.0;  // deployed / backbone

    /// Floats stored for N personalized prefixes plus the source prefix.
    std::uint64_t store_total(std::uint64_t n_personas) const { return (n_personas + 1) * deployed; }
};

/// Throws std::invalid_argument for a zero backbone count.
ParamAccounting param_accounting(std::uint64_t n_layers, std::uint64_t d_model, std::uint64_t prefix_length,
                                 std::uint64_t backbone_params);

}  // namespace pkt::eval
