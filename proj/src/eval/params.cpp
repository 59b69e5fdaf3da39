#include "pkt/eval/params.hpp"

#include <stdexcept>

namespace pkt::eval {

ParamAccounting param_accounting(std::uint64_t n_layers, std::uint64_t d_model, std::uint64_t prefix_length,
                                 std::uint64_t backbone_params) {
    if (backbone_params == 0) throw std::invalid_argument("backbone parameter count must be positive");
    ParamAccounting a;
    a.deployed = 2 * n_layers * prefix_length * d_model;
    a.backbone = backbone_params;
    a.ratio = static_cast<double>(a.deployed) / static_cast<double>(a.backbone);
    return a;
}

}  // namespace pkt::eval
