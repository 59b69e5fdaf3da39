#pragma once

#include <string>
#include <vector>

#include "pkt/lm/model.hpp"

namespace pkt::test {

inline lm::Tokenizer tiny_tokenizer() {
    std::vector<std::string> texts = {"hello there how are you", "i like red and blue", "my dog is nice"};
    return lm::Tokenizer::build(texts);
}

inline lm::BackboneConfig tiny_config(std::uint32_t vocab) {
    lm::BackboneConfig c;
    c.vocab_size = vocab;
    c.d_model = 16;
    c.n_layers = 2;
    c.n_heads = 2;
    c.d_ffn = 32;
    c.max_context = 32;
    return c;
}

inline lm::BackboneModel tiny_model(std::uint64_t seed = 7) {
    auto tok = tiny_tokenizer();
    const auto cfg = tiny_config(static_cast<std::uint32_t>(tok.size()));
    auto m = lm::BackboneModel::initialize(cfg, tok, seed);
    // Larger weights than the default init so outputs depend visibly on context.
    for (auto& p : m.parameters())
        for (double& v : p.value->data()) v *= 8.0;
    return m;
}

}  // namespace pkt::test
