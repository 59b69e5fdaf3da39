#include "pkt/lm/beam_search.hpp"

namespace pkt::lm {

std::string beam_decode(const BackboneModel& model, const DeployedPrefix* prefix, std::span<const int> history,
                        std::size_t beam, std::size_t max_len) {
    Decoder dec(model, prefix);
    const std::size_t used = history.size() + (prefix ? prefix->length : 0);
    const std::size_t room = model.config().max_context > used ? model.config().max_context - used : 0;
    Hypothesis h = beam_search(dec, dec.start(history), SpecialTokens::kEou, beam, std::min(max_len, room));
    if (!h.tokens.empty() && h.tokens.back() == SpecialTokens::kEou) h.tokens.pop_back();
    return model.tokenizer().decode(h.tokens);
}

}  // namespace pkt::lm
