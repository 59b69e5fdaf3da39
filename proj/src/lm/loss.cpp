#include "pkt/lm/loss.hpp"

#include <limits>

#include "pkt/core/errors.hpp"

namespace pkt::lm {

Var sequence_loss(Graph& g, const BackboneModel& model, const BoundBackbone& w, const TokenSeq& seq,
                  const PrefixKV* prefix) {
    if (seq.ids.size() != seq.targets.size()) throw ShapeError("sequence ids and targets differ in length");
    if (seq.target_count() == 0) throw DataError("sequence has no target tokens");
    const Var logits = forward_logits(g, model, w, seq.ids, prefix);
    return g.cross_entropy(logits, seq.targets);
}

double lm_loss(const BackboneModel& model, const TokenSeq& seq, const DeployedPrefix* prefix) {
    Graph g;
    const BoundBackbone w = bind_backbone(g, model, false);
    PrefixKV kv;
    if (prefix) kv = bind_deployed(g, *prefix);
    const Var loss = sequence_loss(g, model, w, seq, prefix ? &kv : nullptr);
    return g.value(loss)[0];
}

double corpus_loss(const BackboneModel& model, std::span<const TokenSeq> seqs, const DeployedPrefix* prefix) {
    double total = 0.0;
    std::size_t tokens = 0;
    for (const TokenSeq& s : seqs) {
        const std::size_t n = s.target_count();
        if (n == 0) continue;
        total += lm_loss(model, s, prefix) * static_cast<double>(n);
        tokens += n;
    }
    return tokens ? total / static_cast<double>(tokens) : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace pkt::lm
