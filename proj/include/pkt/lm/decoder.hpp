#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pkt/lm/model.hpp"

namespace pkt::lm {

/// Incremental (KV-cached) inference over a frozen backbone and an optional
/// deployed prefix. Holds references; the model and prefix must outlive it.
class Decoder {
   public:
    struct State {
        std::vector<std::vector<double>> keys, values;  // per layer, rows x d
        std::size_t rows = 0;                           // prefix + consumed tokens
        std::size_t position = 0;                       // consumed tokens
        std::vector<double> log_probs;                  // next-token log-probabilities
    };

    Decoder(const BackboneModel& model, const DeployedPrefix* prefix);

    /// Consumes a non-empty history and returns the state predicting the next token.
    State start(std::span<const int> history) const;
    State advance(const State& s, int token) const;
    const std::vector<double>& log_probs(const State& s) const { return s.log_probs; }

   private:
    void step(State& s, int token, bool want_logits) const;

    const BackboneModel& model_;
    const DeployedPrefix* prefix_;
};

}  // namespace pkt::lm
