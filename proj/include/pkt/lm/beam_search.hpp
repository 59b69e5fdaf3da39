#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "pkt/lm/decoder.hpp"

namespace pkt::lm {

struct Hypothesis {
    std::vector<int> tokens;  // generated tokens, including the end token when finished
    double log_prob = 0.0;
    double score() const { return tokens.empty() ? log_prob : log_prob / static_cast<double>(tokens.size()); }
};

/// Beam search over any backend exposing
///   State advance(const State&, int token) const;
///   const std::vector<double>& log_probs(const State&) const;
///
/// Hypotheses are ranked by cumulative log-probability divided by their
/// token count. Each step keeps the `beam` best non-finished extensions;
/// extensions ending in `end_token` move to the finished pool. Search stops
/// once `beam` hypotheses have finished, none remain alive, or `max_len`
/// tokens were generated (survivors then count as finished). Ties break
/// toward the lower parent index, then the lower token id.
template <class Backend>
Hypothesis beam_search(const Backend& backend, typename Backend::State start, int end_token, std::size_t beam,
                       std::size_t max_len) {
    if (beam == 0) throw std::invalid_argument("beam_search: beam must be >= 1");
    struct Alive {
        typename Backend::State state;
        Hypothesis hyp;
    };
    struct Candidate {
        std::size_t parent;
        int token;
        double log_prob;
        double score;
    };
    std::vector<Alive> alive;
    alive.push_back({std::move(start), {}});
    std::vector<Hypothesis> finished;

    for (std::size_t step = 0; step < max_len && !alive.empty() && finished.size() < beam; ++step) {
        std::vector<Candidate> cands;
        for (std::size_t pi = 0; pi < alive.size(); ++pi) {
            const auto& lp = backend.log_probs(alive[pi].state);
            std::vector<int> order(lp.size());
            std::iota(order.begin(), order.end(), 0);
            const std::size_t top = std::min(beam, order.size());
            std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top), order.end(),
                              [&](int a, int b) { return lp[a] > lp[b] || (lp[a] == lp[b] && a < b); });
            for (std::size_t r = 0; r < top; ++r) {
                const int tok = order[r];
                if (!std::isfinite(lp[tok])) continue;
                const double total = alive[pi].hyp.log_prob + lp[tok];
                cands.push_back({pi, tok, total, total / static_cast<double>(alive[pi].hyp.tokens.size() + 1)});
            }
        }
        std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
            if (a.score != b.score) return a.score > b.score;
            if (a.parent != b.parent) return a.parent < b.parent;
            return a.token < b.token;
        });
        std::vector<Alive> next;
        for (const Candidate& c : cands) {
            if (next.size() >= beam) break;
            Hypothesis h = alive[c.parent].hyp;
            h.tokens.push_back(c.token);
            h.log_prob = c.log_prob;
            if (c.token == end_token) {
                finished.push_back(std::move(h));
            } else {
                next.push_back({backend.advance(alive[c.parent].state, c.token), std::move(h)});
            }
        }
        alive = std::move(next);
    }
    for (auto& a : alive) finished.push_back(std::move(a.hyp));
    if (finished.empty()) return {};
    std::size_t best = 0;
    for (std::size_t i = 1; i < finished.size(); ++i)
        if (finished[i].score() > finished[best].score()) best = i;
    return finished[best];
}

/// Argmax decoding (lowest id on ties) until `end_token` or max_len tokens.
template <class Backend>
Hypothesis greedy_decode(const Backend& backend, typename Backend::State start, int end_token, std::size_t max_len) {
    Hypothesis h;
    auto state = std::move(start);
    for (std::size_t step = 0; step < max_len; ++step) {
        const auto& lp = backend.log_probs(state);
        const int tok = static_cast<int>(std::max_element(lp.begin(), lp.end()) - lp.begin());
        h.tokens.push_back(tok);
        h.log_prob += lp[tok];
        if (tok == end_token) break;
        state = backend.advance(state, tok);
    }
    return h;
}

/// Decodes a response after `history` (which should end with the speaker-2
/// marker) and returns its text without the end-of-utterance token.
std::string beam_decode(const BackboneModel& model, const DeployedPrefix* prefix, std::span<const int> history,
                        std::size_t beam, std::size_t max_len);

}  // namespace pkt::lm
