#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pkt/data/dialogue.hpp"
#include "pkt/lm/tokenizer.hpp"

namespace pkt::lm {

/// Token ids plus per-position next-token targets (-1 = not scored).
///
/// Dialogue layout: <bos> <s1> u1 <eou> <s2> u2 <eou> ... Response targets
/// cover the response words and its closing <eou>.
struct TokenSeq {
    std::vector<int> ids;
    std::vector<int> targets;

    std::size_t target_count() const;
};

/// Every speaker-2 turn is a target (every turn with score_all, for
/// pretraining). Whole leading turns are dropped until the sequence fits in
/// max_tokens.
TokenSeq encode_dialogue(const Tokenizer& tok, const data::Dialogue& dialogue, std::size_t max_tokens,
                         bool score_all = false);

/// History turns [0, turn) and the speaker-2 response at `turn` as the only target.
TokenSeq encode_response(const Tokenizer& tok, const data::Dialogue& dialogue, std::size_t turn,
                         std::size_t max_tokens);

/// History followed by the speaker-2 marker, ready for decoding. Leaves at
/// least `reserve` free positions out of max_tokens by dropping leading turns.
std::vector<int> encode_history(const Tokenizer& tok, std::span<const data::Turn> history, std::size_t max_tokens,
                                std::size_t reserve);

/// Pretraining layout: <bos> f1 <eou> f2 <eou> ... followed by the dialogue
/// turns, every position scored. Leading turns are dropped to fit max_tokens;
/// throws DataError if the facts alone do not fit.
TokenSeq encode_grounded(const Tokenizer& tok, std::span<const std::string> facts, const data::Dialogue& dialogue,
                         std::size_t max_tokens);

}  // namespace pkt::lm
