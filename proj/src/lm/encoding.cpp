#include "pkt/lm/encoding.hpp"

#include <algorithm>

#include "pkt/core/errors.hpp"

namespace pkt::lm {

std::size_t TokenSeq::target_count() const {
    return static_cast<std::size_t>(std::count_if(targets.begin(), targets.end(), [](int t) { return t >= 0; }));
}

namespace {

int speaker_token(int speaker) { return speaker == 2 ? SpecialTokens::kSpeaker2 : SpecialTokens::kSpeaker1; }

// Encodes turns [first, last) with <bos>; marks targets for turns where mark(i) holds.
template <class Mark>
TokenSeq encode_turns(const Tokenizer& tok, const data::Dialogue& d, std::size_t first, std::size_t last, Mark mark) {
    TokenSeq s;
    s.ids.push_back(SpecialTokens::kBos);
    s.targets.push_back(-1);
    for (std::size_t i = first; i < last; ++i) {
        s.ids.push_back(speaker_token(d[i].speaker));
        s.targets.push_back(-1);
        std::vector<int> words = tok.encode(d[i].text);
        words.push_back(SpecialTokens::kEou);
        const bool scored = mark(i);
        for (int w : words) {
            if (scored) s.targets.back() = w;  // the previous position predicts w
            s.ids.push_back(w);
            s.targets.push_back(-1);
        }
    }
    return s;
}

std::size_t turn_length(const Tokenizer& tok, const data::Turn& t) { return tok.encode(t.text).size() + 2; }

}  // namespace

TokenSeq encode_dialogue(const Tokenizer& tok, const data::Dialogue& dialogue, std::size_t max_tokens,
                         bool score_all) {
    std::size_t first = 0;
    std::size_t total = 1;
    for (const auto& t : dialogue) total += turn_length(tok, t);
    while (total > max_tokens && first < dialogue.size()) total -= turn_length(tok, dialogue[first++]);
    return encode_turns(tok, dialogue, first, dialogue.size(), [&](std::size_t i) { return score_all || dialogue[i].speaker == 2; });
}

TokenSeq encode_response(const Tokenizer& tok, const data::Dialogue& dialogue, std::size_t turn,
                         std::size_t max_tokens) {
    if (turn >= dialogue.size()) throw DataError("encode_response: turn index out of range");
    if (dialogue[turn].speaker != 2) throw DataError("encode_response: turn " + std::to_string(turn) + " is not a speaker-2 turn");
    if (tok.encode(dialogue[turn].text).empty()) throw DataError("encode_response: empty target response");
    std::size_t first = 0;
    std::size_t total = 1;
    for (std::size_t i = 0; i <= turn; ++i) total += turn_length(tok, dialogue[i]);
    while (total > max_tokens && first < turn) total -= turn_length(tok, dialogue[first++]);
    if (total > max_tokens) throw DataError("encode_response: response alone exceeds the context");
    return encode_turns(tok, dialogue, first, turn + 1, [&](std::size_t i) { return i == turn; });
}

std::vector<int> encode_history(const Tokenizer& tok, std::span<const data::Turn> history, std::size_t max_tokens,
                                std::size_t reserve) {
    const std::size_t budget = max_tokens > reserve ? max_tokens - reserve : 0;
    std::size_t first = 0;
    std::size_t total = 2;  // <bos> ... <s2>
    for (const auto& t : history) total += turn_length(tok, t);
    while (total > budget && first < history.size()) total -= turn_length(tok, history[first++]);
    data::Dialogue d(history.begin() + static_cast<std::ptrdiff_t>(first), history.end());
    TokenSeq s = encode_turns(tok, d, 0, d.size(), [](std::size_t) { return false; });
    s.ids.push_back(SpecialTokens::kSpeaker2);
    return s.ids;
}

TokenSeq encode_grounded(const Tokenizer& tok, std::span<const std::string> facts, const data::Dialogue& dialogue,
                         std::size_t max_tokens) {
    std::vector<int> head;
    for (const auto& f : facts) {
        for (int w : tok.encode(f)) head.push_back(w);
        head.push_back(SpecialTokens::kEou);
    }
    if (head.size() + 1 >= max_tokens)
        throw DataError("encode_grounded: facts take " + std::to_string(head.size() + 1) + " tokens, context is " +
                        std::to_string(max_tokens));
    TokenSeq s = encode_dialogue(tok, dialogue, max_tokens - head.size(), true);
    s.ids.insert(s.ids.begin() + 1, head.begin(), head.end());
    s.targets.insert(s.targets.begin() + 1, head.size(), -1);
    for (std::size_t i = 0; i + 1 < s.ids.size(); ++i) s.targets[i] = s.ids[i + 1];
    s.targets.back() = -1;
    return s;
}

}  // namespace pkt::lm
