#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace pkt::lm {

/// Reserved ids, always the first entries of every vocabulary.
struct SpecialTokens {
    static constexpr int kUnk = 0;
    static constexpr int kBos = 1;
    static constexpr int kEou = 2;  // end of utterance
    static constexpr int kSpeaker1 = 3;
    static constexpr int kSpeaker2 = 4;
    static constexpr int kCount = 5;
};

/// Whitespace word-level tokenizer with an UNK fallback.
class Tokenizer {
   public:
    Tokenizer();
    /// `words` must start with the special tokens in their reserved order.
    explicit Tokenizer(std::vector<std::string> words);

    /// Vocabulary of every whitespace token in `texts`, ordered by descending
    /// frequency then lexicographically. max_size == 0 keeps every word.
    static Tokenizer build(std::span<const std::string> texts, std::size_t max_size = 0);

    std::vector<int> encode(std::string_view text) const;
    std::string decode(std::span<const int> ids) const;

    int id(std::string_view word) const;
    const std::string& word(int id) const;
    bool contains(std::string_view word) const { return index_.contains(std::string(word)); }
    std::size_t size() const { return words_.size(); }
    const std::vector<std::string>& words() const { return words_; }

    nlohmann::json to_json() const;
    static Tokenizer from_json(const nlohmann::json& j);

    bool operator==(const Tokenizer& other) const { return words_ == other.words_; }

   private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, int> index_;
};

std::vector<std::string> split_whitespace(std::string_view text);

}  // namespace pkt::lm
