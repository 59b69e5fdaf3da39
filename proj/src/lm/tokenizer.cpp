#include "pkt/lm/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "pkt/core/errors.hpp"

namespace pkt::lm {

namespace {

const std::vector<std::string>& special_words() {
    static const std::vector<std::string> kWords{"<unk>", "<bos>", "<eou>", "<s1>", "<s2>"};
    return kWords;
}

}  // namespace

std::vector<std::string> split_whitespace(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t j = i;
        while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        if (j > i) out.emplace_back(text.substr(i, j - i));
        i = j;
    }
    return out;
}

Tokenizer::Tokenizer() : Tokenizer(special_words()) {}

Tokenizer::Tokenizer(std::vector<std::string> words) : words_(std::move(words)) {
    const auto& specials = special_words();
    if (words_.size() < specials.size() || !std::equal(specials.begin(), specials.end(), words_.begin())) {
        throw DataError("tokenizer: vocabulary must begin with the reserved special tokens");
    }
    for (std::size_t i = 0; i < words_.size(); ++i) {
        if (!index_.emplace(words_[i], static_cast<int>(i)).second) {
            throw DataError("tokenizer: duplicate vocabulary entry '" + words_[i] + "'");
        }
    }
}

Tokenizer Tokenizer::build(std::span<const std::string> texts, std::size_t max_size) {
    std::map<std::string, std::size_t> counts;
    for (const auto& t : texts)
        for (auto& w : split_whitespace(t)) ++counts[w];
    for (const auto& s : special_words()) counts.erase(s);
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> words = special_words();
    for (auto& [w, c] : ranked) {
        if (max_size && words.size() >= max_size) break;
        words.push_back(w);
    }
    return Tokenizer(std::move(words));
}

std::vector<int> Tokenizer::encode(std::string_view text) const {
    std::vector<int> ids;
    for (const auto& w : split_whitespace(text)) ids.push_back(id(w));
    return ids;
}

std::string Tokenizer::decode(std::span<const int> ids) const {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) out.push_back(' ');
        out += word(ids[i]);
    }
    return out;
}

int Tokenizer::id(std::string_view w) const {
    auto it = index_.find(std::string(w));
    return it == index_.end() ? SpecialTokens::kUnk : it->second;
}

const std::string& Tokenizer::word(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= words_.size()) {
        throw DataError("tokenizer: id " + std::to_string(id) + " outside vocabulary of " +
                        std::to_string(words_.size()));
    }
    return words_[static_cast<std::size_t>(id)];
}

nlohmann::json Tokenizer::to_json() const { return nlohmann::json{{"tokens", words_}}; }

Tokenizer Tokenizer::from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("tokens") || !j["tokens"].is_array()) {
        throw DataError("tokenizer: vocabulary JSON needs a \"tokens\" array");
    }
    return Tokenizer(j["tokens"].get<std::vector<std::string>>());
}

}  // namespace pkt::lm
