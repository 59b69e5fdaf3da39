#include "pkt/pipeline/backbone.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

namespace pkt::pipeline {

std::vector<std::string> corpus_texts(std::span<const data::Persona> personas) {
    std::vector<std::string> texts;
    for (const auto& p : personas) {
        texts.insert(texts.end(), p.description.begin(), p.description.end());
        for (const auto& d : p.dialogues)
            for (const auto& t : d) texts.push_back(t.text);
    }
    return texts;
}

std::vector<lm::TokenSeq> encode_pretraining(const lm::Tokenizer& tok, std::span<const data::Persona> personas,
                                             std::size_t max_tokens) {
    std::vector<lm::TokenSeq> out;
    for (const auto& p : personas) {
        for (const auto& d : p.dialogues) {
            out.push_back(p.description.empty() ? lm::encode_dialogue(tok, d, max_tokens, true)
                                                : lm::encode_grounded(tok, p.description, d, max_tokens));
        }
    }
    return out;
}

namespace {

std::size_t facts_end(const lm::TokenSeq& s) {
    const auto it = std::find(s.ids.begin(), s.ids.end(), lm::SpecialTokens::kSpeaker1);
    return static_cast<std::size_t>(it - s.ids.begin());
}

std::unordered_set<int> fact_words(const lm::TokenSeq& s) {
    std::unordered_set<int> words;
    for (std::size_t i = 1; i < facts_end(s); ++i)
        if (s.ids[i] >= lm::SpecialTokens::kCount) words.insert(s.ids[i]);
    return words;
}

}  // namespace

std::vector<lm::TokenSeq> grounding_copies(std::span<const lm::TokenSeq> seqs, double max_df) {
    std::vector<std::unordered_set<int>> words(seqs.size());
    std::unordered_map<int, std::size_t> df;
    std::size_t blocks = 0;
    for (std::size_t k = 0; k < seqs.size(); ++k) {
        if (facts_end(seqs[k]) <= 1 || facts_end(seqs[k]) == seqs[k].ids.size()) continue;
        words[k] = fact_words(seqs[k]);
        for (int w : words[k]) ++df[w];
        ++blocks;
    }
    std::vector<lm::TokenSeq> out;
    for (std::size_t k = 0; k < seqs.size(); ++k) {
        if (words[k].empty()) continue;
        lm::TokenSeq c = seqs[k];
        const std::size_t start = facts_end(c);
        bool any = false;
        for (std::size_t i = 0; i < c.targets.size(); ++i) {
            const int t = c.targets[i];
            const bool keep = i >= start && t >= 0 && words[k].count(t) &&
                              static_cast<double>(df[t]) < max_df * static_cast<double>(blocks);
            c.targets[i] = keep ? t : -1;
            any = any || keep;
        }
        if (any) out.push_back(std::move(c));
    }
    return out;
}

void holdout(std::vector<lm::TokenSeq> all, std::size_t every, std::vector<lm::TokenSeq>& train,
             std::vector<lm::TokenSeq>& valid) {
    for (std::size_t i = 0; i < all.size(); ++i)
        (every > 0 && i % every == every - 1 ? valid : train).push_back(std::move(all[i]));
}

void pool_part(std::span<const EncodedPersona> part, std::vector<lm::TokenSeq>& train,
               std::vector<lm::TokenSeq>& valid) {
    for (const auto& p : part) {
        train.insert(train.end(), p.train.begin(), p.train.end());
        valid.insert(valid.end(), p.valid.begin(), p.valid.end());
    }
}

}  // namespace pkt::pipeline
