#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pkt/data/dataset.hpp"
#include "pkt/lm/encoding.hpp"
#include "pkt/pipeline/training.hpp"

namespace pkt::pipeline {

/// Every description sentence and turn text, in corpus order.
std::vector<std::string> corpus_texts(std::span<const data::Persona> personas);

/// Pretraining sequences: each dialogue preceded by its persona's description
/// (plain dialogue when the description is empty), every position scored.
std::vector<lm::TokenSeq> encode_pretraining(const lm::Tokenizer& tok, std::span<const data::Persona> personas,
                                             std::size_t max_tokens);

/// Auxiliary grounding objective: for each sequence with a facts block (the
/// tokens before its first speaker-1 marker), a copy whose only targets are
/// dialogue tokens stated in those facts and present in fewer than `max_df`
/// of all the facts blocks, i.e. persona-specific words. Sequences left without
/// targets are skipped.
std::vector<lm::TokenSeq> grounding_copies(std::span<const lm::TokenSeq> seqs, double max_df);

/// Deterministic holdout: every `every`-th sequence goes to valid. every = 0 keeps all in train.
void holdout(std::vector<lm::TokenSeq> all, std::size_t every, std::vector<lm::TokenSeq>& train,
             std::vector<lm::TokenSeq>& valid);

/// Pooled train and valid sequences of a part, for the persona-agnostic fine-tune.
void pool_part(std::span<const EncodedPersona> part, std::vector<lm::TokenSeq>& train,
               std::vector<lm::TokenSeq>& valid);

}  // namespace pkt::pipeline
