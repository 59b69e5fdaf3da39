#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pkt/data/dataset.hpp"

namespace pkt::data {

/// One persona trait. Templates use "{}" for the value. Values are single
/// tokens, distinct across slots, and never occur inside a template.
struct TraitSlot {
    std::string name;
    std::vector<std::string> values;
    std::string description;             // one description sentence per persona
    std::vector<std::string> questions;  // speaker-1 prompts
    std::vector<std::string> answers;    // speaker-2 replies revealing the value
};

std::vector<TraitSlot> default_slots();

struct SyntheticSpec {
    std::vector<TraitSlot> slots = default_slots();
    std::size_t regular_personas = 80;  // Part A + Part B pool
    std::size_t few_shot_personas = 40;
    std::size_t min_dialogues = 6;  // regular personas draw uniformly from [min, max]
    std::size_t max_dialogues = 16;
    std::size_t few_shot_dialogues = 4;
    std::size_t exchanges = 4;  // speaker-1/speaker-2 pairs; slots cycle in reshuffled order
    double small_talk_probability = 0.25;
    std::uint64_t seed = 0;
};

/// Fills a template's "{}" with `value`.
std::string fill_template(const std::string& tmpl, const std::string& value);

/// Regular personas first, then few-shot personas; ids "p0000", "p0001", ...
/// Every persona has a distinct combination of slot values. Throws DataError
/// when more personas are requested than combinations exist. Byte-identical
/// output for a fixed spec.
std::vector<Persona> generate_synthetic(const SyntheticSpec& spec);

/// Grounded chit-chat for backbone pretraining: each dialogue gets a fresh
/// random trait set, stated in its description (shuffled) and used by every
/// answer. Returned as single-dialogue pseudo-personas "g000000", ...
std::vector<Persona> generate_generic(const SyntheticSpec& spec, std::size_t dialogues, std::uint64_t seed);

}  // namespace pkt::data
