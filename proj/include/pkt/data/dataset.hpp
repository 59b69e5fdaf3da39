#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "pkt/data/dialogue.hpp"

namespace pkt::data {

struct Persona {
    std::string id;
    std::vector<std::string> description;  // may be empty
    std::vector<Dialogue> dialogues;

    bool operator==(const Persona&) const = default;
};

enum class Part { A, B, C };

char part_letter(Part p);
Part parse_part(std::string_view s);

/// Indices into one persona's dialogue list.
struct Split {
    std::vector<std::size_t> train, valid, test;
    /// Set when valid or test is empty (too few dialogues to hold any out).
    bool degenerate = false;

    bool operator==(const Split&) const = default;
};

/// Personas plus, once partitioned, a part and a split per persona.
struct PersonaDataset {
    std::vector<Persona> personas;
    std::vector<Part> parts;    // empty until partitioned
    std::vector<Split> splits;  // empty until split

    bool partitioned() const { return parts.size() == personas.size() && !personas.empty(); }
    bool has_splits() const { return splits.size() == personas.size() && !personas.empty(); }

    /// Index of the persona with this id; throws NotFoundError.
    std::size_t index_of(const std::string& id) const;
    std::vector<std::size_t> part_indices(Part p) const;

    bool operator==(const PersonaDataset&) const = default;
};

/// Throws DataError unless the dialogue has >= 2 turns, speakers in {1, 2},
/// and strictly alternating speakers.
void validate_dialogue(const Dialogue& d, const std::string& where);

/// JSONL corpus, one persona per line:
/// {"persona_id": str, "description": [str], "dialogues": [[{"speaker": 1|2, "text": str}, ...], ...]}
/// Blank lines are ignored. Errors name the line number.
std::vector<Persona> read_corpus(std::istream& in, const std::string& source = "corpus");
void write_corpus(std::ostream& out, const std::vector<Persona>& personas);
std::vector<Persona> load_corpus(const std::filesystem::path& path);
void save_corpus(const std::filesystem::path& path, const std::vector<Persona>& personas);

/// Split manifest:
/// {"part": {id: "A"|"B"|"C"}, "splits": {id: {"train": [..], "valid": [..], "test": [..]}},
///  "seed": int, "few_shot_threshold": int}
nlohmann::json manifest_json(const PersonaDataset& ds, std::uint64_t seed, std::size_t few_shot_threshold);
/// Applies a manifest to `personas`, checking that every persona is covered
/// and every split partitions its dialogues.
PersonaDataset apply_manifest(std::vector<Persona> personas, const nlohmann::json& manifest);

}  // namespace pkt::data
