#pragma once

#include <cstddef>
#include <istream>
#include <map>
#include <string>
#include <vector>

#include "pkt/data/dataset.hpp"

namespace pkt::data {

/// Converts PERSONA-CHAT in its public ParlAI text layout
/// ("<n> your persona: <sentence>" lines, then "<n> <partner>\t<reply>[\t...]"
/// lines; n restarts at 1 for each dialogue) into personas. The replying
/// speaker is speaker 2. Dialogues are grouped into one persona exactly when
/// their description sentence sets are equal.
class PersonaChatConverter {
   public:
    /// Throws DataError naming source and line on malformed input.
    void add(std::istream& in, const std::string& source);
    /// Personas in order of first appearance, ids "pc00000", "pc00001", ...
    std::vector<Persona> finish() const;

    std::size_t dialogue_count() const { return dialogues_; }

   private:
    void flush(std::vector<std::string>& description, Dialogue& dialogue, const std::string& where);

    std::map<std::vector<std::string>, std::size_t> index_;  // sorted sentence set -> persona
    std::vector<Persona> personas_;
    std::size_t dialogues_ = 0;
};

}  // namespace pkt::data
