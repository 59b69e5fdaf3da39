#include "pkt/data/personachat.hpp"

#include <algorithm>
#include <cstdio>

#include "pkt/core/errors.hpp"

namespace pkt::data {

namespace {

constexpr std::string_view kSelfPrefix = "your persona: ";
constexpr std::string_view kPartnerPrefix = "partner's persona: ";
constexpr std::string_view kSilence = "__SILENCE__";

std::vector<std::string> split_tabs(const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find('\t', start);
        out.push_back(s.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

}  // namespace

void PersonaChatConverter::flush(std::vector<std::string>& description, Dialogue& dialogue, const std::string& where) {
    if (dialogue.empty() && description.empty()) return;
    if (dialogue.size() >= 2) {
        validate_dialogue(dialogue, where);
        std::vector<std::string> key = description;
        std::sort(key.begin(), key.end());
        auto [it, inserted] = index_.try_emplace(key, personas_.size());
        if (inserted) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "pc%05zu", personas_.size());
            personas_.push_back({buf, description, {}});
        }
        personas_[it->second].dialogues.push_back(std::move(dialogue));
        ++dialogues_;
    }
    description.clear();
    dialogue.clear();
}

void PersonaChatConverter::add(std::istream& in, const std::string& source) {
    std::vector<std::string> description;
    Dialogue dialogue;
    std::string line;
    std::size_t lineno = 0;
    std::string where = source;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto sp = line.find(' ');
        const std::string here = source + ":" + std::to_string(lineno);
        if (sp == std::string::npos || sp == 0 ||
            !std::all_of(line.begin(), line.begin() + static_cast<std::ptrdiff_t>(sp), ::isdigit))
            throw DataError(here + ": expected '<index> <text>'");
        const long n = std::stol(line.substr(0, sp));
        const std::string text = line.substr(sp + 1);
        if (n == 1) {
            flush(description, dialogue, where);
            where = here;
        }
        if (text.starts_with(kSelfPrefix)) {
            description.push_back(text.substr(kSelfPrefix.size()));
            continue;
        }
        if (text.starts_with(kPartnerPrefix)) continue;
        const auto fields = split_tabs(text);
        if (fields.size() < 2) throw DataError(here + ": utterance line needs '<partner>\\t<reply>'");
        if (fields[0] != kSilence) dialogue.push_back({1, fields[0]});
        dialogue.push_back({2, fields[1]});
    }
    flush(description, dialogue, where);
}

std::vector<Persona> PersonaChatConverter::finish() const { return personas_; }

}  // namespace pkt::data
