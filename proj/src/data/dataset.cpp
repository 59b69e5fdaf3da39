#include "pkt/data/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

#include "pkt/core/errors.hpp"
#include "pkt/core/fs.hpp"

namespace pkt::data {

using nlohmann::json;

char part_letter(Part p) { return p == Part::A ? 'A' : p == Part::B ? 'B' : 'C'; }

Part parse_part(std::string_view s) {
    if (s == "A") return Part::A;
    if (s == "B") return Part::B;
    if (s == "C") return Part::C;
    throw DataError("unknown part '" + std::string(s) + "' (expected A, B or C)");
}

std::size_t PersonaDataset::index_of(const std::string& id) const {
    for (std::size_t i = 0; i < personas.size(); ++i)
        if (personas[i].id == id) return i;
    throw NotFoundError("persona '" + id + "' not in dataset");
}

std::vector<std::size_t> PersonaDataset::part_indices(Part p) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < parts.size(); ++i)
        if (parts[i] == p) out.push_back(i);
    return out;
}

void validate_dialogue(const Dialogue& d, const std::string& where) {
    if (d.size() < 2) throw DataError(where + ": dialogue has " + std::to_string(d.size()) + " turn(s), need >= 2");
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (d[i].speaker != 1 && d[i].speaker != 2)
            throw DataError(where + ": turn " + std::to_string(i) + " has speaker " + std::to_string(d[i].speaker));
        if (i > 0 && d[i].speaker == d[i - 1].speaker)
            throw DataError(where + ": speakers do not alternate at turn " + std::to_string(i));
    }
}

namespace {

Persona persona_from_json(const json& j, const std::string& where) {
    if (!j.is_object()) throw DataError(where + ": expected a JSON object");
    Persona p;
    if (!j.contains("persona_id") || !j["persona_id"].is_string())
        throw DataError(where + ": missing string field persona_id");
    p.id = j["persona_id"].get<std::string>();
    if (j.contains("description")) {
        if (!j["description"].is_array()) throw DataError(where + ": description must be an array");
        for (const auto& s : j["description"]) {
            if (!s.is_string()) throw DataError(where + ": description entries must be strings");
            p.description.push_back(s.get<std::string>());
        }
    }
    if (!j.contains("dialogues") || !j["dialogues"].is_array())
        throw DataError(where + ": missing array field dialogues");
    for (std::size_t di = 0; di < j["dialogues"].size(); ++di) {
        const json& dj = j["dialogues"][di];
        const std::string dwhere = where + ", dialogue " + std::to_string(di);
        if (!dj.is_array()) throw DataError(dwhere + ": expected an array of turns");
        Dialogue d;
        for (const auto& t : dj) {
            if (!t.is_object() || !t.contains("speaker") || !t["speaker"].is_number_integer() ||
                !t.contains("text") || !t["text"].is_string())
                throw DataError(dwhere + ": turns need integer speaker and string text");
            d.push_back({t["speaker"].get<int>(), t["text"].get<std::string>()});
        }
        validate_dialogue(d, dwhere);
        p.dialogues.push_back(std::move(d));
    }
    return p;
}

json persona_to_json(const Persona& p) {
    json dialogues = json::array();
    for (const auto& d : p.dialogues) {
        json turns = json::array();
        for (const auto& t : d) turns.push_back({{"speaker", t.speaker}, {"text", t.text}});
        dialogues.push_back(std::move(turns));
    }
    return {{"persona_id", p.id}, {"description", p.description}, {"dialogues", std::move(dialogues)}};
}

}  // namespace

std::vector<Persona> read_corpus(std::istream& in, const std::string& source) {
    std::vector<Persona> out;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = source + ":" + std::to_string(lineno);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DataError(where + ": malformed JSON (" + e.what() + ")");
        }
        Persona p = persona_from_json(j, where);
        if (!seen.insert(p.id).second) throw DataError(where + ": duplicate persona_id '" + p.id + "'");
        out.push_back(std::move(p));
    }
    return out;
}

void write_corpus(std::ostream& out, const std::vector<Persona>& personas) {
    for (const auto& p : personas) out << persona_to_json(p).dump() << '\n';
}

std::vector<Persona> load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open corpus " + path.string());
    return read_corpus(in, path.string());
}

void save_corpus(const std::filesystem::path& path, const std::vector<Persona>& personas) {
    fsutil::atomic_write(path, [&](std::ostream& out) { write_corpus(out, personas); });
}

json manifest_json(const PersonaDataset& ds, std::uint64_t seed, std::size_t few_shot_threshold) {
    if (!ds.partitioned() || !ds.has_splits()) throw DataError("manifest: dataset is not partitioned and split");
    json part = json::object();
    json splits = json::object();
    for (std::size_t i = 0; i < ds.personas.size(); ++i) {
        const auto& id = ds.personas[i].id;
        part[id] = std::string(1, part_letter(ds.parts[i]));
        splits[id] = {{"train", ds.splits[i].train}, {"valid", ds.splits[i].valid}, {"test", ds.splits[i].test}};
    }
    return {{"part", std::move(part)},
            {"splits", std::move(splits)},
            {"seed", seed},
            {"few_shot_threshold", few_shot_threshold}};
}

PersonaDataset apply_manifest(std::vector<Persona> personas, const json& manifest) {
    if (!manifest.is_object() || !manifest.contains("part") || !manifest.contains("splits"))
        throw DataError("manifest: missing 'part' or 'splits'");
    PersonaDataset ds;
    ds.personas = std::move(personas);
    for (const auto& p : ds.personas) {
        if (!manifest["part"].contains(p.id)) throw DataError("manifest: persona '" + p.id + "' has no part");
        if (!manifest["splits"].contains(p.id)) throw DataError("manifest: persona '" + p.id + "' has no split");
        ds.parts.push_back(parse_part(manifest["part"][p.id].get<std::string>()));
        const json& sj = manifest["splits"][p.id];
        Split s;
        try {
            s.train = sj.at("train").get<std::vector<std::size_t>>();
            s.valid = sj.at("valid").get<std::vector<std::size_t>>();
            s.test = sj.at("test").get<std::vector<std::size_t>>();
        } catch (const json::exception& e) {
            throw DataError("manifest: bad split for '" + p.id + "': " + e.what());
        }
        s.degenerate = s.valid.empty() || s.test.empty();
        std::vector<std::size_t> all = s.train;
        all.insert(all.end(), s.valid.begin(), s.valid.end());
        all.insert(all.end(), s.test.begin(), s.test.end());
        std::sort(all.begin(), all.end());
        for (std::size_t i = 0; i < all.size(); ++i) {
            if (all[i] != i || all.size() != p.dialogues.size())
                throw DataError("manifest: split for '" + p.id + "' does not partition its " +
                                std::to_string(p.dialogues.size()) + " dialogues");
        }
        if (all.size() != p.dialogues.size())
            throw DataError("manifest: split for '" + p.id + "' does not partition its " +
                            std::to_string(p.dialogues.size()) + " dialogues");
        ds.splits.push_back(std::move(s));
    }
    if (manifest["part"].size() != ds.personas.size())
        throw DataError("manifest: lists " + std::to_string(manifest["part"].size()) + " personas, corpus has " +
                        std::to_string(ds.personas.size()));
    return ds;
}

}  // namespace pkt::data
