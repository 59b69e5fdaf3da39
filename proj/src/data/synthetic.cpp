#include "pkt/data/synthetic.hpp"

#include <cstdio>
#include <numeric>
#include <unordered_set>

#include "pkt/core/errors.hpp"
#include "pkt/core/random.hpp"

namespace pkt::data {

std::vector<TraitSlot> default_slots() {
    return {
        {"color",
         {"red", "blue", "green", "purple"},
         "my favorite color is {}",
         {"what is your favorite color", "which color do you like best"},
         {"my favorite color is {}", "i like the color {}", "{} is my favorite color"}},
        {"pet",
         {"dog", "cat", "fish", "bird"},
         "i have a pet {}",
         {"do you have any pets", "what pet do you have"},
         {"i have a pet {}", "i have a {} at home", "my pet is a {}"}},
        {"hobby",
         {"hiking", "painting", "swimming", "chess"},
         "i enjoy {}",
         {"what do you do for fun", "do you have a hobby"},
         {"i enjoy {}", "i love {} on weekends", "my hobby is {}"}},
        {"job",
         {"teacher", "nurse", "farmer", "chef"},
         "i work as a {}",
         {"what do you do for work", "what is your job"},
         {"i work as a {}", "i am a {}", "my job is {}"}},
    };
}

std::string fill_template(const std::string& tmpl, const std::string& value) {
    const auto pos = tmpl.find("{}");
    if (pos == std::string::npos) return tmpl;
    return tmpl.substr(0, pos) + value + tmpl.substr(pos + 2);
}

namespace {

struct SmallTalk {
    const char* prompt;
    const char* reply;
};

constexpr SmallTalk kSmallTalk[] = {
    {"hello how are you", "i am good thanks"},
    {"nice to meet you", "nice to meet you too"},
    {"how was your day", "my day was fine"},
    {"what did you do today", "not much today"},
};

void validate_spec(const SyntheticSpec& spec) {
    if (spec.slots.empty()) throw DataError("synthetic spec: no trait slots");
    for (const auto& s : spec.slots) {
        if (s.values.empty() || s.questions.empty() || s.answers.empty())
            throw DataError("synthetic spec: slot '" + s.name + "' needs values, questions and answers");
    }
    if (spec.min_dialogues > spec.max_dialogues) throw DataError("synthetic spec: min_dialogues > max_dialogues");
    if (spec.exchanges == 0) throw DataError("synthetic spec: exchanges must be >= 1");
}

/// value_of(slot) gives the value spoken in an answer.
template <class ValueOf>
Dialogue make_dialogue(const SyntheticSpec& spec, Rng& rng, ValueOf value_of) {
    std::vector<std::size_t> slots(spec.slots.size());
    std::iota(slots.begin(), slots.end(), 0);
    rng.shuffle(slots);
    Dialogue d;
    std::size_t next_slot = 0;
    for (std::size_t e = 0; e < spec.exchanges; ++e) {
        if (rng.uniform() < spec.small_talk_probability) {
            const auto& st = kSmallTalk[rng.below(std::size(kSmallTalk))];
            d.push_back({1, st.prompt});
            d.push_back({2, st.reply});
            continue;
        }
        if (next_slot == slots.size()) {
            rng.shuffle(slots);
            next_slot = 0;
        }
        const std::size_t s = slots[next_slot++];
        const TraitSlot& slot = spec.slots[s];
        d.push_back({1, slot.questions[rng.below(slot.questions.size())]});
        d.push_back({2, fill_template(slot.answers[rng.below(slot.answers.size())], value_of(s, rng))});
    }
    return d;
}

std::string numbered(const char* prefix, std::size_t i, int width) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, i);
    return buf;
}

}  // namespace

std::vector<Persona> generate_synthetic(const SyntheticSpec& spec) {
    validate_spec(spec);
    const std::size_t wanted = spec.regular_personas + spec.few_shot_personas;
    std::size_t combos = 1;
    for (const auto& s : spec.slots) {
        if (combos > wanted) break;
        combos *= s.values.size();
    }
    if (combos < wanted) {
        throw DataError("synthetic spec: " + std::to_string(wanted) + " personas requested but only " +
                        std::to_string(combos) + " distinct trait combinations exist");
    }

    Rng rng(derive_seed(spec.seed, "synthetic"));
    std::vector<std::vector<std::size_t>> assignments;
    std::unordered_set<std::string> used;
    while (assignments.size() < wanted) {
        std::vector<std::size_t> a;
        std::string key;
        for (const auto& s : spec.slots) {
            a.push_back(rng.below(s.values.size()));
            key += std::to_string(a.back()) + ",";
        }
        if (used.insert(key).second) assignments.push_back(std::move(a));
    }

    std::vector<Persona> out;
    for (std::size_t i = 0; i < wanted; ++i) {
        Persona p;
        p.id = numbered("p", i, 4);
        const auto& a = assignments[i];
        for (std::size_t s = 0; s < spec.slots.size(); ++s)
            p.description.push_back(fill_template(spec.slots[s].description, spec.slots[s].values[a[s]]));
        const bool regular = i < spec.regular_personas;
        const std::size_t n =
            regular ? spec.min_dialogues + rng.below(spec.max_dialogues - spec.min_dialogues + 1) : spec.few_shot_dialogues;
        for (std::size_t k = 0; k < n; ++k)
            p.dialogues.push_back(
                make_dialogue(spec, rng, [&](std::size_t s, Rng&) { return spec.slots[s].values[a[s]]; }));
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<Persona> generate_generic(const SyntheticSpec& spec, std::size_t dialogues, std::uint64_t seed) {
    validate_spec(spec);
    Rng rng(derive_seed(seed, "generic"));
    std::vector<Persona> out;
    for (std::size_t i = 0; i < dialogues; ++i) {
        Persona p;
        p.id = numbered("g", i, 6);
        std::vector<std::size_t> a;
        for (const auto& s : spec.slots) a.push_back(rng.below(s.values.size()));
        for (std::size_t s = 0; s < spec.slots.size(); ++s)
            p.description.push_back(fill_template(spec.slots[s].description, spec.slots[s].values[a[s]]));
        rng.shuffle(p.description);
        p.dialogues.push_back(
            make_dialogue(spec, rng, [&](std::size_t s, Rng&) { return spec.slots[s].values[a[s]]; }));
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace pkt::data
