#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "doctest.h"
#include "pkt/core/errors.hpp"
#include "pkt/data/dataset.hpp"
#include "pkt/data/partition.hpp"
#include "pkt/data/personachat.hpp"
#include "pkt/data/synthetic.hpp"

using namespace pkt;
using namespace pkt::data;

TEST_CASE("split policy: 8:1:1 with floor-then-distribute") {
    auto counts = [](std::size_t d) {
        const Split s = split_dialogues(d, 42);
        return std::vector<std::size_t>{s.train.size(), s.valid.size(), s.test.size()};
    };
    CHECK(counts(10) == std::vector<std::size_t>{8, 1, 1});
    CHECK(counts(5) == std::vector<std::size_t>{3, 1, 1});
    CHECK(counts(4) == std::vector<std::size_t>{2, 1, 1});
    CHECK(counts(1) == std::vector<std::size_t>{1, 0, 0});
    CHECK(split_dialogues(1, 0).degenerate);
    CHECK(counts(20) == std::vector<std::size_t>{16, 2, 2});
    for (std::size_t d = 1; d <= 20; ++d) {
        const Split s = split_dialogues(d, d * 7);
        std::vector<std::size_t> all = s.train;
        all.insert(all.end(), s.valid.begin(), s.valid.end());
        all.insert(all.end(), s.test.begin(), s.test.end());
        std::sort(all.begin(), all.end());
        REQUIRE(all.size() == d);
        for (std::size_t i = 0; i < d; ++i) REQUIRE(all[i] == i);
        if (d >= 3) {
            CHECK(!s.valid.empty());
            CHECK(!s.test.empty());
            CHECK_FALSE(s.degenerate);
        }
    }
    CHECK(split_dialogues(10, 3) == split_dialogues(10, 3));
}

TEST_CASE("partition boundary and large census") {
    PartitionConfig cfg{.few_shot_threshold = 6, .n_source = 1, .n_regular_target = 1, .seed = 1};
    const std::vector<std::size_t> small = {5, 6, 7};
    const auto parts = partition_personas(small, cfg);
    CHECK(parts[0] == Part::C);
    CHECK(parts[1] != Part::C);
    CHECK(parts[2] != Part::C);

    // 1293 personas, 239 of them with fewer than 6 dialogues.
    SyntheticSpec spec;
    spec.slots = default_slots();
    spec.slots.push_back({"food", {"pizza", "pasta", "salad", "soup", "rice", "bread"}, "i like to eat {}",
                          {"what food do you like"}, {"i like to eat {}"}});
    spec.regular_personas = 1293 - 239;
    spec.few_shot_personas = 239;
    spec.min_dialogues = 6;
    spec.max_dialogues = 12;
    spec.few_shot_dialogues = 3;
    spec.exchanges = 1;
    const auto personas = generate_synthetic(spec);
    std::vector<std::size_t> counts;
    for (const auto& p : personas) counts.push_back(p.dialogues.size());
    const auto census = partition_personas(counts, {.few_shot_threshold = 6, .n_source = 1, .n_regular_target = 300,
                                                    .seed = 9});
    CHECK(std::count(census.begin(), census.end(), Part::A) == 754);
    CHECK(std::count(census.begin(), census.end(), Part::B) == 300);
    CHECK(std::count(census.begin(), census.end(), Part::C) == 239);
    CHECK(census == partition_personas(counts, {.few_shot_threshold = 6, .n_source = 1, .n_regular_target = 300,
                                                .seed = 9}));

    try {
        partition_personas(counts, {.few_shot_threshold = 6, .n_source = 800, .n_regular_target = 300, .seed = 9});
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("1054") != std::string::npos);
    }
}

TEST_CASE("temperature mixing oracle and properties") {
    const std::vector<double> c = {8, 2};
    const auto t10 = temperature_mix(c, 10.0);
    CHECK(std::abs(t10[0] - 0.534602) < 1e-5);
    CHECK(std::abs(t10[1] - 0.465398) < 1e-5);
    const auto t1 = temperature_mix(c, 1.0);
    CHECK(t1[0] == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(t1[1] == doctest::Approx(0.2).epsilon(1e-15));
    const auto tinf = temperature_mix(c, 1e6);
    CHECK(std::abs(tinf[0] - tinf[1]) < 1e-4);
    const std::vector<double> eq = {3, 3, 3};
    for (double q : temperature_mix(eq, 7.0)) CHECK(q == doctest::Approx(1.0 / 3.0));
    for (double T : {0.1, 0.5, 1.0, 2.0, 10.0, 1e6}) {
        const std::vector<double> counts = {1, 2, 3, 50, 7};
        const auto q = temperature_mix(counts, T);
        double s = 0.0;
        for (double v : q) s += v;
        CHECK(std::abs(s - 1.0) < 1e-12);
        if (T > 1.0) {
            CHECK(*std::max_element(q.begin(), q.end()) <= 50.0 / 63.0);
            CHECK(*std::min_element(q.begin(), q.end()) >= 1.0 / 63.0);
        }
    }
    const std::vector<double> zero = {1, 0};
    CHECK_THROWS_AS(temperature_mix(zero, 2.0), std::invalid_argument);
    CHECK_THROWS_AS(temperature_mix(c, 0.0), std::invalid_argument);
}

TEST_CASE("batch sampler frequencies and determinism") {
    {
        BatchSampler one({7}, {{0, 1}}, {1.0}, 3);
        for (const auto& r : one.next(50)) CHECK(r.persona == 7);
    }
    BatchSampler s({0, 1}, {{0}, {0}}, {0.5, 0.5}, 11);
    std::size_t first = 0;
    for (int i = 0; i < 100000; ++i) first += s.draw_slot() == 0;
    CHECK(first > 49000);
    CHECK(first < 51000);
    BatchSampler a({0, 1, 2}, {{0, 1}, {2}, {3, 4, 5}}, {0.2, 0.3, 0.5}, 5);
    BatchSampler b({0, 1, 2}, {{0, 1}, {2}, {3, 4, 5}}, {0.2, 0.3, 0.5}, 5);
    for (int i = 0; i < 20; ++i) CHECK(a.next(4) == b.next(4));
    CHECK_THROWS_AS(BatchSampler({0}, {{0}}, {0.5}, 1), std::invalid_argument);
}

TEST_CASE("synthetic corpus: distinct personas, descriptions, determinism") {
    SyntheticSpec spec;
    spec.seed = 4;
    const auto a = generate_synthetic(spec);
    const auto b = generate_synthetic(spec);
    std::ostringstream sa, sb;
    write_corpus(sa, a);
    write_corpus(sb, b);
    CHECK(sa.str() == sb.str());
    CHECK(a.size() == 120);
    std::set<std::vector<std::string>> descs;
    for (const auto& p : a) {
        CHECK(p.description.size() == 4);
        descs.insert(p.description);
        for (const auto& d : p.dialogues) CHECK_NOTHROW(validate_dialogue(d, p.id));
    }
    CHECK(descs.size() == a.size());
    CHECK(a[115].dialogues.size() == 4);
    CHECK(a[0].dialogues.size() >= 6);
    CHECK(a[0].dialogues.size() <= 16);

    SyntheticSpec tiny;
    tiny.slots = {{"color", {"red", "blue"}, "my favorite color is {}", {"what color"}, {"my favorite color is {}"}}};
    tiny.regular_personas = 2;
    tiny.few_shot_personas = 0;
    const auto two = generate_synthetic(tiny);
    CHECK(two[0].description != two[1].description);
    tiny.regular_personas = 3;
    CHECK_THROWS_AS(generate_synthetic(tiny), DataError);

    SyntheticSpec few;
    few.regular_personas = 0;
    few.few_shot_personas = 5;
    std::vector<std::size_t> counts;
    for (const auto& p : generate_synthetic(few)) counts.push_back(p.dialogues.size());
    const auto parts = partition_personas(counts, {.few_shot_threshold = 6, .n_source = 0, .n_regular_target = 0});
    CHECK(std::all_of(parts.begin(), parts.end(), [](Part p) { return p == Part::C; }));

    const auto g = generate_generic(spec, 5, 1);
    CHECK(g.size() == 5);
    for (const auto& p : g) {
        REQUIRE(p.description.size() == spec.slots.size());
        for (std::size_t t = 1; t < p.dialogues[0].size(); t += 2) {
            const auto& text = p.dialogues[0][t].text;
            bool stated = false;
            for (const auto& s : spec.slots)
                for (const auto& v : s.values)
                    if (text.find(v) != std::string::npos)
                        for (const auto& f : p.description) stated = stated || f.find(v) != std::string::npos;
            const bool small_talk = text.find("thanks") != std::string::npos || text.find("too") != std::string::npos ||
                                    text.find("fine") != std::string::npos || text.find("not much") != std::string::npos;
            CHECK((stated || small_talk));
        }
    }
}

TEST_CASE("corpus JSONL round trip and errors") {
    std::istringstream empty("");
    CHECK(read_corpus(empty).empty());

    std::istringstream one(
        R"({"persona_id": "x", "description": ["i like red"], "dialogues": [[{"speaker":1,"text":"hi"},{"speaker":2,"text":"hello"}],[{"speaker":1,"text":"a"},{"speaker":2,"text":"b"}]]})"
        "\n");
    const auto ps = read_corpus(one);
    REQUIRE(ps.size() == 1);
    CHECK(ps[0].dialogues.size() == 2);

    SyntheticSpec spec;
    spec.regular_personas = 5;
    spec.few_shot_personas = 2;
    const auto gen = generate_synthetic(spec);
    std::stringstream buf;
    write_corpus(buf, gen);
    CHECK(read_corpus(buf) == gen);

    std::istringstream bad("\n{\"persona_id\": \"x\", \"dialogues\": []}\n{not json\n");
    try {
        read_corpus(bad, "f.jsonl");
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("f.jsonl:3") != std::string::npos);
    }
    std::istringstream same(
        R"({"persona_id": "x", "dialogues": [[{"speaker":1,"text":"hi"},{"speaker":1,"text":"again"}]]})");
    CHECK_THROWS_WITH_AS(read_corpus(same), doctest::Contains("alternate"), DataError);
    std::istringstream dup(R"({"persona_id": "x", "dialogues": []})"
                           "\n"
                           R"({"persona_id": "x", "dialogues": []})");
    CHECK_THROWS_AS(read_corpus(dup), DataError);
}

TEST_CASE("manifest round trip and validation") {
    SyntheticSpec spec;
    spec.regular_personas = 6;
    spec.few_shot_personas = 2;
    auto personas = generate_synthetic(spec);
    const PersonaDataset ds = build_dataset(personas, {.few_shot_threshold = 6, .n_source = 2, .n_regular_target = 3,
                                                       .seed = 5});
    CHECK(ds.part_indices(Part::A).size() == 3);
    CHECK(ds.part_indices(Part::B).size() == 3);
    CHECK(ds.part_indices(Part::C).size() == 2);
    const auto j = manifest_json(ds, 5, 6);
    CHECK(apply_manifest(personas, j) == ds);
    auto broken = j;
    broken["splits"][personas[0].id]["train"].push_back(0);
    CHECK_THROWS_AS(apply_manifest(personas, broken), DataError);
    auto missing = j;
    missing["part"].erase(personas[1].id);
    CHECK_THROWS_AS(apply_manifest(personas, missing), DataError);
    CHECK(ds.index_of(personas[3].id) == 3);
    CHECK_THROWS_AS(ds.index_of("nobody"), NotFoundError);
}

TEST_CASE("PERSONA-CHAT converter groups by description set") {
    std::istringstream in(
        "1 your persona: i like cats.\n"
        "2 your persona: i am a chef.\n"
        "3 hi there\thello ! i love cats .\t\tx|y\n"
        "4 what do you do ?\ti cook food .\t\tx|y\n"
        "1 your persona: i am a chef.\n"
        "2 your persona: i like cats.\n"
        "3 __SILENCE__\thi\n"
        "4 hey\tyo\n"
        "1 your persona: i hate rain.\n"
        "2 hello\thi\n");
    PersonaChatConverter conv;
    conv.add(in, "train.txt");
    const auto ps = conv.finish();
    REQUIRE(ps.size() == 2);
    CHECK(conv.dialogue_count() == 3);
    CHECK(ps[0].dialogues.size() == 2);
    CHECK(ps[0].description == std::vector<std::string>{"i like cats.", "i am a chef."});
    CHECK(ps[0].dialogues[0].size() == 4);
    CHECK(ps[0].dialogues[1].front().speaker == 2);
    CHECK(ps[1].id == "pc00001");

    std::istringstream bad("1 your persona: x\nfoo\n");
    PersonaChatConverter c2;
    CHECK_THROWS_WITH_AS(c2.add(bad, "v.txt"), doctest::Contains("v.txt:2"), DataError);
}
