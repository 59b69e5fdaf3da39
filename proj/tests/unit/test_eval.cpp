#include <algorithm>
#include <map>

#include "doctest.h"
#include "pkt/core/errors.hpp"
#include "pkt/core/random.hpp"
#include "pkt/data/partition.hpp"
#include "pkt/eval/judge.hpp"
#include "pkt/eval/metrics.hpp"
#include "pkt/eval/params.hpp"
#include "pkt/eval/report.hpp"

using namespace pkt;
using namespace pkt::eval;

namespace {

using Tokens = std::vector<std::string>;

// Independent oracles: greedy removal from a list for multiset intersection,
// full table for LCS.
double oracle_ngram_f1(const Tokens& h, const Tokens& r, std::size_t n) {
    if (h.size() < n || r.size() < n) return 0.0;
    std::vector<Tokens> hg, rg;
    for (std::size_t i = 0; i + n <= h.size(); ++i) hg.emplace_back(h.begin() + i, h.begin() + i + n);
    for (std::size_t i = 0; i + n <= r.size(); ++i) rg.emplace_back(r.begin() + i, r.begin() + i + n);
    std::vector<Tokens> pool = rg;
    std::size_t match = 0;
    for (const auto& g : hg) {
        auto it = std::find(pool.begin(), pool.end(), g);
        if (it != pool.end()) {
            ++match;
            pool.erase(it);
        }
    }
    if (match == 0) return 0.0;
    const double p = double(match) / double(hg.size()), rc = double(match) / double(rg.size());
    return 2 * p * rc / (p + rc);
}

double oracle_lcs_f1(const Tokens& a, const Tokens& b) {
    if (a.empty() || b.empty()) return 0.0;
    std::vector<std::vector<std::size_t>> t(a.size() + 1, std::vector<std::size_t>(b.size() + 1, 0));
    for (std::size_t i = 1; i <= a.size(); ++i)
        for (std::size_t j = 1; j <= b.size(); ++j)
            t[i][j] = a[i - 1] == b[j - 1] ? t[i - 1][j - 1] + 1 : std::max(t[i - 1][j], t[i][j - 1]);
    const double l = double(t[a.size()][b.size()]);
    if (l == 0) return 0.0;
    const double p = l / double(a.size()), r = l / double(b.size());
    return 2 * p * r / (p + r);
}

Tokens random_tokens(Rng& rng) {
    static const char* vocab[] = {"a", "b", "c", "d", "e"};
    Tokens t(rng.below(9));
    for (auto& w : t) w = vocab[rng.below(5)];
    return t;
}

}  // namespace

TEST_CASE("metric hand cases") {
    CHECK(ngram_f1("a b c", "a c d", 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(lcs_f1("a b c d", "a c d e") == 0.75);
    CHECK(ngram_f1("i like red", "i like red", 1) == 1.0);
    CHECK(ngram_f1("i like red", "i like red", 2) == 1.0);
    CHECK(lcs_f1("i like red", "i like red") == 1.0);
    CHECK(ngram_f1("a b", "c d", 1) == 0.0);
    CHECK(lcs_f1("a b", "c d") == 0.0);
    CHECK(ngram_f1("", "a", 1) == 0.0);
    CHECK(ngram_f1("a", "a", 2) == 0.0);
    CHECK(lcs_f1("", "") == 0.0);
    CHECK(normalize_tokens("Hello, World!") == Tokens{"hello", ",", "world", "!"});
    CHECK_THROWS_AS(ngram_f1("a", "a", 0), std::invalid_argument);
}

TEST_CASE("metrics agree exactly with brute-force oracles on 1000 random pairs") {
    Rng rng(2024);
    for (int i = 0; i < 1000; ++i) {
        const Tokens h = random_tokens(rng), r = random_tokens(rng);
        for (std::size_t n : {1u, 2u}) {
            REQUIRE(ngram_f1(h, r, n) == oracle_ngram_f1(h, r, n));
            REQUIRE(ngram_f1(h, r, n) == ngram_f1(r, h, n));
        }
        REQUIRE(lcs_f1(h, r) == oracle_lcs_f1(h, r));
        REQUIRE(lcs_f1(h, r) == lcs_f1(r, h));
        const double l = lcs_f1(h, r);
        CHECK(l >= 0.0);
        CHECK(l <= 1.0);
        CHECK((l == 1.0) == (h == r && !h.empty()));
        Tokens hs = h, rs = r;
        std::sort(hs.begin(), hs.end());
        std::sort(rs.begin(), rs.end());
        CHECK((ngram_f1(h, r, 1) == 1.0) == (hs == rs && !h.empty()));
    }
}

namespace {

struct ConstJudge : ConsistencyJudge {
    explicit ConstJudge(std::vector<int> l = {}) : labels(std::move(l)) {}
    std::vector<int> labels;
    mutable std::size_t i = 0;
    int judge(const std::string&, const std::string&) const override { return labels[i++ % labels.size()]; }
};

}  // namespace

TEST_CASE("C score additivity and bounds") {
    const std::vector<std::string> persona(5, "x");
    CHECK(c_score("u", persona, ConstJudge({1})) == 5);
    CHECK(c_score("u", persona, ConstJudge({1, -1, 0, 0, 0})) == 0);
    CHECK(c_score("u", {}, ConstJudge({1})) == 0);
    Rng rng(1);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t m = rng.below(8);
        ConstJudge j;
        int expected = 0;
        for (std::size_t k = 0; k < m; ++k) {
            j.labels.push_back(static_cast<int>(rng.below(3)) - 1);
            expected += j.labels.back();
        }
        if (m == 0) j.labels.push_back(0);
        const int c = c_score("u", std::vector<std::string>(m, "p"), j);
        CHECK(c == expected);
        CHECK(std::abs(c) <= static_cast<int>(m));
    }
    CHECK_THROWS_AS(c_score("u", persona, ConstJudge({2})), DataError);
}

TEST_CASE("keyword judge") {
    const KeywordJudge j(data::default_slots());
    CHECK(j.judge("my favorite color is blue", "my favorite color is purple") == -1);
    CHECK(j.judge("purple is my favorite color", "my favorite color is purple") == 1);
    CHECK(j.judge("i have a pet dog", "my favorite color is purple") == 0);
    CHECK(j.judge("hello", "i work as a chef") == 0);
    const std::vector<std::string> desc = {"my favorite color is red", "i have a pet dog", "i enjoy chess",
                                           "i work as a nurse"};
    CHECK(c_score("i like the color red and my pet is a cat", desc, j) == 0);
    CHECK(c_score("my pet is a dog", desc, j) == 1);
}

TEST_CASE("subprocess judge protocol") {
    SubprocessJudge yes({"/bin/sh", "-c", "while read l; do echo '{\"label\": 1}'; done"});
    CHECK(yes.judge("u", "p") == 1);
    CHECK(yes.judge("u2", "p2") == 1);
    SubprocessJudge garbage({"/bin/sh", "-c", "read l; echo nope"});
    CHECK_THROWS_AS(garbage.judge("u", "p"), DataError);
    SubprocessJudge gone({"/bin/sh", "-c", "exit 0"});
    CHECK_THROWS_AS(gone.judge("u", "p"), DataError);
}

TEST_CASE("parameter accounting") {
    const auto big = param_accounting(24, 1024, 7, 345'000'000);
    CHECK(big.deployed == 344'064);
    CHECK(big.ratio < 0.001);
    CHECK(param_accounting(24, 1024, 0, 345'000'000).deployed == 0);
    const auto desk = param_accounting(4, 64, 8, 200'000);
    CHECK(desk.deployed == 4096);
    CHECK(desk.store_total(3) == 4 * 4096);
    double prev = -1.0;
    for (std::uint64_t L = 0; L < 20; ++L) {
        const double r = param_accounting(4, 64, L, 200'000).ratio;
        CHECK(r > prev);
        prev = r;
    }
}

namespace {

struct OracleGenerator : ResponseGenerator {
    const data::PersonaDataset* ds;
    std::vector<std::string> missing;
    bool has_persona(const std::string& id) const override {
        return std::find(missing.begin(), missing.end(), id) == missing.end();
    }
    std::string respond(const std::string& id, std::span<const data::Turn> history) const override {
        const auto& p = ds->personas[ds->index_of(id)];
        for (const auto& d : p.dialogues)
            if (d.data() == history.data())  // history is a view into the dataset
                return d[history.size()].text;
        return "";
    }
};

}  // namespace

TEST_CASE("evaluate_setting: exact responses, skips, empty parts, determinism") {
    data::SyntheticSpec spec;
    spec.regular_personas = 8;
    spec.few_shot_personas = 0;
    const auto ds = data::build_dataset(data::generate_synthetic(spec),
                                        {.few_shot_threshold = 6, .n_source = 2, .n_regular_target = 4, .seed = 3});
    OracleGenerator gen;
    gen.ds = &ds;
    const KeywordJudge judge(spec.slots);
    const auto params = param_accounting(4, 64, 8, 1000);
    const auto rep = evaluate_setting("oracle", ds, data::Part::B, gen, judge, params);
    REQUIRE(rep.metrics);
    CHECK(rep.metrics->f1_1 == 1.0);
    CHECK(rep.metrics->f1_lcs == 1.0);
    CHECK(rep.metrics->c_mean >= 0.0);
    CHECK(rep.samples > 0);
    const auto again = evaluate_setting("oracle", ds, data::Part::B, gen, judge, params, 3);
    CHECK(rep.to_json(true).dump() == again.to_json(true).dump());

    const auto empty = evaluate_setting("oracle", ds, data::Part::C, gen, judge, params);
    CHECK(empty.samples == 0);
    CHECK(empty.to_json()["metrics"]["f1_1"].is_null());

    gen.missing = {ds.personas[ds.part_indices(data::Part::B)[0]].id};
    const auto skip = evaluate_setting("oracle", ds, data::Part::B, gen, judge, params);
    CHECK(skip.to_json()["skipped_personas"] == 1);
    CHECK(skip.samples < rep.samples);
}
