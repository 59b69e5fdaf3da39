#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "lm_fixtures.hpp"
#include "pkt/core/errors.hpp"
#include "pkt/lm/beam_search.hpp"
#include "pkt/lm/checkpoint.hpp"
#include "pkt/lm/decoder.hpp"
#include "pkt/lm/encoding.hpp"
#include "pkt/lm/loss.hpp"
#include "pkt/lm/trainer.hpp"

using namespace pkt;
using namespace pkt::lm;

TEST_CASE("tokenizer round trip, unknown words and json") {
    const Tokenizer tok = test::tiny_tokenizer();
    CHECK(tok.word(SpecialTokens::kUnk) == "<unk>");
    CHECK(tok.word(SpecialTokens::kSpeaker2) == "<s2>");
    const auto ids = tok.encode("i like blue");
    CHECK(tok.decode(ids) == "i like blue");
    const auto unk = tok.encode("i like zebras");
    CHECK(unk[2] == SpecialTokens::kUnk);
    CHECK(Tokenizer::from_json(tok.to_json()) == tok);
    CHECK_THROWS_AS(tok.word(static_cast<int>(tok.size())), DataError);
}

TEST_CASE("tokenizer orders by frequency then lexicographically") {
    std::vector<std::string> texts = {"b a a c", "c a"};
    const Tokenizer tok = Tokenizer::build(texts);
    CHECK(tok.word(SpecialTokens::kCount) == "a");
    CHECK(tok.word(SpecialTokens::kCount + 1) == "c");
    CHECK(tok.word(SpecialTokens::kCount + 2) == "b");
    CHECK(Tokenizer::build(texts, SpecialTokens::kCount + 1).size() == SpecialTokens::kCount + 1);
}

TEST_CASE("dialogue encoding marks only speaker-2 turns") {
    const Tokenizer tok = test::tiny_tokenizer();
    data::Dialogue d = {{1, "how are you"}, {2, "i like red"}};
    const TokenSeq s = encode_dialogue(tok, d, 64);
    // <bos> <s1> how are you <eou> <s2> i like red <eou>
    REQUIRE(s.ids.size() == 11);
    CHECK(s.ids[0] == SpecialTokens::kBos);
    CHECK(s.ids[6] == SpecialTokens::kSpeaker2);
    CHECK(s.target_count() == 4);
    CHECK(s.targets[6] == tok.id("i"));
    CHECK(s.targets[9] == SpecialTokens::kEou);
    CHECK(s.targets[10] == -1);
    CHECK(s.targets[5] == -1);

    const TokenSeq r = encode_response(tok, d, 1, 64);
    CHECK(r.ids == s.ids);
    CHECK(r.targets == s.targets);
    CHECK_THROWS_AS(encode_response(tok, d, 0, 64), DataError);

    const auto h = encode_history(tok, std::span(d).first(1), 64, 0);
    CHECK(h.back() == SpecialTokens::kSpeaker2);
    CHECK(h.size() == 7);
}

TEST_CASE("grounded encoding puts facts before the dialogue and scores everything") {
    const Tokenizer tok = test::tiny_tokenizer();
    data::Dialogue d = {{1, "how are you"}, {2, "i like red"}};
    const std::vector<std::string> facts = {"i like red"};
    const TokenSeq s = encode_grounded(tok, facts, d, 64);
    // <bos> i like red <eou> <s1> how are you <eou> <s2> i like red <eou>
    REQUIRE(s.ids.size() == 15);
    CHECK(s.ids[4] == SpecialTokens::kEou);
    CHECK(s.ids[5] == SpecialTokens::kSpeaker1);
    CHECK(s.target_count() == 14);
    for (std::size_t i = 0; i + 1 < s.ids.size(); ++i) CHECK(s.targets[i] == s.ids[i + 1]);

    const TokenSeq cut = encode_grounded(tok, facts, d, 12);
    CHECK(cut.ids.size() == 10);
    CHECK(cut.ids[5] == SpecialTokens::kSpeaker2);
    CHECK_THROWS_AS(encode_grounded(tok, facts, d, 5), DataError);
}

TEST_CASE("zero-length prefix is bit-identical to no prefix") {
    const BackboneModel m = test::tiny_model();
    const std::vector<int> ids = m.tokenizer().encode("hello there how are you");
    Graph g1, g2;
    const auto w1 = bind_backbone(g1, m, false);
    const auto w2 = bind_backbone(g2, m, false);
    PrefixKV empty;
    const Var a = forward_logits(g1, m, w1, ids, nullptr);
    const Var b = forward_logits(g2, m, w2, ids, &empty);
    CHECK(g1.value(a).bit_equal(g2.value(b)));
}

TEST_CASE("prefix changes the output and receives all the gradient") {
    const BackboneModel m = test::tiny_model();
    PrefixParams p = PrefixParams::random(m.config(), 3, 8, 11, 0.5);
    const std::vector<int> ids = m.tokenizer().encode("hello there how are you");
    Graph g;
    const auto w = bind_backbone(g, m, false);
    const auto bp = bind_prefix(g, p, true);
    const Var logits = forward_logits(g, m, w, ids, &bp.kv);
    std::vector<int> targets(ids.begin() + 1, ids.end());
    targets.push_back(-1);
    const Var loss = g.cross_entropy(logits, targets);
    g.backward(loss);
    for (Var v : bp.params) {
        double s = 0;
        for (double x : g.grad(v).data()) s += std::abs(x);
        CHECK(s > 0.0);
    }
    for (Var v : w.all) {
        CHECK_FALSE(g.requires_grad(v));
        for (double x : g.grad(v).data()) REQUIRE(x == 0.0);
    }
    Graph g0;
    const auto w0 = bind_backbone(g0, m, false);
    const Var l0 = forward_logits(g0, m, w0, ids, nullptr);
    CHECK(max_abs_diff(g0.value(l0), g.value(logits)) > 1e-6);
}

TEST_CASE("deployed prefix matches the reparametrized prefix") {
    const BackboneModel m = test::tiny_model();
    const PrefixParams p = PrefixParams::random(m.config(), 4, 8, 3, 0.5);
    const DeployedPrefix d = p.deploy();
    CHECK(d.count() == 2u * m.config().n_layers * 4u * m.config().d_model);
    const std::vector<int> ids = m.tokenizer().encode("my dog is nice");
    Graph g1, g2;
    const auto w1 = bind_backbone(g1, m, false);
    const auto w2 = bind_backbone(g2, m, false);
    const auto bp = bind_prefix(g1, p, false);
    const auto kv = bind_deployed(g2, d);
    const Var a = forward_logits(g1, m, w1, ids, &bp.kv);
    const Var b = forward_logits(g2, m, w2, ids, &kv);
    CHECK(g1.value(a).bit_equal(g2.value(b)));
}

TEST_CASE("cached decoder agrees with the full forward pass") {
    const BackboneModel m = test::tiny_model();
    const DeployedPrefix d = PrefixParams::random(m.config(), 2, 8, 5, 0.5).deploy();
    const std::vector<int> ids = m.tokenizer().encode("hello there how are you");
    for (const DeployedPrefix* pp : {static_cast<const DeployedPrefix*>(nullptr), &d}) {
        const Array probs = next_token_distributions(m, pp, ids);
        const Decoder dec(m, pp);
        auto st = dec.start(std::span(ids).first(1));
        for (std::size_t t = 0; t < ids.size(); ++t) {
            if (t > 0) st = dec.advance(st, ids[t]);
            double row = 0.0;
            for (std::size_t v = 0; v < probs.cols(); ++v) {
                row += probs.at(t, v);
                REQUIRE(std::exp(st.log_probs[v]) == doctest::Approx(probs.at(t, v)).epsilon(1e-9));
            }
            CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("context overflow names both lengths") {
    const BackboneModel m = test::tiny_model();
    const DeployedPrefix d = PrefixParams::random(m.config(), 10, 4, 5).deploy();
    const std::vector<int> ids(25, SpecialTokens::kBos);
    Graph g;
    const auto w = bind_backbone(g, m, false);
    const auto kv = bind_deployed(g, d);
    try {
        forward_logits(g, m, w, ids, &kv);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("25") != std::string::npos);
        CHECK(msg.find("10") != std::string::npos);
    }
    CHECK_THROWS_AS(Decoder(m, &d).start(ids), ShapeError);
}

namespace {

/// All-zero model: every position predicts the uniform distribution.
BackboneModel zero_model() {
    BackboneModel m = test::tiny_model();
    for (auto& p : m.parameters()) p.value->fill(0.0);
    return m;
}

}  // namespace

TEST_CASE("uniform model has loss ln V") {
    const BackboneModel m = zero_model();
    const TokenSeq s = encode_dialogue(m.tokenizer(), {{1, "hello"}, {2, "i like red"}}, 64);
    CHECK(lm_loss(m, s) == doctest::Approx(std::log(static_cast<double>(m.tokenizer().size()))).epsilon(1e-12));
    TokenSeq none = s;
    std::fill(none.targets.begin(), none.targets.end(), -1);
    CHECK_THROWS_AS(lm_loss(m, none), DataError);
}

TEST_CASE("hand-computed loss for a context-free model") {
    // Layers are zero, the final norm outputs the constant b = e0, so every
    // position has logits tok_emb[:, 0] = 0.1 * id.
    BackboneModel m = zero_model();
    const std::size_t V = m.tokenizer().size();
    for (std::size_t i = 0; i < V; ++i) m.tok_emb.at(i, 0) = 0.1 * static_cast<double>(i);
    m.lnf_b[0] = 1.0;
    TokenSeq s;
    s.ids = {1, 5, 6, 7};
    s.targets = {5, 6, 7, -1};
    double lse = 0.0;
    for (std::size_t i = 0; i < V; ++i) lse += std::exp(0.1 * static_cast<double>(i));
    lse = std::log(lse);
    const double expected = ((lse - 0.5) + (lse - 0.6) + (lse - 0.7)) / 3.0;
    CHECK(lm_loss(m, s) == doctest::Approx(expected).epsilon(1e-12));
}

namespace {

/// Scripted backend: state is the token path so far.
struct ScriptBackend {
    using State = std::vector<int>;
    // tokens: 0 = end, 1 = A, 2 = B
    State advance(const State& s, int t) const {
        State n = s;
        n.push_back(t);
        return n;
    }
    const std::vector<double>& log_probs(const State& s) const {
        static const std::vector<double> root = {std::log(0.05), std::log(0.55), std::log(0.40)};
        static const std::vector<double> after_a = {std::log(0.1), std::log(0.45), std::log(0.45)};
        static const std::vector<double> after_b = {std::log(0.98), std::log(0.01), std::log(0.01)};
        if (s.empty()) return root;
        return s.back() == 2 ? after_b : after_a;
    }
};

}  // namespace

TEST_CASE("beam search finds a path greedy decoding misses") {
    const ScriptBackend b;
    const Hypothesis greedy = greedy_decode(b, {}, 0, 3);
    CHECK(greedy.tokens == std::vector<int>{1, 1, 1});
    const Hypothesis beam1 = beam_search(b, {}, 0, 1, 3);
    CHECK(beam1.tokens == greedy.tokens);
    CHECK(beam1.log_prob == doctest::Approx(greedy.log_prob));
    const Hypothesis beam2 = beam_search(b, {}, 0, 2, 3);
    CHECK(beam2.tokens == std::vector<int>{2, 0});
    CHECK(beam2.score() == doctest::Approx((std::log(0.40) + std::log(0.98)) / 2.0));
    CHECK_THROWS_AS(beam_search(b, {}, 0, 0, 3), std::invalid_argument);
}

TEST_CASE("beam width 1 equals greedy on a real model, and decoding is deterministic") {
    const BackboneModel m = test::tiny_model(21);
    const std::vector<int> hist = m.tokenizer().encode("<bos> <s1> hello there <eou> <s2>");
    const Decoder dec(m, nullptr);
    const auto g = greedy_decode(dec, dec.start(hist), SpecialTokens::kEou, 8);
    const auto b = beam_search(dec, dec.start(hist), SpecialTokens::kEou, 1, 8);
    CHECK(g.tokens == b.tokens);
    CHECK(beam_decode(m, nullptr, hist, 3, 8) == beam_decode(m, nullptr, hist, 3, 8));
}

TEST_CASE("forced end token decodes to an empty response") {
    BackboneModel m = zero_model();
    m.tok_emb.at(SpecialTokens::kEou, 0) = 10.0;
    m.lnf_b[0] = 1.0;
    const std::vector<int> hist = {SpecialTokens::kBos, SpecialTokens::kSpeaker2};
    CHECK(beam_decode(m, nullptr, hist, 4, 10).empty());
}

TEST_CASE("checkpoint round trip and malformed files") {
    const auto dir = std::filesystem::temp_directory_path() / "pkt_test_ckpt";
    std::filesystem::remove_all(dir);
    const BackboneModel m = test::tiny_model();
    const auto path = dir / "model.bin";
    save_backbone(path, m);
    const BackboneModel back = load_backbone(path);
    CHECK(back.weights_bit_equal(m));
    CHECK(back.digest() == m.digest());
    CHECK(back.config() == m.config());
    CHECK(back.tokenizer() == m.tokenizer());

    const auto size = std::filesystem::file_size(path);
    CHECK(size == 4 + 4 + 6 * 4 + 32 + 8 * m.parameter_count());
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(static_cast<std::streamoff>(size - 1));
        f.put('\x7f');
    }
    CHECK_THROWS_WITH_AS(load_backbone(path), doctest::Contains("digest mismatch"), DataError);
    std::filesystem::resize_file(path, size - 3);
    CHECK_THROWS_AS(load_backbone(path), DataError);
    CHECK_THROWS_AS(load_backbone(dir / "missing.bin"), NotFoundError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("digest depends on every weight") {
    BackboneModel m = test::tiny_model();
    const Digest d0 = m.digest();
    m.lnf_b[3] += 1e-12;
    CHECK(m.digest() != d0);
}

TEST_CASE("full-parameter training memorizes a repeated sequence") {
    BackboneModel m = test::tiny_model(3);
    const TokenSeq s = encode_dialogue(m.tokenizer(), {{1, "hello there"}, {2, "my dog is nice"}}, 64);
    std::vector<TokenSeq> data(4, s);
    const double before = lm_loss(m, s);
    LmTrainConfig cfg;
    cfg.epochs = 15;
    cfg.batch_size = 2;
    cfg.lr = 1e-2;
    cfg.seed = 1;
    std::size_t calls = 0;
    const auto log = train_backbone(m, data, data, cfg, [&](const LmEpochRecord&) { ++calls; });
    CHECK(calls == 15);
    CHECK(log.back().steps == 30);
    CHECK(log.back().valid_loss < 0.2 * before);
    CHECK(log.back().lr == 0.0);
}
