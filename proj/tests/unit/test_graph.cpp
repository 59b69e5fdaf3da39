#include <cmath>
#include <vector>

#include "doctest.h"
#include "pkt/core/errors.hpp"
#include "pkt/core/grad_check.hpp"
#include "pkt/core/graph.hpp"
#include "pkt/core/random.hpp"

using namespace pkt;

namespace {

Array random_array(Rng& rng, Shape shape, double scale = 1.0) {
    Array a(std::move(shape));
    for (double& v : a.data()) v = scale * rng.normal();
    return a;
}

// Collapses any output to a scalar with fixed random weights so every
// output element contributes a distinct gradient.
Var weighted_sum(Graph& g, Var out, std::uint64_t seed) {
    Rng rng(seed);
    Var w = g.leaf(random_array(rng, g.value(out).shape()));
    return g.sum(g.mul(out, w));
}

}  // namespace

TEST_CASE("forward examples") {
    Graph g;
    Var a = g.leaf(Array({2, 2}, {1, 2, 3, 4}));
    Var eye = g.leaf(Array({2, 2}, {1, 0, 0, 1}));
    CHECK(g.value(g.matmul(a, eye)).bit_equal(g.value(a)));

    Var z = g.leaf(Array({1, 2}, {0, 0}));
    const Array& s = g.value(g.softmax(z));
    CHECK(s[0] == 0.5);
    CHECK(s[1] == 0.5);

    Var c = g.leaf(Array({1, 4}, {3, 3, 3, 3}));
    Var gamma = g.leaf(Array({4}, 1.0));
    Var beta = g.leaf(Array({4}, 0.0));
    for (double v : g.value(g.layer_norm(c, gamma, beta)).data()) CHECK(v == 0.0);
}

TEST_CASE("shape mismatch names both shapes") {
    Graph g;
    Var a = g.leaf(Array({2, 3}));
    Var b = g.leaf(Array({2, 3}));
    try {
        g.matmul(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
        CHECK(msg.find("and [2x3]") != std::string::npos);
    }
    CHECK_THROWS_AS(g.add(a, g.leaf(Array({3, 2}))), ShapeError);
}

TEST_CASE("backward basics") {
    Graph g;
    Var x = g.leaf(Array::scalar(3.0), true);
    Var p = g.leaf(Array({2}, {1.0, -2.0}), true);
    Var loss = g.sum(g.mul(x, x));
    g.backward(loss);
    CHECK(g.grad(x)[0] == 6.0);
    // p never feeds the loss.
    CHECK(g.grad(p)[0] == 0.0);
    CHECK(g.grad(p)[1] == 0.0);

    Var vec = g.add(p, p);
    CHECK_THROWS_AS(g.backward(vec), ShapeError);
}

TEST_CASE("frozen leaves receive no gradient work") {
    Graph g;
    Var w = g.leaf(Array({2, 2}, {1, 2, 3, 4}), false);
    Var x = g.leaf(Array({1, 2}, {1, 1}), true);
    Var loss = g.sum(g.matmul(x, w));
    g.backward(loss);
    CHECK_FALSE(g.requires_grad(w));
    for (double v : g.grad(w).data()) CHECK(v == 0.0);
    CHECK(g.grad(x)[0] == 3.0);
    CHECK(g.grad(x)[1] == 7.0);
}

TEST_CASE("every differentiable op matches central differences") {
    Rng rng(2024);
    std::vector<Array> store;
    auto check_op = [&](const char* name, std::vector<Shape> shapes, auto build) {
        CAPTURE(name);
        std::vector<Array> params;
        for (auto& s : shapes) params.push_back(random_array(rng, s, 0.8));
        std::vector<Array*> ptrs;
        for (auto& p : params) ptrs.push_back(&p);
        auto result = grad_check(
            [&](Graph& g, std::span<const Var> v) { return weighted_sum(g, build(g, v), 99); }, ptrs, 1e-5);
        CHECK(result.max_rel_error < 1e-4);
    };
    check_op("matmul", {{3, 4}, {4, 5}}, [](Graph& g, auto v) { return g.matmul(v[0], v[1]); });
    check_op("matmul_nt", {{3, 4}, {5, 4}}, [](Graph& g, auto v) { return g.matmul_nt(v[0], v[1]); });
    check_op("add", {{3, 4}, {3, 4}}, [](Graph& g, auto v) { return g.add(v[0], v[1]); });
    check_op("add_bias", {{3, 4}, {4}}, [](Graph& g, auto v) { return g.add_bias(v[0], v[1]); });
    check_op("mul", {{3, 4}, {3, 4}}, [](Graph& g, auto v) { return g.mul(v[0], v[1]); });
    check_op("scale", {{3, 4}}, [](Graph& g, auto v) { return g.scale(v[0], -1.7); });
    check_op("tanh", {{3, 4}}, [](Graph& g, auto v) { return g.tanh(v[0]); });
    check_op("gelu", {{3, 4}}, [](Graph& g, auto v) { return g.gelu(v[0]); });
    check_op("softmax", {{3, 6}}, [](Graph& g, auto v) { return g.softmax(v[0]); });
    check_op("causal softmax", {{3, 6}}, [](Graph& g, auto v) { return g.softmax(v[0], 2); });
    check_op("layer_norm", {{3, 6}, {6}, {6}}, [](Graph& g, auto v) { return g.layer_norm(v[0], v[1], v[2]); });
    check_op("embedding", {{5, 3}}, [](Graph& g, auto v) {
        const std::vector<int> ids{4, 0, 4, 2};
        return g.embedding(v[0], ids);
    });
    check_op("slice_rows", {{5, 3}}, [](Graph& g, auto v) { return g.slice_rows(v[0], 1, 3); });
    check_op("slice_cols", {{5, 6}}, [](Graph& g, auto v) { return g.slice_cols(v[0], 2, 3); });
    check_op("concat_rows", {{2, 3}, {4, 3}}, [](Graph& g, auto v) { return g.concat_rows(v[0], v[1]); });
    check_op("concat_cols", {{2, 3}, {2, 1}, {2, 2}}, [](Graph& g, auto v) {
        std::vector<Var> parts(v.begin(), v.end());
        return g.concat_cols(parts);
    });
    check_op("cross_entropy", {{4, 7}}, [](Graph& g, auto v) {
        const std::vector<int> targets{3, -1, 0, 6};
        return g.cross_entropy(v[0], targets);
    });
}

namespace {

// Two-layer tanh network with a squared-error head.
Var two_layer_net(Graph& g, std::span<const Var> p, const Array& input) {
    Var x = g.leaf(input);
    Var h = g.tanh(g.add_bias(g.matmul(x, p[0]), p[1]));
    Var y = g.add_bias(g.matmul(h, p[2]), p[3]);
    return g.sum(g.mul(y, y));
}

}  // namespace

TEST_CASE("random two-layer net gradients match finite differences to 1e-6") {
    Rng rng(5);
    Array input = random_array(rng, {4, 3});
    std::vector<Array> params{random_array(rng, {3, 6}, 0.5), random_array(rng, {6}, 0.5),
                              random_array(rng, {6, 2}, 0.5), random_array(rng, {2}, 0.5)};
    std::vector<Array*> ptrs;
    for (auto& p : params) ptrs.push_back(&p);
    auto result = grad_check([&](Graph& g, std::span<const Var> v) { return two_layer_net(g, v, input); }, ptrs, 1e-5);
    CHECK(result.max_rel_error < 1e-6);
    CHECK(result.evaluations == 2 * (18 + 6 + 12 + 2));
}

TEST_CASE("backward is deterministic and does not leak accumulation") {
    Rng rng(8);
    Array input = random_array(rng, {4, 3});
    std::vector<Array> params{random_array(rng, {3, 6}), random_array(rng, {6}), random_array(rng, {6, 2}),
                              random_array(rng, {2})};
    auto grads_of = [&](Graph& g, Var loss, std::vector<Var>& vars) {
        g.backward(loss);
        std::vector<Array> out;
        for (Var v : vars) out.push_back(g.grad(v));
        return out;
    };
    Graph g1;
    std::vector<Var> v1;
    for (auto& p : params) v1.push_back(g1.borrow(p, true));
    Var l1 = two_layer_net(g1, v1, input);
    const auto first = grads_of(g1, l1, v1);
    const auto again = grads_of(g1, l1, v1);
    g1.zero_grad();
    const auto after_zero = grads_of(g1, l1, v1);

    Graph g2;
    std::vector<Var> v2;
    for (auto& p : params) v2.push_back(g2.borrow(p, true));
    const auto fresh = grads_of(g2, two_layer_net(g2, v2, input), v2);
    for (std::size_t i = 0; i < params.size(); ++i) {
        CHECK(first[i].bit_equal(again[i]));
        CHECK(first[i].bit_equal(after_zero[i]));
        CHECK(first[i].bit_equal(fresh[i]));
    }
}

TEST_CASE("grad_check examples") {
    Rng rng(1);
    Array a = random_array(rng, {3, 3});
    Array x = random_array(rng, {3, 1});
    std::vector<Array*> ptrs{&x};
    auto quad = grad_check(
        [&](Graph& g, std::span<const Var> v) {
            Var av = g.leaf(a);
            return g.sum(g.mul(v[0], g.matmul(av, v[0])));
        },
        ptrs, 1e-5);
    CHECK(quad.max_rel_error < 1e-8);

    auto constant = grad_check([&](Graph& g, std::span<const Var>) { return g.leaf(Array::scalar(4.0)); }, ptrs, 1e-5);
    CHECK(constant.max_rel_error == 0.0);

    CHECK_THROWS_AS(grad_check([&](Graph& g, std::span<const Var> v) { return g.sum(v[0]); }, ptrs, 0.0),
                    std::invalid_argument);

    // sqrt(x) evaluated at x - h < 0 goes non-finite and must be reported.
    Array tiny({1}, {1e-7});
    std::vector<Array*> tp{&tiny};
    CHECK_THROWS_AS(grad_check(
                        [](Graph& g, std::span<const Var> v) {
                            Var root = g.leaf(Array::scalar(std::sqrt(g.value(v[0])[0])));
                            return g.add(g.sum(v[0]), root);
                        },
                        tp, 1e-6),
                    NumericError);
}
