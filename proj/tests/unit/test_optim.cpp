#include <cmath>

#include "doctest.h"
#include "pkt/core/errors.hpp"
#include "pkt/optim/optimizer.hpp"

using namespace pkt;
using namespace pkt::optim;

TEST_CASE("sgd step is p - lr g") {
    Array p({2}, {1.0, -2.0});
    std::vector<NamedArray> params = {{"p", &p}};
    std::vector<Array> grads = {Array({2}, {0.5, 4.0})};
    sgd_step(params, grads, 0.1);
    CHECK(p[0] == doctest::Approx(0.95));
    CHECK(p[1] == doctest::Approx(-2.4));
}

TEST_CASE("optimizer rejects bad gradients without touching parameters") {
    Array p({2}, {1.0, 2.0});
    Array q({3}, {1.0, 2.0, 3.0});
    std::vector<NamedArray> params = {{"p", &p}, {"q", &q}};
    std::vector<Array> bad_shape = {Array({2}), Array({2})};
    try {
        sgd_step(params, bad_shape, 0.1);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("q") != std::string::npos);
    }
    std::vector<Array> non_finite = {Array({2}, {1.0, 1.0}), Array({3}, {0.0, NAN, 0.0})};
    CHECK_THROWS_AS(sgd_step(params, non_finite, 0.1), NumericError);
    CHECK(p[0] == 1.0);
    AdamW opt({}, params);
    CHECK_THROWS_AS(opt.step(params, non_finite, 0.1), NumericError);
    CHECK(opt.step_count() == 0);
    CHECK(p[0] == 1.0);
}

TEST_CASE("adamw first step moves by lr against the gradient") {
    Array p({3}, {1.0, 1.0, 1.0});
    std::vector<NamedArray> params = {{"p", &p}};
    AdamW opt({.beta1 = 0.9, .beta2 = 0.999, .eps = 1e-8, .weight_decay = 0.0}, params);
    std::vector<Array> grads = {Array({3}, {1.0, -3.0, 0.0})};
    opt.step(params, grads, 0.01);
    CHECK(p[0] == doctest::Approx(0.99).epsilon(1e-9));
    CHECK(p[1] == doctest::Approx(1.01).epsilon(1e-9));
    CHECK(p[2] == 1.0);
    CHECK(opt.step_count() == 1);
}

TEST_CASE("adamw with zero betas is sign descent") {
    Array p({2}, {0.0, 0.0});
    std::vector<NamedArray> params = {{"p", &p}};
    AdamW opt({.beta1 = 0.0, .beta2 = 0.0, .eps = 0.0, .weight_decay = 0.0}, params);
    std::vector<Array> grads = {Array({2}, {0.001, -50.0})};
    for (int i = 0; i < 3; ++i) opt.step(params, grads, 0.5);
    CHECK(p[0] == doctest::Approx(-1.5));
    CHECK(p[1] == doctest::Approx(1.5));
}

TEST_CASE("adamw weight decay shrinks parameters with zero gradient") {
    Array p({1}, {2.0});
    std::vector<NamedArray> params = {{"p", &p}};
    AdamW opt({.weight_decay = 0.1}, params);
    std::vector<Array> grads = {Array({1}, {0.0})};
    opt.step(params, grads, 0.5);
    CHECK(p[0] == doctest::Approx(2.0 * (1.0 - 0.05)));
}

TEST_CASE("linear schedule warmup and decay") {
    const LinearSchedule s{1.0, 100, 10};
    CHECK(s.rate(0) == 0.0);
    CHECK(s.rate(5) == doctest::Approx(0.5));
    CHECK(s.rate(10) == 1.0);
    CHECK(s.rate(55) == doctest::Approx(0.5));
    CHECK(s.rate(100) == 0.0);
    CHECK(s.rate(1000) == 0.0);
    const LinearSchedule flat{2.0, 4, 0};
    CHECK(flat.rate(0) == 2.0);
    CHECK(flat.rate(2) == 1.0);
}

TEST_CASE("gradient clipping") {
    std::vector<Array> g = {Array({2}, {3.0, 0.0}), Array({1}, {4.0})};
    CHECK(clip_grad_norm(g, 0.0) == doctest::Approx(5.0));
    CHECK(g[0][0] == 3.0);
    CHECK(clip_grad_norm(g, 1.0) == doctest::Approx(5.0));
    CHECK(g[0][0] == doctest::Approx(0.6));
    CHECK(g[1][0] == doctest::Approx(0.8));
    CHECK(clip_grad_norm(g, 10.0) == doctest::Approx(1.0));
}
