#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "wlft/autodiff.hpp"
#include "wlft/errors.hpp"
#include "wlft/nn_ops.hpp"
#include "wlft/optimizer.hpp"
#include "wlft/rng.hpp"

using namespace wlft;
using oracle::random_tensor;

using D = double;
using VarD = Var<double>;

TEST_CASE("tensor basics") {
    Tensor<float> t({2, 3});
    CHECK(t.numel() == 6);
    CHECK(t.rank() == 2);
    for (float v : t.data) CHECK(v == 0.0f);
    CHECK_THROWS_AS(Tensor<float>::from({2, 2}, {1.0f}), std::invalid_argument);
    Tensor<float> r4({1, 2, 3, 4});
    r4.at(0, 1, 2, 3) = 7.0f;
    CHECK(r4.data.back() == 7.0f);
}

TEST_CASE("conv2d identity kernel") {
    Rng rng(11);
    auto x = VarD::leaf(random_tensor({2, 3, 5, 5}, rng));
    Tensor<D> w({3, 3, 1, 1});
    for (int f = 0; f < 3; ++f) w.at(f, f, 0, 0) = 1.0;  // per-channel identity
    auto wv = VarD::constant(std::move(w));
    auto bv = VarD::constant(Tensor<D>({3}));
    auto y = conv2d(x, wv, bv, 1, Padding::kZero, 0, 0);
    CHECK(oracle::max_abs_diff(y.value(), x.value()) == 0.0);
}

TEST_CASE("conv2d constant field all-ones 3x3 kernel") {
    const double c = 0.7;
    auto x = VarD::constant(Tensor<D>::full({1, 1, 6, 6}, c));
    auto w = VarD::constant(Tensor<D>::full({1, 1, 3, 3}, 1.0));
    auto b = VarD::constant(Tensor<D>({1}));
    auto y = conv2d(x, w, b, 1, Padding::kZero, 1, 1);
    CHECK(y.shape() == Shape{1, 1, 6, 6});
    // interior elements see the full 3x3 window
    for (int i = 1; i < 5; ++i)
        for (int j = 1; j < 5; ++j) CHECK(y.value().at(0, 0, i, j) == doctest::Approx(9 * c));
    // a corner sees only 4 in-bounds taps under zero padding
    CHECK(y.value().at(0, 0, 0, 0) == doctest::Approx(4 * c));
}

TEST_CASE("conv2d matches naive reference exactly at 64-bit") {
    Rng rng(17);
    struct Case {
        Shape xs, ws;
        int stride, ph, pw;
        bool reflect;
    };
    const Case cases[] = {
        {{2, 3, 7, 9}, {4, 3, 3, 3}, 1, 1, 1, false},
        {{1, 2, 8, 8}, {3, 2, 3, 3}, 2, 1, 1, false},
        {{2, 1, 9, 7}, {2, 1, 5, 5}, 1, 2, 2, true},
        {{1, 4, 6, 6}, {4, 4, 1, 1}, 1, 0, 0, false},
        {{2, 2, 11, 5}, {1, 2, 3, 1}, 2, 1, 0, false},
    };
    for (const Case& cs : cases) {
        auto x = VarD::constant(random_tensor(cs.xs, rng));
        auto w = VarD::constant(random_tensor(cs.ws, rng));
        auto b = VarD::constant(random_tensor({cs.ws[0]}, rng));
        auto y = conv2d(x, w, b, cs.stride, cs.reflect ? Padding::kReflect : Padding::kZero,
                        cs.ph, cs.pw);
        auto ref = oracle::naive_conv2d(x.value(), w.value(), b.value(), cs.stride, cs.ph, cs.pw,
                                        cs.reflect);
        REQUIRE(y.shape() == ref.shape);
        for (std::size_t i = 0; i < ref.data.size(); ++i) CHECK(y.value().data[i] == ref.data[i]);
    }
}

TEST_CASE("conv2d gradients vs finite differences") {
    Rng rng(23);
    auto x = VarD::leaf(random_tensor({2, 1, 5, 5}, rng), true);
    auto w = VarD::leaf(random_tensor({3, 1, 3, 3}, rng), true);
    auto b = VarD::leaf(random_tensor({3}, rng), true);
    oracle::expect_grads_match({x, w, b}, [&] {
        return sum(tanh_act(conv2d(x, w, b, 1, Padding::kZero, 1, 1)));
    });
    SUBCASE("stride 2 with reflect padding") {
        oracle::expect_grads_match({x, w, b}, [&] {
            return sum(tanh_act(conv2d(x, w, b, 2, Padding::kReflect, 1, 1)));
        });
    }
}

TEST_CASE("conv2d input validation") {
    auto x = VarD::constant(Tensor<D>({1, 1, 4, 4}));
    auto w = VarD::constant(Tensor<D>({1, 1, 2, 2}));
    auto w2 = VarD::constant(Tensor<D>({1, 2, 3, 3}));
    auto b = VarD::constant(Tensor<D>({1}));
    CHECK_THROWS_AS(conv2d(x, w, b, 1, Padding::kZero, 0, 0), std::invalid_argument);   // even kernel
    CHECK_THROWS_AS(conv2d(x, w2, b, 1, Padding::kZero, 0, 0), std::invalid_argument);  // channel mismatch
    auto w3 = VarD::constant(Tensor<D>({1, 1, 3, 3}));
    CHECK_THROWS_AS(conv2d(x, w3, b, 0, Padding::kZero, 0, 0), std::invalid_argument);  // stride < 1
}

TEST_CASE("linear trivial cases and naive reference") {
    Rng rng(29);
    SUBCASE("identity weight") {
        auto x = VarD::constant(random_tensor({3, 4}, rng));
        Tensor<D> w({4, 4});
        for (int i = 0; i < 4; ++i) w.at(i, i) = 1.0;
        auto y = linear(x, VarD::constant(std::move(w)), VarD::constant(Tensor<D>({4})));
        CHECK(oracle::max_abs_diff(y.value(), x.value()) == 0.0);
    }
    SUBCASE("zero weight gives bias rows") {
        auto x = VarD::constant(random_tensor({3, 4}, rng));
        auto b = random_tensor({2}, rng);
        auto y = linear(x, VarD::constant(Tensor<D>({2, 4})), VarD::constant(b));
        for (int n = 0; n < 3; ++n)
            for (int k = 0; k < 2; ++k) CHECK(y.value().at(n, k) == b.data[static_cast<std::size_t>(k)]);
    }
    SUBCASE("naive reference exact") {
        auto x = VarD::constant(random_tensor({4, 7}, rng));
        auto w = VarD::constant(random_tensor({5, 7}, rng));
        auto b = VarD::constant(random_tensor({5}, rng));
        auto y = linear(x, w, b);
        auto ref = oracle::naive_linear(x.value(), w.value(), b.value());
        for (std::size_t i = 0; i < ref.data.size(); ++i) CHECK(y.value().data[i] == ref.data[i]);
    }
    SUBCASE("dimension mismatch") {
        auto x = VarD::constant(Tensor<D>({2, 3}));
        auto w = VarD::constant(Tensor<D>({4, 5}));
        auto b = VarD::constant(Tensor<D>({4}));
        CHECK_THROWS_AS(linear(x, w, b), std::invalid_argument);
    }
}

TEST_CASE("linear gradients vs finite differences") {
    Rng rng(31);
    auto x = VarD::leaf(random_tensor({3, 5}, rng), true);
    auto w = VarD::leaf(random_tensor({4, 5}, rng), true);
    auto b = VarD::leaf(random_tensor({4}, rng), true);
    oracle::expect_grads_match({x, w, b}, [&] { return sum(tanh_act(linear(x, w, b))); });
}

TEST_CASE("activations") {
    auto x = VarD::constant(Tensor<D>::from({3}, {-1.0, 0.0, 2.0}));
    auto r = relu(x);
    CHECK(r.value().data == std::vector<D>{0.0, 0.0, 2.0});
    auto t = tanh_act(VarD::constant(Tensor<D>::from({1}, {0.0})));
    CHECK(t.value().data[0] == 0.0);

    Rng rng(37);
    auto y = VarD::leaf(random_tensor({2, 3, 4, 4}, rng), true);
    oracle::expect_grads_match({y}, [&] { return sum(mul(tanh_act(y), tanh_act(y))); });
    // keep inputs away from the relu kink so the difference quotient is valid
    auto z = VarD::leaf(random_tensor({40}, rng), true);
    for (double& v : z.value().data)
        if (std::abs(v) < 1e-3) v = 0.5;
    oracle::expect_grads_match({z}, [&] { return sum(mul(relu(z), relu(z))); });
}

TEST_CASE("batchnorm2d forward semantics") {
    SUBCASE("constant channel in train mode returns shift") {
        auto x = VarD::constant(Tensor<D>::full({2, 1, 3, 3}, 5.0));
        auto gamma = VarD::constant(Tensor<D>::full({1}, 2.0));
        auto beta = VarD::constant(Tensor<D>::full({1}, 0.25));
        Tensor<D> rm({1}), rv = Tensor<D>::full({1}, 1.0);
        auto y = batchnorm2d(x, gamma, beta, rm, rv, true);
        for (D v : y.value().data) CHECK(v == doctest::Approx(0.25));
        CHECK(rm.data[0] == doctest::Approx(0.5));  // 0.9*0 + 0.1*5
    }
    SUBCASE("eval mode with unit stats is the identity") {
        Rng rng(41);
        auto x = VarD::constant(random_tensor({2, 3, 4, 4}, rng));
        auto gamma = VarD::constant(Tensor<D>::full({3}, 1.0));
        auto beta = VarD::constant(Tensor<D>({3}));
        Tensor<D> rm({3}), rv = Tensor<D>::full({3}, 1.0);
        auto y = batchnorm2d(x, gamma, beta, rm, rv, false, 0.0);
        CHECK(oracle::max_abs_diff(y.value(), x.value()) < 1e-15);
    }
    SUBCASE("running stats use unbiased variance") {
        // channel values {1, 3}: mean 2, biased var 1, unbiased var 2
        auto x = VarD::constant(Tensor<D>::from({1, 1, 1, 2}, {1.0, 3.0}));
        auto gamma = VarD::constant(Tensor<D>::full({1}, 1.0));
        auto beta = VarD::constant(Tensor<D>({1}));
        Tensor<D> rm({1}), rv({1});
        batchnorm2d(x, gamma, beta, rm, rv, true);
        CHECK(rm.data[0] == doctest::Approx(0.2));
        CHECK(rv.data[0] == doctest::Approx(0.2));
    }
    SUBCASE("train mode rejects a single element per channel") {
        auto x = VarD::constant(Tensor<D>::full({1, 2, 1, 1}, 1.0));
        auto gamma = VarD::constant(Tensor<D>::full({2}, 1.0));
        auto beta = VarD::constant(Tensor<D>({2}));
        Tensor<D> rm({2}), rv({2});
        CHECK_THROWS_AS(batchnorm2d(x, gamma, beta, rm, rv, true), std::invalid_argument);
    }
}

TEST_CASE("batchnorm2d gradients vs finite differences") {
    Rng rng(43);
    auto x = VarD::leaf(random_tensor({3, 2, 4, 4}, rng), true);
    auto gamma = VarD::leaf(random_tensor({2}, rng, 0.5, 1.5), true);
    auto beta = VarD::leaf(random_tensor({2}, rng), true);
    Tensor<D> rm({2}), rv = Tensor<D>::full({2}, 1.0);
    SUBCASE("train mode") {
        oracle::expect_grads_match({x, gamma, beta}, [&] {
            return sum(tanh_act(batchnorm2d(x, gamma, beta, rm, rv, true)));
        }, 1e-3);
    }
    SUBCASE("eval mode") {
        rm = random_tensor({2}, rng);
        rv = random_tensor({2}, rng, 0.5, 2.0);
        oracle::expect_grads_match({x, gamma, beta}, [&] {
            return sum(tanh_act(batchnorm2d(x, gamma, beta, rm, rv, false)));
        }, 1e-3);
    }
}

TEST_CASE("maxpool2d semantics") {
    SUBCASE("monotone ramp picks strided maxima") {
        Tensor<D> x({1, 1, 4, 4});
        for (int i = 0; i < 16; ++i) x.data[static_cast<std::size_t>(i)] = i;
        auto y = maxpool2d(VarD::constant(std::move(x)), 3, 2, 1);
        CHECK(y.shape() == Shape{1, 1, 2, 2});
        CHECK(y.value().data == std::vector<D>{5, 7, 13, 15});
    }
    SUBCASE("ties route gradient to the first maximum in row-major order") {
        auto x = VarD::leaf(Tensor<D>::full({1, 1, 2, 2}, 1.0), true);
        auto y = maxpool2d(x, 3, 2, 1);  // single window covering the whole plane
        backward(sum(y));
        CHECK(x.grad().data == std::vector<D>{1, 0, 0, 0});
    }
    SUBCASE("gradients vs finite differences") {
        Rng rng(47);
        auto x = VarD::leaf(random_tensor({2, 2, 6, 6}, rng), true);
        oracle::expect_grads_match({x}, [&] {
            return sum(mul(maxpool2d(x, 3, 2, 1), maxpool2d(x, 3, 2, 1)));
        });
    }
}

TEST_CASE("global_avg_pool") {
    auto c = VarD::constant(Tensor<D>::full({2, 3, 5, 5}, 0.4));
    auto y = global_avg_pool(c);
    CHECK(y.shape() == Shape{2, 3});
    for (D v : y.value().data) CHECK(v == doctest::Approx(0.4));

    Rng rng(53);
    auto x = VarD::leaf(random_tensor({2, 3, 4, 4}, rng), true);
    oracle::expect_grads_match({x}, [&] { return sum(tanh_act(global_avg_pool(x))); });
}

TEST_CASE("softmax_cross_entropy") {
    SUBCASE("uniform logits over two classes give ln 2") {
        auto logits = VarD::constant(Tensor<D>({4, 2}));
        auto loss = softmax_cross_entropy(logits, {0, 1, 0, 1});
        CHECK(loss.value().data[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    }
    SUBCASE("confident correct logits drive loss to zero") {
        auto logits = VarD::constant(Tensor<D>::from({1, 3}, {20.0, 0.0, 0.0}));
        auto loss = softmax_cross_entropy(logits, {0});
        CHECK(loss.value().data[0] < 1e-8);
    }
    SUBCASE("stable under large logits") {
        auto logits = VarD::constant(Tensor<D>::from({1, 2}, {1000.0, 999.0}));
        auto loss = softmax_cross_entropy(logits, {0});
        CHECK(std::isfinite(loss.value().data[0]));
        CHECK(loss.value().data[0] == doctest::Approx(std::log(1.0 + std::exp(-1.0))));
    }
    SUBCASE("label range is enforced") {
        auto logits = VarD::constant(Tensor<D>({2, 3}));
        CHECK_THROWS_AS(softmax_cross_entropy(logits, {0, 3}), std::invalid_argument);
        CHECK_THROWS_AS(softmax_cross_entropy(logits, {-1, 0}), std::invalid_argument);
    }
    SUBCASE("gradients vs finite differences") {
        Rng rng(59);
        auto logits = VarD::leaf(random_tensor({4, 5}, rng), true);
        oracle::expect_grads_match({logits}, [&] {
            return softmax_cross_entropy(logits, std::vector<int>{1, 0, 4, 2});
        }, 1e-5);
    }
}

TEST_CASE("backward semantics") {
    SUBCASE("sum gradient is all-ones") {
        auto t = VarD::leaf(Tensor<D>::full({2, 3}, 2.0), true);
        backward(sum(t));
        for (D v : t.grad().data) CHECK(v == 1.0);
    }
    SUBCASE("repeated backward accumulates into leaves") {
        auto t = VarD::leaf(Tensor<D>::full({4}, 1.0), true);
        auto loss = sum(mul(t, t));
        backward(loss);
        backward(loss);
        for (D v : t.grad().data) CHECK(v == 4.0);  // d/dt sum(t^2) = 2t = 2, doubled
    }
    SUBCASE("non-scalar loss is rejected") {
        auto t = VarD::leaf(Tensor<D>::full({2}, 1.0), true);
        CHECK_THROWS_AS(backward(add(t, t)), std::invalid_argument);
    }
    SUBCASE("shared subexpression gets both contributions") {
        auto t = VarD::leaf(Tensor<D>::full({1}, 3.0), true);
        auto sq = mul(t, t);
        backward(sum(add(sq, sq)));  // d/dt 2t^2 = 4t = 12
        CHECK(t.grad().data[0] == doctest::Approx(12.0));
    }
    SUBCASE("constants collect no gradient and record no parents") {
        auto c = VarD::constant(Tensor<D>::full({2}, 1.0));
        auto t = VarD::leaf(Tensor<D>::full({2}, 1.0), true);
        auto y = add(c, t);
        CHECK(y.requires_grad());
        auto y2 = add(c, c);
        CHECK_FALSE(y2.requires_grad());
        CHECK(y2.node->parents.empty());
    }
}

TEST_CASE("non-finite op outputs are hard errors") {
    auto big = VarD::constant(Tensor<D>::full({1}, 1e308));
    CHECK_THROWS_AS(mul(big, big), NumericError);
}

TEST_CASE("forward passes are deterministic") {
    Rng rng(61);
    auto x = random_tensor({2, 2, 6, 6}, rng);
    auto w = random_tensor({3, 2, 3, 3}, rng);
    auto b = random_tensor({3}, rng);
    auto run = [&] {
        return conv2d(VarD::constant(x), VarD::constant(w), VarD::constant(b), 1,
                      Padding::kReflect, 1, 1).value();
    };
    auto a0 = run();
    auto a1 = run();
    CHECK(a0.data == a1.data);
}

TEST_CASE("sgd_step") {
    SUBCASE("plain step without momentum") {
        Parameter<D> p("w", Tensor<D>::full({1}, 1.0));
        p.grad().data[0] = 1.0;
        std::vector<Parameter<D>*> ps{&p};
        sgd_step(ps, 0.1, 0.0);
        CHECK(p.tensor().data[0] == doctest::Approx(0.9));
    }
    SUBCASE("momentum recurrence unrolled over two steps") {
        Parameter<D> p("w", Tensor<D>::full({1}, 1.0));
        std::vector<Parameter<D>*> ps{&p};
        p.grad().data[0] = 1.0;
        sgd_step(ps, 0.1, 0.9);  // buf=1, p=0.9
        p.grad().data[0] = 1.0;
        sgd_step(ps, 0.1, 0.9);  // buf=1.9, p=0.9-0.19
        CHECK(p.tensor().data[0] == doctest::Approx(1.0 - 0.29));
    }
    SUBCASE("zero grad and zero buffer leave the parameter unchanged") {
        Parameter<D> p("w", Tensor<D>::full({3}, 2.0));
        std::vector<Parameter<D>*> ps{&p};
        zero_grad(ps);
        sgd_step(ps, 0.1, 0.9);
        for (D v : p.tensor().data) CHECK(v == 2.0);
    }
    SUBCASE("learning rate must be positive") {
        Parameter<D> p("w", Tensor<D>::full({1}, 1.0));
        std::vector<Parameter<D>*> ps{&p};
        CHECK_THROWS_AS(sgd_step(ps, 0.0, 0.9), std::invalid_argument);
        CHECK_THROWS_AS(sgd_step(ps, -1.0, 0.9), std::invalid_argument);
    }
    SUBCASE("grads are left untouched for the caller to zero") {
        Parameter<D> p("w", Tensor<D>::full({1}, 1.0));
        p.grad().data[0] = 2.0;
        std::vector<Parameter<D>*> ps{&p};
        sgd_step(ps, 0.1, 0.9);
        CHECK(p.grad().data[0] == 2.0);
    }
}

TEST_CASE("composite pipeline gradient check") {
    // conv -> bn -> relu -> pool -> linear -> cross-entropy, all parameters at once
    Rng rng(67);
    auto x = VarD::leaf(random_tensor({2, 1, 8, 8}, rng), true);
    auto w = VarD::leaf(random_tensor({4, 1, 3, 3}, rng, -0.5, 0.5), true);
    auto b = VarD::leaf(random_tensor({4}, rng, -0.1, 0.1), true);
    auto gamma = VarD::leaf(random_tensor({4}, rng, 0.8, 1.2), true);
    auto beta = VarD::leaf(random_tensor({4}, rng, -0.1, 0.1), true);
    auto fw = VarD::leaf(random_tensor({3, 4}, rng, -0.5, 0.5), true);
    auto fb = VarD::leaf(random_tensor({3}, rng, -0.1, 0.1), true);
    Tensor<D> rm({4}), rv = Tensor<D>::full({4}, 1.0);
    std::vector<int> labels{2, 0};
    oracle::expect_grads_match({x, w, b, gamma, beta, fw, fb}, [&] {
        auto h = conv2d(x, w, b, 1, Padding::kZero, 1, 1);
        h = batchnorm2d(h, gamma, beta, rm, rv, true);
        h = relu(h);
        auto pooled = global_avg_pool(h);
        return softmax_cross_entropy(linear(pooled, fw, fb), labels);
    }, 1e-3);
}
