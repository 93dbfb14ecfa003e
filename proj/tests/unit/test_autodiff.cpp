#include <doctest.h>

#include <cmath>

#include "tapnet/autodiff.hpp"
#include "tapnet/errors.hpp"
#include "test_util.hpp"

using namespace tapnet;

TEST_CASE("backward of a sum of squares") {
    Tensor w({2}, {1.0, -2.0});
    w.enable_grad();
    Tape tape;
    Var loss = tape.sum_all(tape.square(tape.param(w)));
    tape.backward(loss);
    CHECK(w.grad()[0] == doctest::Approx(2.0));
    CHECK(w.grad()[1] == doctest::Approx(-4.0));
}

TEST_CASE("relu subgradient at and below zero is zero") {
    Tensor w({1}, {-1.0});
    w.enable_grad();
    Tape tape;
    Var loss = tape.sum_all(tape.relu(tape.param(w)));
    tape.backward(loss);
    CHECK(w.grad()[0] == 0.0);

    Tensor z({1}, {0.0});
    z.enable_grad();
    Tape tape2;
    Var loss2 = tape2.sum_all(tape2.relu(tape2.param(z)));
    tape2.backward(loss2);
    CHECK(z.grad()[0] == 0.0);
}

TEST_CASE("backward before any forward is a state error") {
    Tape tape;
    CHECK_THROWS_AS(tape.backward(Var{}), StateError);
    CHECK_THROWS_AS(tape.backward(Var{5}), StateError);
}

TEST_CASE("backward requires a scalar loss") {
    Tensor w({2}, {1.0, 2.0});
    w.enable_grad();
    Tape tape;
    Var v = tape.param(w);
    CHECK_THROWS_AS(tape.backward(v), ShapeError);
}

TEST_CASE("non-participating parameters keep a zero gradient") {
    Tensor used({2}, {1.0, 2.0});
    Tensor unused({2}, {3.0, 4.0});
    used.enable_grad();
    unused.enable_grad();
    Tape tape;
    tape.param(unused); // registered but not reachable from the loss
    Var loss = tape.sum_all(tape.param(used));
    tape.backward(loss);
    CHECK(used.grad()[0] == 1.0);
    CHECK(unused.grad()[0] == 0.0);
    CHECK(unused.grad()[1] == 0.0);
}

TEST_CASE("gradient accumulation is linear") {
    auto loss_pair = [](Tensor& w, Tape& tape) {
        Var p = tape.param(w);
        Var l1 = tape.sum_all(tape.square(p));
        Var l2 = tape.sum_all(tape.mul(p, p));
        return std::pair{l1, l2};
    };

    Tensor w({3}, {0.5, -1.5, 2.0});
    w.enable_grad();

    // separate backwards, same tape
    Tape tape;
    auto [l1, l2] = loss_pair(w, tape);
    tape.backward(l1);
    tape.backward(l2);
    const std::vector<double> separate = w.grad();

    w.zero_grad();
    Tape tape2;
    auto [m1, m2] = loss_pair(w, tape2);
    tape2.backward(tape2.add(m1, m2));
    const std::vector<double> combined = w.grad();

    for (std::size_t i = 0; i < separate.size(); ++i)
        CHECK(separate[i] == doctest::Approx(combined[i]).epsilon(1e-12));
}

TEST_CASE("shape errors on mismatched operands") {
    Tape tape;
    Var a = tape.constant(Tensor({2, 3}));
    Var b = tape.constant(Tensor({2, 2}));
    CHECK_THROWS_AS(tape.add(a, b), ShapeError);
    CHECK_THROWS_AS(tape.matmul(a, a), ShapeError);
    CHECK_THROWS_AS(tape.pairwise_sqdist(a, b), ShapeError);
    CHECK_THROWS_AS(tape.select_cols(a, {0, 1, 2}), ShapeError);
}

TEST_CASE("logsumexp is stable and matches the naive form") {
    Tape tape;
    Tensor x({1, 3}, {1000.0, 999.0, 998.0});
    Var lse = tape.logsumexp_rows(tape.constant(x));
    const double naive_shifted = 1000.0 + std::log(1.0 + std::exp(-1.0) + std::exp(-2.0));
    CHECK(tape.value(lse)[0] == doctest::Approx(naive_shifted).epsilon(1e-12));

    Tensor small({1, 2}, {0.3, -0.7});
    Var lse2 = tape.logsumexp_rows(tape.constant(small));
    CHECK(tape.value(lse2)[0] ==
          doctest::Approx(std::log(std::exp(0.3) + std::exp(-0.7))).epsilon(1e-12));
}

TEST_CASE("finite differences agree for every elementwise op") {
    Rng rng(42);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor w({4, 3});
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.normal();
        w.enable_grad();

        Tensor other({2, 3});
        for (std::size_t i = 0; i < other.size(); ++i) other[i] = rng.normal();

        enum class Op { Relu, Square, Sqrt, Scale, LogSumExp, Pairwise };
        for (Op op : {Op::Relu, Op::Square, Op::Sqrt, Op::Scale, Op::LogSumExp, Op::Pairwise}) {
            auto eval = [&](bool want_grad) {
                Tape tape(want_grad);
                Var p = want_grad ? tape.param(w) : tape.constant(w);
                Var y;
                switch (op) {
                    case Op::Relu: y = tape.relu(p); break;
                    case Op::Square: y = tape.square(p); break;
                    case Op::Sqrt: y = tape.sqrt_elem(tape.square(p)); break;
                    case Op::Scale: y = tape.scale(p, -2.5); break;
                    case Op::LogSumExp: y = tape.logsumexp_rows(p); break;
                    case Op::Pairwise: y = tape.pairwise_sqdist(p, tape.constant(other)); break;
                }
                Var loss = tape.mean_all(y);
                if (want_grad) tape.backward(loss);
                return tape.value(loss)[0];
            };
            w.zero_grad();
            eval(true);
            const auto analytic = w.grad();
            const auto numeric = testutil::finite_diff(w, [&] { return eval(false); });
            CHECK(testutil::grads_match(analytic, numeric));
        }
    }
}
