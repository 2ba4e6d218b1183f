#include "doctest.h"

#include <cmath>

#include "kgc/autodiff.hpp"
#include "kgc/gradcheck.hpp"
#include "kgc/random.hpp"

using namespace kgc;
using namespace kgc::ad;

namespace {

Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t(std::move(shape));
    for (auto& v : t.storage()) v = rng.uniform(lo, hi);
    return t;
}

// Reduce any output to a scalar with fixed random weights so every output
// component contributes a distinct gradient.
Var<double> weighted_sum(Var<double> y, Rng& rng) {
    Tape<double>& tape = *y.tape();
    auto w = tape.constant(random_tensor(y.shape(), rng));
    return sum(mul(y, w));
}

double check(ParameterStore<double>& params, const std::function<Var<double>(Tape<double>&)>& f) {
    auto expr = [&](Tape<double>& tape) {
        Rng rng(99);
        return weighted_sum(f(tape), rng);
    };
    return check_gradients(expr, params, 1e-6).max_rel_error;
}

}  // namespace

TEST_CASE("matmul with identity returns the operand") {
    Tape<double> tape;
    Rng rng(1);
    Tensor<double> x = random_tensor({3, 4}, rng);
    auto y = matmul(tape.constant(Tensor<double>::identity(3)), tape.constant(x));
    CHECK(y.value() == x);
}

TEST_CASE("sigmoid(0) is one half") {
    Tape<double> tape;
    CHECK(sigmoid(tape.constant(Tensor<double>::scalar(0.0))).value().item() == 0.5);
}

TEST_CASE("conv2d with a single unit 1x1 filter is the identity") {
    Tape<double> tape;
    Rng rng(2);
    Tensor<double> x = random_tensor({2, 1, 3, 5}, rng);
    auto y = conv2d(tape.constant(x), tape.constant(Tensor<double>({1, 1, 1, 1}, 1.0)));
    CHECK(y.value() == x);
}

TEST_CASE("backward of sum(x*x)") {
    ParameterStore<double> p;
    p.add("x", Tensor<double>({2}, std::vector<double>{1, 2}));
    Tape<double> tape;
    auto x = tape.param(p, "x");
    auto g = tape.backward(sum(mul(x, x)), p);
    CHECK(g.at("x")[0] == 2.0);
    CHECK(g.at("x")[1] == 4.0);
}

TEST_CASE("unreached parameter gets a zero gradient") {
    ParameterStore<double> p;
    p.add("x", Tensor<double>({2}, 1.0));
    p.add("unused", Tensor<double>({3}, 5.0));
    Tape<double> tape;
    auto g = tape.backward(sum(tape.param(p, "x")), p);
    REQUIRE(g.count("unused") == 1);
    CHECK(g.at("unused") == Tensor<double>({3}, 0.0));
}

TEST_CASE("sigmoid(w.x) gradient matches the closed form") {
    Rng rng(3);
    ParameterStore<double> p;
    p.add("w", random_tensor({1, 4}, rng));
    Tensor<double> x = random_tensor({4, 1}, rng);
    Tape<double> tape;
    auto s = sigmoid(matmul(tape.param(p, "w"), tape.constant(x)));
    auto g = tape.backward(sum(s), p);
    double z = 0;
    for (int i = 0; i < 4; ++i) z += p.get("w")[i] * x[i];
    const double sig = 1.0 / (1.0 + std::exp(-z));
    for (int i = 0; i < 4; ++i) CHECK(g.at("w")[i] == doctest::Approx(sig * (1 - sig) * x[i]).epsilon(1e-14));
}

TEST_CASE("non-scalar loss is a contract error") {
    ParameterStore<double> p;
    p.add("x", Tensor<double>({2}, 1.0));
    Tape<double> tape;
    CHECK_THROWS_AS(tape.backward(tape.param(p, "x"), p), ContractError);
}

TEST_CASE("shape mismatch names the primitive") {
    Tape<double> tape;
    auto a = tape.constant(Tensor<double>({2, 3}));
    auto b = tape.constant(Tensor<double>({2, 3}));
    try {
        matmul(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("matmul") != std::string::npos);
    }
    CHECK_THROWS_AS(add(a, tape.constant(Tensor<double>({3, 2}))), ShapeError);
}

TEST_CASE("non-finite output is a numeric error") {
    Tape<double> tape;
    auto a = tape.constant(Tensor<double>({2}, 1e200));
    CHECK_THROWS_AS(mul(a, a), NumericError);
}

TEST_CASE("gradient checker on a linear model") {
    Rng rng(4);
    ParameterStore<double> p;
    p.add("w", random_tensor({1, 4}, rng));
    Tensor<double> x = random_tensor({4, 1}, rng);
    auto expr = [&](Tape<double>& tape) { return sum(matmul(tape.param(p, "w"), tape.constant(x))); };
    CHECK(check_gradients(expr, p, 1e-5).max_rel_error < 1e-7);
}

TEST_CASE("gradient checker on a constant expression") {
    ParameterStore<double> p;
    p.add("w", Tensor<double>({3}, 0.5));
    auto expr = [&](Tape<double>& tape) {
        tape.param(p, "w");
        return tape.constant(Tensor<double>::scalar(4.0));
    };
    CHECK(check_gradients(expr, p, 1e-5).max_rel_error == 0.0);
}

TEST_CASE("gradient checker rejects eps outside its range") {
    ParameterStore<double> p;
    p.add("w", Tensor<double>({1}, 0.5));
    auto expr = [&](Tape<double>& tape) { return sum(tape.param(p, "w")); };
    CHECK_THROWS_AS(check_gradients(expr, p, 1e-3), ContractError);
    CHECK_THROWS_AS(check_gradients(expr, p, 1e-9), ContractError);
}

TEST_CASE("every primitive adjoint passes central differences") {
    Rng rng(5);
    ParameterStore<double> p;
    p.add("a", random_tensor({3, 4}, rng));
    p.add("b", random_tensor({3, 4}, rng));
    p.add("c", random_tensor({4, 2}, rng));
    p.add("v", random_tensor({6}, rng));
    p.add("u", random_tensor({6}, rng));
    p.add("img", random_tensor({2, 2, 4, 5}, rng));
    p.add("filt", random_tensor({3, 2, 2, 3}, rng));
    p.add("w", random_tensor({3}, rng));
    const double tol = 1e-6;
    auto A = [&](Tape<double>& t) { return t.param(p, "a"); };
    auto B = [&](Tape<double>& t) { return t.param(p, "b"); };

    SUBCASE("matmul") {
        CHECK(check(p, [&](Tape<double>& t) { return matmul(A(t), t.param(p, "c")); }) < tol);
        CHECK(check(p, [&](Tape<double>& t) { return matmul(A(t), B(t), false, true); }) < tol);
        CHECK(check(p, [&](Tape<double>& t) { return matmul(A(t), B(t), true, false); }) < tol);
    }
    SUBCASE("elementwise") {
        CHECK(check(p, [&](Tape<double>& t) { return add(A(t), B(t)); }) < tol);
        CHECK(check(p, [&](Tape<double>& t) { return sub(A(t), B(t)); }) < tol);
        CHECK(check(p, [&](Tape<double>& t) { return mul(A(t), B(t)); }) < tol);
        CHECK(check(p, [&](Tape<double>& t) { return scale(A(t), -2.5); }) < tol);
        CHECK(check(p, [&](Tape<double>& t) { return scale_rows(A(t), t.param(p, "w")); }) < tol);
    }
    SUBCASE("shape ops") {
        CHECK(check(p, [&](Tape<double>& t) {
                  std::vector<Var<double>> parts{A(t), B(t)};
                  return concat<double>(parts, 1);
              }) < tol);
        CHECK(check(p, [&](Tape<double>& t) {
                  std::vector<Var<double>> parts{A(t), B(t)};
                  return concat<double>(parts, 0);
              }) < tol);
        CHECK(check(p, [&](Tape<double>& t) { return reshape(A(t), {2, 6}); }) < tol);
    }
    SUBCASE("conv2d") {
        CHECK(check(p, [&](Tape<double>& t) { return conv2d(t.param(p, "img"), t.param(p, "filt")); }) < tol);
    }
    SUBCASE("nonlinearities") {
        CHECK(check(p, [&](Tape<double>& t) { return sigmoid(A(t)); }) < tol);
        CHECK(check(p, [&](Tape<double>& t) { return tanh(A(t)); }) < tol);
        CHECK(check(p, [&](Tape<double>& t) { return relu(A(t)); }) < tol);
        CHECK(check(p, [&](Tape<double>& t) { return leaky_relu(A(t), 0.2); }) < tol);
    }
    SUBCASE("softmax") {
        CHECK(check(p, [&](Tape<double>& t) { return softmax(t.param(p, "v")); }) < tol);
        CHECK(check(p, [&](Tape<double>& t) { return segment_softmax(t.param(p, "v"), make_indices({0, 2, 3, 6})); }) <
              tol);
    }
    SUBCASE("reductions") {
        CHECK(check(p, [&](Tape<double>& t) { return sum(A(t)); }) < tol);
        CHECK(check(p, [&](Tape<double>& t) { return row_sum(A(t)); }) < tol);
    }
    SUBCASE("gather and scatter") {
        CHECK(check(p, [&](Tape<double>& t) { return gather_rows(A(t), make_indices({2, 0, 2, 1})); }) < tol);
        CHECK(check(p, [&](Tape<double>& t) { return scatter_add_rows(A(t), make_indices({1, 1, 3}), 5); }) < tol);
    }
    SUBCASE("circular correlation") {
        CHECK(check(p, [&](Tape<double>& t) { return ccorr(t.param(p, "v"), t.param(p, "u")); }) < tol);
        CHECK(check(p, [&](Tape<double>& t) { return ccorr_rows(A(t), B(t)); }) < tol);
    }
    SUBCASE("bce") {
        Tensor<double> targets({3, 4});
        for (std::size_t i = 0; i < targets.size(); i += 3) targets[i] = 1.0;
        auto expr = [&](Tape<double>& t) { return bce_with_logits(A(t), targets); };
        CHECK(check_gradients(expr, p, 1e-6).max_rel_error < tol);
    }
}

TEST_CASE("ccorr with the unit impulse returns the other operand") {
    Rng rng(6);
    Tape<double> tape;
    Tensor<double> delta({6});
    delta[0] = 1.0;
    Tensor<double> b = random_tensor({6}, rng);
    CHECK(ccorr(tape.constant(delta), tape.constant(b)).value() == b);
}

TEST_CASE("ccorr matches its definition") {
    Rng rng(7);
    Tape<double> tape;
    Tensor<double> a = random_tensor({5}, rng), b = random_tensor({5}, rng);
    auto c = ccorr(tape.constant(a), tape.constant(b)).value();
    for (std::size_t k = 0; k < 5; ++k) {
        double expect = 0;
        for (std::size_t i = 0; i < 5; ++i) expect += a[i] * b[(i + k) % 5];
        CHECK(c[k] == doctest::Approx(expect).epsilon(1e-14));
    }
}

TEST_CASE("softmax sums to one and ignores a shift") {
    Rng rng(8);
    Tape<double> tape;
    Tensor<double> x = random_tensor({7}, rng, -5, 5);
    Tensor<double> shifted = x;
    for (auto& v : shifted.storage()) v += 123.0;
    auto y = softmax(tape.constant(x)).value();
    auto z = softmax(tape.constant(shifted)).value();
    double s = 0;
    for (double v : y.storage()) s += v;
    CHECK(std::abs(s - 1.0) < 1e-12);
    CHECK(max_abs_diff(y, z) < 1e-10);
}

TEST_CASE("segment softmax normalises each segment") {
    Tape<double> tape;
    auto y = segment_softmax(tape.constant(Tensor<double>({5}, std::vector<double>{1, 2, 3, 0, 0})),
                             make_indices({0, 3, 5}))
                 .value();
    CHECK(y[0] + y[1] + y[2] == doctest::Approx(1.0));
    CHECK(y[3] == 0.5);
    CHECK(y[4] == 0.5);
}

TEST_CASE("tape replay is bitwise deterministic") {
    Rng rng(9);
    Tensor<double> a = random_tensor({4, 6}, rng), b = random_tensor({6, 3}, rng);
    auto run = [&] {
        Tape<double> tape;
        auto y = tanh(matmul(tape.constant(a), tape.constant(b)));
        return softmax(reshape(y, {12})).value();
    };
    CHECK(run() == run());
}

TEST_CASE("shared parameter gradients accumulate") {
    ParameterStore<double> p;
    p.add("t", Tensor<double>({2, 2}, std::vector<double>{1, 2, 3, 4}));
    Tape<double> tape;
    auto g = tape.backward(sum(gather_rows(tape.param(p, "t"), make_indices({1, 1, 0}))), p);
    CHECK(g.at("t") == Tensor<double>({2, 2}, std::vector<double>{1, 1, 2, 2}));
}

TEST_CASE("bce of zero logits") {
    Tape<double> tape;
    Tensor<double> targets({2}, std::vector<double>{1, 0});
    auto l = bce_with_logits(tape.constant(Tensor<double>({2}, 0.0)), targets);
    CHECK(l.value().item() == doctest::Approx(2 * std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("sign-flip fault is visible to the checker") {
    Rng rng(10);
    ParameterStore<double> p;
    p.add("a", random_tensor({2, 3}, rng));
    auto expr = [&](Tape<double>& t) { return sum(tanh(t.param(p, "a"))); };
    CHECK(check_gradients(expr, p, 1e-6).max_rel_error < 1e-6);
    ScopedAdjointFault fault("tanh");
    CHECK(check_gradients(expr, p, 1e-6).max_rel_error > 0.5);
}
