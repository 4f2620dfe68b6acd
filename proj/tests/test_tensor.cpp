#include <doctest.h>

#include <cmath>
#include <random>

#include "mplp/gradcheck.hpp"
#include "mplp/tensor.hpp"

using namespace mplp;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, std::mt19937_64& rng, bool requires_grad = true) {
    return Tensor::uniform(std::move(shape), 1.0, rng, requires_grad);
}

// independent scalar softmax for oracle values
std::vector<double> softmax_oracle(const std::vector<double>& x) {
    double denom = 0.0;
    for (double v : x) denom += std::exp(v);
    std::vector<double> out;
    for (double v : x) out.push_back(std::exp(v) / denom);
    return out;
}

}  // namespace

TEST_CASE("softmax: uniform input gives uniform output") {
    Tensor x = Tensor::from_data({3}, {0.0, 0.0, 0.0});
    Tensor y = softmax(x);
    for (int i = 0; i < 3; ++i) CHECK(y.at(i) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("softmax: shift invariance prevents overflow") {
    Tensor y = softmax(Tensor::from_data({2}, {1000.0, 1000.0}));
    CHECK(y.at(0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(y.at(1) == doctest::Approx(0.5).epsilon(1e-12));

    Tensor a = softmax(Tensor::from_data({3}, {0.3, -1.2, 2.1}));
    Tensor b = softmax(Tensor::from_data({3}, {0.3 + 7.5, -1.2 + 7.5, 2.1 + 7.5}));
    for (int i = 0; i < 3; ++i) CHECK(a.at(i) == doctest::Approx(b.at(i)).epsilon(1e-12));
}

TEST_CASE("softmax: matches scalar oracle on [1,2,3]") {
    auto expected = softmax_oracle({1.0, 2.0, 3.0});
    Tensor y = softmax(Tensor::from_data({3}, {1.0, 2.0, 3.0}));
    for (int i = 0; i < 3; ++i) CHECK(y.at(i) == doctest::Approx(expected[i]).epsilon(1e-14));
}

TEST_CASE("softmax: rejects non-finite input") {
    CHECK_THROWS_AS(softmax(Tensor::from_data({2}, {std::nan(""), 0.0})), NumericError);
    CHECK_THROWS_AS(
        softmax(Tensor::from_data({2}, {std::numeric_limits<double>::infinity(), 0.0})),
        NumericError);
}

TEST_CASE("softmax: sums to one for 10000 random vectors with entries up to 1e4") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> mag(-1e4, 1e4);
    std::uniform_int_distribution<int> len(1, 12);
    for (int trial = 0; trial < 10000; ++trial) {
        int n = len(rng);
        std::vector<double> vals(n);
        for (auto& v : vals) v = mag(rng);
        Tensor y = softmax(Tensor::from_data({n}, vals));
        double s = 0.0;
        for (int i = 0; i < n; ++i) {
            CHECK(y.at(i) >= 0.0);
            s += y.at(i);
        }
        CHECK(std::abs(s - 1.0) < 1e-9);
    }
}

TEST_CASE("gelu: symmetry point, asymptote, and scalar oracle at 1.0") {
    Tensor y0 = gelu(Tensor::scalar(0.0));
    CHECK(y0.value() == 0.0);

    Tensor ybig = gelu(Tensor::scalar(50.0));
    CHECK(ybig.value() == doctest::Approx(50.0).epsilon(1e-12));

    double u = std::sqrt(2.0 / M_PI) * (1.0 + 0.044715);
    double expected = 0.5 * (1.0 + std::tanh(u));
    CHECK(gelu(Tensor::scalar(1.0)).value() == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("gelu: monotone non-decreasing on grid") {
    // gelu dips below zero with a minimum near x = -0.75; test to the right of it
    double prev = -std::numeric_limits<double>::infinity();
    for (double x = -0.5; x <= 6.0; x += 0.05) {
        double y = gelu(Tensor::scalar(x)).value();
        CHECK(y >= prev - 1e-15);
        prev = y;
    }
}

TEST_CASE("cross_entropy: uniform logits give log(C)") {
    for (int c = 2; c <= 9; ++c) {
        Tensor logits = Tensor::zeros({c});
        CHECK(cross_entropy(logits, 0).value() == doctest::Approx(std::log(c)).epsilon(1e-12));
    }
}

TEST_CASE("cross_entropy: confident-correct limit approaches zero") {
    Tensor logits = Tensor::from_data({3}, {200.0, 0.0, 0.0});
    CHECK(cross_entropy(logits, 0).value() < 1e-12);
}

TEST_CASE("cross_entropy: scalar oracle on [2,1,0] gold 1") {
    double lse = std::log(std::exp(2.0) + std::exp(1.0) + std::exp(0.0));
    Tensor loss = cross_entropy(Tensor::from_data({3}, {2.0, 1.0, 0.0}), 1);
    CHECK(loss.value() == doctest::Approx(lse - 1.0).epsilon(1e-14));
}

TEST_CASE("cross_entropy: out-of-range gold raises index error") {
    Tensor logits = Tensor::zeros({3});
    CHECK_THROWS_AS(cross_entropy(logits, 3), IndexError);
    CHECK_THROWS_AS(cross_entropy(logits, -1), IndexError);
}

TEST_CASE("backward: sum gives all-ones gradient") {
    std::mt19937_64 rng(3);
    Tensor x = random_tensor({4, 5}, rng);
    Tape tape;
    {
        TapeScope scope(tape);
        tape.backward(sum(x));
    }
    for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("backward: dot product gives 2x") {
    std::mt19937_64 rng(4);
    Tensor x = random_tensor({6}, rng);
    Tape tape;
    {
        TapeScope scope(tape);
        tape.backward(sum(mul(x, x)));
    }
    for (int i = 0; i < 6; ++i) CHECK(x.grad()[i] == doctest::Approx(2.0 * x.at(i)).epsilon(1e-13));
}

TEST_CASE("backward: non-scalar root rejected") {
    std::mt19937_64 rng(5);
    Tensor x = random_tensor({3}, rng);
    Tape tape;
    TapeScope scope(tape);
    Tensor y = mul(x, x);
    CHECK_THROWS_AS(tape.backward(y), ContractError);
}

TEST_CASE("backward: second pass over the same tape is rejected") {
    std::mt19937_64 rng(6);
    Tensor x = random_tensor({3}, rng);
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = sum(mul(x, x));
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), ContractError);
}

TEST_CASE("backward: root from another tape is rejected") {
    std::mt19937_64 rng(61);
    Tensor x = random_tensor({3}, rng);
    Tensor loss;
    {
        Tape tape_a;
        TapeScope scope(tape_a);
        loss = sum(x);
    }
    Tape tape_b;
    CHECK_THROWS_AS(tape_b.backward(loss), ContractError);
}

TEST_CASE("backward: unreachable parameters keep zero grad") {
    std::mt19937_64 rng(7);
    Tensor used = random_tensor({3}, rng);
    Tensor unused = random_tensor({3}, rng);
    Tape tape;
    {
        TapeScope scope(tape);
        tape.backward(sum(used));
    }
    for (double g : unused.grad()) CHECK(g == 0.0);
}

TEST_CASE("backward: constants without requires_grad receive no gradient buffer") {
    std::mt19937_64 rng(8);
    Tensor param = random_tensor({3}, rng, true);
    Tensor constant = random_tensor({3}, rng, false);
    Tape tape;
    {
        TapeScope scope(tape);
        tape.backward(sum(mul(param, constant)));
    }
    CHECK_FALSE(constant.has_grad());
    for (int i = 0; i < 3; ++i)
        CHECK(param.grad()[i] == doctest::Approx(constant.at(i)).epsilon(1e-14));
}

TEST_CASE("matmul agrees with naive triple-loop oracle on random 7x5 * 5x3") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor a = random_tensor({7, 5}, rng, false);
        Tensor b = random_tensor({5, 3}, rng, false);
        Tensor c = matmul(a, b);
        for (int i = 0; i < 7; ++i)
            for (int j = 0; j < 3; ++j) {
                double acc = 0.0;
                for (int k = 0; k < 5; ++k) acc += a.at(i, k) * b.at(k, j);
                CHECK(std::abs(c.at(i, j) - acc) < 1e-10);
            }
    }
}

TEST_CASE("finite_difference_check: exact quadratic") {
    std::mt19937_64 rng(10);
    Tensor x = random_tensor({8}, rng);
    double err = finite_difference_check([&] { return sum(mul(x, x)); }, {x},
                                         {.eps = 1e-4, .max_coords_per_param = 0});
    CHECK(err < 1e-6);
}

TEST_CASE("finite_difference_check: softmax cross-entropy of a 5-logit vector") {
    std::mt19937_64 rng(11);
    Tensor logits = random_tensor({5}, rng);
    double err = finite_difference_check([&] { return cross_entropy(logits, 2); }, {logits},
                                         {.eps = 1e-4, .max_coords_per_param = 0});
    CHECK(err < 1e-5);
}

TEST_CASE("finite_difference_check: eps outside (0, 1e-2] rejected") {
    std::mt19937_64 rng(12);
    Tensor x = random_tensor({2}, rng);
    auto f = [&] { return sum(x); };
    CHECK_THROWS_AS(finite_difference_check(f, {x}, {.eps = 0.0}), ContractError);
    CHECK_THROWS_AS(finite_difference_check(f, {x}, {.eps = 0.1}), ContractError);
}

TEST_CASE("every differentiable op passes the finite-difference battery") {
    std::mt19937_64 rng(13);
    GradCheckOptions opts{.eps = 1e-4, .max_coords_per_param = 0, .seed = 99};
    const double tol = 1e-4;

    // weights fixed per sub-case so each loss is a pure function of its params
    Tensor wa = random_tensor({4, 3}, rng);
    Tensor wb = random_tensor({4, 3}, rng);
    Tensor v4 = random_tensor({4}, rng);
    Tensor v3 = random_tensor({3}, rng);
    Tensor m34 = random_tensor({3, 4}, rng);
    Tensor m43 = random_tensor({4, 3}, rng);
    Tensor gamma = random_tensor({3}, rng);
    Tensor beta = random_tensor({3}, rng);
    Tensor emb = random_tensor({5, 3}, rng);

    auto check = [&](const char* name, std::function<Tensor()> f, std::vector<Tensor> params) {
        INFO(name);
        CHECK(finite_difference_check(f, params, opts) < tol);
    };

    check("add", [&] { return sum(add(wa, wb)); }, {wa, wb});
    check("sub", [&] { return sum(mul(sub(wa, wb), wa)); }, {wa, wb});
    check("mul", [&] { return sum(mul(wa, wb)); }, {wa, wb});
    check("scale", [&] { return sum(scale(wa, -1.7)); }, {wa});
    check("add_bias", [&] { return sum(mul(add_bias(wa, v3), wa)); }, {wa, v3});
    check("gelu", [&] { return sum(gelu(wa)); }, {wa});
    check("tanh", [&] { return sum(tanh_t(wa)); }, {wa});
    check("sigmoid", [&] { return sum(sigmoid(wa)); }, {wa});
    check("matmul", [&] { return sum(matmul(m34, m43)); }, {m34, m43});
    check("matmul_nt", [&] { return sum(matmul_nt(wa, wb)); }, {wa, wb});
    check("matvec", [&] { return sum(matvec(m34, v4)); }, {m34, v4});
    check("matvec_t", [&] { return sum(matvec_t(m34, v3)); }, {m34, v3});
    check("concat", [&] { return sum(mul(concat({v4, v4}), concat({v4, v4}))); }, {v4});
    check("concat_rows", [&] { return sum(mul(concat_rows({wa, wb}), concat_rows({wb, wa}))); },
          {wa, wb});
    check("concat_cols", [&] { return sum(mul(concat_cols({wa, wb}), concat_cols({wb, wa}))); },
          {wa, wb});
    check("slice", [&] { return sum(mul(slice(v4, 1, 2), slice(v4, 0, 2))); }, {v4});
    check("row", [&] { return sum(mul(row(wa, 2), v3)); }, {wa, v3});
    check("slice_rows", [&] { return sum(mul(slice_rows(wa, 1, 2), slice_rows(wb, 0, 2))); },
          {wa, wb});
    check("slice_cols", [&] { return sum(mul(slice_cols(wa, 1, 2), slice_cols(wb, 0, 2))); },
          {wa, wb});
    check("mean", [&] { return mean(mul(wa, wa)); }, {wa});
    check("softmax", [&] { return sum(mul(softmax(v4), v4)); }, {v4});
    check("softmax_masked",
          [&] {
              std::vector<double> mask{1.0, 0.0, 1.0, 1.0};
              return sum(mul(softmax_masked(v4, mask), v4));
          },
          {v4});
    check("softmax_rows", [&] { return sum(mul(softmax(wa), wb)); }, {wa, wb});
    check("cross_entropy", [&] { return cross_entropy(v4, 1); }, {v4});
    check("sequence_cross_entropy",
          [&] {
              return sequence_cross_entropy(wa, {0, 2, 1, 0}, {0.0, 1.0, 1.0, 1.0});
          },
          {wa});
    check("layer_norm", [&] { return sum(mul(layer_norm(wa, gamma, beta), wb)); },
          {wa, gamma, beta});
    check("embedding", [&] { return sum(mul(embedding(emb, {0, 3, 3, 1}), wb)); }, {emb});
}

TEST_CASE("dropout: backward scales by the sampled mask, identity at eval") {
    std::mt19937_64 data_rng(14);
    Tensor x = random_tensor({100}, data_rng);

    std::mt19937_64 rng_fwd(21);
    Tape tape;
    Tensor y;
    {
        TapeScope scope(tape);
        y = dropout(x, 0.4, rng_fwd, true);
        tape.backward(sum(y));
    }
    int dropped = 0;
    for (int i = 0; i < 100; ++i) {
        if (y.at(i) == 0.0) {
            ++dropped;
            CHECK(x.grad()[i] == 0.0);
        } else {
            CHECK(y.at(i) == doctest::Approx(x.at(i) / 0.6).epsilon(1e-12));
            CHECK(x.grad()[i] == doctest::Approx(1.0 / 0.6).epsilon(1e-12));
        }
    }
    CHECK(dropped > 10);

    std::mt19937_64 rng_eval(22);
    Tensor ye = dropout(x, 0.4, rng_eval, false);
    for (int i = 0; i < 100; ++i) CHECK(ye.at(i) == x.at(i));
}

TEST_CASE("masked softmax zeroes masked entries exactly") {
    Tensor x = Tensor::from_data({4}, {5.0, 100.0, 1.0, 2.0});
    Tensor y = softmax_masked(x, {1.0, 0.0, 1.0, 1.0});
    CHECK(y.at(1) == 0.0);
    double s = y.at(0) + y.at(2) + y.at(3);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ops reject shape mismatches") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({3, 2});
    CHECK_THROWS_AS(add(a, b), ContractError);
    CHECK_THROWS_AS(mul(a, b), ContractError);
    CHECK_THROWS_AS(matmul(a, Tensor::zeros({2, 2})), ContractError);
    CHECK_THROWS_AS(add_bias(a, Tensor::zeros({2})), ContractError);
    CHECK_THROWS_AS(embedding(a, {5}), IndexError);
}
