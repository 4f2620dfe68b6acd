#include <doctest.h>

#include <cmath>
#include <random>

#include "mplp/gradcheck.hpp"
#include "mplp/prompts.hpp"

using namespace mplp;

namespace {

struct PromptFixture {
    ParameterStore store;
    HistoryPromptParams hist;
    ExperiencePromptParams exp;
    int64_t d = 8;

    PromptFixture(uint64_t seed = 3) {
        std::mt19937_64 rng(seed);
        hist = HistoryPromptParams::create(store, d, rng);
        exp = ExperiencePromptParams::create(store, d, rng);
    }

    Tensor rand_vec(std::mt19937_64& rng, bool grad = false) const {
        return Tensor::uniform({d}, 1.0, rng, grad);
    }
};

void set_identity(Tensor m) {
    std::fill(m.mutable_data().begin(), m.mutable_data().end(), 0.0);
    for (int64_t i = 0; i < m.rows(); ++i) m.mutable_data()[i * m.cols() + i] = 1.0;
}

}  // namespace

TEST_CASE("relation_aware_transform: same speaker everywhere uses only w_same") {
    PromptFixture f;
    std::mt19937_64 rng(50);
    // make w_other poisonous so accidental use is loud
    std::fill(f.hist.w_other.mutable_data().begin(), f.hist.w_other.mutable_data().end(), 1e6);
    std::vector<Tensor> history = {f.rand_vec(rng), f.rand_vec(rng)};
    auto out = relation_aware_transform(history, {true, true}, f.hist);
    for (size_t i = 0; i < history.size(); ++i) {
        Tensor expected = matvec(f.hist.w_same, history[i]);
        for (int64_t j = 0; j < f.d; ++j)
            CHECK(out[i].at(j) == doctest::Approx(expected.at(j)).epsilon(1e-14));
    }
}

TEST_CASE("relation_aware_transform: identity matrices pass vectors through") {
    PromptFixture f;
    set_identity(f.hist.w_same);
    set_identity(f.hist.w_other);
    std::mt19937_64 rng(51);
    std::vector<Tensor> history = {f.rand_vec(rng), f.rand_vec(rng), f.rand_vec(rng)};
    auto out = relation_aware_transform(history, {true, false, true}, f.hist);
    for (size_t i = 0; i < history.size(); ++i)
        for (int64_t j = 0; j < f.d; ++j) CHECK(out[i].at(j) == history[i].at(j));
}

TEST_CASE("relation_aware_transform: mixed case matches a hand-applied matrix oracle") {
    PromptFixture f;
    std::mt19937_64 rng(52);
    std::vector<Tensor> history = {f.rand_vec(rng), f.rand_vec(rng), f.rand_vec(rng)};
    std::vector<bool> same = {false, true, false};
    auto out = relation_aware_transform(history, same, f.hist);
    for (size_t i = 0; i < 3; ++i) {
        const Tensor& w = same[i] ? f.hist.w_same : f.hist.w_other;
        for (int64_t r = 0; r < f.d; ++r) {
            double acc = 0;
            for (int64_t c = 0; c < f.d; ++c) acc += w.at(r, c) * history[i].at(c);
            CHECK(out[i].at(r) == doctest::Approx(acc).epsilon(1e-12));
        }
    }
}

TEST_CASE("history_attention: single history vector gets weight 1.0") {
    PromptFixture f;
    std::mt19937_64 rng(53);
    auto w = history_attention({f.rand_vec(rng)}, f.rand_vec(rng), f.hist.w_score);
    CHECK(w.numel() == 1);
    CHECK(w.at(0) == 1.0);
}

TEST_CASE("history_attention: identical history vectors get uniform weights") {
    PromptFixture f;
    std::mt19937_64 rng(54);
    Tensor h = f.rand_vec(rng);
    Tensor target = f.rand_vec(rng);
    auto w = history_attention({h, h, h}, target, f.hist.w_score);
    for (int64_t i = 0; i < 3; ++i)
        CHECK(w.at(i) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("history_attention: three-vector case matches score-then-softmax oracle") {
    PromptFixture f;
    std::mt19937_64 rng(55);
    std::vector<Tensor> history = {f.rand_vec(rng), f.rand_vec(rng), f.rand_vec(rng)};
    Tensor target = f.rand_vec(rng);
    auto w = history_attention(history, target, f.hist.w_score);

    std::vector<double> scores;
    for (const auto& h : history) {
        double s = 0;
        for (int64_t j = 0; j < f.d; ++j) s += f.hist.w_score.at(0, j) * h.at(j);
        for (int64_t j = 0; j < f.d; ++j) s += f.hist.w_score.at(0, f.d + j) * target.at(j);
        scores.push_back(s);
    }
    double denom = 0;
    for (double s : scores) denom += std::exp(s);
    for (int64_t i = 0; i < 3; ++i)
        CHECK(w.at(i) ==
              doctest::Approx(std::exp(scores[static_cast<size_t>(i)]) / denom).epsilon(1e-10));
    double total = w.at(0) + w.at(1) + w.at(2);
    CHECK(std::abs(total - 1.0) < 1e-9);
}

TEST_CASE("contextualize: length-1 sequence depends only on its element") {
    PromptFixture f;
    std::mt19937_64 rng(56);
    Tensor x = f.rand_vec(rng);
    auto out1 = contextualize({x}, f.hist);
    REQUIRE(out1.size() == 1);
    CHECK(out1[0].numel() == f.d);
    auto again = contextualize({x}, f.hist);
    for (int64_t j = 0; j < f.d; ++j) CHECK(out1[0].at(j) == again[0].at(j));
}

TEST_CASE("bilstm: reversing the sequence with tied directions mirrors the halves") {
    PromptFixture f;
    // tie the two directions
    std::copy(f.hist.fwd_wx.data().begin(), f.hist.fwd_wx.data().end(),
              f.hist.bwd_wx.mutable_data().begin());
    std::copy(f.hist.fwd_wh.data().begin(), f.hist.fwd_wh.data().end(),
              f.hist.bwd_wh.mutable_data().begin());
    std::copy(f.hist.fwd_b.data().begin(), f.hist.fwd_b.data().end(),
              f.hist.bwd_b.mutable_data().begin());
    std::mt19937_64 rng(57);
    std::vector<Tensor> seq = {f.rand_vec(rng), f.rand_vec(rng), f.rand_vec(rng),
                               f.rand_vec(rng)};
    auto fwd_out = bilstm_concat(seq, f.hist);
    std::vector<Tensor> rev(seq.rbegin(), seq.rend());
    auto rev_out = bilstm_concat(rev, f.hist);
    // position i of the original corresponds to position n-1-i reversed,
    // with forward/backward halves swapped
    size_t n = seq.size();
    for (size_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < f.d; ++j) {
            CHECK(fwd_out[i].at(j) == rev_out[n - 1 - i].at(f.d + j));
            CHECK(fwd_out[i].at(f.d + j) == rev_out[n - 1 - i].at(j));
        }
}

TEST_CASE("contextualize: gradient through the recurrence checks out") {
    PromptFixture f;
    std::mt19937_64 rng(58);
    std::vector<Tensor> seq = {f.rand_vec(rng), f.rand_vec(rng), f.rand_vec(rng)};
    Tensor probe = f.rand_vec(rng);
    auto loss = [&] {
        auto out = contextualize(seq, f.hist);
        Tensor acc = mul(out[0], probe);
        for (size_t i = 1; i < out.size(); ++i) acc = add(acc, mul(out[i], probe));
        return sum(acc);
    };
    double err = finite_difference_check(
        loss,
        {f.hist.fwd_wx, f.hist.fwd_wh, f.hist.fwd_b, f.hist.bwd_wx, f.hist.bwd_wh, f.hist.bwd_b,
         f.hist.proj_w, f.hist.proj_b},
        {.eps = 1e-4, .max_coords_per_param = 12});
    CHECK(err < 1e-3);
}

TEST_CASE("build_history_prompt: t = 0 injects exactly h_0") {
    PromptFixture f;
    std::mt19937_64 rng(59);
    Tensor h0 = f.rand_vec(rng);
    auto result = build_history_prompt({}, {}, h0, f.hist, {7, 8, 9});
    for (int64_t j = 0; j < f.d; ++j) {
        CHECK(result.h_hist.at(j) == h0.at(j));
        CHECK(result.influence.at(j) == 0.0);
    }
    CHECK(result.prompt.prefix_ids == std::vector<int64_t>{7, 8, 9});
}

TEST_CASE("build_history_prompt: single history vector yields influ = h~_0") {
    PromptFixture f;
    std::mt19937_64 rng(60);
    Tensor h0 = f.rand_vec(rng);
    Tensor ht = f.rand_vec(rng);
    auto result = build_history_prompt({h0}, {true}, ht, f.hist, {1});
    auto contextual = contextualize(relation_aware_transform({h0}, {true}, f.hist), f.hist);
    for (int64_t j = 0; j < f.d; ++j) {
        CHECK(result.influence.at(j) == doctest::Approx(contextual[0].at(j)).epsilon(1e-13));
        CHECK(result.h_hist.at(j) ==
              doctest::Approx(contextual[0].at(j) + ht.at(j)).epsilon(1e-13));
    }
}

TEST_CASE("build_history_prompt: three-history case matches the composed oracle") {
    PromptFixture f;
    std::mt19937_64 rng(61);
    std::vector<Tensor> history = {f.rand_vec(rng), f.rand_vec(rng), f.rand_vec(rng)};
    std::vector<bool> same = {true, false, false};
    Tensor ht = f.rand_vec(rng);
    auto result = build_history_prompt(history, same, ht, f.hist, {2});

    Tensor weights = history_attention(history, ht, f.hist.w_score);
    auto contextual = contextualize(relation_aware_transform(history, same, f.hist), f.hist);
    for (int64_t j = 0; j < f.d; ++j) {
        double influ = 0;
        for (size_t i = 0; i < history.size(); ++i)
            influ += weights.at(static_cast<int64_t>(i)) * contextual[i].at(j);
        CHECK(result.influence.at(j) == doctest::Approx(influ).epsilon(1e-12));
        CHECK(result.h_hist.at(j) == doctest::Approx(influ + ht.at(j)).epsilon(1e-12));
    }
}

TEST_CASE("build_experience_prompt: k = 1 influence equals d_0 exactly") {
    PromptFixture f;
    std::mt19937_64 rng(62);
    SimilarSampleSet similar(1);
    similar[0].utterance_id = "x:0";
    similar[0].representation.assign(static_cast<size_t>(f.d), 0.0);
    for (auto& v : similar[0].representation) v = std::uniform_real_distribution<>(-1, 1)(rng);
    Tensor ht = f.rand_vec(rng);
    auto result = build_experience_prompt(similar, ht, f.exp, {4});
    CHECK(result.weights.at(0) == 1.0);
    for (int64_t j = 0; j < f.d; ++j) {
        CHECK(result.influence.at(j) == similar[0].representation[static_cast<size_t>(j)]);
        CHECK(result.h_exp.at(j) ==
              similar[0].representation[static_cast<size_t>(j)] + ht.at(j));
    }
}

TEST_CASE("build_experience_prompt: identical d_j give influ = d regardless of weights") {
    PromptFixture f;
    std::mt19937_64 rng(63);
    std::vector<double> rep(static_cast<size_t>(f.d));
    for (auto& v : rep) v = std::uniform_real_distribution<>(-1, 1)(rng);
    SimilarSampleSet similar(3);
    for (auto& s : similar) s.representation = rep;
    Tensor ht = f.rand_vec(rng);
    auto result = build_experience_prompt(similar, ht, f.exp, {});
    for (int64_t j = 0; j < f.d; ++j)
        CHECK(result.influence.at(j) ==
              doctest::Approx(rep[static_cast<size_t>(j)]).epsilon(1e-12));
}

TEST_CASE("build_experience_prompt: k = 3 matches score-then-softmax oracle") {
    PromptFixture f;
    std::mt19937_64 rng(64);
    SimilarSampleSet similar(3);
    for (auto& s : similar) {
        s.representation.assign(static_cast<size_t>(f.d), 0.0);
        for (auto& v : s.representation) v = std::uniform_real_distribution<>(-1, 1)(rng);
    }
    Tensor ht = f.rand_vec(rng);
    auto result = build_experience_prompt(similar, ht, f.exp, {});

    std::vector<double> scores;
    for (const auto& s : similar) {
        double sc = 0;
        for (int64_t j = 0; j < f.d; ++j)
            sc += f.exp.w_score.at(0, j) * s.representation[static_cast<size_t>(j)] * ht.at(j);
        scores.push_back(sc);
    }
    double denom = 0;
    for (double s : scores) denom += std::exp(s);
    double wsum = 0;
    for (int64_t i = 0; i < 3; ++i) {
        double w = std::exp(scores[static_cast<size_t>(i)]) / denom;
        CHECK(result.weights.at(i) == doctest::Approx(w).epsilon(1e-10));
        wsum += result.weights.at(i);
    }
    CHECK(std::abs(wsum - 1.0) < 1e-9);
    for (int64_t j = 0; j < f.d; ++j) {
        double influ = 0;
        for (size_t i = 0; i < 3; ++i)
            influ += result.weights.at(static_cast<int64_t>(i)) *
                     similar[i].representation[static_cast<size_t>(j)];
        CHECK(result.influence.at(j) == doctest::Approx(influ).epsilon(1e-12));
    }
}

TEST_CASE("build_experience_prompt: empty similar set rejected") {
    PromptFixture f;
    std::mt19937_64 rng(65);
    CHECK_THROWS_AS(build_experience_prompt({}, f.rand_vec(rng), f.exp, {}), ContractError);
}

TEST_CASE("prompt gradients flow into every prompt parameter; cached vectors get none") {
    PromptFixture f;
    std::mt19937_64 rng(66);
    std::vector<Tensor> history = {f.rand_vec(rng), f.rand_vec(rng)};
    Tensor ht = f.rand_vec(rng);
    SimilarSampleSet similar(2);
    for (auto& s : similar) {
        s.representation.assign(static_cast<size_t>(f.d), 0.0);
        for (auto& v : s.representation) v = std::uniform_real_distribution<>(-1, 1)(rng);
    }

    Tape tape;
    {
        TapeScope scope(tape);
        auto hist_result = build_history_prompt(history, {true, false}, ht, f.hist, {});
        auto exp_result = build_experience_prompt(similar, ht, f.exp, {});
        Tensor loss = add(sum(mul(hist_result.h_hist, hist_result.h_hist)),
                          sum(mul(exp_result.h_exp, exp_result.h_exp)));
        tape.backward(loss);
    }
    for (const auto& name : f.store.names()) {
        Tensor p = f.store.get(name);
        double norm = 0;
        for (double g : p.grad()) norm += g * g;
        INFO(name);
        CHECK(norm > 0.0);
    }
    for (const auto& h : history) CHECK_FALSE(h.has_grad());
    CHECK_FALSE(ht.has_grad());
}

TEST_CASE("full prompt composition passes a finite-difference check") {
    PromptFixture f;
    std::mt19937_64 rng(67);
    std::vector<Tensor> history = {f.rand_vec(rng), f.rand_vec(rng), f.rand_vec(rng)};
    Tensor ht = f.rand_vec(rng);
    Tensor probe = f.rand_vec(rng);
    SimilarSampleSet similar(2);
    for (auto& s : similar) {
        s.representation.assign(static_cast<size_t>(f.d), 0.0);
        for (auto& v : s.representation) v = std::uniform_real_distribution<>(-1, 1)(rng);
    }
    auto loss = [&] {
        auto hist_result = build_history_prompt(history, {false, true, false}, ht, f.hist, {});
        auto exp_result = build_experience_prompt(similar, ht, f.exp, {});
        return sum(mul(add(hist_result.h_hist, exp_result.h_exp), probe));
    };
    double err = finite_difference_check(loss, f.store.all(),
                                         {.eps = 1e-4, .max_coords_per_param = 10});
    CHECK(err < 1e-3);
}
