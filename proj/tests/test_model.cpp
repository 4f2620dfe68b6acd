#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "mplp/checkpoint.hpp"
#include "mplp/gradcheck.hpp"
#include "mplp/model.hpp"
#include "mplp/optimizer.hpp"
#include "mplp/tokenize.hpp"

using namespace mplp;

namespace {

struct Fixture {
    Conversation conv;
    EmotionLabelSet labels;
    Vocabulary vocab;
    ModelConfig config;

    Fixture() {
        labels = EmotionLabelSet({"neutral", "joy", "anger"}, 0);
        conv.dialogue_id = "t";
        auto add = [&](const std::string& spk, const std::string& text, const std::string& label) {
            Utterance u;
            u.speaker = spk;
            u.text = text;
            u.label = label;
            u.utterance_id = conv.dialogue_id + ":" + std::to_string(conv.utterances.size());
            conv.utterances.push_back(u);
        };
        add("alice", "what a lovely bright morning today", "joy");
        add("bob", "the printer is broken again and again", "anger");
        add("alice", "we can fix it after lunch maybe", "neutral");
        add("bob", "fine but i am still furious about it", "anger");

        GlossTable gloss({{"neutral", "neutral", "plain even tone"},
                          {"joy", "gleeful", "merry sparkling cheer"},
                          {"anger", "irate", "furious bitter rage"}});
        vocab = Vocabulary::build({conv}, labels, gloss);

        config.d_model = 32;
        config.n_layers = 1;
        config.n_heads = 2;
        config.d_ff = 64;
        config.max_len = 64;
        config.context_window = 2;
        config.dropout_rate = 0.0;
    }

    Seq2SeqModel model(uint64_t seed = 1) const { return Seq2SeqModel(config, vocab, labels, seed); }
};

double cosine(const Tensor& a, const Tensor& b) {
    double dot = 0, na = 0, nb = 0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        dot += a.at(i) * b.at(i);
        na += a.at(i) * a.at(i);
        nb += b.at(i) * b.at(i);
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

TEST_CASE("build_stage1_input: t=0 has no history") {
    Fixture f;
    auto input = build_stage1_input(f.conv, 0, 4, f.vocab, f.config.max_len);
    std::vector<int64_t> expected = {Vocabulary::kStar,
                                     f.vocab.id(Vocabulary::speaker_token("alice"))};
    for (const auto& tok : tokenize("what a lovely bright morning today"))
        expected.push_back(f.vocab.id(tok));
    expected.push_back(Vocabulary::kStar);
    CHECK(input.context == expected);
    CHECK(input.prompt == std::vector<int64_t>{f.vocab.id(Vocabulary::speaker_token("alice")),
                                               f.vocab.id_strict("feels"), Vocabulary::kMask});
    CHECK(input.mask_position == 2);
}

TEST_CASE("build_stage1_input: m=1 at t=2 includes exactly one history utterance") {
    Fixture f;
    auto input = build_stage1_input(f.conv, 2, 1, f.vocab, f.config.max_len);
    int64_t bob = f.vocab.id(Vocabulary::speaker_token("bob"));
    int64_t alice = f.vocab.id(Vocabulary::speaker_token("alice"));
    // history = [bob, tokens of u_1]; no alice utterance before the target star
    CHECK(input.context[0] == bob);
    int stars = 0, alice_before_star = 0;
    for (int64_t id : input.context) {
        if (id == Vocabulary::kStar) ++stars;
        if (stars == 0 && id == alice) ++alice_before_star;
    }
    CHECK(stars == 2);
    CHECK(alice_before_star == 0);
}

TEST_CASE("build_stage1_input: m larger than history uses all history") {
    Fixture f;
    auto all = build_stage1_input(f.conv, 3, 99, f.vocab, f.config.max_len);
    auto exact = build_stage1_input(f.conv, 3, 3, f.vocab, f.config.max_len);
    CHECK(all.context == exact.context);
}

TEST_CASE("build_stage1_input: overlong context drops leftmost tokens, target intact") {
    Fixture f;
    int64_t tight = 14;
    auto input = build_stage1_input(f.conv, 3, 3, f.vocab, tight);
    CHECK(static_cast<int64_t>(input.context.size()) <= tight);
    // target segment = [*, s_3, 9 tokens, *] = 12 ids, all present at the end
    auto full = build_stage1_input(f.conv, 3, 0, f.vocab, f.config.max_len);
    REQUIRE(input.context.size() >= full.context.size());
    std::vector<int64_t> tail(input.context.end() - static_cast<long>(full.context.size()),
                              input.context.end());
    CHECK(tail == full.context);
}

TEST_CASE("forward_stage1: deterministic with dropout off") {
    Fixture f;
    auto model = f.model();
    auto input = build_stage1_input(f.conv, 1, 2, f.vocab, f.config.max_len);
    Tensor a = model.forward_stage1(input);
    Tensor b = model.forward_stage1(input);
    for (int64_t i = 0; i < a.numel(); ++i) CHECK(a.at(i) == b.at(i));
}

TEST_CASE("forward_stage1: different targets give different representations") {
    Fixture f;
    auto model = f.model();
    Tensor h1 = model.forward_stage1(build_stage1_input(f.conv, 1, 2, f.vocab, f.config.max_len));
    Tensor h2 = model.forward_stage1(build_stage1_input(f.conv, 2, 2, f.vocab, f.config.max_len));
    CHECK(cosine(h1, h2) < 0.999);
}

TEST_CASE("forward_stage1: PAD tail positions do not change the representation") {
    Fixture f;
    auto model = f.model();
    auto input = build_stage1_input(f.conv, 1, 2, f.vocab, f.config.max_len);

    EncodedInput plain = EncodedInput::from_tokens(input.context);
    Tensor enc_plain = model.encode(plain);
    Tensor h_plain = row(model.decode(input.prompt, enc_plain, plain.mask()), 2);

    EncodedInput padded = EncodedInput::from_tokens(input.context);
    for (int i = 0; i < 5; ++i) padded.append_pad();
    Tensor enc_padded = model.encode(padded);
    Tensor h_padded = row(model.decode(input.prompt, enc_padded, padded.mask()), 2);

    for (int64_t i = 0; i < h_plain.numel(); ++i)
        CHECK(std::abs(h_plain.at(i) - h_padded.at(i)) < 1e-9);
    // every non-PAD encoder coordinate is unaffected as well
    for (int64_t r = 0; r < enc_plain.rows(); ++r)
        for (int64_t c = 0; c < enc_plain.cols(); ++c)
            CHECK(std::abs(enc_plain.at(r, c) - enc_padded.at(r, c)) < 1e-9);
}

TEST_CASE("decoder causal mask: later target tokens never affect earlier states") {
    Fixture f;
    auto model = f.model();
    auto input = build_stage1_input(f.conv, 1, 2, f.vocab, f.config.max_len);
    EncodedInput enc_in = EncodedInput::from_tokens(input.context);
    Tensor enc = model.encode(enc_in);

    std::vector<int64_t> target = {f.vocab.id_strict("feels"), f.vocab.id_strict("fine"),
                                   f.vocab.id_strict("lunch"), f.vocab.id_strict("morning")};
    Tensor base = model.decode(target, enc, enc_in.mask());
    for (size_t r = 1; r < target.size(); ++r) {
        auto changed = target;
        changed[r] = f.vocab.id_strict("printer");
        Tensor out = model.decode(changed, enc, enc_in.mask());
        for (size_t q = 0; q < r; ++q)
            for (int64_t c = 0; c < base.cols(); ++c)
                CHECK(out.at(static_cast<int64_t>(q), c) == base.at(static_cast<int64_t>(q), c));
    }
}

TEST_CASE("classify: zero weights with a favoring bias always pick that class") {
    Fixture f;
    auto model = f.model();
    ClassifierHead head = model.head();
    std::fill(head.w_z.mutable_data().begin(), head.w_z.mutable_data().end(), 0.0);
    head.b_z.mutable_data()[2] = 5.0;
    std::mt19937_64 rng(40);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor h = Tensor::uniform({f.config.d_model}, 1.0, rng);
        Tensor logits = classify_logits(head, h);
        CHECK(argmax_class(logits) == 2);
    }
}

TEST_CASE("classify: softmax of logits sums to one and argmax is shift invariant") {
    Fixture f;
    auto model = f.model();
    std::mt19937_64 rng(41);
    Tensor h = Tensor::uniform({f.config.d_model}, 1.0, rng);
    Tensor logits = classify_logits(model.head(), h);
    Tensor probs = softmax(logits);
    double s = 0;
    for (int64_t i = 0; i < probs.numel(); ++i) s += probs.at(i);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    Tensor shifted = scale(add(logits, Tensor::full(logits.shape(), 3.21)), 1.0);
    CHECK(argmax_class(shifted) == argmax_class(logits));
}

TEST_CASE("classify: gradient of cross_entropy over the head checks out") {
    Fixture f;
    auto model = f.model();
    std::mt19937_64 rng(42);
    Tensor h = Tensor::uniform({f.config.d_model}, 1.0, rng);
    ClassifierHead head = model.head();
    auto loss = [&] { return cross_entropy(classify_logits(head, h), 1); };
    double err = finite_difference_check(loss, {head.w_h, head.b_h, head.w_z, head.b_z},
                                         {.eps = 1e-4, .max_coords_per_param = 24});
    CHECK(err < 1e-4);
}

TEST_CASE("lm_generation_loss: untrained model sits near the uniform baseline") {
    Fixture f;
    auto model = f.model();
    auto input = build_stage1_input(f.conv, 0, 2, f.vocab, f.config.max_len);
    EncodedInput enc_in = EncodedInput::from_tokens(input.context);
    Tensor enc = model.encode(enc_in);
    std::vector<int64_t> target = {f.vocab.id(Vocabulary::speaker_token("alice")),
                                   f.vocab.id_strict("feels")};
    for (const auto& tok : tokenize("merry sparkling cheer")) target.push_back(f.vocab.id(tok));
    target.push_back(Vocabulary::kEos);
    double loss = model.lm_generation_loss(enc, enc_in.mask(), target, 2).value();
    double uniform = std::log(static_cast<double>(f.vocab.size()));
    CHECK(loss > 0.9 * uniform);
    CHECK(loss < 1.1 * uniform);
}

TEST_CASE("lm_generation_loss: empty gloss rejected") {
    Fixture f;
    auto model = f.model();
    auto input = build_stage1_input(f.conv, 0, 2, f.vocab, f.config.max_len);
    EncodedInput enc_in = EncodedInput::from_tokens(input.context);
    Tensor enc = model.encode(enc_in);
    std::vector<int64_t> prefix_only = {f.vocab.id(Vocabulary::speaker_token("alice")),
                                        f.vocab.id_strict("feels")};
    CHECK_THROWS_AS(model.lm_generation_loss(enc, enc_in.mask(), prefix_only, 2), ContractError);
}

TEST_CASE("lm_generation_loss: overfits a single sample") {
    Fixture f;
    auto model = f.model(7);
    auto input = build_stage1_input(f.conv, 0, 2, f.vocab, f.config.max_len);
    std::vector<int64_t> target = {f.vocab.id(Vocabulary::speaker_token("alice")),
                                   f.vocab.id_strict("feels")};
    for (const auto& tok : tokenize("merry sparkling cheer")) target.push_back(f.vocab.id(tok));
    target.push_back(Vocabulary::kEos);

    AdamW opt(model.params().all(), {.lr = 3e-3, .weight_decay = 0.0});
    double last = 0;
    for (int step = 0; step < 300; ++step) {
        Tape tape;
        TapeScope scope(tape);
        EncodedInput enc_in = EncodedInput::from_tokens(input.context);
        Tensor enc = model.encode(enc_in);
        Tensor loss = model.lm_generation_loss(enc, enc_in.mask(), target, 2);
        last = loss.value();
        tape.backward(loss);
        opt.step();
    }
    CHECK(last < 0.1);
}

TEST_CASE("overfit-one-batch: 500 steps drive stage-1 classification loss below 0.05") {
    Fixture f;
    auto model = f.model(11);
    AdamW opt(model.params().all(), {.lr = 3e-3, .weight_decay = 0.0});
    double last = 1e9;
    for (int step = 0; step < 500; ++step) {
        Tape tape;
        TapeScope scope(tape);
        std::vector<Tensor> losses;
        for (int t = 0; t < static_cast<int>(f.conv.utterances.size()); ++t) {
            auto input = build_stage1_input(f.conv, t, f.config.context_window, f.vocab,
                                            f.config.max_len);
            Tensor h = model.forward_stage1(input);
            Tensor logits = classify_logits(model.head(), h);
            losses.push_back(cross_entropy(
                logits, f.labels.index_of(f.conv.utterances[static_cast<size_t>(t)].label)));
        }
        Tensor loss = mean(concat(losses));
        last = loss.value();
        tape.backward(loss);
        opt.step();
        if (last < 0.03) break;  // early exit keeps the test quick
    }
    CHECK(last < 0.05);
}

TEST_CASE("encode: rejects sequences beyond max_len") {
    Fixture f;
    auto model = f.model();
    std::vector<int64_t> too_long(static_cast<size_t>(f.config.max_len + 1), 7);
    CHECK_THROWS_AS(model.encode(EncodedInput::from_tokens(too_long)), ContractError);
}

TEST_CASE("checkpoint: save/load round-trips bitwise and rebuilds the same model") {
    Fixture f;
    auto model = f.model(13);
    auto ckpt = Checkpoint::capture(model);
    auto dir = std::filesystem::temp_directory_path() / "mplp_tests";
    std::filesystem::create_directories(dir);
    auto path = (dir / "model.ckpt").string();
    ckpt.save(path);
    auto loaded = Checkpoint::load(path);
    CHECK(loaded == ckpt);

    auto rebuilt = loaded.build_model();
    auto input = build_stage1_input(f.conv, 2, 2, f.vocab, f.config.max_len);
    Tensor a = model.forward_stage1(input);
    Tensor b = rebuilt.forward_stage1(input);
    for (int64_t i = 0; i < a.numel(); ++i) CHECK(a.at(i) == b.at(i));
}

TEST_CASE("model gradients: stage-1 loss passes a sampled finite-difference check") {
    Fixture f;
    auto model = f.model(17);
    auto input = build_stage1_input(f.conv, 1, 2, f.vocab, f.config.max_len);
    auto loss = [&] {
        Tensor h = model.forward_stage1(input);
        return cross_entropy(classify_logits(model.head(), h), 2);
    };
    double err = finite_difference_check(loss, model.params().all(),
                                         {.eps = 1e-4, .max_coords_per_param = 3, .seed = 5});
    CHECK(err < 1e-4);
}
