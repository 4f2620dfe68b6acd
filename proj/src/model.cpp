#include "mplp/model.hpp"

#include <json.hpp>

#include <cmath>

#include "mplp/tokenize.hpp"

namespace mplp {

using nlohmann::json;

void ModelConfig::validate() const {
    if (d_model <= 0 || n_layers <= 0 || n_heads <= 0 || d_ff <= 0 || max_len <= 0)
        throw ConfigError("model config: dimensions must be positive");
    if (d_model % n_heads != 0) throw ConfigError("model config: d_model not divisible by n_heads");
    if (context_window < 0) throw ConfigError("model config: context window must be >= 0");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
        throw ConfigError("model config: dropout must be in [0, 1)");
}

std::string ModelConfig::to_json() const {
    json j;
    j["d_model"] = d_model;
    j["n_layers"] = n_layers;
    j["n_heads"] = n_heads;
    j["d_ff"] = d_ff;
    j["max_len"] = max_len;
    j["context_window"] = context_window;
    j["dropout_rate"] = dropout_rate;
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    ModelConfig c;
    c.d_model = j.at("d_model").get<int64_t>();
    c.n_layers = j.at("n_layers").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.d_ff = j.at("d_ff").get<int64_t>();
    c.max_len = j.at("max_len").get<int64_t>();
    c.context_window = j.at("context_window").get<int>();
    c.dropout_rate = j.at("dropout_rate").get<double>();
    c.validate();
    return c;
}

void EncodedInput::append_token(int64_t id) {
    if (id < 0) throw ContractError("encoded input: negative token id");
    tokens_.push_back(id);
    injected_.emplace_back();
    mask_.push_back(1.0);
}

void EncodedInput::append_pad() {
    tokens_.push_back(Vocabulary::kPad);
    injected_.emplace_back();
    mask_.push_back(0.0);
}

void EncodedInput::append_vector(Tensor v) {
    if (!v.defined() || v.ndim() != 1)
        throw ContractError("encoded input: injected position must be a 1-D vector");
    tokens_.push_back(-1);
    injected_.push_back(std::move(v));
    mask_.push_back(1.0);
}

EncodedInput EncodedInput::from_tokens(const std::vector<int64_t>& ids) {
    EncodedInput input;
    for (int64_t id : ids) input.append_token(id);
    return input;
}

const Tensor& EncodedInput::injected_at(size_t i) const {
    if (!is_injected(i)) throw ContractError("encoded input: position holds a token");
    return injected_[i];
}

Tensor classify_logits(const ClassifierHead& head, const Tensor& h) {
    Tensor z = gelu(add(matvec(head.w_h, h), head.b_h));
    return add(matvec(head.w_z, z), head.b_z);
}

int argmax_class(const Tensor& logits) {
    int best = 0;
    for (int64_t i = 1; i < logits.numel(); ++i)
        if (logits.at(i) > logits.at(best)) best = static_cast<int>(i);
    return best;
}

Stage1Input build_stage1_input(const Conversation& conv, int t, int m, const Vocabulary& vocab,
                               int64_t max_len) {
    if (t < 0 || t >= static_cast<int>(conv.utterances.size()))
        throw ContractError("build_stage1_input: target index out of range");
    const auto& target = conv.utterances[static_cast<size_t>(t)];

    // star-delimited target segment: *, s_t, u_t, *
    std::vector<int64_t> segment;
    segment.push_back(Vocabulary::kStar);
    segment.push_back(vocab.id(Vocabulary::speaker_token(target.speaker)));
    for (const auto& tok : tokenize(target.text)) segment.push_back(vocab.id(tok));
    segment.push_back(Vocabulary::kStar);
    if (static_cast<int64_t>(segment.size()) > max_len) {
        // keep both stars and the speaker, drop the oldest target tokens
        std::vector<int64_t> kept(segment.begin(), segment.begin() + 2);
        int64_t room = max_len - 3;
        if (room < 1) throw ContractError("build_stage1_input: max_len too small for any target");
        kept.insert(kept.end(), segment.end() - 1 - room, segment.end() - 1);
        kept.push_back(Vocabulary::kStar);
        segment = std::move(kept);
    }

    // history: the most recent m utterances, each as [speaker, tokens...]
    std::vector<int64_t> history;
    int first = std::max(0, t - m);
    for (int i = first; i < t; ++i) {
        const auto& u = conv.utterances[static_cast<size_t>(i)];
        history.push_back(vocab.id(Vocabulary::speaker_token(u.speaker)));
        for (const auto& tok : tokenize(u.text)) history.push_back(vocab.id(tok));
    }

    int64_t budget = max_len - static_cast<int64_t>(segment.size());
    if (static_cast<int64_t>(history.size()) > budget)
        history.erase(history.begin(),
                      history.begin() + (static_cast<int64_t>(history.size()) - budget));

    Stage1Input out;
    out.context = std::move(history);
    out.context.insert(out.context.end(), segment.begin(), segment.end());
    out.prompt = {vocab.id(Vocabulary::speaker_token(target.speaker)), vocab.id_strict("feels"),
                  Vocabulary::kMask};
    out.mask_position = 2;
    return out;
}

Seq2SeqModel::Seq2SeqModel(ModelConfig config, Vocabulary vocab, EmotionLabelSet labels,
                           uint64_t seed)
    : config_(std::move(config)), vocab_(std::move(vocab)), labels_(std::move(labels)) {
    config_.validate();
    std::mt19937_64 rng(seed);
    int64_t d = config_.d_model;
    int64_t v = vocab_.size();
    int64_t c = labels_.size();

    // small fixed scale for embedding tables: the LM head is weight-tied to
    // emb.tok, and an untrained model should predict near-uniformly
    params_.put("emb.tok", Tensor::uniform({v, d}, 0.05, rng, true));
    params_.put("emb.enc_pos", Tensor::uniform({config_.max_len, d}, 0.05, rng, true));
    params_.put("emb.dec_pos", Tensor::uniform({config_.max_len, d}, 0.05, rng, true));

    auto make_ln = [&](const std::string& prefix) {
        params_.create_ones(prefix + ".g", {d});
        params_.create_zeros(prefix + ".b", {d});
    };
    auto make_attn = [&](const std::string& prefix) {
        for (const char* w : {"q", "k", "v", "o"}) {
            params_.create(prefix + "." + w + ".w", {d, d}, d, d, rng);
            // a key bias shifts every score in a row equally and cancels in
            // the softmax, so keys get none
            if (std::string(w) != "k") params_.create_zeros(prefix + "." + w + ".b", {d});
        }
    };
    auto make_ff = [&](const std::string& prefix) {
        params_.create(prefix + ".w1", {d, config_.d_ff}, d, config_.d_ff, rng);
        params_.create_zeros(prefix + ".b1", {config_.d_ff});
        params_.create(prefix + ".w2", {config_.d_ff, d}, config_.d_ff, d, rng);
        params_.create_zeros(prefix + ".b2", {d});
    };

    for (int l = 0; l < config_.n_layers; ++l) {
        std::string base = "enc.L" + std::to_string(l);
        make_ln(base + ".ln1");
        make_attn(base + ".attn");
        make_ln(base + ".ln2");
        make_ff(base + ".ff");
    }
    make_ln("enc.final_ln");

    for (int l = 0; l < config_.n_layers; ++l) {
        std::string base = "dec.L" + std::to_string(l);
        make_ln(base + ".ln1");
        make_attn(base + ".self");
        make_ln(base + ".ln2");
        make_attn(base + ".cross");
        make_ln(base + ".ln3");
        make_ff(base + ".ff");
    }
    make_ln("dec.final_ln");

    params_.create("head.w_h", {d, d}, d, d, rng);
    params_.create_zeros("head.b_h", {d});
    params_.create("head.w_z", {c, d}, d, c, rng);
    params_.create_zeros("head.b_z", {c});
}

ClassifierHead Seq2SeqModel::head() const {
    return {params_.get("head.w_h"), params_.get("head.b_h"), params_.get("head.w_z"),
            params_.get("head.b_z")};
}

Tensor Seq2SeqModel::maybe_dropout(const Tensor& x, bool training, std::mt19937_64* rng) const {
    if (!training || config_.dropout_rate == 0.0) return x;
    if (rng == nullptr) throw ContractError("model: training forward requires a dropout rng");
    return dropout(x, config_.dropout_rate, *rng, true);
}

Tensor Seq2SeqModel::layer_norm_named(const Tensor& x, const std::string& prefix) const {
    return layer_norm(x, params_.get(prefix + ".g"), params_.get(prefix + ".b"));
}

Tensor Seq2SeqModel::attention(const Tensor& x_q, const Tensor& x_kv, const std::string& prefix,
                               const std::vector<double>* key_mask, bool causal, bool training,
                               std::mt19937_64* rng) const {
    int64_t n = x_q.rows();
    int64_t m = x_kv.rows();
    int64_t d = config_.d_model;
    int64_t hd = d / config_.n_heads;

    Tensor q = add_bias(matmul(x_q, params_.get(prefix + ".q.w")), params_.get(prefix + ".q.b"));
    Tensor k = matmul(x_kv, params_.get(prefix + ".k.w"));
    Tensor v = add_bias(matmul(x_kv, params_.get(prefix + ".v.w")), params_.get(prefix + ".v.b"));

    std::vector<double> mask(static_cast<size_t>(n * m), 1.0);
    for (int64_t r = 0; r < n; ++r)
        for (int64_t c = 0; c < m; ++c) {
            bool valid = (!key_mask || (*key_mask)[static_cast<size_t>(c)] != 0.0) &&
                         (!causal || c <= r);
            if (!valid) mask[static_cast<size_t>(r * m + c)] = 0.0;
        }

    std::vector<Tensor> heads;
    heads.reserve(static_cast<size_t>(config_.n_heads));
    for (int h = 0; h < config_.n_heads; ++h) {
        Tensor qh = slice_cols(q, h * hd, hd);
        Tensor kh = slice_cols(k, h * hd, hd);
        Tensor vh = slice_cols(v, h * hd, hd);
        Tensor scores = scale(matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(hd)));
        Tensor probs = softmax_masked_rows(scores, mask);
        heads.push_back(matmul(probs, vh));
    }
    Tensor merged = concat_cols(heads);
    Tensor out = add_bias(matmul(merged, params_.get(prefix + ".o.w")),
                          params_.get(prefix + ".o.b"));
    return maybe_dropout(out, training, rng);
}

Tensor Seq2SeqModel::feed_forward(const Tensor& x, const std::string& prefix, bool training,
                                  std::mt19937_64* rng) const {
    Tensor h = gelu(add_bias(matmul(x, params_.get(prefix + ".w1")), params_.get(prefix + ".b1")));
    Tensor out = add_bias(matmul(h, params_.get(prefix + ".w2")), params_.get(prefix + ".b2"));
    return maybe_dropout(out, training, rng);
}

Tensor Seq2SeqModel::embed_positions(const EncodedInput& input, const std::string& pos_table) const {
    Tensor table = params_.get("emb.tok");
    std::vector<Tensor> pieces;
    std::vector<int64_t> run;
    auto flush = [&] {
        if (!run.empty()) {
            pieces.push_back(embedding(table, run));
            run.clear();
        }
    };
    for (size_t i = 0; i < input.size(); ++i) {
        if (input.is_injected(i)) {
            flush();
            pieces.push_back(input.injected_at(i));
        } else {
            run.push_back(input.token_at(i));
        }
    }
    flush();
    Tensor x = concat_rows(pieces);
    Tensor pos = slice_rows(params_.get(pos_table), 0, x.rows());
    return add(x, pos);
}

Tensor Seq2SeqModel::encode(const EncodedInput& input, bool training,
                            std::mt19937_64* rng) const {
    if (input.size() == 0) throw ContractError("encode: empty input");
    if (static_cast<int64_t>(input.size()) > config_.max_len)
        throw ContractError("encode: sequence exceeds max_len; callers must truncate");
    Tensor x = maybe_dropout(embed_positions(input, "emb.enc_pos"), training, rng);
    const auto& key_mask = input.mask();
    for (int l = 0; l < config_.n_layers; ++l) {
        std::string base = "enc.L" + std::to_string(l);
        Tensor normed = layer_norm_named(x, base + ".ln1");
        x = add(x, attention(normed, normed, base + ".attn", &key_mask, false, training, rng));
        x = add(x, feed_forward(layer_norm_named(x, base + ".ln2"), base + ".ff", training, rng));
    }
    return layer_norm_named(x, "enc.final_ln");
}

Tensor Seq2SeqModel::decode(const std::vector<int64_t>& target_ids, const Tensor& encoder_out,
                            const std::vector<double>& encoder_mask, bool training,
                            std::mt19937_64* rng) const {
    if (target_ids.empty()) throw ContractError("decode: empty target");
    if (static_cast<int64_t>(target_ids.size()) > config_.max_len)
        throw ContractError("decode: sequence exceeds max_len; callers must truncate");
    Tensor x = maybe_dropout(embed_positions(EncodedInput::from_tokens(target_ids), "emb.dec_pos"),
                             training, rng);
    for (int l = 0; l < config_.n_layers; ++l) {
        std::string base = "dec.L" + std::to_string(l);
        Tensor normed = layer_norm_named(x, base + ".ln1");
        x = add(x, attention(normed, normed, base + ".self", nullptr, true, training, rng));
        x = add(x, attention(layer_norm_named(x, base + ".ln2"), encoder_out, base + ".cross",
                             &encoder_mask, false, training, rng));
        x = add(x, feed_forward(layer_norm_named(x, base + ".ln3"), base + ".ff", training, rng));
    }
    return layer_norm_named(x, "dec.final_ln");
}

Tensor Seq2SeqModel::forward_stage1(const Stage1Input& input, bool training,
                                    std::mt19937_64* rng) const {
    EncodedInput enc_in = EncodedInput::from_tokens(input.context);
    Tensor enc = encode(enc_in, training, rng);
    Tensor dec = decode(input.prompt, enc, enc_in.mask(), training, rng);
    return row(dec, input.mask_position);
}

Tensor Seq2SeqModel::lm_logits(const Tensor& decoder_out) const {
    return matmul_nt(decoder_out, params_.get("emb.tok"));
}

Tensor Seq2SeqModel::lm_generation_loss(const Tensor& encoder_out,
                                        const std::vector<double>& encoder_mask,
                                        const std::vector<int64_t>& target_ids, int n_prefix,
                                        bool training, std::mt19937_64* rng) const {
    if (static_cast<int>(target_ids.size()) <= n_prefix + 1)
        throw ContractError("lm_generation_loss: empty generation target");
    std::vector<int64_t> dec_in(target_ids.begin(), target_ids.end() - 1);
    Tensor dec = decode(dec_in, encoder_out, encoder_mask, training, rng);
    Tensor logits = lm_logits(dec);
    std::vector<int64_t> shifted(target_ids.begin() + 1, target_ids.end());
    std::vector<double> weights(shifted.size(), 1.0);
    for (int i = 0; i + 1 < n_prefix; ++i) weights[static_cast<size_t>(i)] = 0.0;
    return sequence_cross_entropy(logits, shifted, weights);
}

}  // namespace mplp
