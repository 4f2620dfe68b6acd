#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mplp/corpus.hpp"
#include "mplp/params.hpp"
#include "mplp/tensor.hpp"
#include "mplp/vocab.hpp"

namespace mplp {

struct ModelConfig {
    int64_t d_model = 64;
    int n_layers = 2;
    int n_heads = 2;
    int64_t d_ff = 128;
    int64_t max_len = 160;
    int context_window = 4;  // m: preceding utterances packaged into the encoder input
    double dropout_rate = 0.1;

    void validate() const;
    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
    bool operator==(const ModelConfig&) const = default;
};

/// Encoder input where each position is either a vocabulary token or an
/// injected soft vector, plus a 0/1 attention mask.
class EncodedInput {
public:
    void append_token(int64_t id);
    void append_pad();
    void append_vector(Tensor v);
    static EncodedInput from_tokens(const std::vector<int64_t>& ids);

    size_t size() const { return tokens_.size(); }
    const std::vector<double>& mask() const { return mask_; }
    int64_t token_at(size_t i) const { return tokens_[i]; }
    bool is_injected(size_t i) const { return tokens_[i] < 0; }
    const Tensor& injected_at(size_t i) const;

private:
    std::vector<int64_t> tokens_;  // -1 marks an injected position
    std::vector<Tensor> injected_;
    std::vector<double> mask_;
};

/// Hidden projection + logit projection of the classification head.
struct ClassifierHead {
    Tensor w_h, b_h;  // [d_hidden, d_in], [d_hidden]
    Tensor w_z, b_z;  // [classes, d_hidden], [classes]
};

Tensor classify_logits(const ClassifierHead& head, const Tensor& h);
int argmax_class(const Tensor& logits);

/// Tokenized stage-1 encoder context C_t (star-delimited target, windowed
/// history) and decoder prompt P_t = [speaker, "feels", <mask>].
struct Stage1Input {
    std::vector<int64_t> context;
    std::vector<int64_t> prompt;
    int mask_position = 2;
};

/// Window m, left truncation to max_len; the star-delimited target segment
/// always survives truncation.
Stage1Input build_stage1_input(const Conversation& conv, int t, int m, const Vocabulary& vocab,
                               int64_t max_len);

/// Mini encoder-decoder transformer: token/position embeddings, pre-LN
/// multi-head attention blocks, GeLU feed-forward, weight-tied LM head, and
/// a feed-forward classification head.
class Seq2SeqModel {
public:
    Seq2SeqModel(ModelConfig config, Vocabulary vocab, EmotionLabelSet labels, uint64_t seed);

    const ModelConfig& config() const { return config_; }
    const Vocabulary& vocab() const { return vocab_; }
    const EmotionLabelSet& labels() const { return labels_; }
    ParameterStore& params() { return params_; }
    const ParameterStore& params() const { return params_; }

    Tensor token_embeddings() const { return params_.get("emb.tok"); }

    /// Encoder forward; result is [n, d_model]. Throws ContractError when the
    /// input exceeds max_len.
    Tensor encode(const EncodedInput& input, bool training = false,
                  std::mt19937_64* dropout_rng = nullptr) const;

    /// Teacher-forced decoder pass over target token ids; [t, d_model].
    Tensor decode(const std::vector<int64_t>& target_ids, const Tensor& encoder_out,
                  const std::vector<double>& encoder_mask, bool training = false,
                  std::mt19937_64* dropout_rng = nullptr) const;

    /// Stage-1 forward: decoder hidden state at the <mask> position of P_t.
    Tensor forward_stage1(const Stage1Input& input, bool training = false,
                          std::mt19937_64* dropout_rng = nullptr) const;

    /// Default classification head (reused by stage 2 unless fusion_mode
    /// requires a wider one).
    ClassifierHead head() const;

    /// Next-token logits from decoder states, weight-tied to the embedding
    /// matrix: [t, vocab].
    Tensor lm_logits(const Tensor& decoder_out) const;

    /// Teacher-forced generation loss. target_ids spans the whole sequence
    /// (prefix ++ gloss ++ <eos>); the first `n_prefix` tokens are
    /// conditioning context and bear no loss; the rest are averaged.
    Tensor lm_generation_loss(const Tensor& encoder_out, const std::vector<double>& encoder_mask,
                              const std::vector<int64_t>& target_ids, int n_prefix,
                              bool training = false, std::mt19937_64* dropout_rng = nullptr) const;

private:
    Tensor attention(const Tensor& x_q, const Tensor& x_kv, const std::string& prefix,
                     const std::vector<double>* key_mask, bool causal, bool training,
                     std::mt19937_64* rng) const;
    Tensor feed_forward(const Tensor& x, const std::string& prefix, bool training,
                        std::mt19937_64* rng) const;
    Tensor layer_norm_named(const Tensor& x, const std::string& prefix) const;
    Tensor embed_positions(const EncodedInput& input, const std::string& pos_table) const;
    Tensor maybe_dropout(const Tensor& x, bool training, std::mt19937_64* rng) const;

    ModelConfig config_;
    Vocabulary vocab_;
    EmotionLabelSet labels_;
    ParameterStore params_;
};

}  // namespace mplp
