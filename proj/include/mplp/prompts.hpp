#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "mplp/model.hpp"
#include "mplp/params.hpp"
#include "mplp/retrieval.hpp"
#include "mplp/tensor.hpp"

namespace mplp {

/// Scoring matrix over concatenated pairs, relation matrices, bidirectional
/// recurrent cell weights, and the projection back to d_model.
struct HistoryPromptParams {
    Tensor w_score;           // [1, 2d]: score of [h_i ; h_t]
    Tensor w_same, w_other;   // [d, d]: applied by speaker match
    Tensor fwd_wx, fwd_wh, fwd_b;  // forward cell: [4d, d], [4d, d], [4d]
    Tensor bwd_wx, bwd_wh, bwd_b;  // backward cell
    Tensor proj_w, proj_b;    // [d, 2d], [d]

    static HistoryPromptParams create(ParameterStore& store, int64_t d_model,
                                      std::mt19937_64& rng);
    static HistoryPromptParams from_store(const ParameterStore& store);
    static bool present_in(const ParameterStore& store);
    std::vector<Tensor> all() const;
};

struct ExperiencePromptParams {
    Tensor w_score;  // [1, d]: score of d_j (x) h_t

    static ExperiencePromptParams create(ParameterStore& store, int64_t d_model,
                                         std::mt19937_64& rng);
    static ExperiencePromptParams from_store(const ParameterStore& store);
    static bool present_in(const ParameterStore& store);
};

/// Embedded text prefix followed by one injected vector at the final (mask)
/// slot.
struct SoftPrompt {
    std::vector<int64_t> prefix_ids;
    Tensor vector;

    void append_to(EncodedInput& input) const;
};

/// h_i <- W_same * h_i when the speaker matches the target's, W_other
/// otherwise.
std::vector<Tensor> relation_aware_transform(const std::vector<Tensor>& history,
                                             const std::vector<bool>& same_speaker,
                                             const HistoryPromptParams& params);

/// Attention over predecessors: softmax of w_score . [h_i ; h_t].
Tensor history_attention(const std::vector<Tensor>& history, const Tensor& h_target,
                         const Tensor& w_score);

/// Bidirectional recurrent pass; forward and backward halves concatenated.
/// Exposed pre-projection for symmetry testing.
std::vector<Tensor> bilstm_concat(const std::vector<Tensor>& sequence,
                                  const HistoryPromptParams& params);
/// bilstm_concat followed by the projection to d_model.
std::vector<Tensor> contextualize(const std::vector<Tensor>& sequence,
                                  const HistoryPromptParams& params);

struct HistoryPromptResult {
    SoftPrompt prompt;
    Tensor h_hist;      // influence + h_t
    Tensor influence;   // sum_i a_i h~_i (zero vector when t = 0)
};

/// Attention weights come from the raw cached vectors; the aggregated values
/// are the relation-transformed, recurrently contextualized ones. With no
/// history the influence is zero and the injected vector equals h_t.
HistoryPromptResult build_history_prompt(const std::vector<Tensor>& history,
                                         const std::vector<bool>& same_speaker,
                                         const Tensor& h_target,
                                         const HistoryPromptParams& params,
                                         const std::vector<int64_t>& prefix_ids);

struct ExperiencePromptResult {
    SoftPrompt prompt;
    Tensor h_exp;
    Tensor influence;
    Tensor weights;  // a^exp, for inspection
};

/// a_j = softmax(w_score . (d_j (x) h_t)); influence = sum_j a_j d_j.
ExperiencePromptResult build_experience_prompt(const SimilarSampleSet& similar,
                                               const Tensor& h_target,
                                               const ExperiencePromptParams& params,
                                               const std::vector<int64_t>& prefix_ids);

/// Wraps a cached representation as a constant tensor (no gradient).
Tensor cached_vector(const std::vector<double>& values);

}  // namespace mplp
