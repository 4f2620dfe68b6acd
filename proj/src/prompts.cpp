#include "mplp/prompts.hpp"

namespace mplp {

namespace {
constexpr const char* kHistNames[] = {"hist.w_score", "hist.w_same", "hist.w_other",
                                      "hist.fwd.wx",  "hist.fwd.wh", "hist.fwd.b",
                                      "hist.bwd.wx",  "hist.bwd.wh", "hist.bwd.b",
                                      "hist.proj.w",  "hist.proj.b"};
}

HistoryPromptParams HistoryPromptParams::create(ParameterStore& store, int64_t d,
                                                std::mt19937_64& rng) {
    HistoryPromptParams p;
    p.w_score = store.create("hist.w_score", {1, 2 * d}, 2 * d, 1, rng);
    p.w_same = store.create("hist.w_same", {d, d}, d, d, rng);
    p.w_other = store.create("hist.w_other", {d, d}, d, d, rng);
    p.fwd_wx = store.create("hist.fwd.wx", {4 * d, d}, d, 4 * d, rng);
    p.fwd_wh = store.create("hist.fwd.wh", {4 * d, d}, d, 4 * d, rng);
    p.fwd_b = store.create_zeros("hist.fwd.b", {4 * d});
    p.bwd_wx = store.create("hist.bwd.wx", {4 * d, d}, d, 4 * d, rng);
    p.bwd_wh = store.create("hist.bwd.wh", {4 * d, d}, d, 4 * d, rng);
    p.bwd_b = store.create_zeros("hist.bwd.b", {4 * d});
    p.proj_w = store.create("hist.proj.w", {d, 2 * d}, 2 * d, d, rng);
    p.proj_b = store.create_zeros("hist.proj.b", {d});
    return p;
}

HistoryPromptParams HistoryPromptParams::from_store(const ParameterStore& store) {
    HistoryPromptParams p;
    p.w_score = store.get("hist.w_score");
    p.w_same = store.get("hist.w_same");
    p.w_other = store.get("hist.w_other");
    p.fwd_wx = store.get("hist.fwd.wx");
    p.fwd_wh = store.get("hist.fwd.wh");
    p.fwd_b = store.get("hist.fwd.b");
    p.bwd_wx = store.get("hist.bwd.wx");
    p.bwd_wh = store.get("hist.bwd.wh");
    p.bwd_b = store.get("hist.bwd.b");
    p.proj_w = store.get("hist.proj.w");
    p.proj_b = store.get("hist.proj.b");
    return p;
}

bool HistoryPromptParams::present_in(const ParameterStore& store) {
    for (const char* n : kHistNames)
        if (!store.has(n)) return false;
    return true;
}

std::vector<Tensor> HistoryPromptParams::all() const {
    return {w_score, w_same, w_other, fwd_wx, fwd_wh, fwd_b, bwd_wx, bwd_wh, bwd_b, proj_w,
            proj_b};
}

ExperiencePromptParams ExperiencePromptParams::create(ParameterStore& store, int64_t d,
                                                      std::mt19937_64& rng) {
    ExperiencePromptParams p;
    p.w_score = store.create("exp.w_score", {1, d}, d, 1, rng);
    return p;
}

ExperiencePromptParams ExperiencePromptParams::from_store(const ParameterStore& store) {
    ExperiencePromptParams p;
    p.w_score = store.get("exp.w_score");
    return p;
}

bool ExperiencePromptParams::present_in(const ParameterStore& store) {
    return store.has("exp.w_score");
}

void SoftPrompt::append_to(EncodedInput& input) const {
    for (int64_t id : prefix_ids) input.append_token(id);
    input.append_vector(vector);
}

Tensor cached_vector(const std::vector<double>& values) {
    return Tensor::from_data({static_cast<int64_t>(values.size())},
                             std::vector<double>(values));
}

std::vector<Tensor> relation_aware_transform(const std::vector<Tensor>& history,
                                             const std::vector<bool>& same_speaker,
                                             const HistoryPromptParams& params) {
    if (history.size() != same_speaker.size())
        throw ContractError("relation_aware_transform: speaker flag length mismatch");
    std::vector<Tensor> out;
    out.reserve(history.size());
    for (size_t i = 0; i < history.size(); ++i)
        out.push_back(matvec(same_speaker[i] ? params.w_same : params.w_other, history[i]));
    return out;
}

Tensor history_attention(const std::vector<Tensor>& history, const Tensor& h_target,
                         const Tensor& w_score) {
    if (history.empty()) throw ContractError("history_attention: no history vectors");
    std::vector<Tensor> scores;
    scores.reserve(history.size());
    for (const auto& h : history) scores.push_back(matvec(w_score, concat({h, h_target})));
    return softmax(concat(scores));
}

namespace {

// one direction of the recurrence; d inferred from the cell widths
std::vector<Tensor> lstm_direction(const std::vector<Tensor>& xs, const Tensor& wx,
                                   const Tensor& wh, const Tensor& b) {
    int64_t d4 = wx.rows();
    int64_t d = d4 / 4;
    Tensor h = Tensor::zeros({d});
    Tensor c = Tensor::zeros({d});
    std::vector<Tensor> out;
    out.reserve(xs.size());
    for (const auto& x : xs) {
        Tensor gates = add(add(matvec(wx, x), matvec(wh, h)), b);
        Tensor in_gate = sigmoid(slice(gates, 0, d));
        Tensor forget_gate = sigmoid(slice(gates, d, d));
        Tensor cell_in = tanh_t(slice(gates, 2 * d, d));
        Tensor out_gate = sigmoid(slice(gates, 3 * d, d));
        c = add(mul(forget_gate, c), mul(in_gate, cell_in));
        h = mul(out_gate, tanh_t(c));
        out.push_back(h);
    }
    return out;
}

}  // namespace

std::vector<Tensor> bilstm_concat(const std::vector<Tensor>& sequence,
                                  const HistoryPromptParams& params) {
    if (sequence.empty()) throw ContractError("bilstm: empty sequence");
    auto fwd = lstm_direction(sequence, params.fwd_wx, params.fwd_wh, params.fwd_b);
    std::vector<Tensor> reversed(sequence.rbegin(), sequence.rend());
    auto bwd = lstm_direction(reversed, params.bwd_wx, params.bwd_wh, params.bwd_b);
    std::vector<Tensor> out;
    out.reserve(sequence.size());
    for (size_t i = 0; i < sequence.size(); ++i)
        out.push_back(concat({fwd[i], bwd[sequence.size() - 1 - i]}));
    return out;
}

std::vector<Tensor> contextualize(const std::vector<Tensor>& sequence,
                                  const HistoryPromptParams& params) {
    auto pairs = bilstm_concat(sequence, params);
    std::vector<Tensor> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back(add(matvec(params.proj_w, p), params.proj_b));
    return out;
}

HistoryPromptResult build_history_prompt(const std::vector<Tensor>& history,
                                         const std::vector<bool>& same_speaker,
                                         const Tensor& h_target,
                                         const HistoryPromptParams& params,
                                         const std::vector<int64_t>& prefix_ids) {
    HistoryPromptResult result;
    if (history.empty()) {
        result.influence = Tensor::zeros(h_target.shape());
        result.h_hist = h_target;
    } else {
        Tensor weights = history_attention(history, h_target, params.w_score);
        auto transformed = relation_aware_transform(history, same_speaker, params);
        auto contextual = contextualize(transformed, params);
        Tensor stacked = concat_rows(contextual);
        result.influence = matvec_t(stacked, weights);
        result.h_hist = add(result.influence, h_target);
    }
    result.prompt.prefix_ids = prefix_ids;
    result.prompt.vector = result.h_hist;
    return result;
}

ExperiencePromptResult build_experience_prompt(const SimilarSampleSet& similar,
                                               const Tensor& h_target,
                                               const ExperiencePromptParams& params,
                                               const std::vector<int64_t>& prefix_ids) {
    if (similar.empty())
        throw ContractError("build_experience_prompt: empty similar sample set");
    std::vector<Tensor> reps;
    std::vector<Tensor> scores;
    reps.reserve(similar.size());
    for (const auto& s : similar) {
        Tensor d_j = cached_vector(s.representation);
        if (!d_j.same_shape(h_target))
            throw ContractError("build_experience_prompt: representation width mismatch");
        scores.push_back(matvec(params.w_score, mul(d_j, h_target)));
        reps.push_back(std::move(d_j));
    }
    ExperiencePromptResult result;
    result.weights = softmax(concat(scores));
    result.influence = matvec_t(concat_rows(reps), result.weights);
    result.h_exp = add(result.influence, h_target);
    result.prompt.prefix_ids = prefix_ids;
    result.prompt.vector = result.h_exp;
    return result;
}

}  // namespace mplp
