#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mplp/checkpoint.hpp"
#include "mplp/config.hpp"
#include "mplp/corpus.hpp"
#include "mplp/metrics.hpp"
#include "mplp/model.hpp"
#include "mplp/prompts.hpp"
#include "mplp/repr_cache.hpp"
#include "mplp/retrieval.hpp"

namespace mplp {

struct DataBundle {
    std::vector<Conversation> train;
    std::vector<Conversation> dev;
    std::vector<Conversation> test;
    EmotionLabelSet labels;
    GlossTable glosses;
};

struct EvalReport {
    std::string split;
    double weighted_f1 = 0.0;
    std::optional<double> micro_f1_excluding_neutral;
    std::vector<double> per_class_f1;
    ConfusionMatrix confusion;
    std::vector<std::string> label_names;
    std::string config_echo;
    uint64_t seed = 0;

    std::string to_json() const;         // deterministic (sorted keys)
    void save(const std::string& path) const;
};

/// Runs fn(i) for i in [0, n) across worker threads. Thread count =
/// min(hardware, MPLP_NUM_THREADS when set). fn must only write to
/// index-disjoint state.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

/// Stage-1 fine-tuning: cross-entropy on the <mask> representation against
/// gold labels, AdamW with linear warmup/decay. Deterministic under
/// config.seed.
Seq2SeqModel train_stage1(const DataBundle& data, const ModelConfig& model_config,
                          const TrainConfig& config);

/// One frozen vector per utterance in every split, dropout off.
RepresentationCache cache_representations(const Seq2SeqModel& model, const DataBundle& data,
                                          const std::string& snapshot_tag);

/// Everything the stage-2 loss needs. Prompt parameters are created fresh in
/// the model's store; only the machinery the configuration enables exists.
class Stage2Pipeline {
public:
    Stage2Pipeline(Seq2SeqModel& model, const DataBundle& data, const TrainConfig& config,
                   RepresentationCache cache, RetrievalIndex index);

    /// Classification + alpha * generation loss for one utterance (Eq 20
    /// shape); `training` enables dropout via rng.
    Tensor utterance_loss(const Conversation& conv, int t, bool training,
                          std::mt19937_64* rng) const;

    /// Prediction for one utterance with the current weights, dropout off.
    int predict(const Conversation& conv, int t) const;

    /// Continues optimizing all parameters; retains the best checkpoint by
    /// the validation metric.
    void train(const std::function<void(int epoch, double dev_metric)>& on_epoch = nullptr);

    EvalReport evaluate(const std::string& split_name) const;

    const RepresentationCache& cache() const { return cache_; }
    const RetrievalIndex& index() const { return index_; }
    Seq2SeqModel& model() { return *model_; }
    const TrainConfig& config() const { return config_; }
    const SimilarSampleSet& similar_for(const std::string& utterance_id) const;

private:
    struct Item {
        const Conversation* conv;
        int t;
    };

    Tensor forward_repr(const Conversation& conv, int t, bool training, std::mt19937_64* rng,
                        Tensor* enc_out, std::vector<double>* enc_mask) const;
    void precompute_similar();
    void refresh_cache();
    std::vector<int64_t> paraphrase_target_ids(const std::string& label) const;
    std::vector<Item> split_items(const std::string& split_name) const;
    double metric_of(const EvalReport& report) const;

    Seq2SeqModel* model_;
    const DataBundle* data_;
    TrainConfig config_;
    RepresentationCache cache_;
    RetrievalIndex index_;
    std::optional<HistoryPromptParams> hist_params_;
    std::optional<ExperiencePromptParams> exp_params_;
    std::optional<ClassifierHead> concat_head_;
    std::map<std::string, SimilarSampleSet> similar_;
    bool needs_similar_ = false;
};

/// Artifacts written by the end-to-end pipeline under one run directory.
struct RunPaths {
    std::string dir;
    std::string config_snapshot() const { return dir + "/config.snapshot"; }
    std::string stage1_checkpoint() const { return dir + "/stage1.ckpt"; }
    std::string cache_file() const { return dir + "/cache.bin"; }
    std::string index_file() const { return dir + "/index.bin"; }
    std::string stage2_checkpoint() const { return dir + "/stage2.ckpt"; }
    std::string eval_report(const std::string& split) const {
        return dir + "/eval_" + split + ".json";
    }
    std::string manifest() const { return dir + "/manifest.json"; }
};

struct PipelineResult {
    EvalReport dev;
    EvalReport test;
};

/// gen/load corpus -> stage 1 -> cache -> index -> stage 2 -> eval dev+test,
/// writing every artifact into the run directory.
PipelineResult run_training_pipeline(const DataBundle& data, const ModelConfig& model_config,
                                     const TrainConfig& config, const RunPaths& paths);

}  // namespace mplp
