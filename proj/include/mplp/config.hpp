#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "mplp/error.hpp"
#include "mplp/model.hpp"
#include "mplp/synthetic.hpp"

namespace mplp {

struct TrainConfig {
    int stage1_epochs = 2;
    int stage2_epochs = 1;
    int batch_size = 8;
    double learning_rate = 2e-5;
    double weight_decay = 0.01;
    double warmup_fraction = 0.1;
    double alpha = 0.5;  // paraphrase loss weight
    int k = 3;           // similar samples
    std::string retriever = "bm25";  // bm25 | cosine
    double bm25_k1 = 1.5;
    double bm25_b = 0.75;
    bool use_hist_prompt = true;
    bool use_exp_prompt = true;
    bool use_label_para = true;
    std::string fusion_mode = "prompt";       // prompt | add | concat
    std::string paraphrase_target = "gloss";  // gloss | adjective | special_token
    int concat_extra_epochs = 1;
    std::string selection_metric = "weighted_f1";  // weighted_f1 | micro_f1
    bool include_sep_prefix = true;
    bool refresh_cache_every_epoch = false;
    uint64_t seed = 1;

    void validate() const;
};

/// Flat key=value text (one pair per line, '#' comments). Keys cover the
/// model, training, and generator settings; unknown keys are errors.
class FlatConfig {
public:
    static FlatConfig parse_file(const std::string& path);
    static FlatConfig parse_text(const std::string& text);

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const { return values_.count(key) > 0; }

    /// Applies recognized keys to the three config structs; throws
    /// ConfigError on unknown keys or unparsable values.
    void apply(ModelConfig& model, TrainConfig& train, GeneratorConfig& generator) const;

    /// Canonical serialized form of the resolved configs (sorted keys).
    static std::string canonical(const ModelConfig& model, const TrainConfig& train);

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

uint64_t fnv1a_hash(const std::string& text);

}  // namespace mplp
