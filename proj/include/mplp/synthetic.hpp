#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mplp/corpus.hpp"

namespace mplp {

/// Controls the synthetic conversation generator. Three label-assignment
/// mechanisms can be planted with chosen mix weights:
///   hist - the label copies the same speaker's previous label; the text is
///          uninformative filler. Chain roots (no same-speaker predecessor)
///          draw a random label and reveal it lexically so chains are
///          grounded.
///   exp  - the label is tied to a template family that recurs across
///          dialogues; an instance emits a family signature (a pair of
///          signature tokens, individually ambiguous) plus filler.
///   lex  - the label is revealed by words drawn from that label's gloss.
///          Training dialogues draw from the first lex_train_fraction of each
///          label's distinctive gloss words; dev/test draw from all of them.
struct GeneratorConfig {
    int n_dialogues = 200;
    int speakers_per_dialogue = 2;
    int min_utterances = 8;
    int max_utterances = 12;
    double train_frac = 0.8;
    double dev_frac = 0.1;

    double hist_weight = 0.4;
    double exp_weight = 0.3;
    double lex_weight = 0.3;

    int n_templates = 42;
    int filler_vocab = 40;
    int fillers_min = 3;
    int fillers_max = 5;
    int lex_words_per_utterance = 2;
    double lex_train_fraction = 0.6;

    std::vector<std::string> labels;  // empty -> the shipped synthetic label set
    int neutral_index = 0;
};

struct UtteranceMeta {
    std::string utterance_id;
    std::string signal;  // "hist" | "hist_root" | "exp" | "lex"
    int template_id = -1;
};

struct SyntheticCorpus {
    std::vector<Conversation> train;
    std::vector<Conversation> dev;
    std::vector<Conversation> test;
    std::vector<UtteranceMeta> meta;
    EmotionLabelSet labels;
};

/// The built-in 7-class label set with mutually disjoint gloss vocabularies.
GlossTable synthetic_gloss_table();

/// Deterministic under (config, seed); splits are disjoint by dialogue.
/// Throws ConfigError when the mechanism weights do not sum to 1.
SyntheticCorpus generate_synthetic_corpus(const GeneratorConfig& config, const GlossTable& glosses,
                                          uint64_t seed);

void save_metadata(const std::string& path, const std::vector<UtteranceMeta>& meta);
std::vector<UtteranceMeta> load_metadata(const std::string& path);

}  // namespace mplp
