#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mplp/model.hpp"

namespace mplp {

/// Self-describing binary container: model config, label set, vocabulary,
/// and named parameter tensors, written as raw 64-bit floats so
/// load(save(theta)) round-trips bitwise.
struct Checkpoint {
    ModelConfig config;
    std::vector<std::string> label_names;
    int64_t neutral_index = -1;
    std::vector<std::string> vocab_tokens;
    struct NamedTensor {
        std::string name;
        std::vector<int64_t> shape;
        std::vector<double> data;
    };
    std::vector<NamedTensor> tensors;

    static Checkpoint capture(const Seq2SeqModel& model);
    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);

    EmotionLabelSet labels() const;
    /// Rebuilds a model and restores every base parameter. Extra tensors in
    /// the file (stage-2 machinery) are left for the caller to restore via
    /// restore_into.
    Seq2SeqModel build_model() const;
    /// Copies values into matching names of the store; throws on shape
    /// mismatch. Returns the names present in the file but absent from the
    /// store.
    std::vector<std::string> restore_into(ParameterStore& store) const;

    bool operator==(const Checkpoint& other) const;
};

}  // namespace mplp
