#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mplp/error.hpp"

namespace mplp {

struct ValidationError : Error {
    using Error::Error;
};

struct Utterance {
    std::string speaker;
    std::string text;
    std::string label;
    std::string utterance_id;  // "<dialogue_id>:<index>"
};

struct Conversation {
    std::string dialogue_id;
    std::vector<Utterance> utterances;
};

/// Ordered label names with an optional neutral class (needed by the
/// micro-F1-excluding-neutral metric).
class EmotionLabelSet {
public:
    EmotionLabelSet() = default;
    explicit EmotionLabelSet(std::vector<std::string> labels,
                             std::optional<int> neutral_index = std::nullopt);

    int size() const { return static_cast<int>(labels_.size()); }
    const std::vector<std::string>& labels() const { return labels_; }
    const std::string& name(int index) const { return labels_.at(static_cast<size_t>(index)); }
    std::optional<int> neutral_index() const { return neutral_index_; }

    bool contains(const std::string& label) const { return index_.count(label) > 0; }
    int index_of(const std::string& label) const;

private:
    std::vector<std::string> labels_;
    std::map<std::string, int> index_;
    std::optional<int> neutral_index_;
};

struct GlossEntry {
    std::string label;
    std::string adjective;
    std::string gloss;
};

/// Per-label adjective and sense gloss, loaded from a headerless TSV
/// (label <TAB> adjective <TAB> gloss).
class GlossTable {
public:
    GlossTable() = default;
    explicit GlossTable(std::vector<GlossEntry> entries);
    static GlossTable load_tsv(const std::string& path);
    void save_tsv(const std::string& path) const;

    bool has(const std::string& label) const { return by_label_.count(label) > 0; }
    const GlossEntry& entry(const std::string& label) const;
    const std::vector<GlossEntry>& entries() const { return entries_; }

    /// Gloss content words that appear in exactly one label's gloss
    /// (stopwords and punctuation removed). Used by the synthetic generator.
    std::map<std::string, std::vector<std::string>> distinctive_content_words() const;

private:
    std::vector<GlossEntry> entries_;
    std::map<std::string, size_t> by_label_;
};

/// One JSON object per line:
/// {"dialogue_id": str, "utterances": [{"speaker": str, "text": str, "label": str}]}
/// Utterance ids are assigned as dialogue_id:index. Labels are validated
/// against `labels`; texts must tokenize to at least one token.
std::vector<Conversation> load_corpus(const std::string& path, const EmotionLabelSet& labels);

/// Canonical form: sorted keys, one dialogue per line. save(load(x)) == x
/// byte-for-byte on canonicalized input.
void save_corpus(const std::string& path, const std::vector<Conversation>& conversations);

}  // namespace mplp
