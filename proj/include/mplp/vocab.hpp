#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mplp/corpus.hpp"

namespace mplp {

/// Token <-> dense id map. Fixed special tokens sit at the front, followed by
/// one decorated token per speaker and per label, then the corpus/gloss
/// vocabulary in canonical (sorted) order, so construction is independent of
/// dialogue iteration order.
class Vocabulary {
public:
    static constexpr int64_t kPad = 0;
    static constexpr int64_t kBos = 1;
    static constexpr int64_t kEos = 2;
    static constexpr int64_t kMask = 3;
    static constexpr int64_t kSep = 4;
    static constexpr int64_t kStar = 5;
    static constexpr int64_t kUnk = 6;

    Vocabulary() = default;

    /// Builds from training conversations plus the gloss table. Dev/test text
    /// never participates; gloss and prompt-template words are always present.
    static Vocabulary build(const std::vector<Conversation>& train,
                            const EmotionLabelSet& labels, const GlossTable& glosses);

    /// Reconstructs from an ordered token list (checkpoint loading).
    static Vocabulary from_tokens(std::vector<std::string> tokens);

    int64_t size() const { return static_cast<int64_t>(tokens_.size()); }
    /// Encode one token; unknown tokens map to <unk>.
    int64_t id(const std::string& token) const;
    /// Encode; throws ContractError on unknown token (for internal tokens
    /// that must exist, e.g. speakers and prompt words).
    int64_t id_strict(const std::string& token) const;
    const std::string& token(int64_t id) const { return tokens_.at(static_cast<size_t>(id)); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    static std::string speaker_token(const std::string& speaker);
    static std::string label_token(const std::string& label);

    std::vector<int64_t> encode(const std::vector<std::string>& tokens) const;

private:
    std::vector<std::string> tokens_;
    std::map<std::string, int64_t> ids_;
};

}  // namespace mplp
