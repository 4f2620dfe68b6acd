#include "mplp/vocab.hpp"

#include <algorithm>
#include <set>

#include "mplp/tokenize.hpp"

namespace mplp {

namespace {
const std::vector<std::string>& special_tokens() {
    static const std::vector<std::string> specials = {"<pad>", "<bos>",  "<eos>", "<mask>",
                                                      "<sep>", "*",      "<unk>"};
    return specials;
}
}  // namespace

std::string Vocabulary::speaker_token(const std::string& speaker) {
    std::string lowered;
    for (char c : speaker) lowered.push_back(c == ' ' ? '_' : static_cast<char>(std::tolower(c)));
    return "<spk:" + lowered + ">";
}

std::string Vocabulary::label_token(const std::string& label) { return "<lbl:" + label + ">"; }

Vocabulary Vocabulary::build(const std::vector<Conversation>& train,
                             const EmotionLabelSet& labels, const GlossTable& glosses) {
    std::set<std::string> speakers;
    std::set<std::string> words;
    for (const auto& conv : train)
        for (const auto& u : conv.utterances) {
            speakers.insert(speaker_token(u.speaker));
            for (const auto& t : tokenize(u.text)) words.insert(t);
        }
    // paraphrase targets and prompt templates must always be encodable
    for (const auto& e : glosses.entries()) {
        for (const auto& t : tokenize(e.gloss)) words.insert(t);
        for (const auto& t : tokenize(e.adjective)) words.insert(t);
    }
    for (const char* w : {"feels", "may", "feel"}) words.insert(w);

    std::vector<std::string> tokens = special_tokens();
    for (const auto& s : speakers) tokens.push_back(s);
    for (const auto& l : labels.labels()) tokens.push_back(label_token(l));
    for (const auto& w : words)
        if (std::find(tokens.begin(), tokens.end(), w) == tokens.end()) tokens.push_back(w);
    return from_tokens(std::move(tokens));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
    Vocabulary v;
    v.tokens_ = std::move(tokens);
    for (size_t i = 0; i < v.tokens_.size(); ++i) {
        if (!v.ids_.emplace(v.tokens_[i], static_cast<int64_t>(i)).second)
            throw ContractError("vocabulary: duplicate token " + v.tokens_[i]);
    }
    for (size_t i = 0; i < special_tokens().size(); ++i)
        if (v.tokens_.size() <= i || v.tokens_[i] != special_tokens()[i])
            throw ContractError("vocabulary: special token table corrupted");
    return v;
}

int64_t Vocabulary::id(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnk : it->second;
}

int64_t Vocabulary::id_strict(const std::string& token) const {
    auto it = ids_.find(token);
    if (it == ids_.end()) throw ContractError("vocabulary: missing required token " + token);
    return it->second;
}

std::vector<int64_t> Vocabulary::encode(const std::vector<std::string>& tokens) const {
    std::vector<int64_t> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(id(t));
    return out;
}

}  // namespace mplp
