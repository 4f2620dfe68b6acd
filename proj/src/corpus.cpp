#include "mplp/corpus.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

#include "mplp/tokenize.hpp"

namespace mplp {

using nlohmann::json;

EmotionLabelSet::EmotionLabelSet(std::vector<std::string> labels, std::optional<int> neutral_index)
    : labels_(std::move(labels)), neutral_index_(neutral_index) {
    for (size_t i = 0; i < labels_.size(); ++i) {
        if (!index_.emplace(labels_[i], static_cast<int>(i)).second)
            throw ValidationError("duplicate label name: " + labels_[i]);
    }
    if (neutral_index_ && (*neutral_index_ < 0 || *neutral_index_ >= size()))
        throw ValidationError("neutral_index out of range");
}

int EmotionLabelSet::index_of(const std::string& label) const {
    auto it = index_.find(label);
    if (it == index_.end()) throw ValidationError("unknown label: " + label);
    return it->second;
}

GlossTable::GlossTable(std::vector<GlossEntry> entries) : entries_(std::move(entries)) {
    for (size_t i = 0; i < entries_.size(); ++i) {
        const auto& e = entries_[i];
        if (e.gloss.empty()) throw ValidationError("empty gloss for label: " + e.label);
        if (!by_label_.emplace(e.label, i).second)
            throw ValidationError("duplicate gloss entry for label: " + e.label);
    }
}

GlossTable GlossTable::load_tsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open gloss table: " + path);
    std::vector<GlossEntry> entries;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        GlossEntry e;
        if (!std::getline(ss, e.label, '\t') || !std::getline(ss, e.adjective, '\t') ||
            !std::getline(ss, e.gloss))
            throw ParseError(path + ":" + std::to_string(line_no) +
                             ": expected label<TAB>adjective<TAB>gloss");
        entries.push_back(std::move(e));
    }
    return GlossTable(std::move(entries));
}

void GlossTable::save_tsv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write gloss table: " + path);
    for (const auto& e : entries_) out << e.label << '\t' << e.adjective << '\t' << e.gloss << '\n';
}

const GlossEntry& GlossTable::entry(const std::string& label) const {
    auto it = by_label_.find(label);
    if (it == by_label_.end()) throw ValidationError("no gloss entry for label: " + label);
    return entries_[it->second];
}

namespace {
const std::set<std::string>& stopwords() {
    static const std::set<std::string> words = {
        "a",    "an",   "the",  "and",  "or",   "of",     "in",     "on",        "at",
        "to",   "by",   "with", "over", "for",  "some",   "any",    "that",     "this",
        "no",   "not",  "without", "against",   "toward", "before", "down",     "up",
        "is",   "are",  "was",  "be",   "from", "either", "way",    "persons",  "his",
        "her",  "its",  "edge", "when", "who"};
    return words;
}
}  // namespace

std::map<std::string, std::vector<std::string>> GlossTable::distinctive_content_words() const {
    std::map<std::string, int> counts;
    std::map<std::string, std::vector<std::string>> per_label;
    for (const auto& e : entries_) {
        std::set<std::string> seen;
        for (const auto& tok : tokenize(e.gloss)) {
            if (tok.size() < 2 || stopwords().count(tok) || seen.count(tok)) continue;
            seen.insert(tok);
            per_label[e.label].push_back(tok);
            counts[tok] += 1;
        }
    }
    for (auto& [label, words] : per_label) {
        std::vector<std::string> unique;
        for (const auto& w : words)
            if (counts[w] == 1) unique.push_back(w);
        words = std::move(unique);
    }
    return per_label;
}

std::vector<Conversation> load_corpus(const std::string& path, const EmotionLabelSet& labels) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open corpus file: " + path);
    std::vector<Conversation> conversations;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        Conversation conv;
        try {
            conv.dialogue_id = j.at("dialogue_id").get<std::string>();
            int idx = 0;
            for (const auto& ju : j.at("utterances")) {
                Utterance u;
                u.speaker = ju.at("speaker").get<std::string>();
                u.text = ju.at("text").get<std::string>();
                u.label = ju.at("label").get<std::string>();
                u.utterance_id = conv.dialogue_id + ":" + std::to_string(idx++);
                conv.utterances.push_back(std::move(u));
            }
        } catch (const json::exception& e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (conv.utterances.empty())
            throw ValidationError(path + ":" + std::to_string(line_no) + ": empty conversation");
        for (const auto& u : conv.utterances) {
            if (!labels.contains(u.label))
                throw ValidationError(path + ":" + std::to_string(line_no) + ": unknown label \"" +
                                      u.label + "\" in " + u.utterance_id);
            if (tokenize(u.text).empty())
                throw ValidationError(path + ":" + std::to_string(line_no) +
                                      ": utterance with empty text: " + u.utterance_id);
        }
        conversations.push_back(std::move(conv));
    }
    return conversations;
}

void save_corpus(const std::string& path, const std::vector<Conversation>& conversations) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write corpus file: " + path);
    for (const auto& conv : conversations) {
        json j;
        j["dialogue_id"] = conv.dialogue_id;
        json list = json::array();
        for (const auto& u : conv.utterances) {
            json ju;
            ju["speaker"] = u.speaker;
            ju["text"] = u.text;
            ju["label"] = u.label;
            list.push_back(std::move(ju));
        }
        j["utterances"] = std::move(list);
        out << j.dump() << '\n';
    }
}

}  // namespace mplp
