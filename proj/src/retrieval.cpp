#include "mplp/retrieval.hpp"

#include <algorithm>
#include <cmath>

#include "mplp/io.hpp"
#include "mplp/tokenize.hpp"

namespace mplp {

namespace {
constexpr char kMagic[8] = {'M', 'P', 'L', 'P', 'I', 'D', 'X', '1'};
constexpr uint32_t kVersion = 1;
}  // namespace

RetrievalIndex RetrievalIndex::build(const std::vector<Conversation>& train, double k1, double b) {
    RetrievalIndex index;
    index.k1_ = k1;
    index.b_ = b;
    int64_t total_len = 0;
    for (const auto& conv : train) {
        for (const auto& u : conv.utterances) {
            int64_t doc = static_cast<int64_t>(index.docs_.size());
            auto tokens = tokenize(u.text);
            std::map<std::string, int64_t> tf;
            for (const auto& t : tokens) tf[t] += 1;
            for (const auto& [token, count] : tf)
                index.postings_[token].push_back({doc, count});
            index.docs_.push_back({u.utterance_id, u.label, static_cast<int64_t>(tokens.size())});
            if (!index.doc_by_utterance_.emplace(u.utterance_id, doc).second)
                throw ContractError("retrieval index: duplicate utterance id " + u.utterance_id);
            total_len += static_cast<int64_t>(tokens.size());
        }
    }
    if (index.docs_.empty()) throw ContractError("retrieval index: empty training corpus");
    index.avg_len_ = static_cast<double>(total_len) / static_cast<double>(index.docs_.size());
    return index;
}

int64_t RetrievalIndex::doc_length(int64_t doc) const {
    return docs_.at(static_cast<size_t>(doc)).length;
}

const std::string& RetrievalIndex::utterance_id(int64_t doc) const {
    return docs_.at(static_cast<size_t>(doc)).utterance_id;
}

const std::string& RetrievalIndex::label(int64_t doc) const {
    return docs_.at(static_cast<size_t>(doc)).label;
}

int64_t RetrievalIndex::term_frequency(const std::string& token, int64_t doc) const {
    auto it = postings_.find(token);
    if (it == postings_.end()) return 0;
    auto entry = std::lower_bound(it->second.begin(), it->second.end(), doc,
                                  [](const Posting& p, int64_t d) { return p.doc < d; });
    return (entry != it->second.end() && entry->doc == doc) ? entry->tf : 0;
}

int64_t RetrievalIndex::document_frequency(const std::string& token) const {
    auto it = postings_.find(token);
    return it == postings_.end() ? 0 : static_cast<int64_t>(it->second.size());
}

double RetrievalIndex::idf(int64_t df) const {
    double n = static_cast<double>(doc_count());
    return std::log((n - static_cast<double>(df) + 0.5) / (static_cast<double>(df) + 0.5) + 1.0);
}

double RetrievalIndex::bm25_score(const std::vector<std::string>& query_tokens,
                                  int64_t doc) const {
    if (doc < 0 || doc >= doc_count()) throw ContractError("bm25_score: invalid document id");
    double norm = k1_ * (1.0 - b_ + b_ * static_cast<double>(doc_length(doc)) / avg_len_);
    double score = 0.0;
    for (const auto& token : query_tokens) {
        int64_t tf = term_frequency(token, doc);
        if (tf == 0) continue;
        int64_t df = document_frequency(token);
        score += idf(df) * static_cast<double>(tf) * (k1_ + 1.0) /
                 (static_cast<double>(tf) + norm);
    }
    return score;
}

std::vector<double> RetrievalIndex::score_all(const std::vector<std::string>& query_tokens) const {
    std::vector<double> scores(static_cast<size_t>(doc_count()), 0.0);
    for (const auto& token : query_tokens) {
        auto it = postings_.find(token);
        if (it == postings_.end()) continue;
        double w = idf(static_cast<int64_t>(it->second.size())) * (k1_ + 1.0);
        for (const auto& p : it->second) {
            double norm =
                k1_ * (1.0 - b_ + b_ * static_cast<double>(docs_[static_cast<size_t>(p.doc)].length) /
                                      avg_len_);
            scores[static_cast<size_t>(p.doc)] +=
                w * static_cast<double>(p.tf) / (static_cast<double>(p.tf) + norm);
        }
    }
    return scores;
}

void RetrievalIndex::save(const std::string& path) const {
    auto out = open_binary_out(path);
    write_magic(out, kMagic, kVersion);
    write_f64(out, k1_);
    write_f64(out, b_);
    write_u64(out, docs_.size());
    for (const auto& d : docs_) {
        write_string(out, d.utterance_id);
        write_string(out, d.label);
        write_u64(out, static_cast<uint64_t>(d.length));
    }
    write_u64(out, postings_.size());
    for (const auto& [token, list] : postings_) {
        write_string(out, token);
        write_u64(out, list.size());
        for (const auto& p : list) {
            write_u64(out, static_cast<uint64_t>(p.doc));
            write_u64(out, static_cast<uint64_t>(p.tf));
        }
    }
}

RetrievalIndex RetrievalIndex::load(const std::string& path) {
    auto in = open_binary_in(path);
    check_magic(in, kMagic, kVersion, "retrieval index");
    RetrievalIndex index;
    index.k1_ = read_f64(in);
    index.b_ = read_f64(in);
    uint64_t n_docs = read_u64(in);
    int64_t total_len = 0;
    for (uint64_t i = 0; i < n_docs; ++i) {
        DocInfo d;
        d.utterance_id = read_string(in);
        d.label = read_string(in);
        d.length = static_cast<int64_t>(read_u64(in));
        total_len += d.length;
        index.doc_by_utterance_.emplace(d.utterance_id, static_cast<int64_t>(i));
        index.docs_.push_back(std::move(d));
    }
    if (index.docs_.empty()) throw ParseError("retrieval index: no documents");
    index.avg_len_ = static_cast<double>(total_len) / static_cast<double>(n_docs);
    uint64_t n_terms = read_u64(in);
    for (uint64_t i = 0; i < n_terms; ++i) {
        std::string token = read_string(in);
        uint64_t n_entries = read_u64(in);
        std::vector<Posting> list;
        list.reserve(n_entries);
        for (uint64_t j = 0; j < n_entries; ++j) {
            Posting p;
            p.doc = static_cast<int64_t>(read_u64(in));
            p.tf = static_cast<int64_t>(read_u64(in));
            list.push_back(p);
        }
        index.postings_.emplace(std::move(token), std::move(list));
    }
    return index;
}

namespace {

SimilarSampleSet select_top_k(const RetrievalIndex& index, const std::vector<double>& scores,
                              int k, const std::set<std::string>& exclusions,
                              const RepresentationCache& cache) {
    if (k < 1) throw ContractError("top_k_similar: k must be >= 1");
    std::vector<int64_t> candidates;
    candidates.reserve(static_cast<size_t>(index.doc_count()));
    for (int64_t doc = 0; doc < index.doc_count(); ++doc)
        if (!exclusions.count(index.utterance_id(doc))) candidates.push_back(doc);
    if (static_cast<int64_t>(candidates.size()) < k)
        throw ContractError("top_k_similar: k exceeds available candidates");
    std::stable_sort(candidates.begin(), candidates.end(), [&](int64_t a, int64_t b) {
        double sa = scores[static_cast<size_t>(a)], sb = scores[static_cast<size_t>(b)];
        if (sa != sb) return sa > sb;
        return a < b;
    });
    SimilarSampleSet out;
    out.reserve(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) {
        int64_t doc = candidates[static_cast<size_t>(i)];
        SimilarSample s;
        s.doc_id = doc;
        s.utterance_id = index.utterance_id(doc);
        s.score = scores[static_cast<size_t>(doc)];
        s.label = index.label(doc);
        s.representation = cache.get(s.utterance_id);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

SimilarSampleSet top_k_similar(const RetrievalIndex& index,
                               const std::vector<std::string>& query_tokens, int k,
                               const std::set<std::string>& exclusions,
                               const RepresentationCache& cache) {
    return select_top_k(index, index.score_all(query_tokens), k, exclusions, cache);
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ContractError("cosine_similarity: width mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

SimilarSampleSet cosine_similar(const RetrievalIndex& index, const std::vector<double>& query_rep,
                                int k, const std::set<std::string>& exclusions,
                                const RepresentationCache& cache) {
    std::vector<double> scores(static_cast<size_t>(index.doc_count()), 0.0);
    for (int64_t doc = 0; doc < index.doc_count(); ++doc)
        scores[static_cast<size_t>(doc)] =
            cosine_similarity(query_rep, cache.get(index.utterance_id(doc)));
    return select_top_k(index, scores, k, exclusions, cache);
}

}  // namespace mplp
