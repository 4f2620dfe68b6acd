#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mplp/corpus.hpp"
#include "mplp/repr_cache.hpp"

namespace mplp {

struct SimilarSample {
    int64_t doc_id = -1;
    std::string utterance_id;
    double score = 0.0;
    std::string label;
    std::vector<double> representation;  // cached stage-1 vector d_j
};

/// Ordered by (score desc, doc_id asc); never contains the query utterance.
using SimilarSampleSet = std::vector<SimilarSample>;

/// Okapi BM25 inverted index over tokenized training utterances. Document
/// ids are assigned in build order. Immutable after build.
class RetrievalIndex {
public:
    RetrievalIndex() = default;

    static RetrievalIndex build(const std::vector<Conversation>& train, double k1 = 1.5,
                                double b = 0.75);

    int64_t doc_count() const { return static_cast<int64_t>(docs_.size()); }
    double avg_doc_length() const { return avg_len_; }
    int64_t doc_length(int64_t doc) const;
    const std::string& utterance_id(int64_t doc) const;
    const std::string& label(int64_t doc) const;
    int64_t term_frequency(const std::string& token, int64_t doc) const;
    int64_t document_frequency(const std::string& token) const;
    double k1() const { return k1_; }
    double b() const { return b_; }

    /// Okapi BM25: sum over query terms of
    /// idf(t) * tf * (k1+1) / (tf + k1*(1 - b + b*len/avglen)),
    /// idf = ln((N - df + 0.5) / (df + 0.5) + 1). 0.0 when nothing is shared.
    double bm25_score(const std::vector<std::string>& query_tokens, int64_t doc) const;

    /// Scores every document via the posting lists; index = doc id.
    std::vector<double> score_all(const std::vector<std::string>& query_tokens) const;

    void save(const std::string& path) const;
    static RetrievalIndex load(const std::string& path);

private:
    struct DocInfo {
        std::string utterance_id;
        std::string label;
        int64_t length = 0;
    };
    struct Posting {
        int64_t doc;
        int64_t tf;
    };

    double idf(int64_t df) const;

    std::vector<DocInfo> docs_;
    std::map<std::string, std::vector<Posting>> postings_;  // sorted by doc id
    std::map<std::string, int64_t> doc_by_utterance_;
    double avg_len_ = 0.0;
    double k1_ = 1.5;
    double b_ = 0.75;
};

/// Top-k highest BM25-scoring training utterances, excluding `exclusions`
/// (the caller includes the query's own utterance id when querying from the
/// training set). Ties break toward the smaller document id. Representations
/// are attached from the cache. Throws ContractError when fewer than k
/// candidates remain.
SimilarSampleSet top_k_similar(const RetrievalIndex& index,
                               const std::vector<std::string>& query_tokens, int k,
                               const std::set<std::string>& exclusions,
                               const RepresentationCache& cache);

/// Same contract with cosine similarity of stage-1 representations as the
/// score. The index supplies the candidate documents; vectors come from the
/// cache.
SimilarSampleSet cosine_similar(const RetrievalIndex& index, const std::vector<double>& query_rep,
                                int k, const std::set<std::string>& exclusions,
                                const RepresentationCache& cache);

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace mplp
