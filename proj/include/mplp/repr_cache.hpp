#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mplp/error.hpp"

namespace mplp {

/// Frozen stage-1 vector per utterance, keyed by utterance_id. The snapshot
/// tag names the checkpoint that produced the vectors. Entries are plain
/// constants: nothing here participates in autodiff.
class RepresentationCache {
public:
    RepresentationCache() = default;
    explicit RepresentationCache(std::string snapshot_tag) : snapshot_tag_(std::move(snapshot_tag)) {}

    void put(const std::string& utterance_id, std::vector<double> vec);
    bool has(const std::string& utterance_id) const { return vectors_.count(utterance_id) > 0; }
    const std::vector<double>& get(const std::string& utterance_id) const;

    size_t size() const { return vectors_.size(); }
    int64_t width() const { return width_; }
    const std::string& snapshot_tag() const { return snapshot_tag_; }
    const std::map<std::string, std::vector<double>>& entries() const { return vectors_; }

    void save(const std::string& path) const;
    static RepresentationCache load(const std::string& path);

    bool operator==(const RepresentationCache& other) const {
        return snapshot_tag_ == other.snapshot_tag_ && vectors_ == other.vectors_;
    }

private:
    std::string snapshot_tag_;
    std::map<std::string, std::vector<double>> vectors_;
    int64_t width_ = 0;
};

}  // namespace mplp
