#include "mplp/repr_cache.hpp"

#include "mplp/io.hpp"

namespace mplp {

namespace {
constexpr char kMagic[8] = {'M', 'P', 'L', 'P', 'C', 'A', 'C', 'H'};
constexpr uint32_t kVersion = 1;
}  // namespace

void RepresentationCache::put(const std::string& utterance_id, std::vector<double> vec) {
    if (vec.empty()) throw ContractError("representation cache: empty vector");
    if (width_ == 0)
        width_ = static_cast<int64_t>(vec.size());
    else if (width_ != static_cast<int64_t>(vec.size()))
        throw ContractError("representation cache: width mismatch for " + utterance_id);
    vectors_[utterance_id] = std::move(vec);
}

const std::vector<double>& RepresentationCache::get(const std::string& utterance_id) const {
    auto it = vectors_.find(utterance_id);
    if (it == vectors_.end())
        throw ContractError("representation cache: missing utterance " + utterance_id);
    return it->second;
}

void RepresentationCache::save(const std::string& path) const {
    auto out = open_binary_out(path);
    write_magic(out, kMagic, kVersion);
    write_string(out, snapshot_tag_);
    write_u64(out, vectors_.size());
    for (const auto& [id, vec] : vectors_) {
        write_string(out, id);
        write_f64_vec(out, vec);
    }
}

RepresentationCache RepresentationCache::load(const std::string& path) {
    auto in = open_binary_in(path);
    check_magic(in, kMagic, kVersion, "representation cache");
    RepresentationCache cache(read_string(in));
    uint64_t n = read_u64(in);
    for (uint64_t i = 0; i < n; ++i) {
        std::string id = read_string(in);
        cache.put(id, read_f64_vec(in));
    }
    return cache;
}

}  // namespace mplp
