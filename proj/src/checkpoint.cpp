#include "mplp/checkpoint.hpp"

#include <algorithm>

#include "mplp/io.hpp"

namespace mplp {

namespace {
constexpr char kMagic[8] = {'M', 'P', 'L', 'P', 'C', 'K', 'P', '1'};
constexpr uint32_t kVersion = 1;
}  // namespace

Checkpoint Checkpoint::capture(const Seq2SeqModel& model) {
    Checkpoint ckpt;
    ckpt.config = model.config();
    ckpt.label_names = model.labels().labels();
    ckpt.neutral_index =
        model.labels().neutral_index() ? static_cast<int64_t>(*model.labels().neutral_index()) : -1;
    ckpt.vocab_tokens = model.vocab().tokens();
    for (const auto& name : model.params().names()) {
        Tensor t = model.params().get(name);
        ckpt.tensors.push_back({name, t.shape(),
                                std::vector<double>(t.data().begin(), t.data().end())});
    }
    return ckpt;
}

void Checkpoint::save(const std::string& path) const {
    auto out = open_binary_out(path);
    write_magic(out, kMagic, kVersion);
    write_string(out, config.to_json());
    write_u64(out, label_names.size());
    for (const auto& l : label_names) write_string(out, l);
    write_u64(out, static_cast<uint64_t>(neutral_index + 1));  // 0 = none
    write_u64(out, vocab_tokens.size());
    for (const auto& t : vocab_tokens) write_string(out, t);
    write_u64(out, tensors.size());
    for (const auto& t : tensors) {
        write_string(out, t.name);
        write_u64(out, t.shape.size());
        for (int64_t d : t.shape) write_u64(out, static_cast<uint64_t>(d));
        write_f64_vec(out, t.data);
    }
}

Checkpoint Checkpoint::load(const std::string& path) {
    auto in = open_binary_in(path);
    check_magic(in, kMagic, kVersion, "checkpoint");
    Checkpoint ckpt;
    ckpt.config = ModelConfig::from_json(read_string(in));
    uint64_t n_labels = read_u64(in);
    for (uint64_t i = 0; i < n_labels; ++i) ckpt.label_names.push_back(read_string(in));
    ckpt.neutral_index = static_cast<int64_t>(read_u64(in)) - 1;
    uint64_t n_tokens = read_u64(in);
    for (uint64_t i = 0; i < n_tokens; ++i) ckpt.vocab_tokens.push_back(read_string(in));
    uint64_t n_tensors = read_u64(in);
    for (uint64_t i = 0; i < n_tensors; ++i) {
        NamedTensor t;
        t.name = read_string(in);
        uint64_t ndim = read_u64(in);
        for (uint64_t d = 0; d < ndim; ++d)
            t.shape.push_back(static_cast<int64_t>(read_u64(in)));
        t.data = read_f64_vec(in);
        ckpt.tensors.push_back(std::move(t));
    }
    return ckpt;
}

EmotionLabelSet Checkpoint::labels() const {
    return EmotionLabelSet(label_names, neutral_index >= 0
                                            ? std::optional<int>(static_cast<int>(neutral_index))
                                            : std::nullopt);
}

Seq2SeqModel Checkpoint::build_model() const {
    Seq2SeqModel model(config, Vocabulary::from_tokens(vocab_tokens), labels(), 0);
    auto leftover = restore_into(model.params());
    (void)leftover;
    return model;
}

std::vector<std::string> Checkpoint::restore_into(ParameterStore& store) const {
    std::vector<std::string> leftover;
    for (const auto& t : tensors) {
        if (!store.has(t.name)) {
            leftover.push_back(t.name);
            continue;
        }
        Tensor dst = store.get(t.name);
        if (dst.shape() != t.shape)
            throw ContractError("checkpoint: shape mismatch for " + t.name);
        std::copy(t.data.begin(), t.data.end(), dst.mutable_data().begin());
    }
    return leftover;
}

bool Checkpoint::operator==(const Checkpoint& other) const {
    if (!(config == other.config) || label_names != other.label_names ||
        neutral_index != other.neutral_index || vocab_tokens != other.vocab_tokens ||
        tensors.size() != other.tensors.size())
        return false;
    for (size_t i = 0; i < tensors.size(); ++i) {
        if (tensors[i].name != other.tensors[i].name ||
            tensors[i].shape != other.tensors[i].shape || tensors[i].data != other.tensors[i].data)
            return false;
    }
    return true;
}

}  // namespace mplp
