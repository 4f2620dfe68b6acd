#include "mplp/synthetic.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "mplp/tokenize.hpp"

namespace mplp {

using nlohmann::json;

GlossTable synthetic_gloss_table() {
    return GlossTable({
        {"neutral", "neutral", "marked by an even plain tone without leaning to any side"},
        {"joy", "gleeful", "brimming with merry delight and sparkling cheer at happy fortune"},
        {"sadness", "mournful", "weighed by sorrow and gloomy grief over a painful loss"},
        {"anger", "irate", "boiling with furious rage and bitter temper against an offense"},
        {"surprise", "startled", "caught unawares by a sudden unexpected jolt of wonder"},
        {"disgust", "queasy", "filled with sour revulsion and nausea toward a foul sight"},
        {"fear", "timid", "gripped by dread and trembling alarm before a looming threat"},
    });
}

namespace {

const std::vector<std::string>& speaker_pool() {
    static const std::vector<std::string> pool = {"alice", "bob",   "carol", "dave",
                                                  "erin",  "frank", "grace", "heidi"};
    return pool;
}

struct LexPools {
    // per label: words usable in the train split, and the full list
    std::map<std::string, std::vector<std::string>> train_words;
    std::map<std::string, std::vector<std::string>> all_words;
};

LexPools build_lex_pools(const GlossTable& glosses, const std::vector<std::string>& labels,
                         double train_fraction, std::mt19937_64& rng) {
    LexPools pools;
    auto distinctive = glosses.distinctive_content_words();
    for (const auto& label : labels) {
        auto it = distinctive.find(label);
        if (it == distinctive.end() || it->second.empty())
            throw ConfigError("generator: label \"" + label +
                              "\" has no distinctive gloss words to emit");
        std::vector<std::string> words = it->second;
        std::shuffle(words.begin(), words.end(), rng);
        size_t n_train = static_cast<size_t>(
            std::max(1.0, std::ceil(train_fraction * static_cast<double>(words.size()))));
        n_train = std::min(n_train, words.size());
        pools.all_words[label] = words;
        pools.train_words[label] =
            std::vector<std::string>(words.begin(), words.begin() + static_cast<long>(n_train));
    }
    return pools;
}

}  // namespace

SyntheticCorpus generate_synthetic_corpus(const GeneratorConfig& config, const GlossTable& glosses,
                                          uint64_t seed) {
    double wsum = config.hist_weight + config.exp_weight + config.lex_weight;
    if (std::abs(wsum - 1.0) > 1e-9)
        throw ConfigError("generator: mechanism weights must sum to 1");
    if (config.n_dialogues <= 0 || config.min_utterances <= 0 ||
        config.max_utterances < config.min_utterances)
        throw ConfigError("generator: bad dialogue sizing");
    if (config.speakers_per_dialogue < 1 ||
        config.speakers_per_dialogue > static_cast<int>(speaker_pool().size()))
        throw ConfigError("generator: speakers_per_dialogue out of range");
    if (config.train_frac <= 0.0 || config.dev_frac < 0.0 ||
        config.train_frac + config.dev_frac >= 1.0)
        throw ConfigError("generator: split fractions must leave room for a test split");

    std::vector<std::string> labels = config.labels;
    if (labels.empty()) {
        const GlossTable defaults = synthetic_gloss_table();
        for (const auto& e : defaults.entries()) labels.push_back(e.label);
    }
    for (const auto& l : labels)
        if (!glosses.has(l)) throw ConfigError("generator: no gloss entry for label " + l);

    std::mt19937_64 rng(seed);
    LexPools lex = build_lex_pools(glosses, labels, config.lex_train_fraction, rng);

    // template families: pair (sa_i, sb_j); a single signature token never
    // determines the label, the pair does
    int b_side = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(config.n_templates))));
    std::uniform_int_distribution<int> label_dist(0, static_cast<int>(labels.size()) - 1);
    std::vector<int> template_label(static_cast<size_t>(config.n_templates));
    for (auto& l : template_label) l = label_dist(rng);

    std::uniform_int_distribution<int> len_dist(config.min_utterances, config.max_utterances);
    std::uniform_int_distribution<int> filler_count(config.fillers_min, config.fillers_max);
    std::uniform_int_distribution<int> filler_pick(0, config.filler_vocab - 1);
    std::uniform_int_distribution<int> template_pick(0, config.n_templates - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    int n_train = static_cast<int>(std::lround(config.train_frac * config.n_dialogues));
    int n_dev = static_cast<int>(std::lround(config.dev_frac * config.n_dialogues));
    n_train = std::max(1, std::min(n_train, config.n_dialogues - 2));
    n_dev = std::max(1, std::min(n_dev, config.n_dialogues - n_train - 1));

    SyntheticCorpus corpus;
    corpus.labels = EmotionLabelSet(labels, config.neutral_index >= 0 &&
                                                    config.neutral_index <
                                                        static_cast<int>(labels.size())
                                                ? std::optional<int>(config.neutral_index)
                                                : std::nullopt);

    auto emit_fillers = [&](std::vector<std::string>& tokens) {
        int n = filler_count(rng);
        for (int i = 0; i < n; ++i) tokens.push_back("fl" + std::to_string(filler_pick(rng)));
    };
    auto emit_lex = [&](std::vector<std::string>& tokens, const std::string& label, bool train) {
        const auto& pool = train ? lex.train_words.at(label) : lex.all_words.at(label);
        std::vector<size_t> order(pool.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        int n = std::min<int>(config.lex_words_per_utterance, static_cast<int>(pool.size()));
        for (int i = 0; i < n; ++i) tokens.push_back(pool[order[static_cast<size_t>(i)]]);
    };

    for (int d = 0; d < config.n_dialogues; ++d) {
        bool is_train = d < n_train;
        Conversation conv;
        char buf[16];
        std::snprintf(buf, sizeof(buf), "d%05d", d);
        conv.dialogue_id = buf;

        std::vector<std::string> speakers = speaker_pool();
        std::shuffle(speakers.begin(), speakers.end(), rng);
        speakers.resize(static_cast<size_t>(config.speakers_per_dialogue));
        std::uniform_int_distribution<int> speaker_pick(0, config.speakers_per_dialogue - 1);

        int n_utts = len_dist(rng);
        std::map<std::string, std::string> last_label_by_speaker;
        for (int i = 0; i < n_utts; ++i) {
            Utterance u;
            u.speaker = speakers[static_cast<size_t>(speaker_pick(rng))];
            u.utterance_id = conv.dialogue_id + ":" + std::to_string(i);

            UtteranceMeta meta;
            meta.utterance_id = u.utterance_id;

            double roll = unit(rng);
            std::vector<std::string> tokens;
            if (roll < config.hist_weight) {
                auto prev = last_label_by_speaker.find(u.speaker);
                if (prev != last_label_by_speaker.end()) {
                    u.label = prev->second;
                    meta.signal = "hist";
                    emit_fillers(tokens);
                } else {
                    u.label = labels[static_cast<size_t>(label_dist(rng))];
                    meta.signal = "hist_root";
                    emit_lex(tokens, u.label, is_train);
                    emit_fillers(tokens);
                }
            } else if (roll < config.hist_weight + config.exp_weight) {
                int f = template_pick(rng);
                u.label = labels[static_cast<size_t>(template_label[static_cast<size_t>(f)])];
                meta.signal = "exp";
                meta.template_id = f;
                tokens.push_back("sa" + std::to_string(f / b_side));
                tokens.push_back("sb" + std::to_string(f % b_side));
                emit_fillers(tokens);
            } else {
                u.label = labels[static_cast<size_t>(label_dist(rng))];
                meta.signal = "lex";
                emit_lex(tokens, u.label, is_train);
                emit_fillers(tokens);
            }
            std::shuffle(tokens.begin(), tokens.end(), rng);
            u.text = join_tokens(tokens);
            last_label_by_speaker[u.speaker] = u.label;
            conv.utterances.push_back(std::move(u));
            corpus.meta.push_back(std::move(meta));
        }

        if (d < n_train)
            corpus.train.push_back(std::move(conv));
        else if (d < n_train + n_dev)
            corpus.dev.push_back(std::move(conv));
        else
            corpus.test.push_back(std::move(conv));
    }
    return corpus;
}

void save_metadata(const std::string& path, const std::vector<UtteranceMeta>& meta) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write metadata file: " + path);
    for (const auto& m : meta) {
        json j;
        j["utterance_id"] = m.utterance_id;
        j["signal"] = m.signal;
        j["template_id"] = m.template_id;
        out << j.dump() << '\n';
    }
}

std::vector<UtteranceMeta> load_metadata(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open metadata file: " + path);
    std::vector<UtteranceMeta> meta;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        UtteranceMeta m;
        m.utterance_id = j.at("utterance_id").get<std::string>();
        m.signal = j.at("signal").get<std::string>();
        m.template_id = j.at("template_id").get<int>();
        meta.push_back(std::move(m));
    }
    return meta;
}

}  // namespace mplp
