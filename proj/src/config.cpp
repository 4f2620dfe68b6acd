#include "mplp/config.hpp"

#include <fstream>
#include <sstream>

namespace mplp {

void TrainConfig::validate() const {
    if (stage1_epochs < 0 || stage2_epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
    if (alpha < 0.0) throw ConfigError("alpha must be >= 0");
    if (k < 1 || k > 10) throw ConfigError("k must be in [1, 10]");
    if (retriever != "bm25" && retriever != "cosine")
        throw ConfigError("retriever must be bm25 or cosine");
    if (fusion_mode != "prompt" && fusion_mode != "add" && fusion_mode != "concat")
        throw ConfigError("fusion_mode must be prompt, add, or concat");
    if (paraphrase_target != "gloss" && paraphrase_target != "adjective" &&
        paraphrase_target != "special_token")
        throw ConfigError("paraphrase_target must be gloss, adjective, or special_token");
    if (selection_metric != "weighted_f1" && selection_metric != "micro_f1")
        throw ConfigError("selection_metric must be weighted_f1 or micro_f1");
    if (warmup_fraction < 0.0 || warmup_fraction >= 1.0)
        throw ConfigError("warmup_fraction must be in [0, 1)");
}

FlatConfig FlatConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_text(buf.str());
}

FlatConfig FlatConfig::parse_text(const std::string& text) {
    FlatConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto strip = [](std::string s) {
            size_t a = s.find_first_not_of(" \t\r");
            if (a == std::string::npos) return std::string();
            size_t b = s.find_last_not_of(" \t\r");
            return s.substr(a, b - a + 1);
        };
        line = strip(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
        cfg.set(strip(line.substr(0, eq)), strip(line.substr(eq + 1)));
    }
    return cfg;
}

void FlatConfig::set(const std::string& key, const std::string& value) {
    values_[key] = value;
}

namespace {

int64_t to_i64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        int64_t out = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": expected integer, got \"" + v + "\"");
    }
}

double to_f64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": expected number, got \"" + v + "\"");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw ConfigError("config key " + key + ": expected boolean, got \"" + v + "\"");
}

}  // namespace

void FlatConfig::apply(ModelConfig& model, TrainConfig& train, GeneratorConfig& gen) const {
    for (const auto& [key, v] : values_) {
        if (key == "d_model") model.d_model = to_i64(key, v);
        else if (key == "n_layers") model.n_layers = static_cast<int>(to_i64(key, v));
        else if (key == "n_heads") model.n_heads = static_cast<int>(to_i64(key, v));
        else if (key == "d_ff") model.d_ff = to_i64(key, v);
        else if (key == "max_len") model.max_len = to_i64(key, v);
        else if (key == "m") model.context_window = static_cast<int>(to_i64(key, v));
        else if (key == "dropout") model.dropout_rate = to_f64(key, v);
        else if (key == "stage1_epochs") train.stage1_epochs = static_cast<int>(to_i64(key, v));
        else if (key == "stage2_epochs") train.stage2_epochs = static_cast<int>(to_i64(key, v));
        else if (key == "batch_size") train.batch_size = static_cast<int>(to_i64(key, v));
        else if (key == "learning_rate") train.learning_rate = to_f64(key, v);
        else if (key == "weight_decay") train.weight_decay = to_f64(key, v);
        else if (key == "warmup_fraction") train.warmup_fraction = to_f64(key, v);
        else if (key == "alpha") train.alpha = to_f64(key, v);
        else if (key == "k") train.k = static_cast<int>(to_i64(key, v));
        else if (key == "retriever") train.retriever = v;
        else if (key == "bm25_k1") train.bm25_k1 = to_f64(key, v);
        else if (key == "bm25_b") train.bm25_b = to_f64(key, v);
        else if (key == "use_hist_prompt") train.use_hist_prompt = to_bool(key, v);
        else if (key == "use_exp_prompt") train.use_exp_prompt = to_bool(key, v);
        else if (key == "use_label_para") train.use_label_para = to_bool(key, v);
        else if (key == "fusion_mode") train.fusion_mode = v;
        else if (key == "paraphrase_target") train.paraphrase_target = v;
        else if (key == "concat_extra_epochs")
            train.concat_extra_epochs = static_cast<int>(to_i64(key, v));
        else if (key == "selection_metric") train.selection_metric = v;
        else if (key == "include_sep_prefix") train.include_sep_prefix = to_bool(key, v);
        else if (key == "refresh_cache_every_epoch")
            train.refresh_cache_every_epoch = to_bool(key, v);
        else if (key == "seed") train.seed = static_cast<uint64_t>(to_i64(key, v));
        else if (key == "gen_dialogues") gen.n_dialogues = static_cast<int>(to_i64(key, v));
        else if (key == "gen_speakers") gen.speakers_per_dialogue = static_cast<int>(to_i64(key, v));
        else if (key == "gen_min_utterances") gen.min_utterances = static_cast<int>(to_i64(key, v));
        else if (key == "gen_max_utterances") gen.max_utterances = static_cast<int>(to_i64(key, v));
        else if (key == "gen_train_frac") gen.train_frac = to_f64(key, v);
        else if (key == "gen_dev_frac") gen.dev_frac = to_f64(key, v);
        else if (key == "gen_hist_weight") gen.hist_weight = to_f64(key, v);
        else if (key == "gen_exp_weight") gen.exp_weight = to_f64(key, v);
        else if (key == "gen_lex_weight") gen.lex_weight = to_f64(key, v);
        else if (key == "gen_templates") gen.n_templates = static_cast<int>(to_i64(key, v));
        else if (key == "gen_filler_vocab") gen.filler_vocab = static_cast<int>(to_i64(key, v));
        else if (key == "gen_fillers_min") gen.fillers_min = static_cast<int>(to_i64(key, v));
        else if (key == "gen_fillers_max") gen.fillers_max = static_cast<int>(to_i64(key, v));
        else if (key == "gen_lex_words") gen.lex_words_per_utterance = static_cast<int>(to_i64(key, v));
        else if (key == "gen_lex_train_fraction") gen.lex_train_fraction = to_f64(key, v);
        else throw ConfigError("unknown config key: " + key);
    }
    model.validate();
    train.validate();
}

std::string FlatConfig::canonical(const ModelConfig& model, const TrainConfig& train) {
    std::ostringstream out;
    auto num = [](double v) {
        std::ostringstream s;
        s << v;
        return s.str();
    };
    std::map<std::string, std::string> kv = {
        {"d_model", std::to_string(model.d_model)},
        {"n_layers", std::to_string(model.n_layers)},
        {"n_heads", std::to_string(model.n_heads)},
        {"d_ff", std::to_string(model.d_ff)},
        {"max_len", std::to_string(model.max_len)},
        {"m", std::to_string(model.context_window)},
        {"dropout", num(model.dropout_rate)},
        {"stage1_epochs", std::to_string(train.stage1_epochs)},
        {"stage2_epochs", std::to_string(train.stage2_epochs)},
        {"batch_size", std::to_string(train.batch_size)},
        {"learning_rate", num(train.learning_rate)},
        {"weight_decay", num(train.weight_decay)},
        {"warmup_fraction", num(train.warmup_fraction)},
        {"alpha", num(train.alpha)},
        {"k", std::to_string(train.k)},
        {"retriever", train.retriever},
        {"bm25_k1", num(train.bm25_k1)},
        {"bm25_b", num(train.bm25_b)},
        {"use_hist_prompt", train.use_hist_prompt ? "true" : "false"},
        {"use_exp_prompt", train.use_exp_prompt ? "true" : "false"},
        {"use_label_para", train.use_label_para ? "true" : "false"},
        {"fusion_mode", train.fusion_mode},
        {"paraphrase_target", train.paraphrase_target},
        {"concat_extra_epochs", std::to_string(train.concat_extra_epochs)},
        {"selection_metric", train.selection_metric},
        {"include_sep_prefix", train.include_sep_prefix ? "true" : "false"},
        {"refresh_cache_every_epoch", train.refresh_cache_every_epoch ? "true" : "false"},
        {"seed", std::to_string(train.seed)},
    };
    for (const auto& [k, v] : kv) out << k << "=" << v << "\n";
    return out.str();
}

uint64_t fnv1a_hash(const std::string& text) {
    uint64_t hash = 1469598103934665603ull;
    for (unsigned char c : text) {
        hash ^= c;
        hash *= 1099511628211ull;
    }
    return hash;
}

}  // namespace mplp
