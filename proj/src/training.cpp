#include "mplp/training.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include "mplp/optimizer.hpp"
#include "mplp/tokenize.hpp"

namespace mplp {

using nlohmann::json;

std::string EvalReport::to_json() const {
    json j;
    j["split"] = split;
    j["weighted_f1"] = weighted_f1;
    if (micro_f1_excluding_neutral)
        j["micro_f1_excluding_neutral"] = *micro_f1_excluding_neutral;
    else
        j["micro_f1_excluding_neutral"] = nullptr;
    j["per_class_f1"] = per_class_f1;
    j["confusion"] = confusion;
    j["labels"] = label_names;
    j["config_echo"] = config_echo;
    j["seed"] = seed;
    return j.dump(2);
}

void EvalReport::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write eval report: " + path);
    out << to_json() << "\n";
}

void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
    if (n <= 0) return;
    int threads = static_cast<int>(std::thread::hardware_concurrency());
    if (threads < 1) threads = 1;
    if (const char* env = std::getenv("MPLP_NUM_THREADS")) {
        int cap = std::atoi(env);
        if (cap >= 1) threads = std::min(threads, cap);
    }
    threads = static_cast<int>(std::min<int64_t>(threads, n));
    if (threads <= 1) {
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int64_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(threads));
    for (int w = 0; w < threads; ++w)
        pool.emplace_back([&] {
            for (int64_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        });
    for (auto& t : pool) t.join();
}

namespace {

struct FlatItem {
    const Conversation* conv;
    int t;
};

std::vector<FlatItem> flatten(const std::vector<Conversation>& split) {
    std::vector<FlatItem> items;
    for (const auto& conv : split)
        for (int t = 0; t < static_cast<int>(conv.utterances.size()); ++t)
            items.push_back({&conv, t});
    return items;
}

}  // namespace

Seq2SeqModel train_stage1(const DataBundle& data, const ModelConfig& model_config,
                          const TrainConfig& config) {
    model_config.validate();
    config.validate();
    Vocabulary vocab = Vocabulary::build(data.train, data.labels, data.glosses);
    Seq2SeqModel model(model_config, std::move(vocab), data.labels, config.seed);

    auto items = flatten(data.train);
    if (items.empty()) throw ContractError("train_stage1: empty training split");
    int64_t steps_per_epoch =
        (static_cast<int64_t>(items.size()) + config.batch_size - 1) / config.batch_size;
    AdamW optimizer(model.params().all(), {.lr = config.learning_rate,
                                           .weight_decay = config.weight_decay,
                                           .warmup_fraction = config.warmup_fraction,
                                           .total_steps = config.stage1_epochs * steps_per_epoch});
    std::mt19937_64 shuffle_rng(config.seed * 0x9E3779B97F4A7C15ull + 1);
    std::mt19937_64 dropout_rng(config.seed * 0x9E3779B97F4A7C15ull + 2);

    for (int epoch = 0; epoch < config.stage1_epochs; ++epoch) {
        std::shuffle(items.begin(), items.end(), shuffle_rng);
        for (size_t start = 0; start < items.size(); start += static_cast<size_t>(config.batch_size)) {
            size_t end = std::min(items.size(), start + static_cast<size_t>(config.batch_size));
            Tape tape;
            TapeScope scope(tape);
            std::vector<Tensor> losses;
            for (size_t i = start; i < end; ++i) {
                const auto& item = items[i];
                auto input = build_stage1_input(*item.conv, item.t, model_config.context_window,
                                                model.vocab(), model_config.max_len);
                Tensor h = model.forward_stage1(input, true, &dropout_rng);
                Tensor logits = classify_logits(model.head(), h);
                int gold = data.labels.index_of(
                    item.conv->utterances[static_cast<size_t>(item.t)].label);
                losses.push_back(cross_entropy(logits, gold));
            }
            Tensor loss = mean(concat(losses));
            if (!std::isfinite(loss.value()))
                throw Error("train_stage1: non-finite loss at epoch " + std::to_string(epoch) +
                            ", step " + std::to_string(optimizer.steps_taken()));
            tape.backward(loss);
            optimizer.step();
        }
    }
    return model;
}

RepresentationCache cache_representations(const Seq2SeqModel& model, const DataBundle& data,
                                          const std::string& snapshot_tag) {
    RepresentationCache cache(snapshot_tag);
    std::vector<FlatItem> items;
    for (const auto* split : {&data.train, &data.dev, &data.test}) {
        auto part = flatten(*split);
        items.insert(items.end(), part.begin(), part.end());
    }
    std::vector<std::vector<double>> vectors(items.size());
    parallel_for(static_cast<int64_t>(items.size()), [&](int64_t i) {
        const auto& item = items[static_cast<size_t>(i)];
        auto input = build_stage1_input(*item.conv, item.t, model.config().context_window,
                                        model.vocab(), model.config().max_len);
        Tensor h = model.forward_stage1(input);
        vectors[static_cast<size_t>(i)].assign(h.data().begin(), h.data().end());
    });
    for (size_t i = 0; i < items.size(); ++i)
        cache.put(items[i].conv->utterances[static_cast<size_t>(items[i].t)].utterance_id,
                  std::move(vectors[i]));
    return cache;
}

Stage2Pipeline::Stage2Pipeline(Seq2SeqModel& model, const DataBundle& data,
                               const TrainConfig& config, RepresentationCache cache,
                               RetrievalIndex index)
    : model_(&model),
      data_(&data),
      config_(config),
      cache_(std::move(cache)),
      index_(std::move(index)) {
    config_.validate();
    if (config_.use_label_para && config_.paraphrase_target != "special_token")
        for (const auto& label : data.labels.labels())
            if (!data.glosses.has(label))
                throw ConfigError("stage 2: label paraphrasing enabled but no gloss entry for " +
                                  label);

    std::mt19937_64 rng(config_.seed * 0x9E3779B97F4A7C15ull + 3);
    int64_t d = model_->config().d_model;
    if (config_.use_hist_prompt)
        hist_params_ = HistoryPromptParams::create(model_->params(), d, rng);
    if (config_.use_exp_prompt) {
        exp_params_ = ExperiencePromptParams::create(model_->params(), d, rng);
        needs_similar_ = true;
    }
    if (config_.fusion_mode == "concat") {
        int parts = 1 + (config_.use_hist_prompt ? 1 : 0) + (config_.use_exp_prompt ? 1 : 0);
        ClassifierHead head;
        head.w_h = model_->params().create("head_concat.w_h", {d, d * parts}, d * parts, d, rng);
        head.b_h = model_->params().create_zeros("head_concat.b_h", {d});
        head.w_z = model_->params().create("head_concat.w_z", {data.labels.size(), d}, d,
                                           data.labels.size(), rng);
        head.b_z = model_->params().create_zeros("head_concat.b_z", {data.labels.size()});
        concat_head_ = head;
    }
    if (needs_similar_) precompute_similar();
}

void Stage2Pipeline::precompute_similar() {
    if (config_.k > static_cast<int>(index_.doc_count()) - 1)
        throw ContractError("stage 2: k exceeds the training corpus size minus self-exclusion");
    similar_.clear();
    std::vector<FlatItem> items;
    for (const auto* split : {&data_->train, &data_->dev, &data_->test}) {
        auto part = flatten(*split);
        items.insert(items.end(), part.begin(), part.end());
    }
    std::vector<SimilarSampleSet> sets(items.size());
    parallel_for(static_cast<int64_t>(items.size()), [&](int64_t i) {
        const auto& u = items[static_cast<size_t>(i)].conv
                            ->utterances[static_cast<size_t>(items[static_cast<size_t>(i)].t)];
        // a training utterance never retrieves itself; dev/test ids are not
        // in the index so the exclusion is a no-op there
        std::set<std::string> exclusions = {u.utterance_id};
        if (config_.retriever == "cosine")
            sets[static_cast<size_t>(i)] =
                cosine_similar(index_, cache_.get(u.utterance_id), config_.k, exclusions, cache_);
        else
            sets[static_cast<size_t>(i)] =
                top_k_similar(index_, tokenize(u.text), config_.k, exclusions, cache_);
    });
    for (size_t i = 0; i < items.size(); ++i)
        similar_.emplace(
            items[i].conv->utterances[static_cast<size_t>(items[i].t)].utterance_id,
            std::move(sets[i]));
}

void Stage2Pipeline::refresh_cache() {
    cache_ = cache_representations(*model_, *data_, cache_.snapshot_tag() + "+refresh");
    if (needs_similar_) precompute_similar();
}

const SimilarSampleSet& Stage2Pipeline::similar_for(const std::string& utterance_id) const {
    auto it = similar_.find(utterance_id);
    if (it == similar_.end())
        throw ContractError("stage 2: no similar sample set for " + utterance_id);
    return it->second;
}

std::vector<int64_t> Stage2Pipeline::paraphrase_target_ids(const std::string& label) const {
    const Vocabulary& vocab = model_->vocab();
    if (config_.paraphrase_target == "special_token")
        return {vocab.id_strict(Vocabulary::label_token(label))};
    const GlossEntry& entry = data_->glosses.entry(label);
    const std::string& text =
        config_.paraphrase_target == "adjective" ? entry.adjective : entry.gloss;
    return vocab.encode(tokenize(text));
}

Tensor Stage2Pipeline::forward_repr(const Conversation& conv, int t, bool training,
                                    std::mt19937_64* rng, Tensor* enc_out,
                                    std::vector<double>* enc_mask) const {
    const Vocabulary& vocab = model_->vocab();
    const ModelConfig& mc = model_->config();
    const Utterance& target = conv.utterances[static_cast<size_t>(t)];

    Tensor h_t = cached_vector(cache_.get(target.utterance_id));
    std::vector<int64_t> prefix = {vocab.id(Vocabulary::speaker_token(target.speaker)),
                                   vocab.id_strict("may"), vocab.id_strict("feel")};

    bool prompts_in_input = config_.fusion_mode == "prompt";
    int reserved = (config_.include_sep_prefix ? 1 : 0);
    if (prompts_in_input)
        reserved += (config_.use_hist_prompt ? 4 : 0) + (config_.use_exp_prompt ? 4 : 0);
    Stage1Input s1 =
        build_stage1_input(conv, t, mc.context_window, vocab, mc.max_len - reserved);

    std::optional<Tensor> h_hist, h_exp;
    EncodedInput input;
    if (config_.use_hist_prompt) {
        std::vector<Tensor> history;
        std::vector<bool> same_speaker;
        for (int i = 0; i < t; ++i) {
            const auto& u = conv.utterances[static_cast<size_t>(i)];
            history.push_back(cached_vector(cache_.get(u.utterance_id)));
            same_speaker.push_back(u.speaker == target.speaker);
        }
        auto result = build_history_prompt(history, same_speaker, h_t, *hist_params_, prefix);
        h_hist = result.h_hist;
        if (prompts_in_input) result.prompt.append_to(input);
    }
    if (config_.use_exp_prompt) {
        auto result = build_experience_prompt(similar_for(target.utterance_id), h_t, *exp_params_,
                                              prefix);
        h_exp = result.h_exp;
        if (prompts_in_input) result.prompt.append_to(input);
    }
    if (config_.include_sep_prefix) input.append_token(Vocabulary::kSep);
    for (int64_t id : s1.context) input.append_token(id);

    Tensor enc = model_->encode(input, training, rng);
    Tensor dec = model_->decode(s1.prompt, enc, input.mask(), training, rng);
    Tensor h = row(dec, s1.mask_position);

    if (config_.fusion_mode == "add") {
        if (h_hist) h = add(h, *h_hist);
        if (h_exp) h = add(h, *h_exp);
    } else if (config_.fusion_mode == "concat") {
        std::vector<Tensor> parts = {h};
        if (h_hist) parts.push_back(*h_hist);
        if (h_exp) parts.push_back(*h_exp);
        h = concat(parts);
    }
    if (enc_out) *enc_out = enc;
    if (enc_mask) *enc_mask = input.mask();
    return h;
}

Tensor Stage2Pipeline::utterance_loss(const Conversation& conv, int t, bool training,
                                      std::mt19937_64* rng) const {
    const Utterance& target = conv.utterances[static_cast<size_t>(t)];
    Tensor enc;
    std::vector<double> enc_mask;
    Tensor h = forward_repr(conv, t, training, rng, &enc, &enc_mask);
    const ClassifierHead head = concat_head_ ? *concat_head_ : model_->head();
    Tensor loss =
        cross_entropy(classify_logits(head, h), data_->labels.index_of(target.label));
    if (config_.use_label_para && config_.alpha > 0.0) {
        std::vector<int64_t> target_ids = {
            model_->vocab().id(Vocabulary::speaker_token(target.speaker)),
            model_->vocab().id_strict("feels")};
        auto para = paraphrase_target_ids(target.label);
        target_ids.insert(target_ids.end(), para.begin(), para.end());
        target_ids.push_back(Vocabulary::kEos);
        Tensor gen = model_->lm_generation_loss(enc, enc_mask, target_ids, 2, training, rng);
        loss = add(loss, scale(gen, config_.alpha));
    }
    return loss;
}

int Stage2Pipeline::predict(const Conversation& conv, int t) const {
    Tensor h = forward_repr(conv, t, false, nullptr, nullptr, nullptr);
    const ClassifierHead head = concat_head_ ? *concat_head_ : model_->head();
    return argmax_class(classify_logits(head, h));
}

std::vector<Stage2Pipeline::Item> Stage2Pipeline::split_items(
    const std::string& split_name) const {
    const std::vector<Conversation>* split = nullptr;
    if (split_name == "train") split = &data_->train;
    else if (split_name == "dev") split = &data_->dev;
    else if (split_name == "test") split = &data_->test;
    else throw ConfigError("unknown split: " + split_name);
    std::vector<Item> items;
    for (const auto& conv : *split)
        for (int t = 0; t < static_cast<int>(conv.utterances.size()); ++t)
            items.push_back({&conv, t});
    return items;
}

double Stage2Pipeline::metric_of(const EvalReport& report) const {
    if (config_.selection_metric == "micro_f1") {
        if (!report.micro_f1_excluding_neutral)
            throw ConfigError("selection_metric=micro_f1 requires a neutral class");
        return *report.micro_f1_excluding_neutral;
    }
    return report.weighted_f1;
}

void Stage2Pipeline::train(const std::function<void(int, double)>& on_epoch) {
    auto items = split_items("train");
    if (items.empty()) throw ContractError("stage 2: empty training split");
    int epochs = config_.stage2_epochs +
                 (config_.fusion_mode == "concat" ? config_.concat_extra_epochs : 0);
    int64_t steps_per_epoch =
        (static_cast<int64_t>(items.size()) + config_.batch_size - 1) / config_.batch_size;
    AdamW optimizer(model_->params().all(), {.lr = config_.learning_rate,
                                             .weight_decay = config_.weight_decay,
                                             .warmup_fraction = config_.warmup_fraction,
                                             .total_steps = epochs * steps_per_epoch});
    std::mt19937_64 shuffle_rng(config_.seed * 0x9E3779B97F4A7C15ull + 4);
    std::mt19937_64 dropout_rng(config_.seed * 0x9E3779B97F4A7C15ull + 5);

    std::optional<Checkpoint> best;
    double best_metric = -1.0;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::shuffle(items.begin(), items.end(), shuffle_rng);
        for (size_t start = 0; start < items.size();
             start += static_cast<size_t>(config_.batch_size)) {
            size_t end = std::min(items.size(), start + static_cast<size_t>(config_.batch_size));
            Tape tape;
            TapeScope scope(tape);
            std::vector<Tensor> losses;
            for (size_t i = start; i < end; ++i)
                losses.push_back(
                    utterance_loss(*items[i].conv, items[i].t, true, &dropout_rng));
            Tensor loss = mean(concat(losses));
            if (!std::isfinite(loss.value()))
                throw Error("stage 2: non-finite loss at epoch " + std::to_string(epoch));
            tape.backward(loss);
            optimizer.step();
        }
        EvalReport dev = evaluate("dev");
        double metric = metric_of(dev);
        if (metric > best_metric) {
            best_metric = metric;
            best = Checkpoint::capture(*model_);
        }
        if (on_epoch) on_epoch(epoch, metric);
        if (config_.refresh_cache_every_epoch && epoch + 1 < epochs) refresh_cache();
    }
    if (best) best->restore_into(model_->params());
}

EvalReport Stage2Pipeline::evaluate(const std::string& split_name) const {
    auto items = split_items(split_name);
    if (items.empty()) throw ContractError("evaluate: empty split " + split_name);
    std::vector<int> pred(items.size());
    std::vector<int> gold(items.size());
    parallel_for(static_cast<int64_t>(items.size()), [&](int64_t i) {
        const auto& item = items[static_cast<size_t>(i)];
        pred[static_cast<size_t>(i)] = predict(*item.conv, item.t);
        gold[static_cast<size_t>(i)] = data_->labels.index_of(
            item.conv->utterances[static_cast<size_t>(item.t)].label);
    });

    EvalReport report;
    report.split = split_name;
    report.confusion = confusion_matrix(pred, gold, data_->labels.size());
    report.per_class_f1 = per_class_f1(report.confusion);
    report.weighted_f1 = weighted_f1_from_confusion(report.confusion);
    if (data_->labels.neutral_index())
        report.micro_f1_excluding_neutral = micro_f1_excluding_neutral_from_confusion(
            report.confusion, *data_->labels.neutral_index());
    report.label_names = data_->labels.labels();
    report.config_echo = FlatConfig::canonical(model_->config(), config_);
    report.seed = config_.seed;
    return report;
}

PipelineResult run_training_pipeline(const DataBundle& data, const ModelConfig& model_config,
                                     const TrainConfig& config, const RunPaths& paths) {
    std::filesystem::create_directories(paths.dir);
    {
        std::ofstream out(paths.config_snapshot());
        out << FlatConfig::canonical(model_config, config);
    }
    Seq2SeqModel model = train_stage1(data, model_config, config);
    Checkpoint::capture(model).save(paths.stage1_checkpoint());

    std::string tag = "stage1-seed" + std::to_string(config.seed);
    RepresentationCache cache = cache_representations(model, data, tag);
    cache.save(paths.cache_file());
    RetrievalIndex index = RetrievalIndex::build(data.train, config.bm25_k1, config.bm25_b);
    index.save(paths.index_file());

    Stage2Pipeline pipeline(model, data, config, std::move(cache), std::move(index));
    pipeline.train();
    Checkpoint::capture(model).save(paths.stage2_checkpoint());

    PipelineResult result{pipeline.evaluate("dev"), pipeline.evaluate("test")};
    result.dev.save(paths.eval_report("dev"));
    result.test.save(paths.eval_report("test"));
    return result;
}

}  // namespace mplp
