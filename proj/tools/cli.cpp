#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "mplp/checkpoint.hpp"
#include "mplp/config.hpp"
#include "mplp/gradcheck.hpp"
#include "mplp/synthetic.hpp"
#include "mplp/tokenize.hpp"
#include "mplp/training.hpp"

#ifndef MPLP_VERSION
#define MPLP_VERSION "0.1.0"
#endif

namespace mplp {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string iso_now() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream out;
    out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return out.str();
}

struct ManifestWriter {
    std::string dir;
    json j;
    ManifestWriter(const std::string& out_dir, const std::string& command,
                   const std::string& config_path, uint64_t config_hash) {
        dir = out_dir;
        j["command"] = command;
        j["config_path"] = config_path;
        j["config_hash"] = config_hash;
        j["version"] = MPLP_VERSION;
        j["started"] = iso_now();
    }
    void finish() {
        j["finished"] = iso_now();
        std::ofstream out(dir + "/manifest.json");
        out << j.dump(2) << "\n";
    }
};

struct ResolvedConfig {
    ModelConfig model;
    TrainConfig train;
    GeneratorConfig generator;
    std::string data_dir;
    std::string gloss = "synthetic";
};

ResolvedConfig resolve_config(const std::string& config_path,
                              const std::vector<std::string>& overrides,
                              const std::string& data_flag) {
    FlatConfig flat;
    if (!config_path.empty()) flat = FlatConfig::parse_file(config_path);
    for (const auto& kv : overrides) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got " + kv);
        flat.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    ResolvedConfig cfg;
    // the two path-like keys are consumed here, the rest go to the structs
    FlatConfig rest;
    for (const auto& [k, v] : flat.values()) {
        if (k == "data_dir") cfg.data_dir = v;
        else if (k == "gen_gloss") cfg.gloss = v;
        else rest.set(k, v);
    }
    rest.apply(cfg.model, cfg.train, cfg.generator);
    if (!data_flag.empty()) cfg.data_dir = data_flag;
    return cfg;
}

GlossTable gloss_table_for(const std::string& name) {
    if (name == "synthetic") return synthetic_gloss_table();
    return GlossTable::load_tsv(name);
}

void save_labels(const std::string& path, const EmotionLabelSet& labels) {
    json j;
    j["labels"] = labels.labels();
    j["neutral_index"] = labels.neutral_index() ? json(*labels.neutral_index()) : json(nullptr);
    std::ofstream out(path);
    out << j.dump(2) << "\n";
}

EmotionLabelSet load_labels(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open labels file: " + path);
    json j = json::parse(in);
    std::optional<int> neutral;
    if (!j.at("neutral_index").is_null()) neutral = j.at("neutral_index").get<int>();
    return EmotionLabelSet(j.at("labels").get<std::vector<std::string>>(), neutral);
}

DataBundle load_bundle(const std::string& dir) {
    if (dir.empty()) throw ConfigError("no data directory given (data_dir key or --data flag)");
    DataBundle data;
    data.labels = load_labels(dir + "/labels.json");
    data.glosses = GlossTable::load_tsv(dir + "/gloss.tsv");
    data.train = load_corpus(dir + "/train.jsonl", data.labels);
    data.dev = load_corpus(dir + "/dev.jsonl", data.labels);
    data.test = load_corpus(dir + "/test.jsonl", data.labels);
    return data;
}

void print_report(const EvalReport& report) {
    std::cout << "split=" << report.split << " weighted_f1=" << std::setprecision(6)
              << report.weighted_f1;
    if (report.micro_f1_excluding_neutral)
        std::cout << " micro_f1_excl_neutral=" << *report.micro_f1_excluding_neutral;
    std::cout << "\n";
}

int cmd_gen_data(const std::string& spec_path, uint64_t seed, const std::string& out_dir,
                 const std::vector<std::string>& overrides) {
    ResolvedConfig cfg = resolve_config(spec_path, overrides, "");
    GlossTable gloss = gloss_table_for(cfg.gloss);
    if (cfg.gloss != "synthetic" && cfg.generator.labels.empty()) {
        for (const auto& e : gloss.entries()) cfg.generator.labels.push_back(e.label);
        cfg.generator.neutral_index = -1;
        for (size_t i = 0; i < cfg.generator.labels.size(); ++i)
            if (cfg.generator.labels[i] == "neutral")
                cfg.generator.neutral_index = static_cast<int>(i);
    }

    ManifestWriter manifest(out_dir, "gen-data", spec_path, fnv1a_hash(spec_path));
    fs::create_directories(out_dir);
    SyntheticCorpus corpus = generate_synthetic_corpus(cfg.generator, gloss, seed);
    save_corpus(out_dir + "/train.jsonl", corpus.train);
    save_corpus(out_dir + "/dev.jsonl", corpus.dev);
    save_corpus(out_dir + "/test.jsonl", corpus.test);
    save_metadata(out_dir + "/metadata.jsonl", corpus.meta);
    save_labels(out_dir + "/labels.json", corpus.labels);
    gloss.save_tsv(out_dir + "/gloss.tsv");
    manifest.finish();
    std::cout << "wrote " << corpus.train.size() << "/" << corpus.dev.size() << "/"
              << corpus.test.size() << " train/dev/test dialogues to " << out_dir << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              const std::string& data_flag, const std::vector<std::string>& overrides) {
    ResolvedConfig cfg = resolve_config(config_path, overrides, data_flag);
    DataBundle data = load_bundle(cfg.data_dir);
    fs::create_directories(out_dir);
    std::string canonical =
        FlatConfig::canonical(cfg.model, cfg.train) + "data_dir=" + cfg.data_dir + "\n";
    ManifestWriter manifest(out_dir, "train", config_path, fnv1a_hash(canonical));

    RunPaths paths{out_dir};
    PipelineResult result = run_training_pipeline(data, cfg.model, cfg.train, paths);
    {
        std::ofstream out(paths.config_snapshot());
        out << canonical;
    }
    manifest.finish();
    print_report(result.dev);
    print_report(result.test);
    return 0;
}

ResolvedConfig run_config(const std::string& run_dir) {
    return resolve_config(run_dir + "/config.snapshot", {}, "");
}

int cmd_eval(const std::string& run_dir, const std::string& split) {
    ResolvedConfig cfg = run_config(run_dir);
    DataBundle data = load_bundle(cfg.data_dir);
    RunPaths paths{run_dir};
    Checkpoint ckpt = Checkpoint::load(paths.stage2_checkpoint());
    Seq2SeqModel model = ckpt.build_model();
    RepresentationCache cache = RepresentationCache::load(paths.cache_file());
    RetrievalIndex index = RetrievalIndex::load(paths.index_file());
    Stage2Pipeline pipeline(model, data, cfg.train, std::move(cache), std::move(index));
    ckpt.restore_into(model.params());  // second pass fills the stage-2 parameters
    EvalReport report = pipeline.evaluate(split);
    report.save(paths.eval_report(split));
    print_report(report);
    return 0;
}

int cmd_retrieve(const std::string& run_dir, const std::string& text, int k) {
    ResolvedConfig cfg = run_config(run_dir);
    RunPaths paths{run_dir};
    RetrievalIndex index = RetrievalIndex::load(paths.index_file());
    RepresentationCache cache = RepresentationCache::load(paths.cache_file());
    SimilarSampleSet result;
    if (cfg.train.retriever == "cosine") {
        Checkpoint ckpt = Checkpoint::load(paths.stage2_checkpoint());
        Seq2SeqModel model = ckpt.build_model();
        Conversation probe;
        probe.dialogue_id = "query";
        probe.utterances.push_back({"user", text, "", "query:0"});
        auto input = build_stage1_input(probe, 0, 0, model.vocab(), model.config().max_len);
        Tensor h = model.forward_stage1(input);
        result = cosine_similar(index, {h.data().begin(), h.data().end()}, k, {"query:0"}, cache);
    } else {
        result = top_k_similar(index, tokenize(text), k, {"query:0"}, cache);
    }
    for (size_t i = 0; i < result.size(); ++i)
        std::cout << (i + 1) << ". " << result[i].utterance_id << " (" << result[i].label
                  << ") score=" << std::setprecision(6) << result[i].score << "\n";
    return 0;
}

// scale 1: op battery; scale 2: + stage-1 model; scale 3: + full stage-2 loss
int cmd_gradcheck(int scale) {
    int failures = 0;
    auto report = [&](const std::string& name, double err, double tol) {
        bool ok = err < tol;
        std::cout << (ok ? "PASS" : "FAIL") << " " << name << " max_rel_err=" << err
                  << " tol=" << tol << "\n";
        if (!ok) ++failures;
    };

    {
        std::mt19937_64 rng(101);
        Tensor a = Tensor::uniform({5, 4}, 1.0, rng, true);
        Tensor b = Tensor::uniform({5, 4}, 1.0, rng, true);
        Tensor v = Tensor::uniform({5}, 1.0, rng, true);
        Tensor gm = Tensor::uniform({4}, 1.0, rng, true);
        Tensor bt = Tensor::uniform({4}, 1.0, rng, true);
        GradCheckOptions opts{.eps = 1e-4, .max_coords_per_param = 0};
        report("ops/elementwise", finite_difference_check(
                                      [&] { return sum(mul(gelu(add(a, b)), tanh_t(a))); },
                                      {a, b}, opts),
               1e-4);
        report("ops/matmul-softmax",
               finite_difference_check(
                   [&] { return sum(mul(softmax(matmul_nt(a, b)), matmul_nt(b, a))); }, {a, b},
                   opts),
               1e-4);
        report("ops/layer-norm-ce",
               finite_difference_check(
                   [&] {
                       return cross_entropy(matvec_t(layer_norm(a, gm, bt), sigmoid(v)), 2);
                   },
                   {a, gm, bt, v}, opts),
               1e-4);
    }
    if (scale >= 2) {
        GeneratorConfig gc;
        gc.n_dialogues = 4;
        gc.min_utterances = 3;
        gc.max_utterances = 4;
        auto corpus = generate_synthetic_corpus(gc, synthetic_gloss_table(), 5);
        DataBundle data{corpus.train, corpus.dev, corpus.test, corpus.labels,
                        synthetic_gloss_table()};
        ModelConfig mc;
        mc.d_model = 16;
        mc.n_layers = 1;
        mc.n_heads = 2;
        mc.d_ff = 32;
        mc.max_len = 64;
        mc.context_window = 2;
        mc.dropout_rate = 0.0;
        TrainConfig tc;
        tc.stage1_epochs = 0;
        tc.seed = 3;
        Seq2SeqModel model = train_stage1(data, mc, tc);
        const auto& conv = data.train[0];
        auto loss = [&] {
            auto input = build_stage1_input(conv, 1, 2, model.vocab(), mc.max_len);
            return cross_entropy(classify_logits(model.head(), model.forward_stage1(input)), 1);
        };
        report("model/stage1-classification",
               finite_difference_check(loss, model.params().all(),
                                       {.eps = 1e-4, .max_coords_per_param = 2}),
               1e-3);

        if (scale >= 3) {
            tc.k = 2;
            auto cache = cache_representations(model, data, "gradcheck");
            auto index = RetrievalIndex::build(data.train);
            Stage2Pipeline pipe(model, data, tc, std::move(cache), std::move(index));
            auto full = [&] {
                std::vector<Tensor> losses;
                for (int t = 0; t < 3 && t < static_cast<int>(conv.utterances.size()); ++t)
                    losses.push_back(pipe.utterance_loss(conv, t, false, nullptr));
                return mean(concat(losses));
            };
            report("model/stage2-full-loss",
                   finite_difference_check(full, model.params().all(),
                                           {.eps = 1e-4, .max_coords_per_param = 2}),
                   1e-3);
        }
    }
    return failures == 0 ? 0 : 1;
}

int cmd_sweep(const std::string& param, const std::string& grid, const std::string& config_path,
              const std::string& out_dir, const std::string& data_flag, int seeds,
              const std::vector<std::string>& overrides) {
    if (param != "k" && param != "alpha")
        throw ConfigError("sweep --param must be k or alpha");
    std::vector<std::string> values;
    std::istringstream gs(grid);
    std::string item;
    while (std::getline(gs, item, ',')) values.push_back(item);
    if (values.empty()) throw ConfigError("sweep --grid is empty");

    fs::create_directories(out_dir);
    ManifestWriter manifest(out_dir, "sweep", config_path, fnv1a_hash(param + grid));
    std::string csv_path = out_dir + "/sweep_" + param + ".csv";
    std::ofstream csv(csv_path);
    csv << "param,value,seed,weighted_f1,micro_f1_excluding_neutral\n";

    for (const auto& value : values) {
        for (int s = 0; s < seeds; ++s) {
            ResolvedConfig cfg = resolve_config(config_path, overrides, data_flag);
            FlatConfig one;
            one.set(param, value);
            one.set("seed", std::to_string(cfg.train.seed + static_cast<uint64_t>(s)));
            one.apply(cfg.model, cfg.train, cfg.generator);
            DataBundle data = load_bundle(cfg.data_dir);
            std::string run_dir =
                out_dir + "/" + param + "_" + value + "_s" + std::to_string(s);
            PipelineResult result =
                run_training_pipeline(data, cfg.model, cfg.train, {run_dir});
            csv << param << "," << value << "," << cfg.train.seed << ","
                << std::setprecision(10) << result.test.weighted_f1 << ",";
            if (result.test.micro_f1_excluding_neutral)
                csv << std::setprecision(10) << *result.test.micro_f1_excluding_neutral;
            csv << "\n";
            csv.flush();
        }
    }
    manifest.finish();
    std::cout << "wrote " << csv_path << "\n";
    return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"two-stage prompt-based conversational emotion recognition pipeline"};
    app.set_version_flag("--version", MPLP_VERSION);
    app.require_subcommand(1);

    std::string spec_path, config_path, out_dir, run_dir, data_dir, split = "test", text, param,
                                                                    grid;
    uint64_t seed = 1;
    int k = 3, scale = 3, seeds = 1;
    std::vector<std::string> overrides;

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic conversation corpus");
    gen->add_option("--spec", spec_path, "generator spec file (key=value)");
    gen->add_option("--seed", seed, "generator seed");
    gen->add_option("--out", out_dir, "output directory")->required();
    gen->add_option("--set", overrides, "override spec keys (key=value)");

    auto* train = app.add_subcommand("train", "run both training stages end to end");
    train->add_option("--config", config_path, "training config file (key=value)");
    train->add_option("--out", out_dir, "run directory")->required();
    train->add_option("--data", data_dir, "corpus directory (overrides data_dir key)");
    train->add_option("--set", overrides, "override config keys (key=value)");

    auto* eval = app.add_subcommand("eval", "evaluate a finished run on a split");
    eval->add_option("--run", run_dir, "run directory")->required();
    eval->add_option("--split", split, "train | dev | test");

    auto* retrieve = app.add_subcommand("retrieve", "print top-k similar training utterances");
    retrieve->add_option("--run", run_dir, "run directory")->required();
    retrieve->add_option("--text", text, "query text")->required();
    retrieve->add_option("--k", k, "neighbours to print");

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    gradcheck->add_option("--scale", scale, "1 = ops, 2 = + stage-1 model, 3 = + stage-2 loss");

    auto* sweep = app.add_subcommand("sweep", "train/eval across a parameter grid");
    sweep->add_option("--param", param, "k | alpha")->required();
    sweep->add_option("--grid", grid, "comma-separated values")->required();
    sweep->add_option("--config", config_path, "training config file");
    sweep->add_option("--out", out_dir, "sweep output directory")->required();
    sweep->add_option("--data", data_dir, "corpus directory");
    sweep->add_option("--seeds", seeds, "seeds per grid point");
    sweep->add_option("--set", overrides, "override config keys (key=value)");

    try {
        app.parse(argc, argv);
        if (gen->parsed()) return cmd_gen_data(spec_path, seed, out_dir, overrides);
        if (train->parsed()) return cmd_train(config_path, out_dir, data_dir, overrides);
        if (eval->parsed()) return cmd_eval(run_dir, split);
        if (retrieve->parsed()) return cmd_retrieve(run_dir, text, k);
        if (gradcheck->parsed()) return cmd_gradcheck(scale);
        if (sweep->parsed())
            return cmd_sweep(param, grid, config_path, out_dir, data_dir, seeds, overrides);
        return 2;
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace mplp
