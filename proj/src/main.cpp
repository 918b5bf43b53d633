#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "s2a/corpus.hpp"
#include "s2a/errors.hpp"
#include "s2a/evalbench.hpp"
#include "s2a/features.hpp"
#include "s2a/kernels.hpp"
#include "s2a/model.hpp"
#include "s2a/trainer.hpp"
#include "s2a/wav.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace s2a;

namespace {

std::optional<uint64_t> env_seed() {
    const char* v = std::getenv("S2A_SEED");
    if (v == nullptr || *v == '\0') return std::nullopt;
    char* end = nullptr;
    const unsigned long long s = std::strtoull(v, &end, 10);
    if (end == v || *end != '\0')
        throw ConfigError("S2A_SEED must be an unsigned integer, got '" + std::string(v) + "'");
    return static_cast<uint64_t>(s);
}

void require_file(const std::string& path, const std::string& what) {
    if (path.empty()) throw UsageError(what + " not set");
    if (!fs::exists(path)) throw UsageError(what + " not found: " + path);
}

void require_dir(const std::string& path, const std::string& what) {
    require_file(path, what);
    if (!fs::is_directory(path)) throw UsageError(what + " is not a directory: " + path);
}

void print_config(const json& j) { std::cout << "effective config: " << j.dump(2) << "\n"; }

// One configurable field: flag beats config file beats default.
template <typename T>
void merge_field(const json* section, const char* key, const CLI::Option* opt, T& target) {
    if (opt != nullptr && opt->count() > 0) return;
    if (section != nullptr && section->contains(key)) {
        try {
            target = section->at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(std::string("config field '") + key + "': " + e.what());
        }
    }
}

void check_known_keys(const json& section, const std::string& name,
                      const std::vector<std::string>& known) {
    for (const auto& [key, value] : section.items()) {
        (void)value;
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ConfigError("unknown key '" + key + "' in config section '" + name + "'");
    }
}

json model_config_json(const ModelConfig& c) {
    return json{{"d_model", c.d_model},
                {"n_heads", c.n_heads},
                {"n_enc_blocks", c.n_enc_blocks},
                {"n_dec_blocks", c.n_dec_blocks},
                {"n_experts", c.n_experts},
                {"top_k", c.top_k},
                {"expert_hidden", c.expert_hidden},
                {"expert_kernel", c.expert_kernel},
                {"dropout", c.dropout},
                {"ppg_dim", c.ppg_dim},
                {"prosody_dim", c.prosody_dim},
                {"out_dim", c.out_dim}};
}

json train_config_json(const TrainConfig& t) {
    return json{{"learning_rate", t.learning_rate},
                {"beta1", t.beta1},
                {"beta2", t.beta2},
                {"adam_eps", t.adam_eps},
                {"batch_size", t.batch_size},
                {"max_epochs", t.max_epochs},
                {"patience", t.patience},
                {"seed", t.seed},
                {"grad_clip_norm", t.grad_clip_norm}};
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << text;
    if (!out) throw IoError("failed writing " + path);
}

void write_animation_csv(const std::string& path, const AnimationSequence& anim) {
    const auto& names = anim.channels.size() == 32
                            ? anim.channels
                            : std::vector<std::string>(blendshape_channel_names().begin(),
                                                       blendshape_channel_names().end());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << "frame";
    for (const auto& n : names) out << "," << n;
    out << "\n";
    char cell[24];
    for (int64_t r = 0; r < anim.frames.rows(); ++r) {
        out << r;
        for (int64_t c = 0; c < anim.frames.cols(); ++c) {
            std::snprintf(cell, sizeof cell, ",%.6f", static_cast<double>(anim.frames.at(r, c)));
            out << cell;
        }
        out << "\n";
    }
    if (!out) throw IoError("failed writing " + path);
}

// ---------------------------------------------------------------------------
// gen-corpus

struct GenCorpusOpts {
    CorpusSpec spec;
};

int cmd_gen_corpus(GenCorpusOpts& o) {
    if (const auto s = env_seed()) o.spec.seed = *s;
    print_config(json{{"coupled_energy", o.spec.coupled_energy},
                      {"out", o.spec.out_dir},
                      {"ratios", o.spec.ratios},
                      {"seed", o.spec.seed},
                      {"utterances", o.spec.n_utts}});
    const CorpusSummary s = gen_corpus(o.spec);
    std::cout << "wrote " << s.n_train << " train / " << s.n_val << " val / " << s.n_test
              << " test utterances\nmanifest: " << s.manifest_path << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainOpts {
    std::string corpus, config_file, variant = "moe", out, log_file, preset = "full";
    ModelConfig cfg;
    TrainConfig tc;
    std::map<std::string, const CLI::Option*> opts;
};

void merge_train_config(TrainOpts& o) {
    o.cfg = o.preset == "tiny" ? ModelConfig::tiny() : ModelConfig{};

    json root;
    if (!o.config_file.empty()) {
        require_file(o.config_file, "config file");
        std::ifstream in(o.config_file, std::ios::binary);
        try {
            in >> root;
        } catch (const json::exception& e) {
            throw ConfigError(o.config_file + ": " + e.what());
        }
        check_known_keys(root, "(top level)", {"model", "train", "paths", "variant"});
    }
    const json* model = root.contains("model") ? &root["model"] : nullptr;
    const json* train = root.contains("train") ? &root["train"] : nullptr;
    const json* paths = root.contains("paths") ? &root["paths"] : nullptr;
    if (model != nullptr)
        check_known_keys(*model, "model",
                         {"d_model", "n_heads", "n_enc_blocks", "n_dec_blocks", "n_experts",
                          "top_k", "expert_hidden", "expert_kernel", "dropout", "ppg_dim",
                          "prosody_dim", "out_dim"});
    if (train != nullptr)
        check_known_keys(*train, "train",
                         {"learning_rate", "beta1", "beta2", "adam_eps", "batch_size",
                          "max_epochs", "patience", "seed", "grad_clip_norm"});
    if (paths != nullptr) check_known_keys(*paths, "paths", {"corpus", "out", "log"});

    auto opt = [&](const char* name) -> const CLI::Option* {
        const auto it = o.opts.find(name);
        return it == o.opts.end() ? nullptr : it->second;
    };
    merge_field(model, "d_model", opt("d_model"), o.cfg.d_model);
    merge_field(model, "n_heads", opt("n_heads"), o.cfg.n_heads);
    merge_field(model, "n_enc_blocks", opt("n_enc_blocks"), o.cfg.n_enc_blocks);
    merge_field(model, "n_dec_blocks", opt("n_dec_blocks"), o.cfg.n_dec_blocks);
    merge_field(model, "n_experts", opt("n_experts"), o.cfg.n_experts);
    merge_field(model, "top_k", opt("top_k"), o.cfg.top_k);
    merge_field(model, "expert_hidden", opt("expert_hidden"), o.cfg.expert_hidden);
    merge_field(model, "expert_kernel", opt("expert_kernel"), o.cfg.expert_kernel);
    merge_field(model, "dropout", opt("dropout"), o.cfg.dropout);
    merge_field(model, "ppg_dim", opt("ppg_dim"), o.cfg.ppg_dim);
    merge_field(model, "prosody_dim", opt("prosody_dim"), o.cfg.prosody_dim);
    merge_field(model, "out_dim", opt("out_dim"), o.cfg.out_dim);

    merge_field(train, "learning_rate", opt("learning_rate"), o.tc.learning_rate);
    merge_field(train, "beta1", opt("beta1"), o.tc.beta1);
    merge_field(train, "beta2", opt("beta2"), o.tc.beta2);
    merge_field(train, "adam_eps", opt("adam_eps"), o.tc.adam_eps);
    merge_field(train, "batch_size", opt("batch_size"), o.tc.batch_size);
    merge_field(train, "max_epochs", opt("max_epochs"), o.tc.max_epochs);
    merge_field(train, "patience", opt("patience"), o.tc.patience);
    merge_field(train, "seed", opt("seed"), o.tc.seed);
    merge_field(train, "grad_clip_norm", opt("grad_clip_norm"), o.tc.grad_clip_norm);

    merge_field(paths, "corpus", opt("corpus"), o.corpus);
    merge_field(paths, "out", opt("out"), o.out);
    merge_field(paths, "log", opt("log"), o.log_file);
    merge_field(&root, "variant", opt("variant"), o.variant);

    if (const auto s = env_seed()) o.tc.seed = *s;
}

int cmd_train(TrainOpts& o) {
    merge_train_config(o);
    const Variant variant = parse_variant(o.variant);
    if (variant == Variant::DenseFeatures && o.opts.at("ppg_dim")->count() == 0 &&
        o.cfg.ppg_dim == 64)
        o.cfg.ppg_dim = 20;
    if (o.corpus.empty()) throw UsageError("--corpus is required (flag or config paths.corpus)");
    if (o.out.empty()) throw UsageError("--out is required (flag or config paths.out)");
    if (o.log_file.empty()) o.log_file = o.out + ".log";
    o.cfg.validate();
    o.tc.validate();

    const std::string manifest = (fs::path(o.corpus) / "manifest.json").string();
    if (!fs::exists(manifest)) throw UsageError("corpus manifest not found: " + manifest);

    print_config(json{{"model", model_config_json(o.cfg)},
                      {"paths", json{{"corpus", o.corpus}, {"log", o.log_file}, {"out", o.out}}},
                      {"train", train_config_json(o.tc)},
                      {"variant", variant_name(variant)}});

    const LoadedCorpus corpus = load_corpus(o.corpus);
    std::cout << "corpus: " << corpus.train.size() << " train / " << corpus.val.size()
              << " val / " << corpus.test.size() << " test\n";

    std::ofstream log(o.log_file, std::ios::binary);
    if (!log) throw IoError("cannot write " + o.log_file);
    TrainResult r = train(corpus, o.cfg, variant, o.tc, &log);
    log.close();

    CheckpointMeta meta;
    meta.epoch = r.best_epoch;
    meta.seed = o.tc.seed;
    meta.best_val_rmse = r.best_val_rmse;
    save_checkpoint(o.out, r.params, r.stats, meta);
    std::cout << "trained " << r.epochs_run << " epochs, best val RMSE " << r.best_val_rmse
              << " at epoch " << r.best_epoch << "\ncheckpoint: " << o.out
              << "\nlog: " << o.log_file << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// infer

struct InferOpts {
    std::string ckpt, features, out;
};

int cmd_infer(const InferOpts& o) {
    require_file(o.ckpt, "checkpoint");
    require_file(o.features, "feature file");
    print_config(json{{"ckpt", o.ckpt}, {"features", o.features}, {"out", o.out}});

    LoadedCheckpoint lc = load_checkpoint(o.ckpt);
    const StoredFeatures sf = read_feature_file(o.features);
    if (lc.params.variant == Variant::DenseFeatures && sf.dense20.rank() == 0)
        throw ValueError(o.features + " has no dense 20-dim stream, which the " +
                         variant_name(lc.params.variant) + " checkpoint expects");
    const int64_t have = lc.params.variant == Variant::DenseFeatures ? sf.dense20.cols()
                                                                     : sf.features.ppg.cols();
    if (have != lc.params.cfg.ppg_dim)
        throw ValueError("feature dim " + std::to_string(have) + " does not match checkpoint (" +
                         variant_name(lc.params.variant) + ", expects " +
                         std::to_string(lc.params.cfg.ppg_dim) + ")");

    const ForwardInput<float> in =
        make_forward_input(sf.features, sf.dense20, lc.stats, lc.params.variant);
    const AnimationSequence anim =
        infer_animation(lc.params, in, lc.stats, sf.features.utterance_id);
    write_animation_csv(o.out, anim);
    std::cout << "wrote " << anim.frames.rows() << " frames to " << o.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOpts {
    std::string pred, ref, out;
};

std::map<std::string, AnimationSequence> read_animation_dir(const std::string& dir) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".s2a")
            files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
    std::map<std::string, AnimationSequence> by_id;
    for (const auto& path : files) {
        AnimationSequence a = read_animation_file(path);
        std::string id = a.utterance_id.empty() ? fs::path(path).stem().string() : a.utterance_id;
        if (by_id.count(id) > 0) throw ValueError(dir + ": duplicate utterance id " + id);
        by_id.emplace(std::move(id), std::move(a));
    }
    if (by_id.empty()) throw ValueError("no .s2a animation files in " + dir);
    return by_id;
}

int cmd_eval(const EvalOpts& o) {
    require_dir(o.pred, "prediction directory");
    require_dir(o.ref, "reference directory");
    print_config(json{{"out", o.out}, {"pred", o.pred}, {"ref", o.ref}});

    const auto pred = read_animation_dir(o.pred);
    const auto ref = read_animation_dir(o.ref);
    std::vector<std::string> only_pred, only_ref;
    for (const auto& [id, a] : pred)
        if (ref.count(id) == 0) only_pred.push_back(id);
    for (const auto& [id, a] : ref)
        if (pred.count(id) == 0) only_ref.push_back(id);
    if (!only_pred.empty() || !only_ref.empty()) {
        std::cerr << "error: unmatched utterance ids\n";
        for (const auto& id : only_pred) std::cerr << "  only in pred: " << id << "\n";
        for (const auto& id : only_ref) std::cerr << "  only in ref: " << id << "\n";
        return 2;
    }

    std::vector<int64_t> all(32);
    std::iota(all.begin(), all.end(), 0);
    const auto& crucial = crucial_channel_indices();
    std::vector<double> per_entire, per_crucial;
    double sq_e = 0, sq_c = 0;
    int64_t cells_e = 0, cells_c = 0;
    for (const auto& [id, pa] : pred) {
        const AnimationSequence& ra = ref.at(id);
        try {
            per_entire.push_back(rmse(pa, ra, all));
            per_crucial.push_back(rmse(pa, ra, crucial));
        } catch (const ShapeError& e) {
            throw ShapeError(id + ": " + e.what());
        }
        const int64_t t = pa.frames.rows();
        sq_e += per_entire.back() * per_entire.back() * static_cast<double>(t * 32);
        sq_c += per_crucial.back() * per_crucial.back() *
                static_cast<double>(t * static_cast<int64_t>(crucial.size()));
        cells_e += t * 32;
        cells_c += t * static_cast<int64_t>(crucial.size());
    }
    const RmseReport report = make_rmse_report(
        o.pred, std::move(per_entire), std::move(per_crucial),
        std::sqrt(sq_e / static_cast<double>(cells_e)), std::sqrt(sq_c / static_cast<double>(cells_c)));

    std::cout << rmse_table({report});
    if (!o.out.empty()) {
        write_text_file(o.out, rmse_reports_json({report}));
        std::cout << "report: " << o.out << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------
// eval-suite

struct EvalSuiteOpts {
    std::string corpus, split = "test", out;
    std::vector<std::string> ckpts;
    bool baseline = true;
};

int cmd_eval_suite(const EvalSuiteOpts& o) {
    require_dir(o.corpus, "corpus directory");
    if (o.ckpts.empty()) throw UsageError("need at least one --ckpt NAME=PATH");
    print_config(json{
        {"baseline", o.baseline}, {"ckpts", o.ckpts}, {"corpus", o.corpus},
        {"out", o.out},           {"split", o.split}});

    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& spec : o.ckpts) {
        const size_t eq = spec.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size())
            throw UsageError("--ckpt expects NAME=PATH, got '" + spec + "'");
        pairs.emplace_back(spec.substr(0, eq), spec.substr(eq + 1));
    }

    const LoadedCorpus corpus = load_corpus(o.corpus);
    const auto& split = corpus.split(o.split);
    if (split.empty()) throw ValueError("split '" + o.split + "' is empty");

    std::vector<RmseReport> reports = evaluate_suite(pairs, split, &std::cerr);
    if (o.baseline) {
        const Tensor<float> means = channel_means(corpus.train);
        reports.push_back(evaluate_constant("mean-predictor", means, split));
    }
    std::cout << rmse_table(reports);
    if (!o.out.empty()) {
        write_text_file(o.out, rmse_reports_json(reports));
        std::cout << "report: " << o.out << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------
// bench

struct BenchOpts {
    std::string ckpt, out;
    int64_t frames = 720, runs = 20, warmup = 3;
    uint64_t seed = 123;
};

int cmd_bench(BenchOpts& o) {
    require_file(o.ckpt, "checkpoint");
    if (const auto s = env_seed()) o.seed = *s;
    print_config(json{{"ckpt", o.ckpt},
                      {"frames", o.frames},
                      {"out", o.out},
                      {"runs", o.runs},
                      {"seed", o.seed},
                      {"warmup", o.warmup}});

    LoadedCheckpoint lc = load_checkpoint(o.ckpt);
    const ModelConfig& cfg = lc.params.cfg;
    const int64_t hidden = matched_blstm_hidden(cfg, lc.params.variant);
    BlstmParams blstm = BlstmParams::build(cfg.ppg_dim + cfg.prosody_dim, hidden, cfg.out_dim);
    RngState brng = RngState(o.seed).split(1);
    blstm.init(brng);
    std::cout << "baseline: blstm hidden " << hidden << " (" << blstm.param_count()
              << " params vs " << lc.params.param_count() << ")\n";

    std::vector<BenchModel> models;
    models.push_back(make_blstm_bench("blstm", blstm, lc.stats, o.frames, o.seed));
    models.push_back(
        make_model_bench(variant_name(lc.params.variant), lc.params, lc.stats, o.frames, o.seed));
    const RtfReport report = bench_rtf(models, o.frames, o.runs, o.warmup);

    std::cout << rtf_table(report);
    if (!o.out.empty()) {
        write_text_file(o.out, rtf_report_json(report));
        std::cout << "report: " << o.out << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------
// extract

struct ExtractOpts {
    std::string wav, out;
    int ppg_dim = 64;
    bool trim = true;
};

int cmd_extract(const ExtractOpts& o) {
    require_file(o.wav, "wav file");
    if (o.ppg_dim < 1) throw UsageError("--ppg-dim must be >= 1");
    print_config(
        json{{"out", o.out}, {"ppg_dim", o.ppg_dim}, {"trim", o.trim}, {"wav", o.wav}});

    const WavData wd = read_wav(o.wav);
    const FrameSpec spec;
    FeatureSequence f;
    f.energy = frame_energy(wd.samples, spec);
    if (f.energy.empty())
        throw ValueError(o.wav + ": waveform shorter than one analysis window");
    f.pitch = frame_pitch(wd.samples, spec);
    const int64_t t = f.frames();
    // No acoustic model here, so the PPG slot holds uniform rows; downstream
    // consumers get real pitch and energy only.
    f.ppg = Tensor<float>({t, o.ppg_dim});
    for (auto& v : f.ppg.data) v = 1.0f / static_cast<float>(o.ppg_dim);
    f.frame_rate_hz = 1000 / spec.hop_ms;
    f.utterance_id = fs::path(o.wav).stem().string();

    const int64_t before = t;
    if (o.trim) f = vad_trim(f);
    write_feature_file(o.out, f, Tensor<float>(), 1.0f);
    std::cout << "frames: " << before << " -> " << f.frames() << " after trim\nwrote " << o.out
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Speech features to facial blendshape animation"};
    app.require_subcommand(1);
    int threads = 1;
    app.add_option("--threads", threads, "Worker threads for tensor kernels (bench forces 1)")
        ->capture_default_str();

    GenCorpusOpts gc;
    auto* gen = app.add_subcommand("gen-corpus", "Write a synthetic paired corpus");
    gen->add_option("--out", gc.spec.out_dir, "Output directory")->required();
    gen->add_option("--utterances", gc.spec.n_utts, "Utterance count")->capture_default_str();
    gen->add_option("--seed", gc.spec.seed, "Corpus seed (S2A_SEED overrides)")
        ->capture_default_str();
    gen->add_option("--coupled-energy", gc.spec.coupled_energy,
                    "Couple jawOpen amplitude to frame energy")
        ->capture_default_str();

    TrainOpts tr;
    auto* train = app.add_subcommand("train", "Train a model on a corpus");
    tr.opts["corpus"] = train->add_option("--corpus", tr.corpus, "Corpus directory");
    train->add_option("--config", tr.config_file, "JSON config file (flags override it)");
    tr.opts["variant"] =
        train->add_option("--variant", tr.variant, "moe, dense, no-prosody or dense-features")
            ->capture_default_str();
    tr.opts["out"] = train->add_option("--out", tr.out, "Checkpoint path");
    tr.opts["log"] = train->add_option("--log", tr.log_file, "Epoch log path (default OUT.log)");
    train->add_option("--preset", tr.preset, "Base model size before overrides")
        ->check(CLI::IsMember({"full", "tiny"}))
        ->capture_default_str();
    tr.opts["d_model"] = train->add_option("--d-model", tr.cfg.d_model);
    tr.opts["n_heads"] = train->add_option("--heads", tr.cfg.n_heads);
    tr.opts["n_enc_blocks"] = train->add_option("--enc-blocks", tr.cfg.n_enc_blocks);
    tr.opts["n_dec_blocks"] = train->add_option("--dec-blocks", tr.cfg.n_dec_blocks);
    tr.opts["n_experts"] = train->add_option("--experts", tr.cfg.n_experts);
    tr.opts["top_k"] = train->add_option("--top-k", tr.cfg.top_k);
    tr.opts["expert_hidden"] = train->add_option("--expert-hidden", tr.cfg.expert_hidden);
    tr.opts["expert_kernel"] = train->add_option("--expert-kernel", tr.cfg.expert_kernel);
    tr.opts["dropout"] = train->add_option("--dropout", tr.cfg.dropout);
    tr.opts["ppg_dim"] = train->add_option("--ppg-dim", tr.cfg.ppg_dim);
    tr.opts["prosody_dim"] = train->add_option("--prosody-dim", tr.cfg.prosody_dim);
    tr.opts["out_dim"] = train->add_option("--out-dim", tr.cfg.out_dim);
    tr.opts["learning_rate"] = train->add_option("--lr", tr.tc.learning_rate);
    tr.opts["beta1"] = train->add_option("--beta1", tr.tc.beta1);
    tr.opts["beta2"] = train->add_option("--beta2", tr.tc.beta2);
    tr.opts["adam_eps"] = train->add_option("--adam-eps", tr.tc.adam_eps);
    tr.opts["batch_size"] = train->add_option("--batch-size", tr.tc.batch_size);
    tr.opts["max_epochs"] = train->add_option("--epochs", tr.tc.max_epochs);
    tr.opts["patience"] = train->add_option("--patience", tr.tc.patience);
    tr.opts["seed"] = train->add_option("--seed", tr.tc.seed, "S2A_SEED overrides");
    tr.opts["grad_clip_norm"] = train->add_option("--grad-clip", tr.tc.grad_clip_norm);

    InferOpts inf;
    auto* infer = app.add_subcommand("infer", "Run a checkpoint on a feature file");
    infer->add_option("--ckpt", inf.ckpt, "Checkpoint path")->required();
    infer->add_option("--features", inf.features, "Feature file")->required();
    infer->add_option("--out", inf.out, "Output CSV path")->required();

    EvalOpts ev;
    auto* eval = app.add_subcommand("eval", "RMSE between two animation directories");
    eval->add_option("--pred", ev.pred, "Predicted animation directory")->required();
    eval->add_option("--ref", ev.ref, "Reference animation directory")->required();
    eval->add_option("--out", ev.out, "Write the report as JSON here");

    EvalSuiteOpts es;
    auto* suite = app.add_subcommand("eval-suite", "Evaluate checkpoints on a corpus split");
    suite->add_option("--corpus", es.corpus, "Corpus directory")->required();
    suite->add_option("--split", es.split, "train, val or test")->capture_default_str();
    suite->add_option("--ckpt", es.ckpts, "NAME=PATH, repeatable")->required();
    suite->add_flag("--baseline,!--no-baseline", es.baseline,
                    "Include the mean-predictor baseline row");
    suite->add_option("--out", es.out, "Write the report as JSON here");

    BenchOpts be;
    auto* bench = app.add_subcommand("bench", "Real-time-factor benchmark vs a BLSTM baseline");
    bench->add_option("--ckpt", be.ckpt, "Checkpoint path")->required();
    bench->add_option("--frames", be.frames, "Frames per forward pass")->capture_default_str();
    bench->add_option("--runs", be.runs, "Timed runs (>= 5)")->capture_default_str();
    bench->add_option("--warmup", be.warmup, "Discarded warmup runs")->capture_default_str();
    bench->add_option("--seed", be.seed, "Input seed (S2A_SEED overrides)")->capture_default_str();
    bench->add_option("--out", be.out, "Write the report as JSON here");

    ExtractOpts ex;
    auto* extract = app.add_subcommand("extract", "Pitch/energy features from a mono 16 kHz WAV");
    extract->add_option("--wav", ex.wav, "Input WAV path")->required();
    extract->add_option("--out", ex.out, "Output feature file")->required();
    extract->add_option("--ppg-dim", ex.ppg_dim, "Width of the uniform PPG placeholder")
        ->capture_default_str();
    extract->add_flag("--trim,!--no-trim", ex.trim, "Trim silent head/tail frames");

    std::function<int()> run;
    gen->callback([&] { run = [&] { return cmd_gen_corpus(gc); }; });
    train->callback([&] { run = [&] { return cmd_train(tr); }; });
    infer->callback([&] { run = [&] { return cmd_infer(inf); }; });
    eval->callback([&] { run = [&] { return cmd_eval(ev); }; });
    suite->callback([&] { run = [&] { return cmd_eval_suite(es); }; });
    bench->callback([&] { run = [&] { return cmd_bench(be); }; });
    extract->callback([&] { run = [&] { return cmd_extract(ex); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        kernels::set_num_threads(threads);
        return run ? run() : 0;
    } catch (const ValueError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const BenchError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
