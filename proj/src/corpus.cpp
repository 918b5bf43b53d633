#include "s2a/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "s2a/container.hpp"
#include "s2a/errors.hpp"

namespace s2a {

namespace {

// rng stream tags inside one utterance
constexpr uint64_t kTagSequence = 0;
constexpr uint64_t kTagPpg = 1;
constexpr uint64_t kTagPitch = 2;
constexpr uint64_t kTagEnergy = 3;
constexpr uint64_t kTagSpeaker = 4;

VisemeEntry make_entry(const std::string& name, bool voiced, bool vowel, float energy_base,
                       std::initializer_list<std::pair<int64_t, float>> channels) {
    VisemeEntry e;
    e.name = name;
    e.voiced = voiced;
    e.vowel = vowel;
    e.energy_base = energy_base;
    // Low-amplitude pose fingerprint so every channel varies across phonemes;
    // the named channels below override it.
    uint64_t h = 1469598103934665603ull;
    for (char c : name) h = (h ^ static_cast<uint64_t>(c)) * 1099511628211ull;
    RngState fp(h);
    for (auto& v : e.target) v = static_cast<float>(fp.uniform(0.01, 0.09));
    for (const auto& [idx, v] : channels) e.target[static_cast<size_t>(idx)] = v;
    return e;
}

}  // namespace

const VisemeTable& VisemeTable::instance() {
    static const VisemeTable table = [] {
        VisemeTable t;
        const int64_t jaw = kJawOpenIndex;       // 3
        const int64_t close = kMouthCloseIndex;  // 4
        // indices from blendshape_channel_names(): 5 funnel, 6 pucker,
        // 9/10 smile, 15/16 stretch, 21/22 press, 23/24 lowerDown
        t.entries.push_back(make_entry("sil", false, false, -9.0f, {{jaw, 0.05f}, {close, 0.10f}}));
        t.entries.push_back(make_entry("aa", true, true, -1.0f,
                                       {{jaw, 0.65f}, {close, 0.02f}, {23, 0.30f}, {24, 0.30f}}));
        t.entries.push_back(make_entry("eh", true, true, -1.4f, {{jaw, 0.45f}, {9, 0.25f}, {10, 0.25f}}));
        t.entries.push_back(make_entry("iy", true, true, -1.8f,
                                       {{jaw, 0.30f}, {9, 0.50f}, {10, 0.50f}, {15, 0.25f}, {16, 0.25f}}));
        t.entries.push_back(make_entry("ow", true, true, -1.3f, {{jaw, 0.42f}, {5, 0.55f}, {6, 0.40f}}));
        t.entries.push_back(make_entry("uw", true, true, -1.9f, {{jaw, 0.28f}, {5, 0.35f}, {6, 0.60f}}));
        t.entries.push_back(make_entry("m", true, false, -3.2f,
                                       {{jaw, 0.06f}, {close, 0.75f}, {21, 0.40f}, {22, 0.40f}}));
        t.entries.push_back(make_entry("b", true, false, -2.8f, {{jaw, 0.08f}, {close, 0.60f}}));
        t.entries.push_back(make_entry("f", false, false, -3.5f, {{jaw, 0.12f}, {19, 0.45f}, {25, 0.20f}}));
        t.entries.push_back(make_entry("s", false, false, -3.0f, {{jaw, 0.10f}, {9, 0.20f}, {10, 0.20f}}));
        t.entries.push_back(make_entry("t", false, false, -3.3f, {{jaw, 0.12f}, {17, 0.30f}}));
        t.entries.push_back(make_entry("k", false, false, -3.1f, {{jaw, 0.16f}}));
        t.entries.push_back(make_entry("l", true, false, -2.4f, {{jaw, 0.24f}, {17, 0.25f}, {18, 0.35f}}));
        return t;
    }();
    return table;
}

static float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }

// Per-frame jawOpen multiplier from log energy, range (0.6, 1.4).
static float jaw_energy_factor(float energy) {
    return 0.6f + 0.8f * sigmoid((energy + 2.0f) / 0.8f);
}

SyntheticUtterance gen_utterance(const RngState& rng, int n_phonemes, float energy_gain,
                                 bool coupled_energy) {
    if (n_phonemes < 1) throw ValueError("gen_utterance: n_phonemes must be >= 1");
    if (energy_gain < 0.5f || energy_gain > 2.0f)
        throw ValueError("gen_utterance: energy_gain " + std::to_string(energy_gain) +
                         " outside [0.5, 2.0]");
    const VisemeTable& table = VisemeTable::instance();
    const int n_classes = static_cast<int>(table.size());

    RngState seq_rng = rng.split(kTagSequence);
    RngState ppg_rng = rng.split(kTagPpg);
    RngState pitch_rng = rng.split(kTagPitch);
    RngState energy_rng = rng.split(kTagEnergy);

    SyntheticUtterance u;
    u.energy_gain = energy_gain;
    int prev = 0;
    bool has_vowel = false;
    for (int i = 0; i < n_phonemes; ++i) {
        int id;
        if (seq_rng.uniform() < 0.12) {
            id = 0;  // occasional pause
        } else {
            id = 1 + static_cast<int>(seq_rng.below(static_cast<uint64_t>(n_classes - 1)));
            if (id == prev) id = 1 + (id % (n_classes - 1));
        }
        const int dur = 5 + static_cast<int>(seq_rng.below(21));  // 5..25 frames
        u.phonemes.push_back(id);
        u.durations.push_back(dur);
        has_vowel = has_vowel || table.entries[static_cast<size_t>(id)].vowel;
        prev = id;
    }
    if (!has_vowel) {
        // every utterance needs a syllable nucleus
        int vid = 0;
        do {
            vid = 1 + static_cast<int>(seq_rng.below(static_cast<uint64_t>(n_classes - 1)));
        } while (!table.entries[static_cast<size_t>(vid)].vowel);
        u.phonemes[static_cast<size_t>(n_phonemes / 2)] = vid;
    }

    std::vector<std::pair<int, int>> segments;
    for (size_t i = 0; i < u.phonemes.size(); ++i) segments.emplace_back(u.phonemes[i], u.durations[i]);
    u.features.ppg = synth_ppg(segments, ppg_rng);
    const int64_t t1 = u.features.ppg.rows();
    u.features.frame_rate_hz = 50;

    // Per-frame phoneme id, then prosody and targets.
    std::vector<int> frame_phone(static_cast<size_t>(t1));
    {
        int64_t f = 0;
        for (size_t s = 0; s < u.phonemes.size(); ++s)
            for (int d = 0; d < u.durations[s]; ++d) frame_phone[static_cast<size_t>(f++)] = u.phonemes[s];
    }

    // Pitch: reflected random walk in [80, 300] Hz, lightly smoothed, zeroed
    // on unvoiced frames. The walk advances every frame so the contour is a
    // function of the pitch stream alone.
    std::vector<float> walk(static_cast<size_t>(t1));
    double p = 80.0 + 220.0 * pitch_rng.uniform();
    for (int64_t f = 0; f < t1; ++f) {
        p += pitch_rng.normal(0.0, 6.0);
        if (p < 80.0) p = 160.0 - p;
        if (p > 300.0) p = 600.0 - p;
        walk[static_cast<size_t>(f)] = static_cast<float>(p);
    }
    u.features.pitch.assign(static_cast<size_t>(t1), 0.0f);
    for (int64_t f = 0; f < t1; ++f) {
        if (!table.entries[static_cast<size_t>(frame_phone[static_cast<size_t>(f)])].voiced) continue;
        const int64_t lo = std::max<int64_t>(0, f - 1), hi = std::min<int64_t>(t1 - 1, f + 1);
        float s = 0;
        for (int64_t g = lo; g <= hi; ++g) s += walk[static_cast<size_t>(g)];
        u.features.pitch[static_cast<size_t>(f)] = s / static_cast<float>(hi - lo + 1);
    }

    // Energy: class base smoothed across segment boundaries, plus noise,
    // plus the gain's log-power shift (amplitude x g scales power by g^2).
    const float gain_shift = 2.0f * std::log(energy_gain);
    std::vector<float> base(static_cast<size_t>(t1));
    for (int64_t f = 0; f < t1; ++f)
        base[static_cast<size_t>(f)] =
            table.entries[static_cast<size_t>(frame_phone[static_cast<size_t>(f)])].energy_base;
    u.features.energy.assign(static_cast<size_t>(t1), 0.0f);
    static const float kernel[5] = {1.0f / 9, 2.0f / 9, 3.0f / 9, 2.0f / 9, 1.0f / 9};
    for (int64_t f = 0; f < t1; ++f) {
        float acc = 0, wsum = 0;
        for (int j = -2; j <= 2; ++j) {
            const int64_t g = f + j;
            if (g < 0 || g >= t1) continue;
            acc += kernel[j + 2] * base[static_cast<size_t>(g)];
            wsum += kernel[j + 2];
        }
        u.features.energy[static_cast<size_t>(f)] =
            acc / wsum + static_cast<float>(energy_rng.normal(0.0, 0.15)) + gain_shift;
    }
    u.features.validate();

    // Targets at 50 Hz: pose per frame, triangular coarticulation smoothing
    // (kernel renormalized at the edges), then the energy->jawOpen coupling.
    Tensor<float> anim50({t1, 32});
    for (int64_t f = 0; f < t1; ++f) {
        for (int64_t c = 0; c < 32; ++c) {
            float acc = 0, wsum = 0;
            for (int j = -2; j <= 2; ++j) {
                const int64_t g = f + j;
                if (g < 0 || g >= t1) continue;
                acc += kernel[j + 2] *
                       table.entries[static_cast<size_t>(frame_phone[static_cast<size_t>(g)])]
                           .target[static_cast<size_t>(c)];
                wsum += kernel[j + 2];
            }
            anim50.at(f, c) = acc / wsum;
        }
        if (coupled_energy) {
            float& jaw = anim50.at(f, kJawOpenIndex);
            jaw = std::clamp(jaw * jaw_energy_factor(u.features.energy[static_cast<size_t>(f)]),
                             0.0f, 1.0f);
        }
    }

    const int64_t t2 = target_frames(t1);
    u.animation.frames = resample_linear(anim50, t2);
    for (auto& v : u.animation.frames.data) v = std::clamp(v, 0.0f, 1.0f);
    u.animation.channels.assign(blendshape_channel_names().begin(),
                                blendshape_channel_names().end());
    u.animation.fps = 60;
    return u;
}

const Tensor<float>& dense_projection_matrix() {
    static const Tensor<float> proj = [] {
        Tensor<float> m({64, 20});
        RngState rng(0xD20DE);
        const float scale = 1.0f / std::sqrt(64.0f);
        for (auto& v : m.data) v = static_cast<float>(rng.uniform(-1.0, 1.0)) * scale;
        return m;
    }();
    return proj;
}

Tensor<float> gen_dense_feature_variant(const SyntheticUtterance& u, RngState& rng,
                                        float noise_sigma, float offset_scale) {
    const Tensor<float>& ppg = u.features.ppg;
    if (ppg.cols() != 64)
        throw ShapeError("gen_dense_feature_variant: ppg " + ppg.shape_str() + ", expected 64 columns");
    const Tensor<float>& proj = dense_projection_matrix();
    const int64_t t = ppg.rows();
    Tensor<float> out({t, 20});
    kernels::matmul(ppg.data.data(), proj.data.data(), out.data.data(), t, 64, 20);
    std::array<float, 20> offset;
    for (auto& v : offset) v = offset_scale * static_cast<float>(rng.normal(0.0, 0.5));
    for (int64_t r = 0; r < t; ++r)
        for (int64_t c = 0; c < 20; ++c) {
            float v = out.at(r, c) + offset[static_cast<size_t>(c)];
            if (noise_sigma > 0) v += static_cast<float>(rng.normal(0.0, noise_sigma));
            out.at(r, c) = v;
        }
    return out;
}

// ---------------------------------------------------------------------------
// corpus directory
// ---------------------------------------------------------------------------

namespace {

std::string utt_id(int64_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "utt_%04lld", static_cast<long long>(index));
    return buf;
}

nlohmann::json parse_metadata(const std::string& path, const ContainerFile& file,
                              const std::string& want_schema) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(file.metadata_json);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path + ": bad metadata: " + e.what());
    }
    if (j.value("schema", "") != want_schema)
        throw IoError(path + ": expected schema '" + want_schema + "', found '" +
                      j.value("schema", "") + "'");
    return j;
}

}  // namespace

void write_feature_file(const std::string& path, const FeatureSequence& fs,
                        const Tensor<float>& dense20, float energy_gain) {
    ContainerFile file;
    file.add("ppg", fs.ppg);
    file.add("pitch", Tensor<float>({fs.frames()}, std::vector<float>(fs.pitch)));
    file.add("energy", Tensor<float>({fs.frames()}, std::vector<float>(fs.energy)));
    if (dense20.rank() > 0) file.add("dense20", dense20);
    nlohmann::json j;
    j["schema"] = "features";
    j["frame_rate_hz"] = fs.frame_rate_hz;
    j["utterance_id"] = fs.utterance_id;
    j["energy_gain"] = energy_gain;
    file.metadata_json = j.dump();
    write_container(path, file);
}

StoredFeatures read_feature_file(const std::string& path) {
    const ContainerFile file = read_container(path);
    StoredFeatures sf;
    sf.features.ppg = file.require("ppg");
    sf.features.pitch = file.require("pitch").data;
    sf.features.energy = file.require("energy").data;
    const nlohmann::json j = parse_metadata(path, file, "features");
    sf.features.frame_rate_hz = j.value("frame_rate_hz", 50);
    sf.features.utterance_id = j.value("utterance_id", "");
    sf.energy_gain = j.value("energy_gain", 1.0f);
    if (const Tensor<float>* d = file.find("dense20")) sf.dense20 = *d;
    sf.features.validate();
    return sf;
}

void write_animation_file(const std::string& path, const AnimationSequence& anim) {
    ContainerFile file;
    file.add("anim", anim.frames);
    nlohmann::json j;
    j["schema"] = "animation";
    j["fps"] = anim.fps;
    j["utterance_id"] = anim.utterance_id;
    j["channels"] = anim.channels;
    file.metadata_json = j.dump();
    write_container(path, file);
}

AnimationSequence read_animation_file(const std::string& path) {
    const ContainerFile file = read_container(path);
    AnimationSequence a;
    a.frames = file.require("anim");
    const nlohmann::json j = parse_metadata(path, file, "animation");
    a.fps = j.value("fps", 60);
    a.utterance_id = j.value("utterance_id", "");
    if (j.contains("channels")) a.channels = j["channels"].get<std::vector<std::string>>();
    return a;
}

CorpusSummary gen_corpus(const CorpusSpec& spec) {
    if (spec.n_utts < 3)
        throw ValueError("gen_corpus: need at least 3 utterances, got " +
                         std::to_string(spec.n_utts));
    double rsum = 0;
    for (double r : spec.ratios) {
        if (r < 0) throw ValueError("gen_corpus: split ratios must be non-negative");
        rsum += r;
    }
    if (std::abs(rsum - 1.0) > 1e-9)
        throw ValueError("gen_corpus: split ratios sum to " + std::to_string(rsum) + ", expected 1");
    if (spec.out_dir.empty()) throw ValueError("gen_corpus: output directory not set");

    int64_t n_val = static_cast<int64_t>(spec.ratios[1] * static_cast<double>(spec.n_utts));
    int64_t n_test = static_cast<int64_t>(spec.ratios[2] * static_cast<double>(spec.n_utts));
    if (n_val < 1) n_val = 1;
    if (n_test < 1) n_test = 1;
    int64_t n_train = spec.n_utts - n_val - n_test;
    if (n_train < 1)
        throw ValueError("gen_corpus: split ratios leave no training utterances");

    namespace fs = std::filesystem;
    fs::create_directories(fs::path(spec.out_dir) / "features");
    fs::create_directories(fs::path(spec.out_dir) / "anim");

    const RngState base(spec.seed);
    nlohmann::json manifest;
    manifest["version"] = 1;
    manifest["seed"] = spec.seed;
    manifest["coupled_energy"] = spec.coupled_energy;
    manifest["utterances"] = nlohmann::json::array();

    CorpusSummary summary;
    for (int64_t i = 0; i < spec.n_utts; ++i) {
        const std::string split = i < n_train ? "train" : (i < n_train + n_val ? "val" : "test");
        RngState urng = base.split(static_cast<uint64_t>(i));
        RngState prng = urng.split(10);
        const int n_phonemes = 6 + static_cast<int>(prng.below(7));  // 6..12 segments
        const float gain = static_cast<float>(prng.uniform(0.5, 2.0));
        SyntheticUtterance u = gen_utterance(urng, n_phonemes, gain, spec.coupled_energy);
        u.id = utt_id(i);
        u.animation.utterance_id = u.id;
        u.features.utterance_id = u.id;
        RngState srng = urng.split(kTagSpeaker);
        const Tensor<float> dense20 = gen_dense_feature_variant(u, srng);

        const std::string feat_rel = "features/" + u.id + ".s2a";
        const std::string anim_rel = "anim/" + u.id + ".s2a";
        write_feature_file((fs::path(spec.out_dir) / feat_rel).string(), u.features, dense20,
                           u.energy_gain);
        write_animation_file((fs::path(spec.out_dir) / anim_rel).string(), u.animation);

        manifest["utterances"].push_back({{"id", u.id},
                                          {"split", split},
                                          {"feature_path", feat_rel},
                                          {"animation_path", anim_rel},
                                          {"energy_gain", u.energy_gain}});
        if (split == "train") ++summary.n_train;
        else if (split == "val") ++summary.n_val;
        else ++summary.n_test;
    }

    const std::string manifest_path = (fs::path(spec.out_dir) / "manifest.json").string();
    std::ofstream out(manifest_path, std::ios::binary);
    if (!out) throw IoError("cannot write " + manifest_path);
    out << manifest.dump(2) << "\n";
    if (!out) throw IoError("failed writing " + manifest_path);
    summary.manifest_path = manifest_path;
    return summary;
}

const std::vector<LoadedUtterance>& LoadedCorpus::split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    throw ValueError("unknown split '" + name + "' (valid: train, val, test)");
}

LoadedCorpus load_corpus(const std::string& dir) {
    namespace fs = std::filesystem;
    const std::string manifest_path = (fs::path(dir) / "manifest.json").string();
    std::ifstream in(manifest_path, std::ios::binary);
    if (!in) throw IoError("cannot open corpus manifest " + manifest_path);
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(manifest_path + ": bad manifest: " + e.what());
    }
    if (!manifest.contains("utterances"))
        throw IoError(manifest_path + ": manifest has no utterance list");

    LoadedCorpus corpus;
    for (const auto& entry : manifest["utterances"]) {
        LoadedUtterance u;
        u.id = entry.at("id").get<std::string>();
        u.split = entry.at("split").get<std::string>();
        u.energy_gain = entry.at("energy_gain").get<float>();

        const std::string fpath =
            (fs::path(dir) / entry.at("feature_path").get<std::string>()).string();
        StoredFeatures sf = read_feature_file(fpath);
        u.features = std::move(sf.features);
        u.features.utterance_id = u.id;
        u.dense20 = std::move(sf.dense20);

        const std::string apath =
            (fs::path(dir) / entry.at("animation_path").get<std::string>()).string();
        u.animation = read_animation_file(apath);
        u.animation.utterance_id = u.id;

        if (u.split == "train") corpus.train.push_back(std::move(u));
        else if (u.split == "val") corpus.val.push_back(std::move(u));
        else if (u.split == "test") corpus.test.push_back(std::move(u));
        else throw IoError(manifest_path + ": utterance " + u.id + " has unknown split '" + u.split + "'");
    }
    return corpus;
}

}  // namespace s2a
