#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "s2a/wav.hpp"

namespace fs = std::filesystem;

namespace {

struct CmdResult {
    int code = -1;
    std::string out;  // stdout and stderr merged
};

CmdResult run_cli(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + (env.empty() ? "" : " ") + S2A_BIN + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string out;
    char buf[4096];
    size_t n;
    while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, n);
    const int status = pclose(pipe);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Relative path -> bytes for every regular file under root.
std::map<std::string, std::string> tree_bytes(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(root))
        if (entry.is_regular_file())
            files[fs::relative(entry.path(), root).string()] = slurp(entry.path());
    return files;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

const fs::path& work() {
    static const fs::path dir = fresh_dir("s2a_cli_work");
    return dir;
}

// One 12-utterance corpus shared by the cases below.
const fs::path& corpus_dir() {
    static const fs::path dir = [] {
        const fs::path d = work() / "corpus";
        const CmdResult r =
            run_cli("gen-corpus --out " + d.string() + " --utterances 12 --seed 11");
        REQUIRE(r.code == 0);
        return d;
    }();
    return dir;
}

// One quick tiny-model checkpoint shared by the cases below.
const fs::path& ckpt_path() {
    static const fs::path path = [] {
        const fs::path p = work() / "tiny.s2a";
        const CmdResult r = run_cli("train --preset tiny --corpus " + corpus_dir().string() +
                                    " --out " + p.string() +
                                    " --epochs 2 --patience 2 --batch-size 4 --seed 3");
        REQUIRE(r.code == 0);
        return p;
    }();
    return path;
}

std::string first_feature_file() {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(corpus_dir() / "features"))
        files.push_back(entry.path().string());
    REQUIRE(!files.empty());
    std::sort(files.begin(), files.end());
    return files.front();
}

}  // namespace

TEST_CASE("help prints the subcommands and bare invocation fails") {
    const CmdResult help = run_cli("--help");
    CHECK(help.code == 0);
    for (const char* sub : {"gen-corpus", "train", "infer", "eval", "bench", "extract"})
        CHECK(help.out.find(sub) != std::string::npos);

    CHECK(run_cli("").code == 2);
    CHECK(run_cli("no-such-command").code == 2);
}

TEST_CASE("gen-corpus reruns are byte-identical and S2A_SEED wins over the flag") {
    const fs::path again = work() / "corpus_again";
    const CmdResult r1 =
        run_cli("gen-corpus --out " + again.string() + " --utterances 12 --seed 11");
    CHECK(r1.code == 0);
    CHECK(r1.out.find("wrote 10 train / 1 val / 1 test") != std::string::npos);
    CHECK(tree_bytes(again) == tree_bytes(corpus_dir()));

    const fs::path via_env = work() / "corpus_env";
    const CmdResult r2 = run_cli(
        "gen-corpus --out " + via_env.string() + " --utterances 12 --seed 999", "S2A_SEED=11");
    CHECK(r2.code == 0);
    CHECK(tree_bytes(via_env) == tree_bytes(corpus_dir()));

    CHECK(run_cli("gen-corpus --out " + (work() / "tiny_corpus").string() + " --utterances 2")
              .code == 2);
}

TEST_CASE("train writes a checkpoint plus an epoch log and reruns bit-exactly") {
    REQUIRE(fs::exists(ckpt_path()));
    const fs::path log = fs::path(ckpt_path().string() + ".log");
    REQUIRE(fs::exists(log));

    std::ifstream in(log);
    std::string line;
    int64_t lines = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j.size() == 3);
        CHECK(j.at("epoch").get<int64_t>() == lines + 1);
        CHECK(std::isfinite(j.at("train_loss").get<double>()));
        CHECK(std::isfinite(j.at("val_rmse").get<double>()));
        ++lines;
    }
    CHECK(lines == 2);

    const fs::path rerun = work() / "tiny_rerun.s2a";
    const CmdResult r = run_cli("train --preset tiny --corpus " + corpus_dir().string() +
                                    " --out " + rerun.string() +
                                    " --epochs 2 --patience 2 --batch-size 4 --seed 999",
                                "S2A_SEED=3");
    CHECK(r.code == 0);
    CHECK(r.out.find("best val RMSE") != std::string::npos);
    CHECK(slurp(rerun) == slurp(ckpt_path()));
    CHECK(slurp(fs::path(rerun.string() + ".log")) == slurp(log));
}

TEST_CASE("train merges config files under the flags") {
    const fs::path cfg = work() / "train.json";
    {
        std::ofstream out(cfg);
        out << nlohmann::json{
            {"model", {{"d_model", 24}}},
            {"train", {{"max_epochs", 3}, {"patience", 1}, {"batch_size", 4}, {"seed", 3}}},
            {"paths",
             {{"corpus", corpus_dir().string()}, {"out", (work() / "cfg.s2a").string()}}}}.dump();
    }
    const CmdResult r = run_cli("train --preset tiny --config " + cfg.string() + " --epochs 1");
    CHECK(r.code == 0);
    CHECK(r.out.find("\"d_model\": 24") != std::string::npos);
    CHECK(r.out.find("\"max_epochs\": 1") != std::string::npos);
    CHECK(fs::exists(work() / "cfg.s2a"));

    const fs::path bad = work() / "bad.json";
    {
        std::ofstream out(bad);
        out << R"({"trainer": {}})";
    }
    const CmdResult rb = run_cli("train --config " + bad.string());
    CHECK(rb.code == 2);
    CHECK(rb.out.find("unknown key 'trainer'") != std::string::npos);
}

TEST_CASE("train rejects unknown variants and missing corpora") {
    const CmdResult r = run_cli("train --preset tiny --corpus " + corpus_dir().string() +
                                " --out /tmp/x.s2a --variant bogus");
    CHECK(r.code == 2);
    CHECK(r.out.find("moe") != std::string::npos);

    const CmdResult m = run_cli("train --preset tiny --corpus " + (work() / "nope").string() +
                                " --out /tmp/x.s2a");
    CHECK(m.code == 2);
    CHECK(m.out.find("not found") != std::string::npos);
}

TEST_CASE("infer writes a stable CSV and validates feature dimensions") {
    const std::string feat = first_feature_file();
    const fs::path csv = work() / "pred.csv";
    const CmdResult r = run_cli("infer --ckpt " + ckpt_path().string() + " --features " + feat +
                                " --out " + csv.string());
    CHECK(r.code == 0);

    std::ifstream in(csv);
    std::string header;
    REQUIRE(std::getline(in, header));
    CHECK(header.rfind("frame,jawForward,jawLeft", 0) == 0);
    CHECK(header.find("jawOpen") != std::string::npos);
    int64_t rows = 0;
    for (std::string line; std::getline(in, line);) ++rows;
    CHECK(rows > 0);

    const fs::path csv2 = work() / "pred2.csv";
    const CmdResult r2 = run_cli("infer --ckpt " + ckpt_path().string() + " --features " + feat +
                                 " --out " + csv2.string());
    CHECK(r2.code == 0);
    CHECK(slurp(csv2) == slurp(csv));

    // A narrower feature file cannot feed a 64-wide checkpoint.
    const fs::path wav = work() / "tone.wav";
    std::vector<float> samples(16000);
    for (size_t i = 0; i < samples.size(); ++i)
        samples[i] = 0.4f * std::sin(2.0 * M_PI * 120.0 * static_cast<double>(i) / 16000.0);
    s2a::write_wav(wav.string(), samples, 16000);
    const fs::path narrow = work() / "narrow_feat.s2a";
    const CmdResult ex = run_cli("extract --wav " + wav.string() + " --out " + narrow.string() +
                                 " --ppg-dim 32");
    CHECK(ex.code == 0);
    const CmdResult bad = run_cli("infer --ckpt " + ckpt_path().string() + " --features " +
                                  narrow.string() + " --out /tmp/y.csv");
    CHECK(bad.code == 2);
    CHECK(bad.out.find("does not match checkpoint") != std::string::npos);
}

TEST_CASE("eval scores identical directories at zero and flags unmatched ids") {
    const fs::path anim = corpus_dir() / "anim";
    const fs::path report = work() / "eval.json";
    const CmdResult r = run_cli("eval --pred " + anim.string() + " --ref " + anim.string() +
                                " --out " + report.string());
    CHECK(r.code == 0);

    const auto j = nlohmann::json::parse(slurp(report));
    CHECK(j.at("schema") == "rmse_report");
    REQUIRE(j.at("rows").size() == 1);
    CHECK(j.at("rows")[0].at("pooled_entire").get<double>() == 0.0);
    CHECK(j.at("rows")[0].at("per_utterance_entire").size() == 12);

    const fs::path subset = fresh_dir("s2a_cli_subset");
    bool dropped = false;
    for (const auto& entry : fs::directory_iterator(anim)) {
        if (!dropped) {
            dropped = true;
            continue;
        }
        fs::copy_file(entry.path(), subset / entry.path().filename());
    }
    const CmdResult u = run_cli("eval --pred " + subset.string() + " --ref " + anim.string());
    CHECK(u.code == 2);
    CHECK(u.out.find("unmatched utterance ids") != std::string::npos);
    CHECK(u.out.find("only in ref:") != std::string::npos);
}

TEST_CASE("eval-suite reports checkpoints beside the mean predictor") {
    const fs::path report = work() / "suite.json";
    const CmdResult r = run_cli("eval-suite --corpus " + corpus_dir().string() + " --ckpt tiny=" +
                                ckpt_path().string() + " --out " + report.string());
    CHECK(r.code == 0);

    const auto j = nlohmann::json::parse(slurp(report));
    REQUIRE(j.at("rows").size() == 2);
    CHECK(j.at("rows")[0].at("name") == "tiny");
    CHECK(j.at("rows")[1].at("name") == "mean-predictor");

    CHECK(run_cli("eval-suite --corpus " + corpus_dir().string() + " --ckpt tinyonly").code == 2);
}

TEST_CASE("bench rejects too few runs and writes a report when it can measure") {
    const CmdResult bad =
        run_cli("bench --ckpt " + ckpt_path().string() + " --runs 1");
    CHECK(bad.code == 2);
    CHECK(bad.out.find("at least 5") != std::string::npos);

    const fs::path report = work() / "bench.json";
    const CmdResult r = run_cli("bench --ckpt " + ckpt_path().string() +
                                " --frames 60 --runs 5 --warmup 2 --out " + report.string());
    CHECK(r.code == 0);
    const auto j = nlohmann::json::parse(slurp(report));
    CHECK(j.at("schema") == "rtf_report");
    CHECK(j.at("frames") == 60);
    REQUIRE(j.at("rows").size() == 2);
    CHECK(j.at("rows")[0].at("name") == "blstm");
    CHECK(j.at("rows")[1].at("name") == "moe");
    for (const auto& row : j.at("rows")) CHECK(row.at("rtf_mean").get<double>() > 0.0);
}

TEST_CASE("a corrupt checkpoint is an io failure, not a crash") {
    const fs::path bad = work() / "corrupt.s2a";
    {
        std::ofstream out(bad, std::ios::binary);
        out << "garbage bytes";
    }
    const CmdResult r = run_cli("infer --ckpt " + bad.string() + " --features " +
                                first_feature_file() + " --out /tmp/z.csv");
    CHECK(r.code == 3);
    CHECK(r.out.find("bad magic") != std::string::npos);

    const CmdResult missing =
        run_cli("infer --ckpt /tmp/never_written.s2a --features x --out y");
    CHECK(missing.code == 2);
    CHECK(missing.out.find("not found") != std::string::npos);
}

TEST_CASE("extract trims silence and reports the frame counts") {
    const fs::path wav = work() / "padded.wav";
    std::vector<float> samples(24000, 0.0f);
    for (size_t i = 8000; i < 16000; ++i)
        samples[i] = 0.4f * std::sin(2.0 * M_PI * 120.0 * static_cast<double>(i) / 16000.0);
    s2a::write_wav(wav.string(), samples, 16000);

    const fs::path feat = work() / "padded_feat.s2a";
    const CmdResult r = run_cli("extract --wav " + wav.string() + " --out " + feat.string());
    CHECK(r.code == 0);
    CHECK(r.out.find("after trim") != std::string::npos);

    const CmdResult keep = run_cli("extract --wav " + wav.string() + " --out " +
                                   (work() / "untrimmed.s2a").string() + " --no-trim");
    CHECK(keep.code == 0);
    CHECK(fs::file_size(work() / "untrimmed.s2a") >= fs::file_size(feat));

    CHECK(run_cli("extract --wav /tmp/missing.wav --out /tmp/x.s2a").code == 2);
}
