#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "resp/config.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "resp_test_cli";

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

struct Run {
    int code;
    std::string out, err;
};

// Runs the CLI from kRoot and captures its streams.
Run run(const std::string& args) {
    const std::string cmd = "cd '" + kRoot.string() + "' && '" RESP_CLI_PATH "' " + args + " > cli.out 2> cli.err";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(kRoot / "cli.out"), slurp(kRoot / "cli.err")};
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::trunc);
    out << text;
}

const char* kTinyConfig = R"([data]
manifest = data/manifest.tsv
[encoder]
n_latents = 4
model_dim = 8
fourier_bands = 3
ffn_expansion = 2
out_dim = 8
[train]
epochs = 3
batch_size = 4
lr = 1e-3
warmup_epochs = 1
cooldown_epochs = 1
)";

struct Fixture {
    Fixture() {
        fs::remove_all(kRoot);
        fs::create_directories(kRoot);
    }
};

}  // namespace

TEST_CASE_FIXTURE(Fixture, "synth writes a reproducible dataset") {
    auto r = run("synth --out a --per-class 10 --seed 7");
    REQUIRE(r.code == 0);
    std::size_t records = 0;
    for (const auto& e : fs::directory_iterator(kRoot / "a")) records += e.path().extension() == ".resp";
    CHECK(records == 30);
    CHECK(fs::exists(kRoot / "a" / "manifest.tsv"));

    REQUIRE(run("synth --out b --per-class 10 --seed 7").code == 0);
    for (const auto& e : fs::directory_iterator(kRoot / "a"))
        CHECK(slurp(e.path()) == slurp(kRoot / "b" / e.path().filename()));

    REQUIRE(run("synth --out c --per-class 10 --seed 8").code == 0);
    CHECK(slurp(kRoot / "a" / "train-NoPain-0.resp") != slurp(kRoot / "c" / "train-NoPain-0.resp"));

    CHECK(run("synth --out d --per-class 0").code == 2);
    CHECK(run("synth --out d --per-class 2 --duration -1").code == 2);
}

TEST_CASE_FIXTURE(Fixture, "train, rerun and evaluate") {
    REQUIRE(run("synth --out data --per-class 4 --val-per-class 2 --seed 11").code == 0);
    write_file(kRoot / "tiny.ini", kTinyConfig);

    auto r = run("train --config tiny.ini --out run1");
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const std::string metrics = slurp(kRoot / "run1" / "metrics.tsv");
    CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 4);  // header + 3 epochs
    for (const char* f : {"config.ini", "final.ckpt", "best.ckpt"}) CHECK(fs::exists(kRoot / "run1" / f));

    // the frozen config alone reproduces the metrics log
    const auto frozen = resp::load_run_config(kRoot / "run1" / "config.ini");
    CHECK(frozen.train.epochs == 3);
    CHECK(frozen.out_dir == "run1");
    REQUIRE(run("train --config run1/config.ini --out run2").code == 0);
    CHECK(slurp(kRoot / "run2" / "metrics.tsv") == metrics);

    REQUIRE(run("train --config tiny.ini --out run3 --seed 12").code == 0);
    CHECK(slurp(kRoot / "run3" / "metrics.tsv") != metrics);
    CHECK(resp::load_run_config(kRoot / "run3" / "config.ini").train.seed == 12);

    auto e1 = run("eval --checkpoint run1/final.ckpt --data data/manifest.tsv --split val --out cm1.tsv");
    REQUIRE_MESSAGE(e1.code == 0, e1.err);
    auto e2 = run("eval --checkpoint run1/final.ckpt --data data/manifest.tsv --split val --out cm2.tsv");
    CHECK(e1.out.substr(0, e1.out.find("confusion")) == e2.out.substr(0, e2.out.find("confusion")));
    CHECK(slurp(kRoot / "cm1.tsv") == slurp(kRoot / "cm2.tsv"));
    CHECK(e1.out.find("macro_accuracy") != std::string::npos);
    CHECK(slurp(kRoot / "cm1.tsv").starts_with("true\\predicted\tNoPain\tLowPain\tHighPain\n"));

    CHECK(run("eval --checkpoint run1/final.ckpt --data data/manifest.tsv").code == 0);
    CHECK(fs::exists(kRoot / "run1" / "confusion_val.tsv"));

    // window count mismatch between the checkpoint and the requested segmentation
    auto w = run("eval --checkpoint run1/final.ckpt --data data/manifest.tsv --window-seconds 2");
    CHECK(w.code == 2);
    CHECK(w.err.find("window") != std::string::npos);
    CHECK(run("eval --checkpoint run1/final.ckpt --data data/manifest.tsv --window-seconds 5").code == 0);

    std::string bytes = slurp(kRoot / "run1" / "final.ckpt");
    bytes.resize(bytes.size() / 2);
    write_file(kRoot / "broken.ckpt", bytes);
    CHECK(run("eval --checkpoint broken.ckpt --data data/manifest.tsv").code == 4);
    write_file(kRoot / "garbage.ckpt", "not a checkpoint at all");
    CHECK(run("eval --checkpoint garbage.ckpt --data data/manifest.tsv").code == 4);
    CHECK(run("eval --checkpoint nowhere.ckpt --data data/manifest.tsv").code == 4);
    CHECK(run("eval --checkpoint run1/final.ckpt --data data/manifest.tsv --split dev").code == 2);
}

TEST_CASE_FIXTURE(Fixture, "error paths map to exit codes") {
    write_file(kRoot / "tiny.ini", kTinyConfig);
    auto r = run("train --config tiny.ini --data missing/manifest.tsv --out x");
    CHECK(r.code == 3);
    CHECK(r.err.find("missing/manifest.tsv") != std::string::npos);

    write_file(kRoot / "bad.ini", "[train]\nepochz = 3\n");
    r = run("train --config bad.ini");
    CHECK(r.code == 2);
    CHECK(r.err.find("train.epochz") != std::string::npos);

    CHECK(run("train --config nothere.ini").code == 2);
    CHECK(run("train --config tiny.ini --fusion nope").code == 2);
    CHECK(run("train --config tiny.ini --window-seconds 20").code == 2);
    CHECK(run("train --config tiny.ini --seed abc").code == 2);
    CHECK(run("frobnicate").code == 2);
    CHECK(run("").code == 2);

    REQUIRE(run("synth --out data --per-class 2").code == 0);
    write_file(kRoot / "data" / "train-NoPain-0.resp", "subject_id=x\nlabel=NoPain\n0.1\nbanana\n");
    r = run("train --config tiny.ini --out y");
    CHECK(r.code == 3);
    CHECK(r.err.find("train-NoPain-0.resp") != std::string::npos);
}

TEST_CASE_FIXTURE(Fixture, "profile tables") {
    auto r = run("profile");
    REQUIRE(r.code == 0);
    std::istringstream in(r.out);
    std::string line;
    std::vector<std::string> grid, windows;
    bool second = false;
    while (std::getline(in, line)) {
        if (line.starts_with("Pipeline")) second = true;
        if (line.size() > 4 && std::isdigit(static_cast<unsigned char>(line[line.find_first_not_of(' ')])))
            (second ? windows : grid).push_back(line);
    }
    REQUIRE(grid.size() == 6);
    REQUIRE(windows.size() == 5);
    const char* order[] = {"1     1    0", "2     1    0", "1     1    1", "1     1    2", "2     1    1", "2     1    2"};
    for (std::size_t i = 0; i < 6; ++i) CHECK(grid[i].find(order[i]) != std::string::npos);
    double prev = 0.0;
    for (const auto& row : grid) {
        std::istringstream cols(row);
        double depth, cross, self, params;
        cols >> depth >> cross >> self >> params;
        CHECK(params > prev);
        prev = params;
    }
}
