// resp: synth | train | eval | profile
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "resp/checkpoint.hpp"
#include "resp/config.hpp"
#include "resp/cost.hpp"
#include "resp/error.hpp"
#include "resp/record_io.hpp"
#include "resp/rng.hpp"
#include "resp/training.hpp"

namespace fs = std::filesystem;
using namespace resp;

namespace {

struct SynthArgs {
    std::string out = "data";
    std::size_t per_class = 10;
    std::size_t val_per_class = 0;
    std::size_t test_per_class = 0;
    std::uint64_t seed = 7;
    double duration = 11.5;
    double sample_rate = 100.0;
};

struct TrainArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out, data, fusion;
    std::optional<double> window_seconds;
};

struct EvalArgs {
    std::string checkpoint, data, split = "val", out, config;
    std::optional<double> window_seconds;
};

int cmd_synth(const SynthArgs& a) {
    if (a.duration <= 0.0 || a.sample_rate <= 0.0) throw ConfigError("--duration and --sample-rate must be positive");
    const fs::path out(a.out);
    fs::create_directories(out);
    std::vector<ManifestEntry> manifest;
    struct Part {
        Split split;
        std::size_t n;
        std::uint64_t seed;
    };
    // held-out splits get their own derived seeds so they never repeat training records
    const Part parts[] = {{Split::Train, a.per_class, a.seed},
                          {Split::Val, a.val_per_class, splitmix64(a.seed + 1)},
                          {Split::Test, a.test_per_class, splitmix64(a.seed + 2)}};
    for (const auto& p : parts) {
        if (p.n == 0) continue;
        const auto name = split_name(p.split);
        for (const auto& rec : synth_dataset(p.n, a.duration, a.sample_rate, p.seed, name)) {
            const std::string file = rec.subject_id + ".resp";
            write_record(out / file, rec);
            manifest.push_back({file, p.split});
        }
    }
    write_manifest(out / "manifest.tsv", manifest);
    std::cout << "wrote " << manifest.size() << " records and " << (out / "manifest.tsv").string() << '\n';
    return 0;
}

std::vector<RespirationRecord> records_of(const std::vector<LabeledRecord>& all, Split split) {
    std::vector<RespirationRecord> out;
    for (const auto& r : all)
        if (r.split == split) out.push_back(r.record);
    return out;
}

int cmd_train(const TrainArgs& a) {
    RunConfig cfg = a.config.empty() ? RunConfig{} : load_run_config(a.config);
    if (a.seed) cfg.train.seed = *a.seed;
    if (a.out) cfg.out_dir = *a.out;
    if (a.data) cfg.manifest = *a.data;
    if (a.fusion) cfg.model.fusion = parse_variant(*a.fusion);
    if (a.window_seconds) cfg.model.window_seconds = *a.window_seconds;
    cfg.validate();
    if (cfg.manifest.empty()) throw ConfigError("no manifest given (use --data or [data] manifest)");

    const auto data = load_dataset(cfg.manifest, cfg.model.sample_rate_hz);
    const auto train_set = records_of(data, Split::Train);
    const auto val_set = records_of(data, Split::Val);

    const fs::path out(cfg.out_dir);
    fs::create_directories(out);
    {
        std::ofstream frozen(out / "config.ini", std::ios::trunc);
        if (!frozen) throw Error("cannot write " + (out / "config.ini").string());
        frozen << serialize_run_config(cfg);
    }

    Model model(cfg.model, cfg.train.seed);
    std::cerr << "training " << model.parameter_count() << " parameters on " << train_set.size() << " records ("
              << val_set.size() << " validation), " << cfg.train.epochs << " epochs\n";
    RunWriter writer(out, cfg.train.checkpoint_every, cfg.train.epochs);
    const auto result = train(model, train_set, val_set, cfg.train, [&](const EpochLog& log, const Model& m) {
        writer(log, m);
        std::cerr << metrics_line(log) << '\n';
    });
    if (result.best_epoch) {
        const auto& best = result.epochs[*result.best_epoch];
        std::cout << "best epoch " << *result.best_epoch << " val macro accuracy "
                  << format_real(best.val->macro_accuracy) << '\n';
    }
    std::cout << "run written to " << out.string() << '\n';
    return 0;
}

int cmd_eval(const EvalArgs& a) {
    const auto split = parse_split(a.split);
    if (!split) throw ConfigError("unknown split '" + a.split + "' (expected train, val or test)");
    const Model model = load_checkpoint(a.checkpoint);
    const ModelSpec& spec = model.spec();

    std::optional<double> requested = a.window_seconds;
    if (!requested && !a.config.empty()) requested = load_run_config(a.config).model.window_seconds;
    if (requested && *requested != spec.window_seconds) {
        ModelSpec other = spec;
        other.window_seconds = *requested;
        other.validate();
        throw ConfigError("checkpoint was trained with " + format_real(spec.window_seconds) + " s windows (" +
                          std::to_string(spec.n_windows()) + " windows), requested " + format_real(*requested) +
                          " s (" + std::to_string(other.n_windows()) + " windows)");
    }

    const auto records = records_of(load_dataset(a.data, spec.sample_rate_hz), *split);
    if (records.empty()) throw DataError("split '" + a.split + "' of " + a.data + " is empty");
    const auto report = evaluate(model, records);

    std::ostringstream text;
    text << "split\t" << a.split << "\nrecords\t" << records.size() << "\nmacro_accuracy\t"
         << format_real(report.macro_accuracy) << "\nmacro_precision\t" << format_real(report.macro_precision)
         << "\nmacro_f1\t" << format_real(report.macro_f1) << "\naccuracy\t" << format_real(report.accuracy)
         << '\n';
    std::cout << text.str();

    const fs::path cm_path =
        a.out.empty() ? fs::path(a.checkpoint).parent_path() / ("confusion_" + a.split + ".tsv") : fs::path(a.out);
    std::ofstream cm(cm_path, std::ios::trunc);
    if (!cm) throw Error("cannot write " + cm_path.string());
    cm << "true\\predicted";
    for (std::size_t k = 0; k < spec.n_classes; ++k) cm << '\t' << label_name(static_cast<PainLabel>(k));
    cm << '\n';
    for (std::size_t i = 0; i < spec.n_classes; ++i) {
        cm << label_name(static_cast<PainLabel>(i));
        for (std::size_t j = 0; j < spec.n_classes; ++j) cm << '\t' << report.confusion[i][j];
        cm << '\n';
    }
    std::cout << "confusion matrix written to " << cm_path.string() << '\n';
    return 0;
}

std::string fixed(double v, int digits) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string signed_pct(double ours, double ref) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%+.1f%%", 100.0 * (ours / ref - 1.0));
    return buf;
}

int cmd_profile() {
    struct Row {
        std::size_t depth, cross, self;
        double params_m, gflops;
    };
    // published reference values: parameters (M) and FLOPs (G) per configuration
    const Row grid[] = {{1, 1, 0, 3.62, 1.65}, {2, 1, 0, 6.84, 3.30},  {1, 1, 1, 7.82, 3.80},
                        {1, 1, 2, 12.02, 5.94}, {2, 1, 1, 15.24, 7.60}, {2, 1, 2, 23.64, 11.88}};

    std::printf("Encoder cost, one window of 500 samples (N=256, d=512, K=6, FFN x4)\n");
    std::printf("%5s %5s %4s  %10s %9s %8s  %9s %9s %8s\n", "Depth", "Cross", "Self", "Params(M)", "ref(M)", "dev",
                "FLOPS(G)", "ref(G)", "dev");
    for (const auto& r : grid) {
        EncoderConfig cfg;
        cfg.depth = r.depth;
        cfg.cross_per_block = r.cross;
        cfg.self_per_block = r.self;
        const double p = static_cast<double>(count_params(cfg).params_total) / 1e6;
        const double f = static_cast<double>(encoder_flops(cfg, 500)) / 1e9;
        std::printf("%5zu %5zu %4zu  %10s %9s %8s  %9s %9s %8s\n", r.depth, r.cross, r.self, fixed(p, 3).c_str(),
                    fixed(r.params_m, 2).c_str(), signed_pct(p, r.params_m).c_str(), fixed(f, 3).c_str(),
                    fixed(r.gflops, 2).c_str(), signed_pct(f, r.gflops).c_str());
    }

    const double ref_t[] = {19.74, 9.87, 6.58, 4.93, 4.94};
    std::printf("\nPipeline FLOPs vs window size, (1,1,0) with gated fusion, 1150-sample input\n");
    std::printf("%3s %7s %6s  %10s %12s %9s %6s  %9s %8s\n", "T", "windows", "length", "windows(G)", "full_sig(G)",
                "heads(M)", "gate", "total(G)", "ref(G)");
    for (std::size_t t = 1; t <= 5; ++t) {
        ModelSpec spec;
        spec.window_seconds = static_cast<double>(t);
        const auto r = pipeline_cost(spec);
        const auto& c = r.flops_by_component;
        std::printf("%3zu %7zu %6zu  %10s %12s %9s %6llu  %9s %8s\n", t, r.n_windows, r.input_length,
                    fixed(c.at("windows") / 1e9, 3).c_str(), fixed(c.at("full_signal") / 1e9, 3).c_str(),
                    fixed(c.at("heads") / 1e6, 3).c_str(), static_cast<unsigned long long>(c.at("gate")),
                    fixed(r.flops_forward / 1e9, 3).c_str(), fixed(ref_t[t - 1], 2).c_str());
    }
    std::printf("\nConvention: 2 FLOPs per multiply-accumulate, softmax 5/elem, layer norm 8/elem, GELU 8/elem.\n");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Respiration pain classification: data synthesis, training, evaluation and cost profiling"};
    app.require_subcommand(1);

    SynthArgs sa;
    auto* synth = app.add_subcommand("synth", "Write a synthetic labelled dataset and its manifest");
    synth->add_option("--out", sa.out, "Output directory")->capture_default_str();
    synth->add_option("--per-class", sa.per_class, "Training records per class")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    synth->add_option("--val-per-class", sa.val_per_class, "Validation records per class")->capture_default_str();
    synth->add_option("--test-per-class", sa.test_per_class, "Test records per class")->capture_default_str();
    synth->add_option("--seed", sa.seed, "Generator seed")->capture_default_str();
    synth->add_option("--duration", sa.duration, "Record length in seconds")->capture_default_str();
    synth->add_option("--sample-rate", sa.sample_rate, "Sampling rate in Hz")->capture_default_str();

    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train", "Train a model; writes metrics.tsv, checkpoints and config.ini");
    train_cmd->add_option("--config", ta.config, "Run configuration file");
    train_cmd->add_option("--seed", ta.seed, "Seed (overrides the config)");
    train_cmd->add_option("--out", ta.out, "Run directory (overrides the config)");
    train_cmd->add_option("--data", ta.data, "Dataset manifest (overrides the config)");
    train_cmd->add_option("--window-seconds", ta.window_seconds, "Window length in seconds (overrides the config)");
    train_cmd->add_option("--fusion", ta.fusion, "Fusion variant (overrides the config)");

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on one split of a dataset");
    eval->add_option("--checkpoint", ea.checkpoint, "Checkpoint file")->required();
    eval->add_option("--data", ea.data, "Dataset manifest")->required();
    eval->add_option("--split", ea.split, "train, val or test")->capture_default_str();
    eval->add_option("--out", ea.out, "Confusion matrix file (default: next to the checkpoint)");
    eval->add_option("--window-seconds", ea.window_seconds, "Expected window length; must match the checkpoint");
    eval->add_option("--config", ea.config, "Run configuration whose window length must match the checkpoint");

    auto* profile = app.add_subcommand("profile", "Print parameter and FLOP tables");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*synth) return cmd_synth(sa);
        if (*train_cmd) return cmd_train(ta);
        if (*eval) return cmd_eval(ea);
        if (*profile) return cmd_profile();
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 4;
    } catch (const CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
