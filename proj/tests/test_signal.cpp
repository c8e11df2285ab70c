#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "resp/error.hpp"
#include "resp/record_io.hpp"
#include "resp/signal.hpp"
#include "test_support.hpp"

using namespace resp;
namespace fs = std::filesystem;
using resp::testing::dft_amplitude;

namespace {

std::vector<double> sinusoid(double freq_hz, double seconds, double fs = 100.0, double amp = 1.0) {
    std::vector<double> x(static_cast<std::size_t>(seconds * fs));
    for (std::size_t t = 0; t < x.size(); ++t) x[t] = amp * std::sin(2.0 * std::numbers::pi * freq_hz * t / fs);
    return x;
}

fs::path scratch_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("resp_test_signal_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("band-pass: zero in, zero out") {
    const std::vector<double> zeros(1000, 0.0);
    for (double v : bandpass_filter(zeros, 100.0)) CHECK(v == 0.0);
}

TEST_CASE("band-pass passes 0.25 Hz with gain >= 0.9 and rejects 5 Hz by >= 20 dB") {
    const auto pass = sinusoid(0.25, 60.0);
    const auto pass_out = bandpass_filter(pass, 100.0);
    REQUIRE(pass_out.size() == pass.size());
    const double gain = dft_amplitude(pass_out, 100.0, 0.25) / dft_amplitude(pass, 100.0, 0.25);
    CHECK(gain >= 0.9);

    const auto stop = sinusoid(5.0, 60.0);
    const auto stop_out = bandpass_filter(stop, 100.0);
    const double atten_db = 20.0 * std::log10(dft_amplitude(stop_out, 100.0, 5.0) / dft_amplitude(stop, 100.0, 5.0));
    CHECK(atten_db <= -20.0);
}

TEST_CASE("band-pass removes a linear drift of equal magnitude") {
    auto x = sinusoid(0.25, 60.0);
    std::vector<double> drift(x.size());
    for (std::size_t t = 0; t < x.size(); ++t) {
        drift[t] = -1.0 + 2.0 * static_cast<double>(t) / static_cast<double>(x.size() - 1);
        x[t] += drift[t];
    }
    const auto y = bandpass_filter(x, 100.0);
    const double residual = resp::testing::energy(resp::testing::linear_fit(y));
    CHECK(residual < 0.01 * resp::testing::energy(drift));
}

TEST_CASE("band-pass is zero phase") {
    const auto x = sinusoid(0.25, 60.0);
    const auto y = bandpass_filter(x, 100.0);
    int best_lag = 0;
    double best = -1e300;
    for (int lag = -50; lag <= 50; ++lag) {
        double c = 0.0;
        for (std::size_t t = 1000; t + 1000 < x.size(); ++t) c += x[t] * y[static_cast<std::size_t>(int(t) + lag)];
        if (c > best) {
            best = c;
            best_lag = lag;
        }
    }
    CHECK(std::abs(best_lag) <= 1);
}

TEST_CASE("band-pass is linear") {
    Rng rng(2);
    const auto a = resp::testing::random_signal(1150, rng);
    const auto b = resp::testing::random_signal(1150, rng);
    std::vector<double> mix(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) mix[i] = 2.5 * a[i] - 0.75 * b[i];
    const auto fa = bandpass_filter(a, 100.0);
    const auto fb = bandpass_filter(b, 100.0);
    const auto fm = bandpass_filter(mix, 100.0);
    double scale = 0.0;
    for (double v : fm) scale = std::max(scale, std::abs(v));
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(std::abs(fm[i] - (2.5 * fa[i] - 0.75 * fb[i])) <= 1e-5 * scale);
    }
}

TEST_CASE("band-pass rejects invalid cutoffs") {
    const std::vector<double> x(100, 1.0);
    CHECK_THROWS_AS(bandpass_filter(x, 100.0, {0.5, 0.05}), ConfigError);
    CHECK_THROWS_AS(bandpass_filter(x, 100.0, {0.0, 0.5}), ConfigError);
    CHECK_THROWS_AS(bandpass_filter(x, 100.0, {0.05, 50.0}), ConfigError);
    RespirationRecord rec{x, 0.8, PainLabel::NoPain, "s"};
    CHECK_THROWS_AS(bandpass_filter(rec), DataError);
}

TEST_CASE("band-pass handles a single sample") {
    const std::vector<double> one{3.0};
    CHECK(bandpass_filter(one, 100.0).size() == 1);
}

TEST_CASE("pad_to_fixed") {
    std::vector<double> x(1000);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(0.01 * i) + 0.1;
    const auto p = pad_to_fixed(x);
    REQUIRE(p.size() == 1150);
    for (std::size_t i = 0; i < 1000; ++i) CHECK(p[i] == x[i]);
    for (std::size_t i = 1000; i < 1150; ++i) CHECK(p[i] == 0.0);
    CHECK(resp::testing::energy(std::span<const double>(p).first(1000)) == resp::testing::energy(x));

    std::vector<double> full(1150, 2.0);
    CHECK(pad_to_fixed(full) == full);

    const auto single = pad_to_fixed(std::vector<double>{4.0});
    CHECK(single.size() == 1150);
    CHECK(single[0] == 4.0);
    CHECK(std::count(single.begin(), single.end(), 0.0) == 1149);

    CHECK_THROWS_AS(pad_to_fixed(std::vector<double>(1151, 1.0)), DataError);
}

TEST_CASE("segment_windows examples") {
    std::vector<double> x(1150);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 1.0 + static_cast<double>(i);

    const auto five = segment_windows(x, 100.0, 5.0);
    REQUIRE(five.windows.size() == 3);
    for (const auto& w : five.windows) CHECK(w.size() == 500);
    CHECK(std::count(five.windows[2].begin(), five.windows[2].end(), 0.0) == 350);
    CHECK(five.windows[2][149] == 1150.0);

    const auto exact = segment_windows(std::vector<double>(500, 1.0), 100.0, 5.0);
    CHECK(exact.windows.size() == 1);
    CHECK(std::count(exact.windows[0].begin(), exact.windows[0].end(), 0.0) == 0);

    const auto one = segment_windows(x, 100.0, 1.0);
    REQUIRE(one.windows.size() == 12);
    CHECK(std::count(one.windows[11].begin(), one.windows[11].end(), 0.0) == 50);

    CHECK_THROWS_AS(segment_windows(x, 100.0, 0.0), ConfigError);
    CHECK_THROWS_AS(segment_windows(x, 100.0, -1.0), ConfigError);
    CHECK_THROWS_AS(segment_windows(x, 100.0, 0.001), ConfigError);
}

TEST_CASE("segment then flatten reproduces the padded signal exactly") {
    Rng rng(9);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t len = 1 + rng.below(2000);
        const double seconds = 0.01 * static_cast<double>(1 + rng.below(700));
        const auto x = resp::testing::random_signal(len, rng);
        const auto set = segment_windows(x, 100.0, seconds);
        std::vector<double> flat;
        for (const auto& w : set.windows) {
            REQUIRE(w.size() == set.window_length);
            flat.insert(flat.end(), w.begin(), w.end());
        }
        REQUIRE(flat.size() >= len);
        REQUIRE(flat.size() < len + set.window_length);
        CHECK(std::equal(x.begin(), x.end(), flat.begin()));
        CHECK(std::all_of(flat.begin() + static_cast<std::ptrdiff_t>(len), flat.end(), [](double v) { return v == 0.0; }));
    }
}

TEST_CASE("synth_dataset is balanced, deterministic, and peaks at the class rate") {
    const auto data = synth_dataset(10, 10.0, 100.0, 7);
    REQUIRE(data.size() == 30);
    std::array<int, 3> counts{};
    for (const auto& r : data) {
        counts[static_cast<std::size_t>(r.label)]++;
        CHECK(r.samples.size() == 1000);
    }
    CHECK(counts == std::array<int, 3>{10, 10, 10});

    const auto again = synth_dataset(10, 10.0, 100.0, 7);
    for (std::size_t i = 0; i < data.size(); ++i) CHECK(data[i].samples == again[i].samples);
    CHECK(synth_dataset(10, 10.0, 100.0, 8)[0].samples != data[0].samples);

    for (const auto& r : data) {
        const double center = kSynthProfiles[static_cast<std::size_t>(r.label)].center_hz;
        const double peak = resp::testing::dft_peak_hz(r.samples, 100.0, 0.05, 2.0);
        CAPTURE(r.subject_id);
        CHECK(std::abs(peak - center) <= 0.05);
    }
}

TEST_CASE("record text format round-trips bit-exactly") {
    Rng rng(31);
    RespirationRecord rec;
    rec.subject_id = "S042";
    rec.label = PainLabel::HighPain;
    for (int i = 0; i < 500; ++i) {
        const double mag = std::pow(10.0, rng.uniform(-300.0, 300.0));
        rec.samples.push_back(rng.bernoulli(0.5) ? mag : -mag);
    }
    rec.samples.push_back(0.0);
    rec.samples.push_back(0.1);
    const auto back = parse_record(serialize_record(rec));
    CHECK(back.subject_id == rec.subject_id);
    CHECK(back.label == rec.label);
    REQUIRE(back.samples.size() == rec.samples.size());
    for (std::size_t i = 0; i < rec.samples.size(); ++i) CHECK(back.samples[i] == rec.samples[i]);
    CHECK(serialize_record(back) == serialize_record(rec));
}

TEST_CASE("record parse errors") {
    CHECK_THROWS_AS(parse_record("label=NoPain\n1\n"), DataError);
    CHECK_THROWS_AS(parse_record("subject_id=a\nlabel=Medium\n1\n"), DataError);
    CHECK_THROWS_AS(parse_record("subject_id=a\nlabel=NoPain\n"), DataError);
    CHECK_THROWS_AS(parse_record("subject_id=a\nlabel=NoPain\n1\nabc\n"), DataError);
    CHECK_THROWS_AS(parse_record("subject_id=a\nlabel=NoPain\n1\nnan\n"), DataError);
    const auto ok = parse_record("subject_id=a\r\nlabel=LowPain\r\n1.5\r\n-2\r\n");
    CHECK(ok.samples == std::vector<double>{1.5, -2.0});
}

TEST_CASE("manifest and dataset loading") {
    const auto dir = scratch_dir("manifest");
    const auto data = synth_dataset(2, 3.0, 100.0, 1);
    std::vector<ManifestEntry> entries;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const std::string name = "rec_" + std::to_string(i) + ".txt";
        write_record(dir / name, data[i]);
        entries.push_back({name, i % 2 == 0 ? Split::Train : Split::Val});
    }
    write_manifest(dir / "manifest.tsv", entries);
    const auto loaded = load_dataset(dir / "manifest.tsv");
    REQUIRE(loaded.size() == data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        CHECK(loaded[i].record.samples == data[i].samples);
        CHECK(loaded[i].split == entries[i].split);
    }

    try {
        load_dataset(dir / "missing.tsv");
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("missing.tsv") != std::string::npos);
    }
    {
        std::ofstream(dir / "bad.tsv") << "rec_0.txt\tholdout\n";
    }
    CHECK_THROWS_AS(read_manifest(dir / "bad.tsv"), DataError);
    {
        std::ofstream(dir / "dangling.tsv") << "# comment\n\nnope.txt train\n";
    }
    CHECK_THROWS_AS(load_dataset(dir / "dangling.tsv"), DataError);
    fs::remove_all(dir);
}
