#include "resp/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "resp/error.hpp"
#include "resp/rng.hpp"

namespace resp {

std::string_view label_name(PainLabel label) {
    switch (label) {
        case PainLabel::NoPain: return "NoPain";
        case PainLabel::LowPain: return "LowPain";
        case PainLabel::HighPain: return "HighPain";
    }
    return "?";
}

std::optional<PainLabel> parse_label(std::string_view text) {
    for (auto label : {PainLabel::NoPain, PainLabel::LowPain, PainLabel::HighPain}) {
        if (text == label_name(label)) return label;
    }
    return std::nullopt;
}

void validate_record(const RespirationRecord& rec, double high_cutoff_hz) {
    if (rec.samples.empty()) throw DataError("record '" + rec.subject_id + "' has no samples");
    for (double v : rec.samples) {
        if (!std::isfinite(v)) throw DataError("record '" + rec.subject_id + "' contains a non-finite sample");
    }
    if (!(rec.sample_rate_hz > 2.0 * high_cutoff_hz)) {
        throw DataError("sample rate " + std::to_string(rec.sample_rate_hz) + " Hz cannot carry a " +
                        std::to_string(high_cutoff_hz) + " Hz cutoff");
    }
}

// ---------------------------------------------------------------------------
// band-pass

std::array<Biquad, 2> design_bandpass(double sample_rate_hz, BandpassSpec spec) {
    if (!(spec.low_hz > 0.0 && spec.low_hz < spec.high_hz)) {
        throw ConfigError("band-pass cutoffs must satisfy 0 < low < high, got " + std::to_string(spec.low_hz) +
                          " and " + std::to_string(spec.high_hz));
    }
    if (!(spec.high_hz < sample_rate_hz / 2.0)) {
        throw ConfigError("band-pass upper cutoff " + std::to_string(spec.high_hz) + " Hz is not below Nyquist (" +
                          std::to_string(sample_rate_hz / 2.0) + " Hz)");
    }
    constexpr double sqrt2 = std::numbers::sqrt2;
    auto section = [&](double cutoff, bool highpass) {
        const double k = std::tan(std::numbers::pi * cutoff / sample_rate_hz);
        const double norm = 1.0 / (1.0 + sqrt2 * k + k * k);
        Biquad s{};
        if (highpass) {
            s.b0 = norm;
            s.b1 = -2.0 * norm;
            s.b2 = norm;
        } else {
            s.b0 = k * k * norm;
            s.b1 = 2.0 * s.b0;
            s.b2 = s.b0;
        }
        s.a1 = 2.0 * (k * k - 1.0) * norm;
        s.a2 = (1.0 - sqrt2 * k + k * k) * norm;
        return s;
    };
    return {section(spec.low_hz, true), section(spec.high_hz, false)};
}

namespace {

// Runs the cascade over `x` in place. Section states start at the steady state for a
// constant input equal to x[0], which suppresses the start-up transient.
void cascade_inplace(std::span<double> x, const std::array<Biquad, 2>& sections) {
    double level = x.empty() ? 0.0 : x[0];
    for (const auto& s : sections) {
        const double dc_gain = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
        const double y_ss = dc_gain * level;
        double z2 = s.b2 * level - s.a2 * y_ss;
        double z1 = s.b1 * level - s.a1 * y_ss + z2;
        for (auto& v : x) {
            const double in = v;
            const double out = s.b0 * in + z1;
            z1 = s.b1 * in - s.a1 * out + z2;
            z2 = s.b2 * in - s.a2 * out;
            v = out;
        }
        level = y_ss;
    }
}

}  // namespace

std::vector<double> bandpass_filter(std::span<const double> samples, double sample_rate_hz, BandpassSpec spec) {
    const auto sections = design_bandpass(sample_rate_hz, spec);
    const std::size_t n = samples.size();
    if (n == 0) return {};

    // Odd reflection about each endpoint, long enough to cover the slow high-pass transient.
    const auto wanted = static_cast<std::size_t>(std::ceil(3.0 * sample_rate_hz / spec.low_hz));
    const std::size_t pad = std::min(n - 1, wanted);
    std::vector<double> ext;
    ext.reserve(n + 2 * pad);
    for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * samples[0] - samples[i]);
    ext.insert(ext.end(), samples.begin(), samples.end());
    for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * samples[n - 1] - samples[n - 1 - i]);

    cascade_inplace(ext, sections);
    std::reverse(ext.begin(), ext.end());
    cascade_inplace(ext, sections);
    std::reverse(ext.begin(), ext.end());

    return {ext.begin() + static_cast<std::ptrdiff_t>(pad), ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

RespirationRecord bandpass_filter(const RespirationRecord& rec, BandpassSpec spec) {
    validate_record(rec, spec.high_hz);
    RespirationRecord out = rec;
    out.samples = bandpass_filter(rec.samples, rec.sample_rate_hz, spec);
    return out;
}

// ---------------------------------------------------------------------------
// padding and windowing

std::vector<double> pad_to_fixed(std::span<const double> samples, std::size_t target_len) {
    if (samples.size() > target_len) {
        throw DataError("signal has " + std::to_string(samples.size()) + " samples, longer than the fixed length " +
                        std::to_string(target_len));
    }
    std::vector<double> out(target_len, 0.0);
    std::copy(samples.begin(), samples.end(), out.begin());
    return out;
}

RespirationRecord pad_to_fixed(const RespirationRecord& rec, std::size_t target_len) {
    RespirationRecord out = rec;
    out.samples = pad_to_fixed(rec.samples, target_len);
    return out;
}

std::size_t window_length(double window_seconds, double sample_rate_hz) {
    if (!(window_seconds > 0.0)) {
        throw ConfigError("window duration must be positive, got " + std::to_string(window_seconds));
    }
    const auto len = static_cast<long long>(std::llround(window_seconds * sample_rate_hz));
    if (len < 1) throw ConfigError("window of " + std::to_string(window_seconds) + " s is shorter than one sample");
    return static_cast<std::size_t>(len);
}

std::size_t window_count(std::size_t signal_length, double window_seconds, double sample_rate_hz) {
    const std::size_t w = window_length(window_seconds, sample_rate_hz);
    return (signal_length + w - 1) / w;
}

WindowSet segment_windows(std::span<const double> samples, double sample_rate_hz, double window_seconds) {
    WindowSet set;
    set.window_seconds = window_seconds;
    set.window_length = window_length(window_seconds, sample_rate_hz);
    set.source_length = samples.size();
    const std::size_t count = (samples.size() + set.window_length - 1) / set.window_length;
    set.windows.reserve(count);
    for (std::size_t s = 0; s < count; ++s) {
        std::vector<double> window(set.window_length, 0.0);
        const std::size_t begin = s * set.window_length;
        const std::size_t end = std::min(samples.size(), begin + set.window_length);
        std::copy(samples.begin() + static_cast<std::ptrdiff_t>(begin),
                  samples.begin() + static_cast<std::ptrdiff_t>(end), window.begin());
        set.windows.push_back(std::move(window));
    }
    return set;
}

WindowSet segment_windows(const RespirationRecord& rec, double window_seconds) {
    return segment_windows(rec.samples, rec.sample_rate_hz, window_seconds);
}

// ---------------------------------------------------------------------------
// synthetic data

std::vector<RespirationRecord> synth_dataset(std::size_t n_per_class, double duration_s, double sample_rate_hz,
                                             std::uint64_t seed, std::string_view subject_prefix) {
    const SynthNuisance nuisance{};
    const auto n_samples = static_cast<std::size_t>(std::llround(duration_s * sample_rate_hz));
    if (n_per_class == 0 || n_samples == 0) throw ConfigError("synthetic dataset needs at least one sample per class");
    constexpr double two_pi = 2.0 * std::numbers::pi;

    std::vector<RespirationRecord> records;
    records.reserve(kNumClasses * n_per_class);
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        const auto& profile = kSynthProfiles[c];
        for (std::size_t i = 0; i < n_per_class; ++i) {
            Rng rng = Rng::stream(seed, "synth", c, i);
            const double freq = profile.center_hz + rng.uniform(-nuisance.freq_jitter_hz, nuisance.freq_jitter_hz);
            const double amp =
                profile.amplitude * (1.0 + rng.uniform(-nuisance.amplitude_jitter, nuisance.amplitude_jitter));
            const double phase = rng.uniform(0.0, two_pi);
            const double am_rate = rng.uniform(nuisance.am_rate_lo_hz, nuisance.am_rate_hi_hz);
            const double am_phase = rng.uniform(0.0, two_pi);
            const double drift = rng.uniform(-nuisance.drift_per_second, nuisance.drift_per_second);
            const double offset = rng.uniform(-0.5, 0.5);
            const double cardiac_phase = rng.uniform(0.0, two_pi);

            RespirationRecord rec;
            rec.sample_rate_hz = sample_rate_hz;
            rec.label = profile.label;
            rec.subject_id = std::string(subject_prefix) + "-" + std::string(label_name(profile.label)) + "-" +
                             std::to_string(i);
            rec.samples.resize(n_samples);
            for (std::size_t t = 0; t < n_samples; ++t) {
                const double time = static_cast<double>(t) / sample_rate_hz;
                const double envelope = 1.0 + profile.am_depth * std::sin(two_pi * am_rate * time + am_phase);
                rec.samples[t] = amp * envelope * std::sin(two_pi * freq * time + phase) + offset + drift * time +
                                 nuisance.cardiac_amplitude * std::sin(two_pi * nuisance.cardiac_hz * time + cardiac_phase) +
                                 nuisance.noise_std * rng.normal();
            }
            records.push_back(std::move(rec));
        }
    }
    return records;
}

}  // namespace resp
