#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace resp {

enum class PainLabel : std::uint8_t { NoPain = 0, LowPain = 1, HighPain = 2 };

inline constexpr std::size_t kNumClasses = 3;

std::string_view label_name(PainLabel label);
std::optional<PainLabel> parse_label(std::string_view text);

struct RespirationRecord {
    std::vector<double> samples;
    double sample_rate_hz = 100.0;
    PainLabel label = PainLabel::NoPain;
    std::string subject_id;
};

/// Throws DataError unless samples are non-empty and finite and the rate can carry `high_cutoff_hz`.
void validate_record(const RespirationRecord& rec, double high_cutoff_hz = 0.5);

struct WindowSet {
    std::vector<std::vector<double>> windows;
    double window_seconds = 0.0;
    std::size_t window_length = 0;
    std::size_t source_length = 0;
};

struct BandpassSpec {
    double low_hz = 0.05;
    double high_hz = 0.5;
};

/// Second-order section in transposed direct form II, a0 normalized to 1.
struct Biquad {
    double b0, b1, b2, a1, a2;
};

/// Butterworth high-pass at `low_hz` cascaded with a Butterworth low-pass at `high_hz`
/// (two sections, fourth order overall), bilinear transform with pre-warping.
std::array<Biquad, 2> design_bandpass(double sample_rate_hz, BandpassSpec spec);

/// Zero-phase band-pass: the cascade runs forward then backward over an odd-reflected
/// extension of the signal, starting from steady-state section states.
std::vector<double> bandpass_filter(std::span<const double> samples, double sample_rate_hz, BandpassSpec spec = {});
RespirationRecord bandpass_filter(const RespirationRecord& rec, BandpassSpec spec = {});

inline constexpr std::size_t kFixedLength = 1150;

/// Zero-pads the tail to exactly `target_len`; longer inputs are rejected, never truncated.
std::vector<double> pad_to_fixed(std::span<const double> samples, std::size_t target_len = kFixedLength);
RespirationRecord pad_to_fixed(const RespirationRecord& rec, std::size_t target_len = kFixedLength);

/// Window length in samples for a duration; throws ConfigError if not at least one sample.
std::size_t window_length(double window_seconds, double sample_rate_hz);
/// Number of windows ceil(len / window_length) for a given signal length.
std::size_t window_count(std::size_t signal_length, double window_seconds, double sample_rate_hz);

/// Non-overlapping windows; the last one is zero-padded at its tail.
WindowSet segment_windows(std::span<const double> samples, double sample_rate_hz, double window_seconds);
WindowSet segment_windows(const RespirationRecord& rec, double window_seconds);

// ---------------------------------------------------------------------------
// Synthetic data

/// Per-class generator constants. Breathing rate and depth both separate the classes;
/// everything outside the band-pass range is nuisance the filter should remove.
struct SynthClassProfile {
    PainLabel label;
    double center_hz;      // breathing rate
    double amplitude;      // breathing depth
    double am_depth;       // relative amplitude modulation
};

inline constexpr std::array<SynthClassProfile, kNumClasses> kSynthProfiles = {{
    {PainLabel::NoPain, 0.15, 0.6, 0.10},
    {PainLabel::LowPain, 0.25, 1.0, 0.20},
    {PainLabel::HighPain, 0.40, 1.5, 0.30},
}};

struct SynthNuisance {
    double freq_jitter_hz = 0.02;     // uniform ± around the class rate
    double amplitude_jitter = 0.15;   // relative, uniform ±
    double am_rate_lo_hz = 0.02;
    double am_rate_hi_hz = 0.06;
    double noise_std = 0.05;
    double drift_per_second = 0.03;   // max |slope| of a linear baseline drift
    double cardiac_hz = 1.2;
    double cardiac_amplitude = 0.05;
};

/// Balanced dataset, class-major order (all NoPain, then LowPain, then HighPain).
/// Each record draws from its own stream keyed by (seed, class, index).
std::vector<RespirationRecord> synth_dataset(std::size_t n_per_class, double duration_s, double sample_rate_hz,
                                             std::uint64_t seed, std::string_view subject_prefix = "synth");

}  // namespace resp
