#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "resp/rng.hpp"

namespace resp {

struct ProbRange {
    double lo = 0.0;
    double hi = 0.0;
    bool operator==(const ProbRange&) const = default;
};

/// Each augmentation fires with a per-sample probability drawn uniformly from its range.
struct AugmentConfig {
    ProbRange polarity{0.0, 0.0};
    ProbRange noise{0.0, 0.0};
    ProbRange mask{0.0, 0.0};
    ProbRange mask_fraction{0.10, 0.30};
    ProbRange noise_k{1.0, 1000.0};

    /// Throws ConfigError when a range is inverted or leaves its documented bounds.
    void validate() const;
    bool operator==(const AugmentConfig&) const = default;
};

std::vector<double> polarity_invert(std::span<const double> x);

/// Gaussian noise at a fixed linear power ratio: noise variance = signal power / snr.
std::vector<double> add_noise_at_snr(std::span<const double> x, double snr, Rng& rng);

struct NoiseDraw {
    double k = 0.0;
    double snr = 0.0;
    bool skipped_zero_power = false;
};

/// Draws k ~ U(noise_k), SNR ~ U(0.001·k, 0.005·k), then adds noise at that SNR.
/// A zero-power signal is returned unchanged and flagged in the draw record.
std::vector<double> add_noise_snr(std::span<const double> x, Rng& rng, NoiseDraw* draw = nullptr,
                                  ProbRange k_range = {1.0, 1000.0});

enum class MaskAnchor { Begin = 0, Center = 1, End = 2 };

struct MaskDraw {
    double fraction = 0.0;
    MaskAnchor anchor = MaskAnchor::Begin;
    std::size_t offset = 0;
    std::size_t length = 0;
};

/// Zeroes round(fraction·len) contiguous samples at offset 0, (len − m)/2, or len − m.
std::vector<double> mask_block_at(std::span<const double> x, double fraction, MaskAnchor anchor,
                                  MaskDraw* draw = nullptr);
std::vector<double> mask_block(std::span<const double> x, Rng& rng, MaskDraw* draw = nullptr,
                               ProbRange fraction_range = {0.10, 0.30});

struct AugmentTrace {
    bool polarity = false;
    bool noise = false;
    bool mask = false;
    NoiseDraw noise_draw;
    MaskDraw mask_draw;
};

/// Polarity, then noise, then masking; the three stack independently.
std::vector<double> apply_augmentations(std::span<const double> x, const AugmentConfig& cfg, Rng& rng,
                                        AugmentTrace* trace = nullptr);

}  // namespace resp
