#include "resp/augment.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "resp/error.hpp"

namespace resp {

namespace {

void check_range(const ProbRange& r, double lo, double hi, const char* name) {
    if (!(r.lo <= r.hi && r.lo >= lo && r.hi <= hi)) {
        throw ConfigError(std::string("augmentation range '") + name + "' must satisfy " + std::to_string(lo) +
                          " <= lo <= hi <= " + std::to_string(hi));
    }
}

// Activation probability first, then the Bernoulli trial; the draw order is part of the
// reproducibility contract.
bool fires(const ProbRange& range, Rng& rng) {
    const double p = rng.uniform(range.lo, range.hi);
    return rng.uniform() < p;
}

double signal_power(std::span<const double> x) {
    double p = 0.0;
    for (double v : x) p += v * v;
    return x.empty() ? 0.0 : p / static_cast<double>(x.size());
}

}  // namespace

void AugmentConfig::validate() const {
    check_range(polarity, 0.0, 1.0, "polarity");
    check_range(noise, 0.0, 1.0, "noise");
    check_range(mask, 0.0, 1.0, "mask");
    check_range(mask_fraction, 0.10, 0.30, "mask_fraction");
    check_range(noise_k, 1.0, 1000.0, "noise_k");
}

std::vector<double> polarity_invert(std::span<const double> x) {
    std::vector<double> out(x.size());
    std::transform(x.begin(), x.end(), out.begin(), [](double v) { return -v; });
    return out;
}

std::vector<double> add_noise_at_snr(std::span<const double> x, double snr, Rng& rng) {
    if (!(snr > 0.0)) throw ConfigError("SNR must be positive");
    const double sigma = std::sqrt(signal_power(x) / snr);
    std::vector<double> out(x.begin(), x.end());
    for (auto& v : out) v += sigma * rng.normal();
    return out;
}

std::vector<double> add_noise_snr(std::span<const double> x, Rng& rng, NoiseDraw* draw, ProbRange k_range) {
    NoiseDraw d;
    d.k = rng.uniform(k_range.lo, k_range.hi);
    d.snr = rng.uniform(0.001 * d.k, 0.005 * d.k);
    std::vector<double> out;
    if (signal_power(x) == 0.0) {
        d.skipped_zero_power = true;
        out.assign(x.begin(), x.end());
    } else {
        out = add_noise_at_snr(x, d.snr, rng);
    }
    if (draw) *draw = d;
    return out;
}

std::vector<double> mask_block_at(std::span<const double> x, double fraction, MaskAnchor anchor, MaskDraw* draw) {
    if (x.size() < 10) {
        throw DataError("block masking needs at least 10 samples, got " + std::to_string(x.size()));
    }
    const std::size_t len = x.size();
    const auto m = std::min<std::size_t>(len, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(len))));
    std::size_t offset = 0;
    switch (anchor) {
        case MaskAnchor::Begin: offset = 0; break;
        case MaskAnchor::Center: offset = (len - m) / 2; break;
        case MaskAnchor::End: offset = len - m; break;
    }
    std::vector<double> out(x.begin(), x.end());
    std::fill(out.begin() + static_cast<std::ptrdiff_t>(offset), out.begin() + static_cast<std::ptrdiff_t>(offset + m),
              0.0);
    if (draw) *draw = MaskDraw{fraction, anchor, offset, m};
    return out;
}

std::vector<double> mask_block(std::span<const double> x, Rng& rng, MaskDraw* draw, ProbRange fraction_range) {
    const double fraction = rng.uniform(fraction_range.lo, fraction_range.hi);
    const auto anchor = static_cast<MaskAnchor>(rng.below(3));
    return mask_block_at(x, fraction, anchor, draw);
}

std::vector<double> apply_augmentations(std::span<const double> x, const AugmentConfig& cfg, Rng& rng,
                                        AugmentTrace* trace) {
    AugmentTrace t;
    std::vector<double> out(x.begin(), x.end());

    if (fires(cfg.polarity, rng)) {
        out = polarity_invert(out);
        t.polarity = true;
    }
    if (fires(cfg.noise, rng)) {
        out = add_noise_snr(out, rng, &t.noise_draw, cfg.noise_k);
        t.noise = true;
    }
    if (fires(cfg.mask, rng)) {
        out = mask_block(out, rng, &t.mask_draw, cfg.mask_fraction);
        t.mask = true;
    }
    if (trace) *trace = t;
    return out;
}

}  // namespace resp
