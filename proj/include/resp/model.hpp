#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "resp/encoder.hpp"
#include "resp/fusion.hpp"
#include "resp/signal.hpp"

namespace resp {

/// Everything needed to rebuild a model's shape: encoder, fusion variant and segmentation.
struct ModelSpec {
    EncoderConfig encoder;
    FusionVariant fusion = FusionVariant::Gate;
    double window_seconds = 5.0;
    double sample_rate_hz = 100.0;
    std::size_t n_classes = kNumClasses;
    bool bandpass = true;

    /// Windows per padded (fixed-length) input.
    std::size_t n_windows() const;
    void validate() const;
    bool operator==(const ModelSpec&) const = default;
};

/// A signal after filtering, padding and segmentation.
struct PreparedInput {
    std::vector<std::vector<double>> windows;
    std::vector<double> full;
};

/// band-pass (if enabled) → zero-pad to the fixed length → non-overlapping windows.
PreparedInput prepare_input(std::span<const double> samples, const ModelSpec& spec);

/// One shared encoder applied to every window and to the full signal, then fusion.
class Model {
public:
    Model(ModelSpec spec, std::uint64_t seed);

    const ModelSpec& spec() const { return spec_; }
    const Encoder& encoder() const { return encoder_; }
    const Fusion& fusion() const { return fusion_; }

    /// Training draws dropout masks (window order, then the full signal) and then the gate
    /// noise from `rng`; inference uses no randomness.
    Fusion::Output forward(Tape& tape, const PreparedInput& input, bool training, Rng* rng) const;

    std::vector<double> logits(const PreparedInput& input) const;
    std::size_t predict(const PreparedInput& input) const;
    /// Index into [add, concat, full, avg] chosen by the gate at inference; 0 for non-gate variants.
    std::size_t inference_branch() const;

    void for_each_parameter(const std::function<void(Parameter&)>& fn);
    void for_each_parameter(const std::function<void(const Parameter&)>& fn) const;
    std::size_t parameter_count() const;

private:
    ModelSpec spec_;
    Encoder encoder_;
    Fusion fusion_;
};

}  // namespace resp
