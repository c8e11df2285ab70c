#include "resp/model.hpp"

#include <algorithm>

#include "resp/error.hpp"

namespace resp {

std::size_t ModelSpec::n_windows() const { return window_count(kFixedLength, window_seconds, sample_rate_hz); }

void ModelSpec::validate() const {
    encoder.validate();
    if (!(sample_rate_hz > 0.0)) throw ConfigError("sample rate must be positive");
    if (n_classes < 2) throw ConfigError("need at least two classes");
    const std::size_t len = window_length(window_seconds, sample_rate_hz);
    if (len > kFixedLength) {
        throw ConfigError("window of " + std::to_string(window_seconds) + " s is longer than the " +
                          std::to_string(kFixedLength) + "-sample input");
    }
}

PreparedInput prepare_input(std::span<const double> samples, const ModelSpec& spec) {
    std::vector<double> x = spec.bandpass ? bandpass_filter(samples, spec.sample_rate_hz)
                                          : std::vector<double>(samples.begin(), samples.end());
    PreparedInput in;
    in.full = pad_to_fixed(x);
    in.windows = segment_windows(in.full, spec.sample_rate_hz, spec.window_seconds).windows;
    return in;
}

Model::Model(ModelSpec spec, std::uint64_t seed)
    : spec_((spec.validate(), spec)),
      encoder_(spec_.encoder, seed),
      fusion_(spec_.fusion, spec_.encoder.out_dim, spec_.n_windows(), spec_.n_classes, seed) {}

Fusion::Output Model::forward(Tape& tape, const PreparedInput& input, bool training, Rng* rng) const {
    if (input.windows.size() != fusion_.n_windows()) {
        throw DimensionError("model expects " + std::to_string(fusion_.n_windows()) + " windows, got " +
                             std::to_string(input.windows.size()));
    }
    const ForwardContext ctx{training, spec_.encoder.dropout, rng};
    std::vector<Var> windows;
    windows.reserve(input.windows.size());
    // the full-signal embedding only feeds variants that read it
    const bool needs_windows = fusion_.variant() != FusionVariant::Full;
    if (needs_windows)
        for (const auto& w : input.windows) windows.push_back(encoder_.forward(tape, w, ctx));
    else
        windows.assign(input.windows.size(), Var{});
    const bool needs_full = fusion_.variant() != FusionVariant::Add && fusion_.variant() != FusionVariant::Concat &&
                            fusion_.variant() != FusionVariant::ConcatAddConcat;
    Var full = needs_full ? encoder_.forward(tape, input.full, ctx) : Var{};
    return fusion_.forward(tape, windows, full, training, rng);
}

std::vector<double> Model::logits(const PreparedInput& input) const {
    Tape tape;
    const auto d = tape.value(forward(tape, input, false, nullptr).logits).data();
    return {d.begin(), d.end()};
}

std::size_t Model::predict(const PreparedInput& input) const {
    const auto l = logits(input);
    return static_cast<std::size_t>(std::max_element(l.begin(), l.end()) - l.begin());
}

std::size_t Model::inference_branch() const {
    if (fusion_.variant() != FusionVariant::Gate) return 0;
    const auto g = fusion_.gate().g.value.data();
    return static_cast<std::size_t>(std::max_element(g.begin(), g.end()) - g.begin());
}

void Model::for_each_parameter(const std::function<void(Parameter&)>& fn) {
    encoder_.for_each_parameter(fn);
    fusion_.for_each_parameter(fn);
}

void Model::for_each_parameter(const std::function<void(const Parameter&)>& fn) const {
    encoder_.for_each_parameter(fn);
    fusion_.for_each_parameter(fn);
}

std::size_t Model::parameter_count() const { return encoder_.parameter_count() + fusion_.parameter_count(); }

}  // namespace resp
