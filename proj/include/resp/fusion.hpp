#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "resp/encoder.hpp"
#include "resp/rng.hpp"
#include "resp/tape.hpp"

namespace resp {

/// How window and full-signal embeddings become class logits.
///   gate               four candidate logit sets, one picked per sample by a hard Gumbel gate
///   add, concat, full  a single head on z_add, z_concat or z_full
///   concat_add_concat  a single head on [z_add ‖ z_concat]
///   concat_all         a single head on [z_add ‖ z_concat ‖ z_full]
///   lf_avg             ½ (head([z_add ‖ z_concat]) + head(z_full))
///   lf_coef            α·head([z_add ‖ z_concat]) + (1 − α)·head(z_full), α = sigmoid(learned scalar)
enum class FusionVariant { Gate, Add, Concat, Full, ConcatAddConcat, ConcatAll, LfAvg, LfCoef };

std::string_view variant_name(FusionVariant v);
/// Accepts the names above plus "lf_avg_gate" for the gate. Throws ConfigError otherwise.
FusionVariant parse_variant(std::string_view name);
std::span<const FusionVariant> all_variants();

struct FusedEmbeddings {
    std::vector<double> add;     // element-wise sum
    std::vector<double> concat;  // window order preserved
};

/// Throws DimensionError for an empty list or mismatched widths.
FusedEmbeddings fuse_windows(std::span<const Embedding> windows);
Var fuse_add(Tape& tape, std::span<const Var> windows);
Var fuse_concat(Tape& tape, std::span<const Var> windows);

/// One-layer classifier: z (1 × in) → z·W + b (1 × C).
struct Head {
    Parameter weight;
    Parameter bias;
    std::size_t in_dim() const { return weight.value.rows(); }
};

Head make_head(std::size_t in_dim, std::size_t n_classes, const std::string& prefix);
/// Throws DimensionError when z's width differs from the trained width (e.g. a different window count).
Var head_forward(Tape& tape, Var z, const Head& head);

struct LogitBundle {
    std::vector<double> l_add, l_concat, l_full, l_avg;
};

struct LogitVars {
    Var add, concat, full, avg;
};

struct GateHeads {
    Head add, concat, full;
};

LogitVars heads_forward(Tape& tape, Var z_add, Var z_concat, Var z_full, const GateHeads& heads);
/// Value-level convenience wrapper around the tape version.
LogitBundle heads_forward(std::span<const double> z_add, std::span<const double> z_concat,
                          std::span<const double> z_full, const GateHeads& heads);

struct GateParams {
    Parameter g{"gate.logits", Tensor({4})};
    double tau = 1.0;
};

struct GateOutput {
    Var logits;
    std::size_t chosen = 0;
    Var weights;  // w over [add, concat, full, avg]; unset at inference
};

/// Training: onehot(argmax((g + Gumbel noise) / τ)) forward, softmax gradient backward.
/// Inference: the candidate at argmax(g), no RNG use. Ties go to the lowest index.
GateOutput gumbel_gate(Tape& tape, const LogitVars& bundle, const GateParams& gate, bool training, Rng* rng);

/// Head/gate parameters for one fusion variant.
class Fusion {
public:
    Fusion(FusionVariant variant, std::size_t embed_dim, std::size_t n_windows, std::size_t n_classes,
           std::uint64_t seed);

    FusionVariant variant() const { return variant_; }
    std::size_t embed_dim() const { return embed_dim_; }
    std::size_t n_windows() const { return n_windows_; }
    std::size_t n_classes() const { return n_classes_; }

    struct Output {
        Var logits;
        std::optional<std::size_t> gate_choice;  // gate variant only
    };

    /// `windows` are the per-window embeddings (1 × embed_dim each), `full` the full-signal one.
    Output forward(Tape& tape, std::span<const Var> windows, Var full, bool training, Rng* rng) const;

    void for_each_parameter(const std::function<void(Parameter&)>& fn);
    void for_each_parameter(const std::function<void(const Parameter&)>& fn) const;
    std::size_t parameter_count() const;

    const GateParams& gate() const { return gate_; }
    GateParams& gate() { return gate_; }

private:
    FusionVariant variant_;
    std::size_t embed_dim_, n_windows_, n_classes_;
    std::vector<Head> heads_;  // variant-specific layout
    GateParams gate_;
    Parameter alpha_{"lf_coef.alpha", Tensor({1})};
};

}  // namespace resp
