#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "resp/rng.hpp"
#include "resp/tape.hpp"
#include "resp/tensor.hpp"

namespace resp {

/// Architecture descriptor. (depth, cross_per_block, self_per_block) spans the grid
/// (1,1,0) (2,1,0) (1,1,1) (1,1,2) (2,1,1) (2,1,2).
struct EncoderConfig {
    std::size_t depth = 1;
    std::size_t cross_per_block = 1;
    std::size_t self_per_block = 0;
    std::size_t n_latents = 256;
    std::size_t model_dim = 512;
    std::size_t fourier_bands = 6;
    double max_freq_hz = 10.0;
    std::size_t ffn_expansion = 4;
    double dropout = 0.1;
    std::size_t out_dim = 512;

    /// Token width: raw sample, K sines, K cosines, position.
    std::size_t input_dim() const { return 2 * fourier_bands + 2; }
    void validate() const;
    bool operator==(const EncoderConfig&) const = default;
};

struct Embedding {
    std::vector<double> values;
};

/// Runtime switches for one forward pass.
struct ForwardContext {
    bool training = false;
    double dropout = 0.0;
    Rng* rng = nullptr;  // required when training with dropout > 0
};

/// Frequencies spaced geometrically from 1 to max_freq (a single band sits at 1).
std::vector<double> fourier_frequencies(std::size_t bands, double max_freq);

/// T × (2K + 2) tokens: [x_t, sin(π f_k p_t)…, cos(π f_k p_t)…, p_t] with p_t spread
/// evenly over [−1, 1]; a single sample sits at p = −1.
Tensor fourier_encode(std::span<const double> x, std::size_t bands, double max_freq);

struct CrossAttentionParams {
    Parameter norm_q_gain, norm_q_bias;    // over d
    Parameter norm_kv_gain, norm_kv_bias;  // over d_in
    Parameter wq, wk, wv, wo;              // d×d, d_in×d, d_in×d, d×d
};

struct SelfAttentionParams {
    Parameter norm_gain, norm_bias;
    Parameter wq, wk, wv, wo;  // all d×d
};

struct FfnParams {
    Parameter norm_gain, norm_bias;
    Parameter w_value, b_value;  // d × h
    Parameter w_gate, b_gate;    // d × h
    Parameter w_out, b_out;      // h × d
};

CrossAttentionParams make_cross_attention(std::size_t model_dim, std::size_t input_dim, const std::string& prefix);
SelfAttentionParams make_self_attention(std::size_t model_dim, const std::string& prefix);
FfnParams make_ffn(std::size_t model_dim, std::size_t hidden_dim, const std::string& prefix);

void for_each_parameter(CrossAttentionParams& p, const std::function<void(Parameter&)>& fn);
void for_each_parameter(SelfAttentionParams& p, const std::function<void(Parameter&)>& fn);
void for_each_parameter(FfnParams& p, const std::function<void(Parameter&)>& fn);

/// Single-head pre-norm cross-attention with residual: latents + softmax(QKᵀ/√d)·V·Wo,
/// Q from the normalized latents, K and V from the normalized tokens.
/// `weights_out`, when given, receives the N×T attention matrix.
Var cross_attention(Tape& tape, Var latents, Var tokens, const CrossAttentionParams& p, const ForwardContext& ctx,
                    Var* weights_out = nullptr);
Var self_attention(Tape& tape, Var latents, const SelfAttentionParams& p, const ForwardContext& ctx,
                   Var* weights_out = nullptr);
/// x + W_out·(u ⊙ gelu(g)) where u and g are parallel projections of layer_norm(x).
Var gated_ffn(Tape& tape, Var x, const FfnParams& p, const ForwardContext& ctx);

/// The respiration encoder: Fourier features → latent bank attending to the tokens through
/// `depth` blocks of [cross → self…] modules, each followed by a gated FFN → mean over
/// latents → linear projection to out_dim.
class Encoder {
public:
    struct CrossLayer {
        CrossAttentionParams attention;
        FfnParams ffn;
    };
    struct SelfLayer {
        SelfAttentionParams attention;
        FfnParams ffn;
    };
    /// One cross-attention module and the self-attention modules that follow it.
    struct Stage {
        CrossLayer cross;
        std::vector<SelfLayer> selfs;
    };

    /// Parameters drawn from streams keyed by (seed, parameter name).
    Encoder(EncoderConfig cfg, std::uint64_t seed);

    const EncoderConfig& config() const { return cfg_; }

    /// Records one forward pass; returns a 1 × out_dim row.
    Var forward(Tape& tape, std::span<const double> signal, const ForwardContext& ctx) const;

    /// Inference-mode convenience wrapper (no dropout, no RNG use).
    Embedding encode(std::span<const double> signal) const;

    void for_each_parameter(const std::function<void(Parameter&)>& fn);
    void for_each_parameter(const std::function<void(const Parameter&)>& fn) const;
    std::size_t parameter_count() const;

    const Parameter& latents() const { return latents_; }
    const std::vector<Stage>& stages() const { return stages_; }

private:
    EncoderConfig cfg_;
    Parameter latents_;
    std::vector<Stage> stages_;  // depth × cross_per_block, in execution order
    Parameter proj_w_, proj_b_;
};

/// Initializes every parameter: latents ~ N(0, 0.02²), layer-norm gains 1, biases 0,
/// weight matrices ~ U(±1/√fan_in). Streams are keyed by parameter name.
void init_parameter(Parameter& p, std::uint64_t seed);

}  // namespace resp
