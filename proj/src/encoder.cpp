#include "resp/encoder.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "resp/error.hpp"

namespace resp {

void EncoderConfig::validate() const {
    auto positive = [](std::size_t v, const char* name) {
        if (v == 0) throw ConfigError(std::string("encoder ") + name + " must be at least 1");
    };
    positive(depth, "depth");
    positive(cross_per_block, "cross_per_block");
    positive(n_latents, "n_latents");
    positive(model_dim, "model_dim");
    positive(fourier_bands, "fourier_bands");
    positive(ffn_expansion, "ffn_expansion");
    positive(out_dim, "out_dim");
    if (!(max_freq_hz >= 1.0)) throw ConfigError("encoder max_freq_hz must be at least 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("encoder dropout must lie in [0, 1)");
}

// ---------------------------------------------------------------------------
// positional features

std::vector<double> fourier_frequencies(std::size_t bands, double max_freq) {
    std::vector<double> f(bands);
    for (std::size_t k = 0; k < bands; ++k) {
        f[k] = bands == 1 ? 1.0 : std::pow(max_freq, static_cast<double>(k) / static_cast<double>(bands - 1));
    }
    return f;
}

Tensor fourier_encode(std::span<const double> x, std::size_t bands, double max_freq) {
    if (x.empty()) throw DimensionError("fourier_encode: empty signal");
    const std::size_t t_len = x.size();
    const std::size_t width = 2 * bands + 2;
    const auto freqs = fourier_frequencies(bands, max_freq);
    std::vector<double> data(t_len * width);
    for (std::size_t t = 0; t < t_len; ++t) {
        const double p =
            t_len == 1 ? -1.0 : -1.0 + 2.0 * static_cast<double>(t) / static_cast<double>(t_len - 1);
        double* row = data.data() + t * width;
        row[0] = x[t];
        for (std::size_t k = 0; k < bands; ++k) {
            const double angle = std::numbers::pi * freqs[k] * p;
            row[1 + k] = std::sin(angle);
            row[1 + bands + k] = std::cos(angle);
        }
        row[width - 1] = p;
    }
    return Tensor({t_len, width}, std::move(data));
}

// ---------------------------------------------------------------------------
// parameters

void init_parameter(Parameter& p, std::uint64_t seed) {
    Rng rng = Rng::stream(seed, "init/" + p.name);
    const auto dot = p.name.rfind('.');
    const std::string leaf = dot == std::string::npos ? p.name : p.name.substr(dot + 1);
    auto data = p.value.data();
    if (leaf == "latents") {
        for (auto& v : data) v = 0.02 * rng.normal();
    } else if (leaf == "gain") {
        for (auto& v : data) v = 1.0;
    } else if (leaf == "bias" || leaf.starts_with("b_")) {
        for (auto& v : data) v = 0.0;
    } else {
        const double bound = 1.0 / std::sqrt(static_cast<double>(p.value.rows()));
        for (auto& v : data) v = rng.uniform(-bound, bound);
    }
}

namespace {

Parameter make_param(const std::string& name, Shape shape) { return Parameter{name, Tensor(std::move(shape))}; }

Var residual_branch(Tape& tape, Var x, Var branch, const ForwardContext& ctx) {
    if (ctx.training && ctx.dropout > 0.0) {
        if (!ctx.rng) throw Error("training-mode dropout needs an RNG stream");
        branch = tape.dropout(branch, ctx.dropout, true, *ctx.rng);
    }
    return tape.add(x, branch);
}

Var attend(Tape& tape, Var q, Var k, Var v, Var wo, std::size_t model_dim, Var* weights_out) {
    Var scores = tape.scale(tape.matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(model_dim)));
    Var weights = tape.softmax_rows(scores);
    if (weights_out) *weights_out = weights;
    return tape.matmul(tape.matmul(weights, v), wo);
}

}  // namespace

CrossAttentionParams make_cross_attention(std::size_t d, std::size_t d_in, const std::string& prefix) {
    return CrossAttentionParams{
        make_param(prefix + ".norm_q.gain", {d}),     make_param(prefix + ".norm_q.bias", {d}),
        make_param(prefix + ".norm_kv.gain", {d_in}), make_param(prefix + ".norm_kv.bias", {d_in}),
        make_param(prefix + ".wq", {d, d}),           make_param(prefix + ".wk", {d_in, d}),
        make_param(prefix + ".wv", {d_in, d}),        make_param(prefix + ".wo", {d, d}),
    };
}

SelfAttentionParams make_self_attention(std::size_t d, const std::string& prefix) {
    return SelfAttentionParams{
        make_param(prefix + ".norm.gain", {d}), make_param(prefix + ".norm.bias", {d}),
        make_param(prefix + ".wq", {d, d}),     make_param(prefix + ".wk", {d, d}),
        make_param(prefix + ".wv", {d, d}),     make_param(prefix + ".wo", {d, d}),
    };
}

FfnParams make_ffn(std::size_t d, std::size_t h, const std::string& prefix) {
    return FfnParams{
        make_param(prefix + ".norm.gain", {d}), make_param(prefix + ".norm.bias", {d}),
        make_param(prefix + ".w_value", {d, h}), make_param(prefix + ".b_value", {h}),
        make_param(prefix + ".w_gate", {d, h}),  make_param(prefix + ".b_gate", {h}),
        make_param(prefix + ".w_out", {h, d}),   make_param(prefix + ".b_out", {d}),
    };
}

void for_each_parameter(CrossAttentionParams& p, const std::function<void(Parameter&)>& fn) {
    for (Parameter* x : {&p.norm_q_gain, &p.norm_q_bias, &p.norm_kv_gain, &p.norm_kv_bias, &p.wq, &p.wk, &p.wv, &p.wo})
        fn(*x);
}

void for_each_parameter(SelfAttentionParams& p, const std::function<void(Parameter&)>& fn) {
    for (Parameter* x : {&p.norm_gain, &p.norm_bias, &p.wq, &p.wk, &p.wv, &p.wo}) fn(*x);
}

void for_each_parameter(FfnParams& p, const std::function<void(Parameter&)>& fn) {
    for (Parameter* x : {&p.norm_gain, &p.norm_bias, &p.w_value, &p.b_value, &p.w_gate, &p.b_gate, &p.w_out, &p.b_out})
        fn(*x);
}

// ---------------------------------------------------------------------------
// blocks

Var cross_attention(Tape& tape, Var latents, Var tokens, const CrossAttentionParams& p, const ForwardContext& ctx,
                    Var* weights_out) {
    const std::size_t d = tape.value(latents).cols();
    if (p.wq.value.rows() != d || p.wk.value.rows() != tape.value(tokens).cols()) {
        throw DimensionError("cross_attention: latents " + shape_to_string(tape.value(latents).shape()) + " / tokens " +
                             shape_to_string(tape.value(tokens).shape()) + " do not match the projection shapes");
    }
    Var lat = tape.layer_norm(latents, tape.param(p.norm_q_gain), tape.param(p.norm_q_bias));
    Var tok = tape.layer_norm(tokens, tape.param(p.norm_kv_gain), tape.param(p.norm_kv_bias));
    Var q = tape.matmul(lat, tape.param(p.wq));
    Var k = tape.matmul(tok, tape.param(p.wk));
    Var v = tape.matmul(tok, tape.param(p.wv));
    return residual_branch(tape, latents, attend(tape, q, k, v, tape.param(p.wo), d, weights_out), ctx);
}

Var self_attention(Tape& tape, Var latents, const SelfAttentionParams& p, const ForwardContext& ctx,
                   Var* weights_out) {
    const std::size_t d = tape.value(latents).cols();
    if (p.wq.value.rows() != d) {
        throw DimensionError("self_attention: latents " + shape_to_string(tape.value(latents).shape()) +
                             " do not match projection " + shape_to_string(p.wq.value.shape()));
    }
    Var lat = tape.layer_norm(latents, tape.param(p.norm_gain), tape.param(p.norm_bias));
    Var q = tape.matmul(lat, tape.param(p.wq));
    Var k = tape.matmul(lat, tape.param(p.wk));
    Var v = tape.matmul(lat, tape.param(p.wv));
    return residual_branch(tape, latents, attend(tape, q, k, v, tape.param(p.wo), d, weights_out), ctx);
}

Var gated_ffn(Tape& tape, Var x, const FfnParams& p, const ForwardContext& ctx) {
    Var h = tape.layer_norm(x, tape.param(p.norm_gain), tape.param(p.norm_bias));
    Var value = tape.add_row(tape.matmul(h, tape.param(p.w_value)), tape.param(p.b_value));
    Var gate = tape.add_row(tape.matmul(h, tape.param(p.w_gate)), tape.param(p.b_gate));
    Var mixed = tape.mul(value, tape.gelu(gate));
    Var out = tape.add_row(tape.matmul(mixed, tape.param(p.w_out)), tape.param(p.b_out));
    return residual_branch(tape, x, out, ctx);
}

// ---------------------------------------------------------------------------
// encoder

Encoder::Encoder(EncoderConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    const std::size_t d = cfg_.model_dim;
    const std::size_t hidden = cfg_.ffn_expansion * d;
    latents_ = make_param("latents", {cfg_.n_latents, d});
    for (std::size_t b = 0; b < cfg_.depth; ++b) {
        for (std::size_t c = 0; c < cfg_.cross_per_block; ++c) {
            const std::string prefix = "block" + std::to_string(b) + ".cross" + std::to_string(c);
            Stage stage{CrossLayer{make_cross_attention(d, cfg_.input_dim(), prefix + ".attn"),
                                   make_ffn(d, hidden, prefix + ".ffn")},
                        {}};
            for (std::size_t s = 0; s < cfg_.self_per_block; ++s) {
                const std::string sp = prefix + ".self" + std::to_string(s);
                stage.selfs.push_back(SelfLayer{make_self_attention(d, sp + ".attn"), make_ffn(d, hidden, sp + ".ffn")});
            }
            stages_.push_back(std::move(stage));
        }
    }
    proj_w_ = make_param("proj.weight", {d, cfg_.out_dim});
    proj_b_ = make_param("proj.bias", {cfg_.out_dim});
    for_each_parameter([seed](Parameter& p) { init_parameter(p, seed); });
}

Var Encoder::forward(Tape& tape, std::span<const double> signal, const ForwardContext& ctx) const {
    Var tokens = tape.constant(fourier_encode(signal, cfg_.fourier_bands, cfg_.max_freq_hz));
    Var x = tape.param(latents_);
    for (const auto& stage : stages_) {
        x = cross_attention(tape, x, tokens, stage.cross.attention, ctx);
        x = gated_ffn(tape, x, stage.cross.ffn, ctx);
        for (const auto& layer : stage.selfs) {
            x = self_attention(tape, x, layer.attention, ctx);
            x = gated_ffn(tape, x, layer.ffn, ctx);
        }
    }
    Var pooled = tape.mean_rows(x);
    return tape.add_row(tape.matmul(pooled, tape.param(proj_w_)), tape.param(proj_b_));
}

Embedding Encoder::encode(std::span<const double> signal) const {
    Tape tape;
    const Tensor& z = tape.value(forward(tape, signal, ForwardContext{}));
    return Embedding{std::vector<double>(z.data().begin(), z.data().end())};
}

void Encoder::for_each_parameter(const std::function<void(Parameter&)>& fn) {
    fn(latents_);
    for (auto& stage : stages_) {
        resp::for_each_parameter(stage.cross.attention, fn);
        resp::for_each_parameter(stage.cross.ffn, fn);
        for (auto& layer : stage.selfs) {
            resp::for_each_parameter(layer.attention, fn);
            resp::for_each_parameter(layer.ffn, fn);
        }
    }
    fn(proj_w_);
    fn(proj_b_);
}

void Encoder::for_each_parameter(const std::function<void(const Parameter&)>& fn) const {
    const_cast<Encoder*>(this)->for_each_parameter([&fn](Parameter& p) { fn(p); });
}

std::size_t Encoder::parameter_count() const {
    std::size_t n = 0;
    for_each_parameter([&n](const Parameter& p) { n += p.value.numel(); });
    return n;
}

}  // namespace resp
