#include "resp/cost.hpp"

#include "resp/error.hpp"

namespace resp {

namespace {

using u64 = std::uint64_t;

struct Dims {
    u64 n, d, d_in, h, out;
    u64 crosses, selfs;
};

Dims dims_of(const EncoderConfig& cfg) {
    cfg.validate();
    return {cfg.n_latents,
            cfg.model_dim,
            cfg.input_dim(),
            cfg.ffn_expansion * cfg.model_dim,
            cfg.out_dim,
            cfg.depth * cfg.cross_per_block,
            cfg.depth * cfg.cross_per_block * cfg.self_per_block};
}

u64 sum(const std::map<std::string, u64>& m) {
    u64 s = 0;
    for (const auto& [k, v] : m) s += v;
    return s;
}

struct HeadLayout {
    std::vector<u64> widths;
    u64 gate = 0;
};

HeadLayout head_layout(u64 e, const HeadSpec& h) {
    const u64 s = h.n_windows;
    switch (h.variant) {
        case FusionVariant::Gate: return {{e, s * e, e}, 4};
        case FusionVariant::Add: return {{e}, 0};
        case FusionVariant::Concat: return {{s * e}, 0};
        case FusionVariant::Full: return {{e}, 0};
        case FusionVariant::ConcatAddConcat: return {{e + s * e}, 0};
        case FusionVariant::ConcatAll: return {{2 * e + s * e}, 0};
        case FusionVariant::LfAvg: return {{e + s * e, e}, 0};
        case FusionVariant::LfCoef: return {{e + s * e, e}, 1};
    }
    return {};
}

}  // namespace

CostReport count_params(const EncoderConfig& cfg) {
    const Dims k = dims_of(cfg);
    CostReport r;
    r.config = cfg;
    auto& p = r.params_by_component;
    p["latents"] = k.n * k.d;
    // layer norms (gain + bias) are attributed to the module they precede
    p["cross_attention"] = k.crosses * (2 * k.d + 2 * k.d_in + 2 * k.d * k.d + 2 * k.d_in * k.d);
    p["self_attention"] = k.selfs * (2 * k.d + 4 * k.d * k.d);
    p["ffn"] = (k.crosses + k.selfs) * (2 * k.d + 2 * (k.d * k.h + k.h) + k.h * k.d + k.d);
    p["projection"] = k.d * k.out + k.out;
    r.params_total = sum(p);
    return r;
}

CostReport count_params(const EncoderConfig& cfg, const HeadSpec& heads) {
    if (heads.n_windows == 0 || heads.n_classes == 0) throw ConfigError("head spec needs windows and classes");
    CostReport r = count_params(cfg);
    const auto layout = head_layout(cfg.out_dim, heads);
    u64 total = 0;
    for (u64 w : layout.widths) total += w * heads.n_classes + heads.n_classes;
    r.params_by_component["heads"] = total;
    r.params_by_component["gate"] = layout.gate;
    r.params_total = sum(r.params_by_component);
    r.n_windows = heads.n_windows;
    return r;
}

std::string param_component(const std::string& name) {
    if (name == "latents") return "latents";
    if (name.starts_with("proj.")) return "projection";
    if (name.starts_with("head_")) return "heads";
    if (name.starts_with("gate.") || name.starts_with("lf_coef.")) return "gate";
    if (name.find(".ffn.") != std::string::npos) return "ffn";
    if (name.find(".self") != std::string::npos) return "self_attention";
    if (name.find(".cross") != std::string::npos) return "cross_attention";
    throw Error("unclassified parameter '" + name + "'");
}

u64 matmul_flops(u64 m, u64 k, u64 n) { return 2 * m * k * n; }

std::map<std::string, u64> encoder_flops_by_component(const EncoderConfig& cfg, std::size_t length) {
    if (length == 0) throw ConfigError("FLOP count needs at least one sample");
    const Dims k = dims_of(cfg);
    const u64 t = length;
    const u64 n = k.n, d = k.d, h = k.h;

    const u64 cross = 8 * n * d + 8 * t * k.d_in            // layer norms
                      + matmul_flops(n, d, d)                 // Q
                      + 2 * matmul_flops(t, k.d_in, d)        // K, V
                      + matmul_flops(n, d, t) + n * t         // scores, scale
                      + 5 * n * t                             // softmax
                      + matmul_flops(n, t, d)                 // weights · V
                      + matmul_flops(n, d, d) + n * d;        // Wo, residual
    const u64 self = 8 * n * d + 3 * matmul_flops(n, d, d) + matmul_flops(n, d, n) + n * n + 5 * n * n +
                     matmul_flops(n, n, d) + matmul_flops(n, d, d) + n * d;
    const u64 ffn = 8 * n * d + 2 * (matmul_flops(n, d, h) + n * h)  // value and gate projections
                    + 8 * n * h + n * h                               // GELU, product
                    + matmul_flops(n, h, d) + n * d + n * d;          // out projection, bias, residual

    std::map<std::string, u64> f;
    f["latents"] = 0;
    f["cross_attention"] = k.crosses * cross;
    f["self_attention"] = k.selfs * self;
    f["ffn"] = (k.crosses + k.selfs) * ffn;
    f["projection"] = n * d + matmul_flops(1, d, k.out) + k.out;
    return f;
}

u64 encoder_flops(const EncoderConfig& cfg, std::size_t length) { return sum(encoder_flops_by_component(cfg, length)); }

CostReport count_flops(const EncoderConfig& cfg, std::size_t window_length, std::size_t n_windows,
                       std::size_t full_length, const HeadSpec& heads) {
    if (n_windows == 0) throw ConfigError("FLOP count needs at least one window");
    if (heads.n_windows != n_windows) throw ConfigError("head spec window count differs from n_windows");
    CostReport r = count_params(cfg, heads);
    r.input_length = window_length;
    r.n_windows = n_windows;
    r.full_length = full_length;

    const u64 e = cfg.out_dim, c = heads.n_classes, s = n_windows;
    const bool uses_windows = heads.variant != FusionVariant::Full;
    const bool uses_full = heads.variant != FusionVariant::Add && heads.variant != FusionVariant::Concat &&
                           heads.variant != FusionVariant::ConcatAddConcat;
    auto& f = r.flops_by_component;
    f["windows"] = uses_windows ? s * encoder_flops(cfg, window_length) : 0;
    f["full_signal"] = uses_full && full_length > 0 ? encoder_flops(cfg, full_length) : 0;

    const auto layout = head_layout(e, heads);
    u64 head = 0;
    for (u64 w : layout.widths) head += matmul_flops(1, w, c) + c;
    const u64 window_sum = (s - 1) * e;
    switch (heads.variant) {
        case FusionVariant::Gate: head += window_sum + 3 * c; break;  // z_add; l_avg: two adds and a scale
        case FusionVariant::Add:
        case FusionVariant::ConcatAddConcat:
        case FusionVariant::ConcatAll: head += window_sum; break;
        case FusionVariant::LfAvg: head += window_sum + 2 * c; break;
        case FusionVariant::LfCoef: head += window_sum + 3 * c + 4; break;  // blend plus the sigmoid
        case FusionVariant::Concat:
        case FusionVariant::Full: break;
    }
    f["heads"] = head;
    f["gate"] = 0;  // inference selects by argmax(g)
    r.flops_forward = sum(f);
    return r;
}

CostReport pipeline_cost(const ModelSpec& spec) {
    spec.validate();
    const std::size_t len = window_length(spec.window_seconds, spec.sample_rate_hz);
    return count_flops(spec.encoder, len, spec.n_windows(), kFixedLength,
                       HeadSpec{spec.fusion, spec.n_windows(), spec.n_classes});
}

}  // namespace resp
