#include "resp/fusion.hpp"

#include <algorithm>
#include <array>
#include <string>

#include "resp/error.hpp"

namespace resp {

namespace {

constexpr std::array kVariants{FusionVariant::Gate,       FusionVariant::Add,
                               FusionVariant::Concat,     FusionVariant::Full,
                               FusionVariant::ConcatAddConcat, FusionVariant::ConcatAll,
                               FusionVariant::LfAvg,      FusionVariant::LfCoef};

std::size_t argmax(std::span<const double> v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::vector<double> row_values(const Tape& tape, Var v) {
    const auto d = tape.value(v).data();
    return {d.begin(), d.end()};
}

}  // namespace

std::string_view variant_name(FusionVariant v) {
    switch (v) {
        case FusionVariant::Gate: return "gate";
        case FusionVariant::Add: return "add";
        case FusionVariant::Concat: return "concat";
        case FusionVariant::Full: return "full";
        case FusionVariant::ConcatAddConcat: return "concat_add_concat";
        case FusionVariant::ConcatAll: return "concat_all";
        case FusionVariant::LfAvg: return "lf_avg";
        case FusionVariant::LfCoef: return "lf_coef";
    }
    return "?";
}

FusionVariant parse_variant(std::string_view name) {
    if (name == "lf_avg_gate") return FusionVariant::Gate;
    for (auto v : kVariants)
        if (variant_name(v) == name) return v;
    std::string known;
    for (auto v : kVariants) known += (known.empty() ? "" : ", ") + std::string(variant_name(v));
    throw ConfigError("unknown fusion variant '" + std::string(name) + "' (expected one of: " + known + ")");
}

std::span<const FusionVariant> all_variants() { return kVariants; }

FusedEmbeddings fuse_windows(std::span<const Embedding> windows) {
    if (windows.empty()) throw DimensionError("fuse_windows: no window embeddings");
    const std::size_t width = windows.front().values.size();
    FusedEmbeddings out{std::vector<double>(width, 0.0), {}};
    out.concat.reserve(width * windows.size());
    for (const auto& e : windows) {
        if (e.values.size() != width) throw DimensionError("fuse_windows: embeddings of unequal width");
        for (std::size_t i = 0; i < width; ++i) out.add[i] += e.values[i];
        out.concat.insert(out.concat.end(), e.values.begin(), e.values.end());
    }
    return out;
}

Var fuse_add(Tape& tape, std::span<const Var> windows) {
    if (windows.empty()) throw DimensionError("fuse_add: no window embeddings");
    Var acc = windows.front();
    for (std::size_t i = 1; i < windows.size(); ++i) acc = tape.add(acc, windows[i]);
    return acc;
}

Var fuse_concat(Tape& tape, std::span<const Var> windows) {
    if (windows.empty()) throw DimensionError("fuse_concat: no window embeddings");
    return tape.concat_cols(windows);
}

Head make_head(std::size_t in_dim, std::size_t n_classes, const std::string& prefix) {
    return Head{Parameter{prefix + ".weight", Tensor({in_dim, n_classes})},
                Parameter{prefix + ".bias", Tensor({n_classes})}};
}

Var head_forward(Tape& tape, Var z, const Head& head) {
    const Tensor& zv = tape.value(z);
    if (zv.numel() != head.in_dim()) {
        throw DimensionError("classifier head '" + head.weight.name + "' expects width " +
                             std::to_string(head.in_dim()) + ", got " + std::to_string(zv.numel()));
    }
    return tape.add_row(tape.matmul(z, tape.param(head.weight)), tape.param(head.bias));
}

LogitVars heads_forward(Tape& tape, Var z_add, Var z_concat, Var z_full, const GateHeads& heads) {
    LogitVars out;
    out.add = head_forward(tape, z_add, heads.add);
    out.concat = head_forward(tape, z_concat, heads.concat);
    out.full = head_forward(tape, z_full, heads.full);
    out.avg = tape.scale(tape.add(tape.add(out.add, out.concat), out.full), 1.0 / 3.0);
    return out;
}

LogitBundle heads_forward(std::span<const double> z_add, std::span<const double> z_concat,
                          std::span<const double> z_full, const GateHeads& heads) {
    Tape tape;
    const auto v = heads_forward(tape, tape.constant(Tensor::row(z_add)), tape.constant(Tensor::row(z_concat)),
                                 tape.constant(Tensor::row(z_full)), heads);
    return {row_values(tape, v.add), row_values(tape, v.concat), row_values(tape, v.full), row_values(tape, v.avg)};
}

GateOutput gumbel_gate(Tape& tape, const LogitVars& bundle, const GateParams& gate, bool training, Rng* rng) {
    if (!(gate.tau > 0.0)) throw ConfigError("gate temperature must be positive");
    const std::array<Var, 4> candidates{bundle.add, bundle.concat, bundle.full, bundle.avg};
    if (!training) {
        const std::size_t k = argmax(gate.g.value.data());
        return {candidates[k], k, Var{}};
    }
    if (!rng) throw Error("training-mode gate needs an RNG stream");
    Tensor noise({4});
    for (auto& v : noise.data()) v = rng->gumbel();
    Var perturbed = tape.scale(tape.add(tape.param(gate.g), tape.constant(std::move(noise))), 1.0 / gate.tau);
    Var soft = tape.softmax_rows(perturbed);
    const std::size_t k = argmax(tape.value(soft).data());
    Var w = tape.straight_through(soft, k);
    return {tape.matmul(w, tape.stack_rows(candidates)), k, w};
}

// ---------------------------------------------------------------------------

Fusion::Fusion(FusionVariant variant, std::size_t embed_dim, std::size_t n_windows, std::size_t n_classes,
               std::uint64_t seed)
    : variant_(variant), embed_dim_(embed_dim), n_windows_(n_windows), n_classes_(n_classes) {
    if (embed_dim == 0 || n_windows == 0 || n_classes == 0)
        throw ConfigError("fusion needs positive embedding width, window count and class count");
    const std::size_t e = embed_dim, s = n_windows;
    switch (variant_) {
        case FusionVariant::Gate:
            heads_ = {make_head(e, n_classes, "head_add"), make_head(s * e, n_classes, "head_concat"),
                      make_head(e, n_classes, "head_full")};
            break;
        case FusionVariant::Add: heads_ = {make_head(e, n_classes, "head_add")}; break;
        case FusionVariant::Concat: heads_ = {make_head(s * e, n_classes, "head_concat")}; break;
        case FusionVariant::Full: heads_ = {make_head(e, n_classes, "head_full")}; break;
        case FusionVariant::ConcatAddConcat: heads_ = {make_head(e + s * e, n_classes, "head_fused")}; break;
        case FusionVariant::ConcatAll: heads_ = {make_head(2 * e + s * e, n_classes, "head_all")}; break;
        case FusionVariant::LfAvg:
        case FusionVariant::LfCoef:
            heads_ = {make_head(e + s * e, n_classes, "head_fused"), make_head(e, n_classes, "head_full")};
            break;
    }
    for (auto& h : heads_) {
        init_parameter(h.weight, seed);
        init_parameter(h.bias, seed);
    }
}

Fusion::Output Fusion::forward(Tape& tape, std::span<const Var> windows, Var full, bool training, Rng* rng) const {
    if (windows.size() != n_windows_) {
        throw DimensionError("fusion was built for " + std::to_string(n_windows_) + " windows, got " +
                             std::to_string(windows.size()));
    }
    auto fused = [&] {
        const std::array<Var, 2> parts{fuse_add(tape, windows), fuse_concat(tape, windows)};
        return tape.concat_cols(parts);
    };
    switch (variant_) {
        case FusionVariant::Gate: {
            const GateHeads heads{heads_[0], heads_[1], heads_[2]};
            const auto bundle = heads_forward(tape, fuse_add(tape, windows), fuse_concat(tape, windows), full, heads);
            const auto g = gumbel_gate(tape, bundle, gate_, training, rng);
            return {g.logits, g.chosen};
        }
        case FusionVariant::Add: return {head_forward(tape, fuse_add(tape, windows), heads_[0]), {}};
        case FusionVariant::Concat: return {head_forward(tape, fuse_concat(tape, windows), heads_[0]), {}};
        case FusionVariant::Full: return {head_forward(tape, full, heads_[0]), {}};
        case FusionVariant::ConcatAddConcat: return {head_forward(tape, fused(), heads_[0]), {}};
        case FusionVariant::ConcatAll: {
            const std::array<Var, 3> parts{fuse_add(tape, windows), fuse_concat(tape, windows), full};
            return {head_forward(tape, tape.concat_cols(parts), heads_[0]), {}};
        }
        case FusionVariant::LfAvg: {
            Var a = head_forward(tape, fused(), heads_[0]);
            Var b = head_forward(tape, full, heads_[1]);
            return {tape.scale(tape.add(a, b), 0.5), {}};
        }
        case FusionVariant::LfCoef: {
            Var a = head_forward(tape, fused(), heads_[0]);
            Var b = head_forward(tape, full, heads_[1]);
            Var alpha = tape.sigmoid(tape.param(alpha_));
            // α·a + (1 − α)·b
            return {tape.add(b, tape.mul_scalar(tape.sub(a, b), alpha)), {}};
        }
    }
    throw ConfigError("unhandled fusion variant");
}

void Fusion::for_each_parameter(const std::function<void(Parameter&)>& fn) {
    for (auto& h : heads_) {
        fn(h.weight);
        fn(h.bias);
    }
    if (variant_ == FusionVariant::Gate) fn(gate_.g);
    if (variant_ == FusionVariant::LfCoef) fn(alpha_);
}

void Fusion::for_each_parameter(const std::function<void(const Parameter&)>& fn) const {
    const_cast<Fusion*>(this)->for_each_parameter([&fn](Parameter& p) { fn(p); });
}

std::size_t Fusion::parameter_count() const {
    std::size_t n = 0;
    for_each_parameter([&n](const Parameter& p) { n += p.value.numel(); });
    return n;
}

}  // namespace resp
