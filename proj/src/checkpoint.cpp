#include "resp/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <optional>

#include "resp/error.hpp"

namespace resp {

namespace {

constexpr std::string_view kMagic = "RESPCKPT";

class Writer {
public:
    void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void bytes(std::string_view s) { out_.append(s); }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class Reader {
public:
    explicit Reader(std::string_view in) : in_(in) {}

    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(in_[pos_++]);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<std::uint8_t>(in_[pos_++])) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<std::uint8_t>(in_[pos_++])) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string_view bytes(std::size_t n) {
        need(n);
        auto s = in_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == in_.size(); }
    std::size_t pos() const { return pos_; }

private:
    void need(std::size_t n) const {
        if (in_.size() - pos_ < n) {
            throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_) + " (needed " +
                                  std::to_string(n) + " more)");
        }
    }
    std::string_view in_;
    std::size_t pos_ = 0;
};

std::size_t checked_size(std::uint64_t v, const char* what) {
    // guards against absurd sizes in a corrupt header before anything is allocated
    if (v > (std::uint64_t{1} << 32)) throw CheckpointError(std::string("implausible ") + what + " in checkpoint");
    return static_cast<std::size_t>(v);
}

}  // namespace

std::string encode_checkpoint(const Model& model) {
    const ModelSpec& s = model.spec();
    const EncoderConfig& e = s.encoder;
    Writer w;
    w.bytes(kMagic);
    w.u32(kCheckpointVersion);
    for (std::size_t v : {e.depth, e.cross_per_block, e.self_per_block, e.n_latents, e.model_dim, e.fourier_bands,
                          e.ffn_expansion, e.out_dim})
        w.u64(v);
    w.f64(e.max_freq_hz);
    w.f64(e.dropout);
    w.u32(static_cast<std::uint32_t>(s.fusion));
    w.u64(s.n_classes);
    w.u64(s.n_windows());
    w.u8(s.bandpass ? 1 : 0);
    w.f64(s.window_seconds);
    w.f64(s.sample_rate_hz);

    std::size_t count = 0;
    model.for_each_parameter([&](const Parameter&) { ++count; });
    w.u64(count);
    model.for_each_parameter([&](const Parameter& p) {
        w.u32(static_cast<std::uint32_t>(p.name.size()));
        w.bytes(p.name);
        w.u32(static_cast<std::uint32_t>(p.value.rank()));
        for (std::size_t d : p.value.shape()) w.u64(d);
        for (double v : p.value.data()) w.f64(v);
    });
    return w.take();
}

Model decode_checkpoint(std::string_view bytes) {
    Reader r(bytes);
    if (r.bytes(kMagic.size()) != kMagic) throw CheckpointError("not a checkpoint file (bad magic)");
    if (const auto version = r.u32(); version != kCheckpointVersion) {
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    }
    ModelSpec s;
    EncoderConfig& e = s.encoder;
    for (std::size_t* v : {&e.depth, &e.cross_per_block, &e.self_per_block, &e.n_latents, &e.model_dim,
                           &e.fourier_bands, &e.ffn_expansion, &e.out_dim})
        *v = checked_size(r.u64(), "encoder dimension");
    e.max_freq_hz = r.f64();
    e.dropout = r.f64();
    const auto variant = r.u32();
    if (variant > static_cast<std::uint32_t>(FusionVariant::LfCoef)) {
        throw CheckpointError("unknown fusion variant code " + std::to_string(variant));
    }
    s.fusion = static_cast<FusionVariant>(variant);
    s.n_classes = checked_size(r.u64(), "class count");
    const auto n_windows = r.u64();
    const auto bandpass = r.u8();
    if (bandpass > 1) throw CheckpointError("corrupt band-pass flag");
    s.bandpass = bandpass == 1;
    s.window_seconds = r.f64();
    s.sample_rate_hz = r.f64();

    // checkpoint headers are trusted only after they rebuild a valid model
    std::optional<Model> model;
    try {
        s.validate();
        if (s.n_windows() != n_windows) throw CheckpointError("window count does not match window length");
        model.emplace(s, 0);
    } catch (const CheckpointError&) {
        throw;
    } catch (const Error& err) {
        throw CheckpointError(std::string("corrupt checkpoint header: ") + err.what());
    }

    std::size_t expected = 0;
    model->for_each_parameter([&](const Parameter&) { ++expected; });
    if (r.u64() != expected) throw CheckpointError("checkpoint tensor count does not match its architecture");
    model->for_each_parameter([&](Parameter& p) {
        const auto name = r.bytes(checked_size(r.u32(), "name length"));
        if (name != p.name) {
            throw CheckpointError("checkpoint tensor '" + std::string(name) + "' where '" + p.name + "' was expected");
        }
        const auto rank = r.u32();
        if (rank != p.value.rank()) throw CheckpointError("rank mismatch for '" + p.name + "'");
        for (std::size_t d : p.value.shape()) {
            if (r.u64() != d) throw CheckpointError("shape mismatch for '" + p.name + "'");
        }
        for (auto& v : p.value.data()) {
            v = r.f64();
            if (!std::isfinite(v)) throw CheckpointError("non-finite value in '" + p.name + "'");
        }
    });
    if (!r.done()) throw CheckpointError("trailing bytes after the last tensor");
    return std::move(*model);
}

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
    const std::string bytes = encode_checkpoint(model);
    // write-then-rename so an interrupted run never leaves a half-written checkpoint
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write checkpoint " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error("failed writing checkpoint " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Model load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("checkpoint not found: " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

}  // namespace resp
