#include "resp/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <vector>

#include "resp/error.hpp"
#include "resp/record_io.hpp"

namespace resp {

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, std::string_view value, const char* expected) {
    throw ConfigError("invalid value '" + std::string(value) + "' for " + key + " (expected " + expected + ")");
}

template <typename T>
T parse_number(const std::string& key, std::string_view v, const char* expected) {
    T out{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) bad_value(key, v, expected);
    return out;
}

double parse_double(const std::string& key, std::string_view v) {
    const double d = parse_number<double>(key, v, "a real number");
    if (!std::isfinite(d)) bad_value(key, v, "a finite real number");
    return d;
}

bool parse_bool(const std::string& key, std::string_view v) {
    if (v == "true") return true;
    if (v == "false") return false;
    bad_value(key, v, "true or false");
}

ProbRange parse_range(const std::string& key, std::string_view v) {
    const auto comma = v.find(',');
    if (comma == std::string_view::npos) bad_value(key, v, "'lo, hi'");
    return {parse_double(key, trim(v.substr(0, comma))), parse_double(key, trim(v.substr(comma + 1)))};
}

struct Field {
    const char* section;
    const char* key;
    std::function<void(RunConfig&, const std::string& name, std::string_view)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <typename Ref>
Field make_size(const char* section, const char* key, Ref ref) {
    return {section, key,
            [ref](RunConfig& c, const std::string& name, std::string_view v) {
                ref(c) = parse_number<std::size_t>(name, v, "a non-negative integer");
            },
            [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); }};
}

template <typename Ref>
Field make_real(const char* section, const char* key, Ref ref) {
    return {section, key,
            [ref](RunConfig& c, const std::string& name, std::string_view v) { ref(c) = parse_double(name, v); },
            [ref](const RunConfig& c) { return format_real(ref(const_cast<RunConfig&>(c))); }};
}

template <typename Ref>
Field make_range(const char* section, const char* key, Ref ref) {
    return {section, key,
            [ref](RunConfig& c, const std::string& name, std::string_view v) { ref(c) = parse_range(name, v); },
            [ref](const RunConfig& c) {
                const ProbRange& r = ref(const_cast<RunConfig&>(c));
                return format_real(r.lo) + ", " + format_real(r.hi);
            }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        f.push_back({"data", "manifest",
                     [](RunConfig& c, const std::string&, std::string_view v) { c.manifest = std::string(v); },
                     [](const RunConfig& c) { return c.manifest; }});
        f.push_back({"output", "dir",
                     [](RunConfig& c, const std::string&, std::string_view v) { c.out_dir = std::string(v); },
                     [](const RunConfig& c) { return c.out_dir; }});

        f.push_back(make_size("encoder", "depth", [](RunConfig& c) -> auto& { return c.model.encoder.depth; }));
        f.push_back(make_size("encoder", "cross_per_block",
                              [](RunConfig& c) -> auto& { return c.model.encoder.cross_per_block; }));
        f.push_back(make_size("encoder", "self_per_block",
                              [](RunConfig& c) -> auto& { return c.model.encoder.self_per_block; }));
        f.push_back(make_size("encoder", "n_latents", [](RunConfig& c) -> auto& { return c.model.encoder.n_latents; }));
        f.push_back(make_size("encoder", "model_dim", [](RunConfig& c) -> auto& { return c.model.encoder.model_dim; }));
        f.push_back(make_size("encoder", "fourier_bands",
                              [](RunConfig& c) -> auto& { return c.model.encoder.fourier_bands; }));
        f.push_back(make_real("encoder", "max_freq_hz",
                              [](RunConfig& c) -> auto& { return c.model.encoder.max_freq_hz; }));
        f.push_back(make_size("encoder", "ffn_expansion",
                              [](RunConfig& c) -> auto& { return c.model.encoder.ffn_expansion; }));
        f.push_back(make_real("encoder", "dropout", [](RunConfig& c) -> auto& { return c.model.encoder.dropout; }));
        f.push_back(make_size("encoder", "out_dim", [](RunConfig& c) -> auto& { return c.model.encoder.out_dim; }));

        f.push_back({"model", "fusion",
                     [](RunConfig& c, const std::string&, std::string_view v) { c.model.fusion = parse_variant(v); },
                     [](const RunConfig& c) { return std::string(variant_name(c.model.fusion)); }});
        f.push_back(make_real("model", "window_seconds", [](RunConfig& c) -> auto& { return c.model.window_seconds; }));
        f.push_back(make_real("model", "sample_rate_hz", [](RunConfig& c) -> auto& { return c.model.sample_rate_hz; }));
        f.push_back({"model", "bandpass",
                     [](RunConfig& c, const std::string& name, std::string_view v) {
                         c.model.bandpass = parse_bool(name, v);
                     },
                     [](const RunConfig& c) { return std::string(c.model.bandpass ? "true" : "false"); }});

        f.push_back(make_size("train", "epochs", [](RunConfig& c) -> auto& { return c.train.epochs; }));
        f.push_back(make_size("train", "batch_size", [](RunConfig& c) -> auto& { return c.train.batch_size; }));
        f.push_back(make_real("train", "lr", [](RunConfig& c) -> auto& { return c.train.lr; }));
        f.push_back(make_size("train", "warmup_epochs", [](RunConfig& c) -> auto& { return c.train.warmup_epochs; }));
        f.push_back(
            make_size("train", "cooldown_epochs", [](RunConfig& c) -> auto& { return c.train.cooldown_epochs; }));
        f.push_back(
            make_real("train", "label_smoothing", [](RunConfig& c) -> auto& { return c.train.label_smoothing; }));
        f.push_back({"train", "seed",
                     [](RunConfig& c, const std::string& name, std::string_view v) {
                         c.train.seed = parse_number<std::uint64_t>(name, v, "a non-negative integer");
                     },
                     [](const RunConfig& c) { return std::to_string(c.train.seed); }});
        f.push_back(
            make_size("train", "checkpoint_every", [](RunConfig& c) -> auto& { return c.train.checkpoint_every; }));

        f.push_back(make_range("augment", "polarity", [](RunConfig& c) -> auto& { return c.train.augment.polarity; }));
        f.push_back(make_range("augment", "noise", [](RunConfig& c) -> auto& { return c.train.augment.noise; }));
        f.push_back(make_range("augment", "mask", [](RunConfig& c) -> auto& { return c.train.augment.mask; }));
        f.push_back(make_range("augment", "mask_fraction",
                               [](RunConfig& c) -> auto& { return c.train.augment.mask_fraction; }));
        f.push_back(make_range("augment", "noise_k", [](RunConfig& c) -> auto& { return c.train.augment.noise_k; }));
        return f;
    }();
    return table;
}

}  // namespace

void RunConfig::validate() const {
    model.validate();
    train.validate();
}

RunConfig parse_run_config(std::string_view text) {
    RunConfig cfg;
    std::set<std::string> sections, seen;
    for (const auto& f : fields()) sections.insert(f.section);
    std::string section;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
            section = std::string(trim(line.substr(1, line.size() - 2)));
            if (!sections.contains(section)) throw ConfigError("unknown config section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value', got '" +
                              std::string(line) + "'");
        }
        const std::string key(trim(line.substr(0, eq)));
        const auto value = trim(line.substr(eq + 1));
        const std::string name = section.empty() ? key : section + "." + key;
        if (section.empty()) throw ConfigError("config key '" + key + "' appears before any [section]");
        const Field* match = nullptr;
        for (const auto& f : fields())
            if (section == f.section && key == f.key) match = &f;
        if (!match) throw ConfigError("unknown config key '" + name + "'");
        if (!seen.insert(name).second) throw ConfigError("duplicate config key '" + name + "'");
        match->set(cfg, name, value);
    }
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config file not found: " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str());
}

std::string serialize_run_config(const RunConfig& cfg) {
    std::ostringstream out;
    std::string section;
    for (const auto& f : fields()) {
        if (section != f.section) {
            if (!section.empty()) out << '\n';
            section = f.section;
            out << '[' << section << "]\n";
        }
        out << f.key << " = " << f.get(cfg) << '\n';
    }
    return out.str();
}

}  // namespace resp
