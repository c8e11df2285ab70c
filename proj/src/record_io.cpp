#include "resp/record_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "resp/error.hpp"

namespace resp {

std::string_view split_name(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

std::optional<Split> parse_split(std::string_view text) {
    for (auto s : {Split::Train, Split::Val, Split::Test}) {
        if (text == split_name(s)) return s;
    }
    return std::nullopt;
}

std::string format_real(double value) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc{}) throw Error("cannot format value");
    return std::string(buf, end);
}

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << content;
    if (!out) throw DataError("write failed for " + path.string());
}

std::vector<std::string_view> lines_of(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        lines.push_back(text.substr(start, end - start));
        start = end + 1;
    }
    return lines;
}

}  // namespace

std::string serialize_record(const RespirationRecord& rec) {
    std::string out;
    out.reserve(rec.samples.size() * 24 + 64);
    out += "subject_id=" + rec.subject_id + "\n";
    out += "label=" + std::string(label_name(rec.label)) + "\n";
    for (double v : rec.samples) {
        out += format_real(v);
        out += '\n';
    }
    return out;
}

RespirationRecord parse_record(std::string_view text, double sample_rate_hz, std::string_view origin) {
    const auto lines = lines_of(text);
    const std::string where(origin);
    if (lines.size() < 2) throw DataError(where + ": missing header lines");

    RespirationRecord rec;
    rec.sample_rate_hz = sample_rate_hz;
    const auto subject = trim(lines[0]);
    if (!subject.starts_with("subject_id=")) throw DataError(where + ": first line must be subject_id=<id>");
    rec.subject_id = std::string(subject.substr(11));

    const auto label_line = trim(lines[1]);
    if (!label_line.starts_with("label=")) throw DataError(where + ": second line must be label=<label>");
    const auto label = parse_label(label_line.substr(6));
    if (!label) throw DataError(where + ": unknown label '" + std::string(label_line.substr(6)) + "'");
    rec.label = *label;

    for (std::size_t i = 2; i < lines.size(); ++i) {
        const auto field = trim(lines[i]);
        if (field.empty()) continue;
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
        if (ec != std::errc{} || ptr != field.data() + field.size()) {
            throw DataError(where + ": line " + std::to_string(i + 1) + " is not a number: '" + std::string(field) + "'");
        }
        rec.samples.push_back(v);
    }
    validate_record(rec);
    return rec;
}

void write_record(const std::filesystem::path& path, const RespirationRecord& rec) {
    write_file(path, serialize_record(rec));
}

RespirationRecord read_record(const std::filesystem::path& path, double sample_rate_hz) {
    return parse_record(read_file(path), sample_rate_hz, path.string());
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
    std::string out;
    for (const auto& e : entries) {
        out += e.path;
        out += '\t';
        out += split_name(e.split);
        out += '\n';
    }
    write_file(path, out);
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw DataError("manifest not found: " + path.string());
    const std::string text = read_file(path);
    std::vector<ManifestEntry> entries;
    std::size_t line_no = 0;
    for (auto line : lines_of(text)) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line.front() == '#') continue;
        const auto sep = line.find_last_of(" \t");
        if (sep == std::string_view::npos) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected '<path> <split>'");
        }
        const auto split = parse_split(trim(line.substr(sep + 1)));
        if (!split) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": unknown split '" +
                            std::string(trim(line.substr(sep + 1))) + "'");
        }
        entries.push_back({std::string(trim(line.substr(0, sep))), *split});
    }
    return entries;
}

std::vector<LabeledRecord> load_dataset(const std::filesystem::path& manifest_path, double sample_rate_hz) {
    const auto entries = read_manifest(manifest_path);
    const auto base = manifest_path.parent_path();
    std::vector<LabeledRecord> out;
    out.reserve(entries.size());
    for (const auto& e : entries) {
        out.push_back({read_record(base / e.path, sample_rate_hz), e.split});
    }
    return out;
}

}  // namespace resp
