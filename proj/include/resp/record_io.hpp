#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "resp/signal.hpp"

namespace resp {

// Recording file:
//   subject_id=<id>
//   label=<NoPain|LowPain|HighPain>
//   <sample>        one decimal value per line, shortest round-trip form
//
// Manifest file: one entry per line, `<relative path>\t<split>`, split one of
// train|val|test. Blank lines and lines starting with '#' are ignored. Paths are
// relative to the manifest's directory.

enum class Split { Train, Val, Test };

std::string_view split_name(Split split);
std::optional<Split> parse_split(std::string_view text);

struct ManifestEntry {
    std::string path;
    Split split = Split::Train;
};

struct LabeledRecord {
    RespirationRecord record;
    Split split = Split::Train;
};

/// Shortest decimal text that parses back to exactly `value`.
std::string format_real(double value);

std::string serialize_record(const RespirationRecord& rec);
RespirationRecord parse_record(std::string_view text, double sample_rate_hz = 100.0,
                               std::string_view origin = "<memory>");

void write_record(const std::filesystem::path& path, const RespirationRecord& rec);
RespirationRecord read_record(const std::filesystem::path& path, double sample_rate_hz = 100.0);

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

/// Reads the manifest and every record it lists. Throws DataError naming the offending path.
std::vector<LabeledRecord> load_dataset(const std::filesystem::path& manifest_path, double sample_rate_hz = 100.0);

}  // namespace resp
