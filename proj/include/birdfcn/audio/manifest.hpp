#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace birdfcn::audio {

struct ManifestEntry {
    std::string path;  ///< as written in the CSV; relative paths resolve against the manifest's directory
    std::string species;
    double duration_seconds = 0.0;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    std::vector<std::string> label_set;
    std::filesystem::path base_dir;

    std::filesystem::path resolve(const ManifestEntry& entry) const;
    /// Class index of `species`; ValidationError if it is not in the label set.
    std::size_t label_index(const std::string& species) const;
    std::vector<std::size_t> labels() const;
    std::size_t num_classes() const { return label_set.size(); }
};

struct ManifestOptions {
    /// Require every file to exist and carry a decodable WAV header (fills durations).
    bool check_files = true;
    /// Explicit label order; if absent, "<manifest>.labels" is used when present.
    std::optional<std::filesystem::path> label_file;
};

struct ManifestLoad {
    DatasetManifest manifest;
    std::size_t duplicates_dropped = 0;
};

/// Sidecar path holding the label order for a manifest.
std::filesystem::path label_sidecar_path(const std::filesystem::path& manifest_path);

/// CSV with header `path,species` (RFC 4180 quoting, UTF-8). Labels come from the sidecar or
/// explicit label file when available, otherwise the sorted unique species.
ManifestLoad load_manifest(const std::filesystem::path& path, const ManifestOptions& options = {});

/// Writes the CSV and its label sidecar.
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

std::vector<std::string> read_label_file(const std::filesystem::path& path);
void write_label_file(const std::filesystem::path& path, const std::vector<std::string>& labels);

/// Splits one CSV record; handles quoted fields with embedded commas and doubled quotes.
std::vector<std::string> split_csv_line(const std::string& line);
std::string csv_escape(const std::string& field);

}  // namespace birdfcn::audio
