#include "birdfcn/audio/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "birdfcn/audio/wav.hpp"
#include "birdfcn/error.hpp"

namespace birdfcn::audio {

std::filesystem::path DatasetManifest::resolve(const ManifestEntry& entry) const {
    std::filesystem::path p(entry.path);
    return p.is_absolute() ? p : base_dir / p;
}

std::size_t DatasetManifest::label_index(const std::string& species) const {
    const auto it = std::find(label_set.begin(), label_set.end(), species);
    if (it == label_set.end()) throw ValidationError("species '" + species + "' is not in the label set");
    return static_cast<std::size_t>(it - label_set.begin());
}

std::vector<std::size_t> DatasetManifest::labels() const {
    std::vector<std::size_t> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(label_index(e.species));
    return out;
}

std::filesystem::path label_sidecar_path(const std::filesystem::path& manifest_path) {
    return std::filesystem::path(manifest_path.string() + ".labels");
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (quoted) throw FormatError("unterminated quote in CSV line: " + line);
    fields.push_back(std::move(cur));
    return fields;
}

std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

namespace {

std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

std::string strip_bom(std::string s) {
    if (s.rfind("\xEF\xBB\xBF", 0) == 0) s.erase(0, 3);
    return s;
}

}  // namespace

std::vector<std::string> read_label_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open label file " + path.string());
    std::vector<std::string> labels;
    std::set<std::string> seen;
    std::string line;
    bool first = true;
    while (std::getline(is, line)) {
        line = strip_cr(line);
        if (first) line = strip_bom(line);
        first = false;
        if (line.empty()) continue;
        if (!seen.insert(line).second) throw ValidationError("label '" + line + "' listed twice in " + path.string());
        labels.push_back(line);
    }
    return labels;
}

void write_label_file(const std::filesystem::path& path, const std::vector<std::string>& labels) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot write " + path.string());
    for (const auto& l : labels) os << l << '\n';
}

ManifestLoad load_manifest(const std::filesystem::path& path, const ManifestOptions& options) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open manifest " + path.string());
    ManifestLoad result;
    auto& m = result.manifest;
    m.base_dir = path.parent_path();

    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    std::unordered_set<std::string> seen_paths;
    while (std::getline(is, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line_no == 1) line = strip_bom(line);
        if (line.empty()) continue;
        if (!have_header) {
            const auto header = split_csv_line(line);
            if (header.size() != 2 || header[0] != "path" || header[1] != "species") {
                throw FormatError(path.string() + ": expected header 'path,species', got '" + line + "'");
            }
            have_header = true;
            continue;
        }
        const auto fields = split_csv_line(line);
        if (fields.size() != 2 || fields[0].empty() || fields[1].empty()) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected 'path,species'");
        }
        if (!seen_paths.insert(fields[0]).second) {
            ++result.duplicates_dropped;
            continue;
        }
        m.entries.push_back({fields[0], fields[1], 0.0});
    }

    std::optional<std::filesystem::path> label_path = options.label_file;
    if (!label_path && std::filesystem::exists(label_sidecar_path(path))) label_path = label_sidecar_path(path);
    if (label_path) {
        m.label_set = read_label_file(*label_path);
        for (const auto& e : m.entries) {
            if (std::find(m.label_set.begin(), m.label_set.end(), e.species) == m.label_set.end()) {
                throw ValidationError("species '" + e.species + "' in " + path.string() +
                                      " is not listed in " + label_path->string());
            }
        }
    } else {
        std::set<std::string> unique;
        for (const auto& e : m.entries) unique.insert(e.species);
        m.label_set.assign(unique.begin(), unique.end());
    }

    if (options.check_files) {
        for (auto& e : m.entries) {
            const auto file = m.resolve(e);
            if (!std::filesystem::exists(file)) throw ValidationError("manifest entry missing on disk: " + file.string());
            e.duration_seconds = read_wav_info(file).duration_seconds();
        }
    }
    return result;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
    {
        std::ofstream os(path, std::ios::trunc);
        if (!os) throw IoError("cannot write manifest " + path.string());
        os << "path,species\n";
        for (const auto& e : manifest.entries) os << csv_escape(e.path) << ',' << csv_escape(e.species) << '\n';
        if (!os) throw IoError("failed writing manifest " + path.string());
    }
    write_label_file(label_sidecar_path(path), manifest.label_set);
}

}  // namespace birdfcn::audio
