#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>

#include "birdfcn/dsp/features.hpp"

namespace birdfcn::dsp {

/// 64-bit FNV-1a, optionally continuing from a previous digest.
std::uint64_t fnv1a64(std::span<const std::byte> bytes,
                      std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(const std::string& text, std::uint64_t seed = 0xcbf29ce484222325ULL);

/// Binary layout: "BFEA", version, kind, bands, frames, window, hop, fft, sample rate
/// (all little-endian u32 after the two leading bytes), then bands*frames float32 row-major.
void write_feature_file(const std::filesystem::path& path, const FeatureMatrix& matrix);
FeatureMatrix read_feature_file(const std::filesystem::path& path);

/// Content-addressed store, safe to share between threads, keyed by the source file's bytes and the extraction config.
class FeatureCache {
public:
    explicit FeatureCache(std::filesystem::path dir);

    const std::filesystem::path& dir() const { return dir_; }

    std::string key(const std::filesystem::path& source, const FeatureConfig& config) const;
    std::filesystem::path entry_path(const std::string& key) const;

    std::optional<FeatureMatrix> lookup(const std::string& key) const;
    void store(const std::string& key, const FeatureMatrix& matrix) const;

    /// Cached matrix for `source`, computing and storing it on a miss or unreadable entry.
    FeatureMatrix get_or_compute(const std::filesystem::path& source, const FeatureConfig& config,
                                 const std::function<FeatureMatrix()>& compute) const;

    std::size_t hits() const { return hits_; }
    std::size_t misses() const { return misses_; }

private:
    std::filesystem::path dir_;
    mutable std::atomic<std::size_t> hits_{0};
    mutable std::atomic<std::size_t> misses_{0};
};

}  // namespace birdfcn::dsp
