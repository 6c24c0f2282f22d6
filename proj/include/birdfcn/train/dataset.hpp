#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "birdfcn/audio/clip.hpp"
#include "birdfcn/audio/manifest.hpp"
#include "birdfcn/dsp/feature_cache.hpp"
#include "birdfcn/dsp/features.hpp"

namespace birdfcn::train {

/// One clip's features and class index.
struct Sample {
    dsp::FeatureMatrix features;
    std::size_t label = 0;
    std::string source_id;
};

struct Dataset {
    std::vector<Sample> samples;
    std::vector<std::string> label_set;
    dsp::FeatureConfig features;

    std::vector<std::size_t> labels() const;
    std::size_t size() const { return samples.size(); }
};

/// Decoded audio with its class index, for studies that must re-extract features.
struct LabeledClip {
    audio::AudioClip clip;
    std::size_t label = 0;
};

/// Deterministic child seed for (master, purpose, index). Independent of thread scheduling.
std::uint64_t derive_seed(std::uint64_t master, std::string_view purpose, std::uint64_t index = 0);

/// Calls fn(i) for i in [0, n) on up to `jobs` threads. The first exception (lowest index) is rethrown.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

/// Decodes every manifest entry and returns it at the canonical rate.
std::vector<LabeledClip> load_clips(const audio::DatasetManifest& manifest, std::size_t jobs = 1);

/// Features for every entry, read through `cache` when given.
Dataset build_dataset(const audio::DatasetManifest& manifest, const dsp::FeatureConfig& config,
                      const dsp::FeatureCache* cache = nullptr, std::size_t jobs = 1);

/// Features for in-memory clips (synthetic sets, tests).
Dataset build_dataset(const std::vector<LabeledClip>& clips, std::vector<std::string> label_set,
                      const dsp::FeatureConfig& config, std::size_t jobs = 1);

}  // namespace birdfcn::train
