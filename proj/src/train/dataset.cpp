#include "birdfcn/train/dataset.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "birdfcn/audio/wav.hpp"
#include "birdfcn/error.hpp"

namespace birdfcn::train {

std::vector<std::size_t> Dataset::labels() const {
    std::vector<std::size_t> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.label);
    return out;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::string_view purpose, std::uint64_t index) {
    const std::uint64_t tag = dsp::fnv1a64(std::string(purpose));
    return splitmix64(splitmix64(splitmix64(master) ^ tag) + index);
}

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::exception_ptr first_error;
    std::size_t first_index = n;
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(mu);
                if (i < first_index) {
                    first_index = i;
                    first_error = std::current_exception();
                }
            }
        }
    };
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < std::min(jobs, n); ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

std::vector<LabeledClip> load_clips(const audio::DatasetManifest& manifest, std::size_t jobs) {
    std::vector<LabeledClip> out(manifest.entries.size());
    parallel_for(out.size(), jobs, [&](std::size_t i) {
        const auto& entry = manifest.entries[i];
        out[i].clip = audio::decode_audio(manifest.resolve(entry));
        out[i].clip.species = entry.species;
        out[i].label = manifest.label_index(entry.species);
    });
    return out;
}

Dataset build_dataset(const audio::DatasetManifest& manifest, const dsp::FeatureConfig& config,
                      const dsp::FeatureCache* cache, std::size_t jobs) {
    if (manifest.entries.empty()) throw ParameterError("manifest has no entries");
    config.validate();
    const dsp::FeatureExtractor extract(config);
    Dataset data;
    data.label_set = manifest.label_set;
    data.features = config;
    data.samples.resize(manifest.entries.size());
    parallel_for(data.samples.size(), jobs, [&](std::size_t i) {
        const auto& entry = manifest.entries[i];
        const auto path = manifest.resolve(entry);
        auto compute = [&] { return extract(audio::decode_audio(path)); };
        auto& s = data.samples[i];
        s.features = cache ? cache->get_or_compute(path, config, compute) : compute();
        s.label = manifest.label_index(entry.species);
        s.source_id = entry.path;
    });
    return data;
}

Dataset build_dataset(const std::vector<LabeledClip>& clips, std::vector<std::string> label_set,
                      const dsp::FeatureConfig& config, std::size_t jobs) {
    if (clips.empty()) throw ParameterError("no clips to extract");
    config.validate();
    const dsp::FeatureExtractor extract(config);
    Dataset data;
    data.label_set = std::move(label_set);
    data.features = config;
    data.samples.resize(clips.size());
    parallel_for(clips.size(), jobs, [&](std::size_t i) {
        if (clips[i].label >= data.label_set.size()) {
            throw IndexError("clip label " + std::to_string(clips[i].label) + " outside the label set");
        }
        data.samples[i] = {extract(clips[i].clip), clips[i].label, clips[i].clip.source_id};
    });
    return data;
}

}  // namespace birdfcn::train
