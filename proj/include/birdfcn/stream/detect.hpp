#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "birdfcn/audio/clip.hpp"
#include "birdfcn/dsp/features.hpp"
#include "birdfcn/model/fcn.hpp"
#include "birdfcn/train/dataset.hpp"

namespace birdfcn::stream {

struct ChunkParams {
    double chunk_seconds = 3.0;
    double hop_seconds = 1.0;
    /// Events below this softmax probability are dropped. Values above 1 drop everything.
    double min_confidence = 0.0;
    /// Chunks whose RMS falls below this level are flagged, not skipped.
    double low_energy_dbfs = -60.0;

    /// ParameterError unless 0 < hop <= chunk and min_confidence >= 0.
    void validate() const;
};

/// Sample bounds of one chunk, [begin, end).
struct ChunkSpan {
    std::size_t begin = 0;
    std::size_t end = 0;
};

/// Chunk layout for a clip of `n` samples: windows of `chunk` samples every `hop`. A clip no longer
/// than one chunk is a single whole-clip chunk. If the last full window stops short of `n`, the
/// partial window at the next hop is kept when it holds at least `min_samples`, otherwise the last
/// full window is stretched to `n`.
/// DegenerateInputError if n < min_samples.
std::vector<ChunkSpan> plan_chunks(std::size_t n, std::size_t chunk, std::size_t hop, std::size_t min_samples);

struct Chunk {
    double t_start = 0.0;
    double t_end = 0.0;
    dsp::FeatureMatrix features;
    bool low_energy = false;
};

/// Chunks of `clip` with features extracted per chunk from that chunk's samples alone.
std::vector<Chunk> chunk_stream(const audio::AudioClip& clip, const ChunkParams& cp,
                                const dsp::FeatureConfig& features, std::size_t min_frames);

struct DetectionEvent {
    double t_start = 0.0;
    double t_end = 0.0;
    std::string species;
    std::size_t class_index = 0;
    double confidence = 0.0;
    bool low_energy = false;

    nlohmann::json to_json() const;
};

/// RMS level in dBFS; -inf for silence or no samples.
double rms_dbfs(std::span<const float> samples);

/// Causal chunk classifier: push samples as they arrive, collect events as soon as each chunk's
/// samples are complete. The events equal detect() over the concatenated input.
class StreamDetector {
public:
    StreamDetector(const model::FcnModel& model, ChunkParams cp);

    /// Events for chunks completed by these samples.
    std::vector<DetectionEvent> push(std::span<const float> samples);
    /// Events for the remaining tail. DegenerateInputError if the whole stream was too short.
    std::vector<DetectionEvent> finish();

    std::size_t samples_seen() const { return offset_ + buffer_.size(); }

private:
    /// Classifies [begin, end) (absolute sample indices) and appends its event if confident enough.
    void emit(std::size_t begin, std::size_t end, std::vector<DetectionEvent>& out);

    const model::FcnModel& model_;
    ChunkParams cp_;
    dsp::FeatureExtractor extract_;
    std::size_t chunk_ = 0, hop_ = 0, min_samples_ = 0;
    /// Samples from absolute index offset_ onward.
    std::vector<float> buffer_;
    std::size_t offset_ = 0;
    /// Start of the next window to classify.
    std::size_t next_start_ = 0;
    std::size_t last_end_ = 0;
    bool any_chunk_ = false;
    bool finished_ = false;
};

/// Events for the whole clip. ConfigError if the model carries no feature configuration.
std::vector<DetectionEvent> detect(const model::FcnModel& model, const audio::AudioClip& clip, const ChunkParams& cp);

/// Joins consecutive same-species events that overlap or touch; the span covers all members and the
/// confidence is the maximum. OrderingError if start times decrease.
std::vector<DetectionEvent> merge_events(const std::vector<DetectionEvent>& events);

/// One line per event: "  0.00 -   4.00 s  species  (0.93)".
std::string timeline_text(const std::vector<DetectionEvent>& events);

struct MultispeciesResult {
    double chunk_accuracy = 0.0;
    double full_clip_accuracy = 0.0;
    std::size_t total_chunks = 0;
    /// cooccurrence[primary][detected]: emitted chunk events per clip label.
    std::vector<std::vector<std::size_t>> cooccurrence;

    nlohmann::json to_json(const std::vector<std::string>& label_set) const;
};

MultispeciesResult multispecies_eval(const model::FcnModel& model, const std::vector<const train::LabeledClip*>& clips,
                                     const ChunkParams& cp);

std::string cooccurrence_csv(const MultispeciesResult& r, const std::vector<std::string>& label_set);

}  // namespace birdfcn::stream
