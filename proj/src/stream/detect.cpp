#include "birdfcn/stream/detect.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "birdfcn/audio/manifest.hpp"
#include "birdfcn/error.hpp"

namespace birdfcn::stream {

void ChunkParams::validate() const {
    if (!(chunk_seconds > 0.0)) throw ParameterError("chunk length must be positive");
    if (!(hop_seconds > 0.0)) throw ParameterError("hop must be positive");
    if (hop_seconds > chunk_seconds) throw ParameterError("hop may not exceed the chunk length");
    if (!(min_confidence >= 0.0)) throw ParameterError("minimum confidence must be nonnegative");
}

std::vector<ChunkSpan> plan_chunks(std::size_t n, std::size_t chunk, std::size_t hop, std::size_t min_samples) {
    if (n < min_samples) {
        throw DegenerateInputError("clip has " + std::to_string(n) + " samples; the model needs at least " +
                                   std::to_string(min_samples));
    }
    if (n <= chunk) return {{0, n}};
    std::vector<ChunkSpan> spans;
    std::size_t s = 0;
    for (; s + chunk <= n; s += hop) spans.push_back({s, s + chunk});
    if (spans.back().end < n) {
        if (n - s >= min_samples) {
            spans.push_back({s, n});
        } else {
            spans.back().end = n;
        }
    }
    return spans;
}

double rms_dbfs(std::span<const float> samples) {
    if (samples.empty()) return -std::numeric_limits<double>::infinity();
    double ss = 0.0;
    for (float v : samples) ss += static_cast<double>(v) * v;
    const double rms = std::sqrt(ss / static_cast<double>(samples.size()));
    return rms > 0.0 ? 20.0 * std::log10(rms) : -std::numeric_limits<double>::infinity();
}

namespace {

struct Geometry {
    std::size_t chunk, hop, min_samples;
};

Geometry geometry(const ChunkParams& cp, const dsp::FeatureConfig& features, std::size_t min_frames) {
    cp.validate();
    const double rate = static_cast<double>(features.sample_rate);
    Geometry g{static_cast<std::size_t>(std::llround(cp.chunk_seconds * rate)),
               static_cast<std::size_t>(std::llround(cp.hop_seconds * rate)),
               features.frame_params.samples_for_frames(min_frames)};
    if (g.hop == 0) throw ParameterError("hop is shorter than one sample");
    if (g.chunk < g.min_samples) {
        throw ParameterError("chunk of " + std::to_string(cp.chunk_seconds) + " s is shorter than the model's " +
                             std::to_string(min_frames) + "-frame minimum");
    }
    return g;
}

const dsp::FeatureConfig& model_features(const model::FcnModel& model) {
    if (!model.features) throw ConfigError("model carries no feature configuration; retrain or re-save it");
    return *model.features;
}

void check_rate(const audio::AudioClip& clip, const dsp::FeatureConfig& features) {
    if (clip.sample_rate != features.sample_rate) {
        throw ParameterError("clip is at " + std::to_string(clip.sample_rate) + " Hz, the model expects " +
                             std::to_string(features.sample_rate) + " Hz");
    }
}

}  // namespace

std::vector<Chunk> chunk_stream(const audio::AudioClip& clip, const ChunkParams& cp,
                                const dsp::FeatureConfig& features, std::size_t min_frames) {
    check_rate(clip, features);
    const auto g = geometry(cp, features, min_frames);
    const dsp::FeatureExtractor extract(features);
    const double rate = static_cast<double>(features.sample_rate);
    std::vector<Chunk> out;
    for (const auto& span : plan_chunks(clip.samples.size(), g.chunk, g.hop, g.min_samples)) {
        audio::AudioClip piece;
        piece.sample_rate = clip.sample_rate;
        piece.samples.assign(clip.samples.begin() + static_cast<std::ptrdiff_t>(span.begin),
                             clip.samples.begin() + static_cast<std::ptrdiff_t>(span.end));
        Chunk c;
        c.t_start = static_cast<double>(span.begin) / rate;
        c.t_end = static_cast<double>(span.end) / rate;
        c.low_energy = rms_dbfs(piece.samples) < cp.low_energy_dbfs;
        c.features = extract(piece);
        out.push_back(std::move(c));
    }
    return out;
}

nlohmann::json DetectionEvent::to_json() const {
    return {{"t_start", t_start},
            {"t_end", t_end},
            {"species", species},
            {"confidence", confidence},
            {"low_energy", low_energy}};
}

StreamDetector::StreamDetector(const model::FcnModel& model, ChunkParams cp)
    : model_(model), cp_(cp), extract_(model_features(model)) {
    const auto g = geometry(cp_, *model.features, model.min_frames());
    chunk_ = g.chunk;
    hop_ = g.hop;
    min_samples_ = g.min_samples;
}

void StreamDetector::emit(std::size_t begin, std::size_t end, std::vector<DetectionEvent>& out) {
    audio::AudioClip piece;
    piece.sample_rate = model_.features->sample_rate;
    piece.samples.assign(buffer_.begin() + static_cast<std::ptrdiff_t>(begin - offset_),
                         buffer_.begin() + static_cast<std::ptrdiff_t>(end - offset_));
    auto fm = extract_(piece);
    if (model_.standardizer) model_.standardizer->apply(fm);
    const auto probs = model_.net.forward(
        nn::Tensor<float>({fm.bands, fm.frames}, std::vector<float>(fm.values.begin(), fm.values.end())), false,
        nullptr);
    const auto& p = probs->value.values();
    const auto best = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    any_chunk_ = true;
    last_end_ = end;
    if (static_cast<double>(p[best]) < cp_.min_confidence) return;
    const double rate = static_cast<double>(piece.sample_rate);
    DetectionEvent e;
    e.t_start = static_cast<double>(begin) / rate;
    e.t_end = static_cast<double>(end) / rate;
    e.class_index = best;
    e.species = model_.label_set.at(best);
    e.confidence = p[best];
    e.low_energy = rms_dbfs(piece.samples) < cp_.low_energy_dbfs;
    out.push_back(std::move(e));
}

std::vector<DetectionEvent> StreamDetector::push(std::span<const float> samples) {
    if (finished_) throw OrderingError("samples pushed after finish()");
    buffer_.insert(buffer_.end(), samples.begin(), samples.end());
    std::vector<DetectionEvent> out;
    const std::size_t n = samples_seen();
    // A full window is final once the stream has outgrown the tail that would be folded into it.
    while (n >= next_start_ + chunk_ && n >= next_start_ + hop_ + min_samples_) {
        emit(next_start_, next_start_ + chunk_, out);
        next_start_ += hop_;
        const std::size_t drop = next_start_ - offset_;
        buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(drop));
        offset_ = next_start_;
    }
    return out;
}

std::vector<DetectionEvent> StreamDetector::finish() {
    if (finished_) throw OrderingError("finish() called twice");
    finished_ = true;
    std::vector<DetectionEvent> out;
    const std::size_t n = samples_seen();
    if (!any_chunk_ && n < min_samples_) {
        throw DegenerateInputError("stream has " + std::to_string(n) + " samples; the model needs at least " +
                                   std::to_string(min_samples_));
    }
    if (n >= next_start_ + chunk_) {
        // The pending full window, stretched over a tail too short to stand alone.
        emit(next_start_, n, out);
    } else if (!any_chunk_ || n > last_end_) {
        // Whole short clip, or the uncovered remainder on the hop grid.
        emit(next_start_, n, out);
    }
    return out;
}

std::vector<DetectionEvent> detect(const model::FcnModel& model, const audio::AudioClip& clip, const ChunkParams& cp) {
    check_rate(clip, model_features(model));
    StreamDetector det(model, cp);
    auto events = det.push(clip.samples);
    auto tail = det.finish();
    events.insert(events.end(), tail.begin(), tail.end());
    return events;
}

std::vector<DetectionEvent> merge_events(const std::vector<DetectionEvent>& events) {
    std::vector<DetectionEvent> out;
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& e = events[i];
        if (i > 0 && e.t_start < events[i - 1].t_start) {
            throw OrderingError("event " + std::to_string(i) + " starts before its predecessor");
        }
        if (!out.empty() && out.back().species == e.species && e.t_start <= out.back().t_end + 1e-9) {
            auto& m = out.back();
            m.t_end = std::max(m.t_end, e.t_end);
            m.confidence = std::max(m.confidence, e.confidence);
            m.low_energy = m.low_energy && e.low_energy;
            continue;
        }
        out.push_back(e);
    }
    return out;
}

std::string timeline_text(const std::vector<DetectionEvent>& events) {
    std::ostringstream os;
    char buf[64];
    for (const auto& e : events) {
        std::snprintf(buf, sizeof buf, "%7.2f - %7.2f s  ", e.t_start, e.t_end);
        os << buf << e.species;
        std::snprintf(buf, sizeof buf, "  (%.2f)", e.confidence);
        os << buf << (e.low_energy ? "  low-energy" : "") << '\n';
    }
    return os.str();
}

nlohmann::json MultispeciesResult::to_json(const std::vector<std::string>& label_set) const {
    return {{"chunk_accuracy", chunk_accuracy},
            {"full_clip_accuracy", full_clip_accuracy},
            {"total_chunks", total_chunks},
            {"labels", label_set},
            {"cooccurrence", cooccurrence}};
}

MultispeciesResult multispecies_eval(const model::FcnModel& model, const std::vector<const train::LabeledClip*>& clips,
                                     const ChunkParams& cp) {
    if (clips.empty()) throw ParameterError("no clips to evaluate");
    const auto& features = model_features(model);
    const std::size_t k = model.config().n_classes;
    const dsp::FeatureExtractor extract(features);
    MultispeciesResult r;
    r.cooccurrence.assign(k, std::vector<std::size_t>(k, 0));
    std::size_t chunk_correct = 0, clip_correct = 0;
    ChunkParams all = cp;
    all.min_confidence = 0.0;
    for (const auto* lc : clips) {
        if (lc->label >= k) throw IndexError("clip label outside the model's classes");
        for (const auto& e : detect(model, lc->clip, all)) {
            ++r.total_chunks;
            chunk_correct += e.class_index == lc->label;
            if (e.confidence >= cp.min_confidence) ++r.cooccurrence[lc->label][e.class_index];
        }
        const auto p = model::predict(model, extract(lc->clip));
        clip_correct += static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin()) == lc->label;
    }
    r.chunk_accuracy = static_cast<double>(chunk_correct) / static_cast<double>(r.total_chunks);
    r.full_clip_accuracy = static_cast<double>(clip_correct) / static_cast<double>(clips.size());
    return r;
}

std::string cooccurrence_csv(const MultispeciesResult& r, const std::vector<std::string>& label_set) {
    std::ostringstream os;
    os << "primary\\detected";
    for (const auto& name : label_set) os << ',' << audio::csv_escape(name);
    os << '\n';
    for (std::size_t i = 0; i < r.cooccurrence.size(); ++i) {
        os << audio::csv_escape(i < label_set.size() ? label_set[i] : std::to_string(i));
        for (std::size_t v : r.cooccurrence[i]) os << ',' << v;
        os << '\n';
    }
    return os.str();
}

}  // namespace birdfcn::stream
