#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numbers>
#include <random>

#include "birdfcn/error.hpp"
#include "birdfcn/stream/detect.hpp"
#include "birdfcn/train/experiment.hpp"

using namespace birdfcn;
using namespace birdfcn::stream;

namespace {

constexpr double kRate = 44100.0;

void append_tone(std::vector<float>& x, double seconds, double hz, std::mt19937_64& rng, double amp = 0.4) {
    std::normal_distribution<double> noise(0.0, 0.01);
    const auto n = static_cast<std::size_t>(seconds * kRate);
    const std::size_t base = x.size();
    for (std::size_t i = 0; i < n; ++i) {
        x.push_back(static_cast<float>(amp * std::sin(2 * std::numbers::pi * hz * (base + i) / kRate) + noise(rng)));
    }
}

audio::AudioClip clip_of(std::vector<float> x) {
    audio::AudioClip c;
    c.samples = std::move(x);
    return c;
}

dsp::FeatureConfig small_mel() {
    dsp::FeatureConfig fc;
    fc.n_mels = 16;
    fc.fmax = 8000;
    return fc;
}

model::FcnConfig tiny(std::size_t classes) {
    model::FcnConfig c;
    c.depth = 3;
    c.widths = {4, 8, classes};
    c.n_classes = classes;
    c.activation = nn::Activation::kRelu;
    return c;
}

/// Untrained model with a feature config; enough for layout and causality checks.
model::FcnModel untrained() {
    auto m = model::build_model(tiny(2), {"low", "high"}, 3);
    m.features = small_mel();
    return m;
}

/// Two-tone classifier (700 Hz = "low", 3 kHz = "high") trained on 1 s clips.
class TrainedDetector : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        std::mt19937_64 rng(4);
        std::vector<train::LabeledClip> clips;
        for (std::size_t c = 0; c < 2; ++c) {
            for (int i = 0; i < 10; ++i) {
                train::LabeledClip lc;
                lc.label = c;
                append_tone(lc.clip.samples, 1.0, c == 0 ? 700.0 : 3000.0, rng);
                clips.push_back(std::move(lc));
            }
        }
        const auto data = train::build_dataset(clips, {"low", "high"}, small_mel());
        train::TrainConfig tc;
        tc.epochs_max = 40;
        tc.batch_size = 8;
        tc.adam.alpha = 0.01;
        tc.validation_fraction = 0.0;
        model_ = new model::FcnModel(train::train_model(data, tiny(2), tc, 1).model);
    }
    static void TearDownTestSuite() { delete model_; }
    static model::FcnModel* model_;
};
model::FcnModel* TrainedDetector::model_ = nullptr;

}  // namespace

TEST(PlanChunksTest, TenSecondsThreeByOne) {
    const auto spans = plan_chunks(441000, 132300, 44100, 3969);
    ASSERT_EQ(spans.size(), 8u);  // 1 + floor((10 - 3) / 1)
    for (std::size_t i = 0; i < 8; ++i) {
        EXPECT_EQ(spans[i].begin, i * 44100);
        EXPECT_EQ(spans[i].end, i * 44100 + 132300);
    }
}

TEST(PlanChunksTest, ShortClipIsOneChunk) {
    const auto spans = plan_chunks(88200, 132300, 44100, 3969);
    ASSERT_EQ(spans.size(), 1u);
    EXPECT_EQ(spans[0].begin, 0u);
    EXPECT_EQ(spans[0].end, 88200u);
    EXPECT_THROW(plan_chunks(3968, 132300, 44100, 3969), DegenerateInputError);
}

TEST(PlanChunksTest, TailKeptOrFolded) {
    // 10.5 s: windows 0..7 end at 10 s; the next-hop window [8, 10.5) is long enough to keep.
    auto spans = plan_chunks(463050, 132300, 44100, 3969);
    ASSERT_EQ(spans.size(), 9u);
    EXPECT_EQ(spans.back().begin, 8u * 44100);
    EXPECT_EQ(spans.back().end, 463050u);
    // Non-overlapping 3 s windows over 9.05 s: the 0.05 s tail folds into [6, 9.05).
    spans = plan_chunks(399105, 132300, 132300, 3969);
    ASSERT_EQ(spans.size(), 3u);
    EXPECT_EQ(spans.back().begin, 264600u);
    EXPECT_EQ(spans.back().end, 399105u);
}

TEST(PlanChunksTest, MonotoneCoveringAndMinimumLength) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t chunk = 500 + rng() % 3000;
        const std::size_t hop = 1 + rng() % chunk;
        const std::size_t min = 1 + rng() % 500;
        const std::size_t n = min + rng() % 20000;
        const auto spans = plan_chunks(n, chunk, hop, min);
        ASSERT_FALSE(spans.empty());
        EXPECT_EQ(spans.front().begin, 0u);
        EXPECT_EQ(spans.back().end, n);
        for (std::size_t i = 0; i < spans.size(); ++i) {
            EXPECT_GE(spans[i].end - spans[i].begin, min);
            if (i > 0) {
                EXPECT_GT(spans[i].begin, spans[i - 1].begin);
                EXPECT_GE(spans[i].end, spans[i - 1].end);
                EXPECT_LE(spans[i].begin, spans[i - 1].end);  // no gaps
            }
        }
    }
}

TEST(ChunkStreamTest, FeaturesPerChunk) {
    std::mt19937_64 rng(1);
    std::vector<float> x;
    append_tone(x, 10.0, 1000.0, rng);
    const auto chunks = chunk_stream(clip_of(x), {}, small_mel(), 4);
    ASSERT_EQ(chunks.size(), 8u);
    for (std::size_t i = 0; i < 8; ++i) {
        EXPECT_DOUBLE_EQ(chunks[i].t_start, static_cast<double>(i));
        EXPECT_DOUBLE_EQ(chunks[i].t_end, i + 3.0);
        EXPECT_EQ(chunks[i].features.frames, small_mel().frame_params.frame_count(132300));
        EXPECT_FALSE(chunks[i].low_energy);
    }
}

TEST(ChunkParamsTest, Validation) {
    ChunkParams cp;
    cp.hop_seconds = 4.0;
    EXPECT_THROW(cp.validate(), ParameterError);
    cp = {};
    cp.chunk_seconds = 0.05;
    cp.hop_seconds = 0.05;
    EXPECT_THROW(chunk_stream(clip_of(std::vector<float>(44100, 0.1f)), cp, small_mel(), 8), ParameterError);
    cp = {};
    cp.min_confidence = -0.1;
    EXPECT_THROW(cp.validate(), ParameterError);
}

TEST(StreamDetectorTest, IncrementalEqualsWholeClip) {
    const auto m = untrained();
    std::mt19937_64 rng(5);
    const std::vector<std::pair<double, double>> params{{3, 1}, {3, 3}, {1, 0.25}, {2, 1.5}};
    for (auto [chunk, hop] : params) {
        for (double seconds : {0.2, 0.9, 1.0, 2.0, 3.0, 3.05, 4.4, 7.31}) {
            std::vector<float> x;
            append_tone(x, seconds, 500.0 + 300.0 * (rng() % 10), rng);
            ChunkParams cp;
            cp.chunk_seconds = chunk;
            cp.hop_seconds = hop;
            const auto whole = detect(m, clip_of(x), cp);
            StreamDetector det(m, cp);
            std::vector<DetectionEvent> pieces;
            for (std::size_t pos = 0; pos < x.size();) {
                const std::size_t take = std::min<std::size_t>(x.size() - pos, 1 + rng() % 30000);
                auto ev = det.push(std::span<const float>(x).subspan(pos, take));
                pieces.insert(pieces.end(), ev.begin(), ev.end());
                pos += take;
            }
            auto tail = det.finish();
            pieces.insert(pieces.end(), tail.begin(), tail.end());
            ASSERT_EQ(pieces.size(), whole.size()) << chunk << "/" << hop << " " << seconds;
            const auto spans = plan_chunks(x.size(), static_cast<std::size_t>(chunk * kRate),
                                           static_cast<std::size_t>(hop * kRate), small_mel().frame_params.samples_for_frames(4));
            ASSERT_EQ(spans.size(), whole.size());
            for (std::size_t i = 0; i < whole.size(); ++i) {
                EXPECT_EQ(pieces[i].to_json(), whole[i].to_json());
                EXPECT_DOUBLE_EQ(whole[i].t_start, spans[i].begin / kRate);
                EXPECT_DOUBLE_EQ(whole[i].t_end, spans[i].end / kRate);
            }
        }
    }
}

TEST(StreamDetectorTest, EventsDependOnlyOnPastSamples) {
    const auto m = untrained();
    std::mt19937_64 rng(2);
    std::vector<float> a;
    append_tone(a, 6.0, 700.0, rng);
    auto b = a;
    append_tone(a, 4.0, 3000.0, rng);
    append_tone(b, 4.0, 5000.0, rng, 0.8);
    const auto ea = detect(m, clip_of(a), {});
    const auto eb = detect(m, clip_of(b), {});
    std::size_t compared = 0;
    for (std::size_t i = 0; i < ea.size(); ++i) {
        if (ea[i].t_end > 6.0) break;
        EXPECT_EQ(ea[i].to_json(), eb[i].to_json());
        ++compared;
    }
    EXPECT_EQ(compared, 4u);
}

TEST(StreamDetectorTest, MisuseAndShortStreams) {
    const auto m = untrained();
    StreamDetector det(m, {});
    det.push(std::vector<float>(100, 0.1f));
    EXPECT_THROW(det.finish(), DegenerateInputError);
    EXPECT_THROW(det.finish(), OrderingError);
    auto clip = clip_of(std::vector<float>(44100, 0.1f));
    clip.sample_rate = 22050;
    EXPECT_THROW(detect(m, clip, {}), ParameterError);
    auto bare = m;
    bare.features.reset();
    EXPECT_THROW(detect(bare, clip_of(std::vector<float>(44100, 0.1f)), {}), ConfigError);
}

TEST(StreamDetectorTest, LowEnergyChunksAreFlagged) {
    const auto m = untrained();
    std::mt19937_64 rng(2);
    std::vector<float> x;
    append_tone(x, 3.0, 700.0, rng);
    x.resize(x.size() + 3 * 44100, 1e-4f);  // -80 dBFS
    ChunkParams cp;
    cp.hop_seconds = 3.0;
    const auto ev = detect(m, clip_of(x), cp);
    ASSERT_EQ(ev.size(), 2u);
    EXPECT_FALSE(ev[0].low_energy);
    EXPECT_TRUE(ev[1].low_energy);
    EXPECT_NEAR(rms_dbfs(std::vector<float>(10, 0.5f)), 20 * std::log10(0.5), 1e-12);
}

TEST(MergeEventsTest, Examples) {
    auto ev = [](double a, double b, const char* s, double conf = 0.5) {
        DetectionEvent e;
        e.t_start = a;
        e.t_end = b;
        e.species = s;
        e.confidence = conf;
        return e;
    };
    const auto merged = merge_events({ev(0, 3, "A", 0.6), ev(1, 4, "A", 0.9), ev(4, 7, "B")});
    ASSERT_EQ(merged.size(), 2u);
    EXPECT_EQ(merged[0].species, "A");
    EXPECT_EQ(merged[0].t_start, 0.0);
    EXPECT_EQ(merged[0].t_end, 4.0);
    EXPECT_EQ(merged[0].confidence, 0.9);
    EXPECT_EQ(merged[1].t_start, 4.0);
    EXPECT_EQ(merged[1].t_end, 7.0);
    EXPECT_EQ(merge_events({ev(0, 3, "A")}).size(), 1u);
    EXPECT_EQ(merge_events({ev(0, 3, "A"), ev(1, 4, "B"), ev(2, 5, "A"), ev(3, 6, "B")}).size(), 4u);
    EXPECT_THROW(merge_events({ev(2, 5, "A"), ev(1, 4, "A")}), OrderingError);
    EXPECT_TRUE(merge_events({}).empty());
}

TEST(MergeEventsTest, IdempotentAndCoveragePreserving) {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<DetectionEvent> events;
        for (int i = 0; i < 20; ++i) {
            DetectionEvent e;
            e.t_start = i;
            e.t_end = i + 3;
            e.species = rng() % 3 ? "A" : "B";
            e.confidence = 0.5;
            events.push_back(e);
        }
        const auto once = merge_events(events);
        const auto twice = merge_events(once);
        ASSERT_EQ(once.size(), twice.size());
        for (std::size_t i = 0; i < once.size(); ++i) EXPECT_EQ(once[i].to_json(), twice[i].to_json());
        // Covered seconds per species, sampled on a 0.25 s grid.
        auto coverage = [](const std::vector<DetectionEvent>& ev) {
            std::map<std::string, int> cells;
            for (int k = 0; k < 23 * 4; ++k) {
                const double t = k / 4.0 + 0.125;
                for (const std::string s : {"A", "B"}) {
                    for (const auto& e : ev) {
                        if (e.species == s && e.t_start <= t && t < e.t_end) {
                            ++cells[s];
                            break;
                        }
                    }
                }
            }
            return cells;
        };
        EXPECT_EQ(coverage(once), coverage(events));
    }
}

TEST_F(TrainedDetector, SpeciesChangeIsLocalized) {
    std::mt19937_64 rng(9);
    std::vector<float> x;
    append_tone(x, 5.0, 700.0, rng);
    append_tone(x, 5.0, 3000.0, rng);
    const auto events = detect(*model_, clip_of(x), {});
    ASSERT_EQ(events.size(), 8u);
    EXPECT_EQ(events.front().species, "low");
    EXPECT_EQ(events.back().species, "high");
    const auto merged = merge_events(events);
    ASSERT_EQ(merged.size(), 2u);
    // The first "high" chunk starts within one chunk length of the true change at 5 s.
    const double change = merged[1].t_start;
    EXPECT_LE(std::abs(change - 5.0), 3.0);
    EXPECT_NE(timeline_text(merged).find("high"), std::string::npos);
}

TEST_F(TrainedDetector, HomogeneousClipAndConfidenceFloor) {
    std::mt19937_64 rng(10);
    std::vector<float> x;
    append_tone(x, 6.5, 3000.0, rng);
    const auto events = detect(*model_, clip_of(x), {});
    ASSERT_FALSE(events.empty());
    for (const auto& e : events) {
        EXPECT_EQ(e.species, "high");
        EXPECT_GT(e.confidence, 0.0);
        EXPECT_LE(e.confidence, 1.0);
        EXPECT_LT(e.t_start, e.t_end);
    }
    ChunkParams strict;
    strict.min_confidence = 1.1;
    EXPECT_TRUE(detect(*model_, clip_of(x), strict).empty());
}

TEST_F(TrainedDetector, MultispeciesOnHomogeneousClips) {
    std::mt19937_64 rng(11);
    std::vector<train::LabeledClip> clips(4);
    for (std::size_t i = 0; i < clips.size(); ++i) {
        clips[i].label = i % 2;
        append_tone(clips[i].clip.samples, 4.0 + i, i % 2 ? 3000.0 : 700.0, rng);
    }
    std::vector<const train::LabeledClip*> ptrs;
    for (const auto& c : clips) ptrs.push_back(&c);
    const auto r = multispecies_eval(*model_, ptrs, {});
    EXPECT_EQ(r.chunk_accuracy, 1.0);
    EXPECT_EQ(r.full_clip_accuracy, 1.0);
    // 4 s -> 2 chunks, 5 s -> 3, 6 s -> 4, 7 s -> 5
    EXPECT_EQ(r.total_chunks, 14u);
    EXPECT_EQ(r.cooccurrence[0][0] + r.cooccurrence[0][1], 2u + 4u);
    EXPECT_EQ(r.cooccurrence[1][0] + r.cooccurrence[1][1], 3u + 5u);
    EXPECT_EQ(cooccurrence_csv(r, model_->label_set), "primary\\detected,low,high\nlow,6,0\nhigh,0,8\n");
}
