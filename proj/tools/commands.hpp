#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "birdfcn/dsp/features.hpp"
#include "birdfcn/model/fcn.hpp"
#include "birdfcn/train/trainer.hpp"

namespace birdfcn::cli {

/// Exit status when a gradient check exceeds its tolerance.
inline constexpr int kGradCheckFailed = 11;

struct Common {
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
};

struct FeatureOptions {
    std::string descriptor = "mel-db";
    std::size_t n_mels = 128;
    std::size_t n_mfcc = 20;
    double fmin = 0.0;
    double fmax = 22050.0;
    double preemphasis = 0.97;

    dsp::FeatureConfig config() const;
};

struct ModelOptions {
    std::size_t depth = 4;
    std::size_t widest = 400;
    /// Hidden widths; when set they replace the depth/widest family and the projection is appended.
    std::vector<std::size_t> widths;
    double width_divisor = 1.0;
    std::string activation = "adaptive";
    std::string adaptive_base = "tanh";
    double adaptive_scale = 10.0;
    double dropout = 0.4;

    model::FcnConfig config(std::size_t n_classes) const;
};

struct TrainOptions {
    std::size_t epochs = 500;
    std::size_t batch_size = 80;
    std::size_t patience = 20;
    double min_delta = 1e-4;
    double learning_rate = 1e-3;
    double validation_fraction = 0.1;
    bool validate_on_test = false;

    train::TrainConfig config() const;
};

struct FetchArgs {
    std::vector<std::string> species;
    std::size_t max_results = 20;
    std::string cache_dir;
    std::string fetch_config;
    std::string manifest_out;
};

struct PrepareArgs {
    std::string manifest;
    std::string out_dir;
    double max_seconds = 20.0;
    double top_db = 60.0;
};

struct FeaturesArgs {
    std::string manifest;
    std::string cache_dir;
    FeatureOptions features;
};

struct TrainArgs {
    std::string manifest;
    std::string cache_dir;
    FeatureOptions features;
    ModelOptions model;
    TrainOptions train;
    std::size_t folds = 10;
    double train_fraction = 0.8;
    std::size_t knn = 0;
    std::string model_out;
    std::string report;
};

struct GridArgs {
    std::string manifest;
    std::string cache_dir;
    FeatureOptions features;
    TrainOptions train;
    std::vector<std::size_t> depths{3, 4, 6};
    std::vector<std::size_t> widths{100, 250, 400};
    std::vector<std::string> activations{"relu", "tanh", "adaptive"};
    std::vector<std::string> descriptors{"mel-db", "mfcc"};
    double width_divisor = 1.0;
    std::size_t folds = 10;
    double train_fraction = 0.8;
    std::string checkpoint_dir;
    std::string report;
};

struct EvalArgs {
    std::string model;
    std::string manifest;
    std::string report;
    std::string confusion;
};

struct DurationsArgs {
    std::string model;
    std::string manifest;
    std::vector<double> durations{1, 3, 5, 7, 10, 15, 20};
    std::string report;
};

struct DetectArgs {
    std::string model;
    std::string input;
    std::string manifest;
    double chunk = 3.0;
    double hop = 1.0;
    double min_confidence = 0.0;
    double low_energy_db = -60.0;
    bool merge = false;
    bool timeline = false;
    std::string cooccurrence;
};

int run_fetch(const FetchArgs& a, const Common& c);
int run_prepare(const PrepareArgs& a, const Common& c);
int run_features(const FeaturesArgs& a, const Common& c);
int run_train(const TrainArgs& a, const Common& c);
int run_gridsearch(const GridArgs& a, const Common& c);
int run_eval(const EvalArgs& a, const Common& c);
int run_durations(const DurationsArgs& a, const Common& c);
int run_detect(const DetectArgs& a, const Common& c);
int run_gradcheck(const Common& c);

}  // namespace birdfcn::cli
