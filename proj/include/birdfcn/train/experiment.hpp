#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "birdfcn/model/fcn.hpp"
#include "birdfcn/train/dataset.hpp"
#include "birdfcn/train/metrics.hpp"
#include "birdfcn/train/split.hpp"
#include "birdfcn/train/trainer.hpp"

namespace birdfcn::train {

struct CvOptions {
    std::size_t n_folds = 10;
    double train_fraction = 0.8;
    std::uint64_t master_seed = 0;
    std::size_t jobs = 1;
    /// When nonzero, also score a k-NN baseline on every fold's split.
    std::size_t knn_k = 0;
};

struct FoldReport {
    std::size_t fold = 0;
    std::uint64_t split_seed = 0;
    std::uint64_t init_seed = 0;
    std::size_t train_size = 0;
    std::size_t val_size = 0;
    std::size_t test_size = 0;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    Metrics test_metrics;
    History history;
    std::optional<double> knn_accuracy;
    std::vector<std::string> warnings;

    nlohmann::json to_json(const std::vector<std::string>& label_set) const;
};

struct CvSummary {
    double mean_train_accuracy = 0.0;
    double std_train_accuracy = 0.0;
    double mean_test_accuracy = 0.0;
    double std_test_accuracy = 0.0;
    double mean_macro_f1 = 0.0;
    std::optional<double> mean_knn_accuracy;

    nlohmann::json to_json() const;
};

struct CvResult {
    std::vector<FoldReport> folds;
    CvSummary summary;
    std::size_t param_count = 0;
};

/// Mean and population standard deviation.
std::pair<double, double> mean_std(const std::vector<double>& values);

CvSummary summarize(const std::vector<FoldReport>& folds);

/// Sees each fold's trained model and split; runs on the fold's worker thread.
using FoldObserver = std::function<void(const FoldReport&, const model::FcnModel&, const Split&)>;

/// Monte Carlo cross-validation: a fresh model, standardizer and split per fold, all seeded from
/// the master seed, so the result does not depend on `jobs`.
CvResult cross_validate(const Dataset& data, const model::FcnConfig& config, const TrainConfig& tc,
                        const CvOptions& options, const FoldObserver& observer = {});

/// Trains one model on a stratified split of the whole dataset (the train subcommand without folds).
struct TrainedModel {
    model::FcnModel model;
    History history;
    std::size_t val_size = 0;
};
TrainedModel train_model(const Dataset& data, const model::FcnConfig& config, const TrainConfig& tc,
                         std::uint64_t seed);

// ---- grid search ----

struct GridSpec {
    std::vector<std::size_t> depths{3, 4, 6};
    std::vector<std::size_t> widths{100, 250, 400};
    std::vector<nn::Activation> activations{nn::Activation::kRelu, nn::Activation::kTanh,
                                            nn::Activation::kAdaptive};
    std::vector<dsp::FeatureKind> kinds{dsp::FeatureKind::kMelDb, dsp::FeatureKind::kMfcc};
    /// Divides every width; keeps the grid's shape at reduced cost.
    double width_divisor = 1.0;

    /// ValidationError if a value lies outside the published grid.
    void validate() const;
    std::size_t cell_count() const;
};

struct GridCell {
    std::size_t depth = 0;
    std::size_t width = 0;
    nn::Activation activation = nn::Activation::kRelu;
    dsp::FeatureKind kind = dsp::FeatureKind::kMelDb;
    std::size_t param_count = 0;
    double mean_train_accuracy = 0.0;
    double mean_test_accuracy = 0.0;
    double std_test_accuracy = 0.0;
    /// Set when the cell failed; the sweep carries on.
    std::optional<std::string> error;
    /// False when the cell was read back from a checkpoint.
    bool computed = false;

    std::string key() const;
    nlohmann::json to_json() const;
    static GridCell from_json(const nlohmann::json& j);
};

struct GridResult {
    std::vector<GridCell> cells;
    /// Index of the best cell: highest mean test accuracy, ties to fewer parameters.
    std::optional<std::size_t> best;
    std::size_t computed_cells = 0;
};

/// Runs the grid in a fixed order, writing one record per finished cell to `checkpoint_dir`
/// (when given) and reusing records already there. ConfigError if a record was produced under
/// different settings.
GridResult grid_search(const std::map<dsp::FeatureKind, const Dataset*>& datasets, const GridSpec& grid,
                       std::size_t n_classes, const TrainConfig& tc, const CvOptions& options,
                       const std::optional<std::filesystem::path>& checkpoint_dir);

std::optional<std::size_t> select_best(const std::vector<GridCell>& cells);

// ---- duration study ----

struct DurationPoint {
    double seconds = 0.0;
    std::optional<double> accuracy;  ///< empty when skipped
    std::size_t evaluated = 0;
    std::optional<std::string> warning;
};

inline const std::vector<double> kStudyDurations{1, 3, 5, 7, 10, 15, 20};

/// Accuracy with each clip truncated to each duration (shorter clips used whole). Durations too
/// short for the model's min_frames are skipped with a warning. ConfigError if the model lacks
/// its feature config.
std::vector<DurationPoint> duration_study(const model::FcnModel& model, const std::vector<const LabeledClip*>& clips,
                                          const std::vector<double>& durations = kStudyDurations);

// ---- k-NN baseline ----

/// Time-averaged feature columns, one bands-long vector per clip.
std::vector<double> time_average(const dsp::FeatureMatrix& m);

/// Euclidean k-NN over time-averaged features; majority vote with ties going to the tied class
/// whose member is nearest. ParameterError if k is 0 or exceeds the training set.
std::vector<std::size_t> knn_predict(const std::vector<const Sample*>& train, const std::vector<const Sample*>& test,
                                     std::size_t k);
double knn_baseline(const std::vector<const Sample*>& train, const std::vector<const Sample*>& test,
                    std::size_t k = 5);

// ---- reports ----

std::string summary_table(const CvResult& result);
std::string grid_table(const GridResult& result);

}  // namespace birdfcn::train
