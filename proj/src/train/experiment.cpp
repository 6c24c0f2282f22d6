#include "birdfcn/train/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "birdfcn/error.hpp"

namespace birdfcn::train {

namespace {

std::vector<const Sample*> pick(const Dataset& data, const std::vector<std::size_t>& idx) {
    std::vector<const Sample*> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(&data.samples[i]);
    return out;
}

struct FoldInputs {
    std::vector<std::size_t> fit;
    std::vector<std::size_t> val;
    std::vector<std::string> warnings;
};

/// Carves a stratified validation share out of `train` (dataset indices).
FoldInputs carve_validation(const Dataset& data, const std::vector<std::size_t>& train, double fraction,
                            std::uint64_t seed) {
    FoldInputs out;
    if (fraction <= 0.0 || train.size() < 2) {
        out.fit = train;
        return out;
    }
    std::vector<std::size_t> labels;
    for (std::size_t i : train) labels.push_back(data.samples[i].label);
    const auto sub = monte_carlo_split(labels, 1.0 - fraction, seed);
    for (std::size_t j : sub.train) out.fit.push_back(train[j]);
    for (std::size_t j : sub.test) out.val.push_back(train[j]);
    for (const auto& w : sub.warnings) out.warnings.push_back("validation carve: " + w);
    return out;
}

model::FcnConfig fitted_config(model::FcnConfig config, const Dataset& data) {
    if (config.n_classes != data.label_set.size()) {
        throw ConfigError("model has " + std::to_string(config.n_classes) + " classes but the dataset has " +
                          std::to_string(data.label_set.size()));
    }
    if (config.head == model::Head::kGap) config.input_bands = data.samples.front().features.bands;
    return config;
}

struct Trained {
    model::FcnModel model;
    History history;
};

/// Standardizer fitted on `fit`; fit and val padded together to their longest clip.
Trained fit_model(const Dataset& data, const model::FcnConfig& config, const TrainConfig& tc,
                  const std::vector<std::size_t>& fit, const std::vector<std::size_t>& val, bool val_is_test,
                  std::uint64_t init_seed, std::uint64_t train_seed) {
    const auto fit_samples = pick(data, fit);
    std::vector<const dsp::FeatureMatrix*> mats;
    for (const auto* s : fit_samples) mats.push_back(&s->features);
    auto standardizer = dsp::Standardizer::fit(mats);

    Trained t;
    t.model = model::build_model(config, data.label_set, init_seed);
    t.model.features = data.features;
    t.model.standardizer = standardizer;

    Batch train_batch, val_batch;
    if (val_is_test) {
        train_batch = prepare_padded(fit_samples, standardizer);
        val_batch = prepare_unpadded(pick(data, val), standardizer);
    } else {
        auto all = fit_samples;
        const auto val_samples = pick(data, val);
        all.insert(all.end(), val_samples.begin(), val_samples.end());
        auto padded = prepare_padded(all, standardizer);
        const auto n_fit = static_cast<std::ptrdiff_t>(fit_samples.size());
        train_batch.inputs.assign(padded.inputs.begin(), padded.inputs.begin() + n_fit);
        train_batch.labels.assign(padded.labels.begin(), padded.labels.begin() + n_fit);
        val_batch.inputs.assign(padded.inputs.begin() + n_fit, padded.inputs.end());
        val_batch.labels.assign(padded.labels.begin() + n_fit, padded.labels.end());
    }
    t.history = train_one(t.model.net, train_batch, val_batch, tc, train_seed);
    return t;
}

void write_atomically(const std::filesystem::path& path, const std::string& text) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot write " + tmp);
        os << text;
        if (!os) throw IoError("failed writing " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move " + tmp + " into place: " + ec.message());
}

}  // namespace

std::pair<double, double> mean_std(const std::vector<double>& values) {
    if (values.empty()) return {0.0, 0.0};
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / n)};
}

nlohmann::json FoldReport::to_json(const std::vector<std::string>& label_set) const {
    nlohmann::json j{{"fold", fold},
                     {"split_seed", split_seed},
                     {"init_seed", init_seed},
                     {"train_size", train_size},
                     {"val_size", val_size},
                     {"test_size", test_size},
                     {"train_accuracy", train_accuracy},
                     {"test_accuracy", test_accuracy},
                     {"stopped_epoch", history.stopped_epoch},
                     {"best_epoch", history.best_epoch},
                     {"test_metrics", train::to_json(test_metrics, label_set)},
                     {"history", history.to_json()},
                     {"warnings", warnings}};
    if (knn_accuracy) j["knn_accuracy"] = *knn_accuracy;
    return j;
}

nlohmann::json CvSummary::to_json() const {
    nlohmann::json j{{"mean_train_accuracy", mean_train_accuracy},
                     {"std_train_accuracy", std_train_accuracy},
                     {"mean_test_accuracy", mean_test_accuracy},
                     {"std_test_accuracy", std_test_accuracy},
                     {"mean_macro_f1", mean_macro_f1}};
    if (mean_knn_accuracy) j["mean_knn_accuracy"] = *mean_knn_accuracy;
    return j;
}

CvSummary summarize(const std::vector<FoldReport>& folds) {
    std::vector<double> train, test, f1, knn;
    for (const auto& f : folds) {
        train.push_back(f.train_accuracy);
        test.push_back(f.test_accuracy);
        f1.push_back(f.test_metrics.macro.f1);
        if (f.knn_accuracy) knn.push_back(*f.knn_accuracy);
    }
    CvSummary s;
    std::tie(s.mean_train_accuracy, s.std_train_accuracy) = mean_std(train);
    std::tie(s.mean_test_accuracy, s.std_test_accuracy) = mean_std(test);
    s.mean_macro_f1 = mean_std(f1).first;
    if (!knn.empty() && knn.size() == folds.size()) s.mean_knn_accuracy = mean_std(knn).first;
    return s;
}

CvResult cross_validate(const Dataset& data, const model::FcnConfig& config, const TrainConfig& tc,
                        const CvOptions& options, const FoldObserver& observer) {
    if (data.samples.empty()) throw ParameterError("dataset is empty");
    if (options.n_folds == 0) throw ParameterError("need at least one fold");
    tc.validate();
    const auto cfg = fitted_config(config, data);
    const auto labels = data.labels();

    CvResult result;
    result.param_count = model::Network<float>(cfg, 0).param_count();
    result.folds.resize(options.n_folds);
    parallel_for(options.n_folds, options.jobs, [&](std::size_t fold) {
        FoldReport& r = result.folds[fold];
        r.fold = fold;
        r.split_seed = derive_seed(options.master_seed, "split", fold);
        r.init_seed = derive_seed(options.master_seed, "init", fold);
        const auto split = monte_carlo_split(labels, options.train_fraction, r.split_seed);
        r.warnings = split.warnings;

        FoldInputs in;
        if (tc.validate_on_test) {
            in.fit = split.train;
            in.val = split.test;
        } else {
            in = carve_validation(data, split.train, tc.validation_fraction,
                                  derive_seed(options.master_seed, "validation", fold));
            r.warnings.insert(r.warnings.end(), in.warnings.begin(), in.warnings.end());
        }
        const auto trained = fit_model(data, cfg, tc, in.fit, in.val, tc.validate_on_test, r.init_seed,
                                       derive_seed(options.master_seed, "train", fold));
        r.history = trained.history;
        r.train_size = split.train.size();
        r.val_size = in.val.size();
        r.test_size = split.test.size();
        r.train_accuracy = evaluate(trained.model, pick(data, split.train)).accuracy;
        r.test_metrics = evaluate(trained.model, pick(data, split.test));
        r.test_accuracy = r.test_metrics.accuracy;
        if (options.knn_k > 0) {
            r.knn_accuracy = knn_baseline(pick(data, split.train), pick(data, split.test), options.knn_k);
        }
        if (observer) observer(r, trained.model, split);
    });
    result.summary = summarize(result.folds);
    return result;
}

TrainedModel train_model(const Dataset& data, const model::FcnConfig& config, const TrainConfig& tc,
                         std::uint64_t seed) {
    if (data.samples.empty()) throw ParameterError("dataset is empty");
    tc.validate();
    const auto cfg = fitted_config(config, data);
    std::vector<std::size_t> all(data.samples.size());
    std::iota(all.begin(), all.end(), 0);
    const auto in = carve_validation(data, all, tc.validation_fraction, derive_seed(seed, "validation"));
    auto trained = fit_model(data, cfg, tc, in.fit, in.val, false, derive_seed(seed, "init"),
                             derive_seed(seed, "train"));
    return {std::move(trained.model), std::move(trained.history), in.val.size()};
}

// ---- grid search ----

void GridSpec::validate() const {
    if (depths.empty() || widths.empty() || activations.empty() || kinds.empty()) {
        throw ValidationError("every grid axis needs at least one value");
    }
    for (std::size_t d : depths) {
        if (d != 3 && d != 4 && d != 6) throw ValidationError("grid depth " + std::to_string(d) + " not in {3, 4, 6}");
    }
    for (std::size_t w : widths) {
        if (w != 100 && w != 250 && w != 400) {
            throw ValidationError("grid width " + std::to_string(w) + " not in {100, 250, 400}");
        }
    }
    if (!(width_divisor >= 1.0)) throw ValidationError("width divisor must be at least 1");
}

std::size_t GridSpec::cell_count() const { return depths.size() * widths.size() * activations.size() * kinds.size(); }

std::string GridCell::key() const {
    return std::string(dsp::to_string(kind)) + "_d" + std::to_string(depth) + "_w" + std::to_string(width) + "_" +
           std::string(nn::to_string(activation));
}

nlohmann::json GridCell::to_json() const {
    nlohmann::json j{{"depth", depth},
                     {"width", width},
                     {"activation", nn::to_string(activation)},
                     {"descriptor", dsp::to_string(kind)},
                     {"param_count", param_count},
                     {"mean_train_accuracy", mean_train_accuracy},
                     {"mean_test_accuracy", mean_test_accuracy},
                     {"std_test_accuracy", std_test_accuracy}};
    if (error) j["error"] = *error;
    return j;
}

GridCell GridCell::from_json(const nlohmann::json& j) {
    GridCell c;
    try {
        c.depth = j.at("depth").get<std::size_t>();
        c.width = j.at("width").get<std::size_t>();
        c.activation = nn::activation_from_string(j.at("activation").get<std::string>());
        c.kind = dsp::feature_kind_from_string(j.at("descriptor").get<std::string>());
        c.param_count = j.at("param_count").get<std::size_t>();
        c.mean_train_accuracy = j.at("mean_train_accuracy").get<double>();
        c.mean_test_accuracy = j.at("mean_test_accuracy").get<double>();
        c.std_test_accuracy = j.at("std_test_accuracy").get<double>();
        if (j.contains("error")) c.error = j.at("error").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw CorruptionError(std::string("grid checkpoint record: ") + e.what());
    }
    return c;
}

std::optional<std::size_t> select_best(const std::vector<GridCell>& cells) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto& c = cells[i];
        if (c.error) continue;
        if (!best) {
            best = i;
            continue;
        }
        const auto& b = cells[*best];
        if (c.mean_test_accuracy > b.mean_test_accuracy ||
            (c.mean_test_accuracy == b.mean_test_accuracy && c.param_count < b.param_count)) {
            best = i;
        }
    }
    return best;
}

GridResult grid_search(const std::map<dsp::FeatureKind, const Dataset*>& datasets, const GridSpec& grid,
                       std::size_t n_classes, const TrainConfig& tc, const CvOptions& options,
                       const std::optional<std::filesystem::path>& checkpoint_dir) {
    grid.validate();
    tc.validate();
    nlohmann::json settings{{"train", tc.to_json()},
                            {"n_folds", options.n_folds},
                            {"train_fraction", options.train_fraction},
                            {"master_seed", options.master_seed},
                            {"width_divisor", grid.width_divisor},
                            {"n_classes", n_classes}};
    for (const auto& [kind, data] : datasets) {
        if (data) {
            settings["datasets"][std::string(dsp::to_string(kind))] = {{"samples", data->size()},
                                                                       {"features", data->features.describe()}};
        }
    }
    if (checkpoint_dir) std::filesystem::create_directories(*checkpoint_dir);

    GridResult result;
    for (auto kind : grid.kinds) {
        for (std::size_t depth : grid.depths) {
            for (std::size_t width : grid.widths) {
                for (auto act : grid.activations) {
                    GridCell cell;
                    cell.depth = depth;
                    cell.width = width;
                    cell.activation = act;
                    cell.kind = kind;
                    const auto record =
                        checkpoint_dir ? std::optional(*checkpoint_dir / (cell.key() + ".json")) : std::nullopt;
                    if (record && std::filesystem::exists(*record)) {
                        std::ifstream is(*record);
                        nlohmann::json j;
                        try {
                            j = nlohmann::json::parse(is);
                        } catch (const nlohmann::json::exception& e) {
                            throw CorruptionError("grid checkpoint " + record->string() + ": " + e.what());
                        }
                        if (j.value("settings", nlohmann::json{}) != settings) {
                            throw ConfigError("checkpoint " + record->string() +
                                              " was produced with different settings; use a fresh directory");
                        }
                        result.cells.push_back(GridCell::from_json(j.at("cell")));
                        continue;
                    }
                    try {
                        const auto it = datasets.find(kind);
                        if (it == datasets.end() || !it->second) {
                            throw ConfigError(std::string("no dataset for descriptor ") +
                                              std::string(dsp::to_string(kind)));
                        }
                        auto cfg = model::grid_config(depth, width, act, n_classes, grid.width_divisor);
                        cell.param_count = model::Network<float>(cfg, 0).param_count();
                        const auto cv = cross_validate(*it->second, cfg, tc, options);
                        cell.mean_train_accuracy = cv.summary.mean_train_accuracy;
                        cell.mean_test_accuracy = cv.summary.mean_test_accuracy;
                        cell.std_test_accuracy = cv.summary.std_test_accuracy;
                    } catch (const Error& e) {
                        cell.error = e.what();
                    }
                    cell.computed = true;
                    ++result.computed_cells;
                    if (record) {
                        write_atomically(*record, nlohmann::json{{"settings", settings}, {"cell", cell.to_json()}}.dump(2));
                    }
                    result.cells.push_back(cell);
                }
            }
        }
    }
    result.best = select_best(result.cells);
    return result;
}

// ---- duration study ----

std::vector<DurationPoint> duration_study(const model::FcnModel& model, const std::vector<const LabeledClip*>& clips,
                                          const std::vector<double>& durations) {
    if (!model.features) throw ConfigError("model carries no feature configuration");
    if (clips.empty()) throw ParameterError("no clips for the duration study");
    const dsp::FeatureExtractor extract(*model.features);
    const auto& fp = model.features->frame_params;
    const std::size_t min_samples = fp.samples_for_frames(model.min_frames());
    const double rate = static_cast<double>(model.features->sample_rate);
    const auto standardizer = model.standardizer.value_or(dsp::Standardizer{});

    std::vector<DurationPoint> out;
    for (double d : durations) {
        DurationPoint pt;
        pt.seconds = d;
        const auto n = static_cast<std::size_t>(std::llround(d * rate));
        if (!(d > 0.0) || n < min_samples) {
            pt.warning = "duration " + std::to_string(d) + " s is shorter than the model's " +
                         std::to_string(model.min_frames()) + "-frame minimum; skipped";
            out.push_back(pt);
            continue;
        }
        std::size_t correct = 0, too_short = 0;
        for (const auto* lc : clips) {
            audio::AudioClip cut = lc->clip;
            if (cut.samples.size() > n) cut.samples.resize(n);
            if (cut.samples.size() < min_samples) {
                ++too_short;
                continue;
            }
            auto fm = extract(cut);
            standardizer.apply(fm);
            const auto probs = model.net.forward(
                nn::Tensor<float>({fm.bands, fm.frames}, std::vector<float>(fm.values.begin(), fm.values.end())),
                false, nullptr);
            const auto& p = probs->value.values();
            correct += static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin()) == lc->label;
            ++pt.evaluated;
        }
        if (too_short) {
            pt.warning = std::to_string(too_short) + " clips shorter than the model minimum were left out";
        }
        if (pt.evaluated) pt.accuracy = static_cast<double>(correct) / static_cast<double>(pt.evaluated);
        out.push_back(pt);
    }
    return out;
}

// ---- k-NN ----

std::vector<double> time_average(const dsp::FeatureMatrix& m) {
    std::vector<double> out(m.bands, 0.0);
    if (m.frames == 0) return out;
    for (std::size_t b = 0; b < m.bands; ++b) {
        double acc = 0.0;
        for (std::size_t t = 0; t < m.frames; ++t) acc += m.at(b, t);
        out[b] = acc / static_cast<double>(m.frames);
    }
    return out;
}

std::vector<std::size_t> knn_predict(const std::vector<const Sample*>& train, const std::vector<const Sample*>& test,
                                     std::size_t k) {
    if (k == 0 || k > train.size()) {
        throw ParameterError("k = " + std::to_string(k) + " must lie in [1, " + std::to_string(train.size()) + "]");
    }
    std::vector<std::vector<double>> reference;
    std::size_t n_classes = 0;
    for (const auto* s : train) {
        reference.push_back(time_average(s->features));
        n_classes = std::max(n_classes, s->label + 1);
    }
    std::vector<std::size_t> out;
    std::vector<std::pair<double, std::size_t>> dist(train.size());
    for (const auto* q : test) {
        const auto v = time_average(q->features);
        for (std::size_t i = 0; i < train.size(); ++i) {
            if (reference[i].size() != v.size()) throw ShapeError("k-NN feature lengths differ");
            double d = 0.0;
            for (std::size_t b = 0; b < v.size(); ++b) d += (v[b] - reference[i][b]) * (v[b] - reference[i][b]);
            dist[i] = {d, i};
        }
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
        std::vector<std::size_t> votes(n_classes, 0);
        std::size_t top = 0;
        for (std::size_t j = 0; j < k; ++j) top = std::max(top, ++votes[train[dist[j].second]->label]);
        // Nearest neighbor among the tied classes decides.
        for (std::size_t j = 0; j < k; ++j) {
            const std::size_t c = train[dist[j].second]->label;
            if (votes[c] == top) {
                out.push_back(c);
                break;
            }
        }
    }
    return out;
}

double knn_baseline(const std::vector<const Sample*>& train, const std::vector<const Sample*>& test, std::size_t k) {
    if (test.empty()) throw ParameterError("test set is empty");
    const auto pred = knn_predict(train, test, k);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test.size(); ++i) correct += pred[i] == test[i]->label;
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

// ---- reports ----

std::string summary_table(const CvResult& result) {
    std::ostringstream os;
    char buf[160];
    os << "fold  train_acc  test_acc  macro_f1  epochs  best";
    const bool knn = !result.folds.empty() && result.folds.front().knn_accuracy.has_value();
    os << (knn ? "  knn_acc\n" : "\n");
    for (const auto& f : result.folds) {
        std::snprintf(buf, sizeof buf, "%4zu  %9.4f  %8.4f  %8.4f  %6zu  %4zu", f.fold, f.train_accuracy,
                      f.test_accuracy, f.test_metrics.macro.f1, f.history.stopped_epoch, f.history.best_epoch);
        os << buf;
        if (knn && f.knn_accuracy) {
            std::snprintf(buf, sizeof buf, "  %7.4f", *f.knn_accuracy);
            os << buf;
        }
        os << '\n';
    }
    const auto& s = result.summary;
    std::snprintf(buf, sizeof buf, "mean  %9.4f  %8.4f  %8.4f\nstd   %9.4f  %8.4f\n", s.mean_train_accuracy,
                  s.mean_test_accuracy, s.mean_macro_f1, s.std_train_accuracy, s.std_test_accuracy);
    os << buf;
    if (s.mean_knn_accuracy) {
        std::snprintf(buf, sizeof buf, "k-NN baseline mean accuracy %.4f\n", *s.mean_knn_accuracy);
        os << buf;
    }
    std::snprintf(buf, sizeof buf, "parameters %zu\n", result.param_count);
    os << buf;
    return os.str();
}

std::string grid_table(const GridResult& result) {
    std::ostringstream os;
    char buf[200];
    os << "descriptor  depth  width  activation  params     train_acc  test_acc  test_std\n";
    for (std::size_t i = 0; i < result.cells.size(); ++i) {
        const auto& c = result.cells[i];
        std::snprintf(buf, sizeof buf, "%-10s  %5zu  %5zu  %-10s  %-9zu", std::string(dsp::to_string(c.kind)).c_str(),
                      c.depth, c.width, std::string(nn::to_string(c.activation)).c_str(), c.param_count);
        os << buf;
        if (c.error) {
            os << "  error: " << *c.error;
        } else {
            std::snprintf(buf, sizeof buf, "  %9.4f  %8.4f  %8.4f", c.mean_train_accuracy, c.mean_test_accuracy,
                          c.std_test_accuracy);
            os << buf;
        }
        os << (result.best && *result.best == i ? "  *best\n" : "\n");
    }
    return os.str();
}

}  // namespace birdfcn::train
