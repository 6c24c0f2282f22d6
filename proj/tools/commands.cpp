#include "commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>

#include <json.hpp>

#include "birdfcn/audio/fetch.hpp"
#include "birdfcn/audio/manifest.hpp"
#include "birdfcn/audio/process.hpp"
#include "birdfcn/audio/wav.hpp"
#include "birdfcn/dsp/feature_cache.hpp"
#include "birdfcn/error.hpp"
#include "birdfcn/model/gradcheck_suite.hpp"
#include "birdfcn/stream/detect.hpp"
#include "birdfcn/train/experiment.hpp"

namespace fs = std::filesystem;

namespace birdfcn::cli {

namespace {

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw IoError("cannot write " + path.string());
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

void note(const std::string& line) { std::cerr << line << '\n'; }

audio::DatasetManifest manifest_at(const std::string& path) {
    auto load = audio::load_manifest(path);
    if (load.duplicates_dropped > 0) {
        note("warning: dropped " + std::to_string(load.duplicates_dropped) + " duplicate manifest rows");
    }
    if (load.manifest.entries.empty()) throw ValidationError("manifest " + path + " has no entries");
    return std::move(load.manifest);
}

train::Dataset dataset_for(const audio::DatasetManifest& manifest, const dsp::FeatureConfig& config,
                           const std::string& cache_dir, std::size_t jobs) {
    if (cache_dir.empty()) return train::build_dataset(manifest, config, nullptr, jobs);
    const dsp::FeatureCache cache(cache_dir);
    return train::build_dataset(manifest, config, &cache, jobs);
}

/// Class indices of the manifest's species in the model's label order.
std::vector<std::size_t> model_labels(const audio::DatasetManifest& manifest, const model::FcnModel& m) {
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < m.label_set.size(); ++i) index[m.label_set[i]] = i;
    std::vector<std::size_t> out;
    for (const auto& e : manifest.entries) {
        const auto it = index.find(e.species);
        if (it == index.end()) throw ValidationError("species '" + e.species + "' is not one of the model's classes");
        out.push_back(it->second);
    }
    return out;
}

model::FcnModel load_model(const std::string& path) {
    auto m = model::load_weights(path);
    if (!m.features) throw ConfigError(path + " carries no feature configuration");
    return m;
}

std::vector<train::LabeledClip> clips_for(const audio::DatasetManifest& manifest, const model::FcnModel& m,
                                          std::size_t jobs) {
    const auto labels = model_labels(manifest, m);
    auto clips = train::load_clips(manifest, jobs);
    for (std::size_t i = 0; i < clips.size(); ++i) clips[i].label = labels[i];
    return clips;
}

std::vector<const train::LabeledClip*> pointers(const std::vector<train::LabeledClip>& clips) {
    std::vector<const train::LabeledClip*> out;
    for (const auto& c : clips) out.push_back(&c);
    return out;
}

}  // namespace

dsp::FeatureConfig FeatureOptions::config() const {
    dsp::FeatureConfig c;
    c.kind = dsp::feature_kind_from_string(descriptor);
    c.n_mels = n_mels;
    c.n_mfcc = n_mfcc;
    c.fmin = fmin;
    c.fmax = fmax;
    c.preemphasis = preemphasis;
    c.validate();
    return c;
}

model::FcnConfig ModelOptions::config(std::size_t n_classes) const {
    const auto act = nn::activation_from_string(activation);
    model::FcnConfig c;
    if (widths.empty()) {
        c = model::grid_config(depth, widest, act, n_classes, width_divisor);
    } else {
        c.depth = widths.size() + 1;
        c.widths = widths;
        c.widths.push_back(n_classes);
        c.n_classes = n_classes;
        c.activation = act;
    }
    c.adaptive_base = nn::adaptive_base_from_string(adaptive_base);
    c.adaptive_scale = adaptive_scale;
    c.dropout_rate = dropout;
    c.validate();
    return c;
}

train::TrainConfig TrainOptions::config() const {
    train::TrainConfig tc;
    tc.epochs_max = epochs;
    tc.batch_size = batch_size;
    tc.patience = patience;
    tc.min_delta = min_delta;
    tc.adam.alpha = learning_rate;
    tc.validation_fraction = validation_fraction;
    tc.validate_on_test = validate_on_test;
    tc.validate();
    return tc;
}

int run_fetch(const FetchArgs& a, const Common&) {
    const auto config = a.fetch_config.empty() ? audio::FetchConfig{} : audio::FetchConfig::from_json_file(a.fetch_config);
    audio::HttplibClient client;
    audio::Fetcher fetcher(config, client);
    audio::DatasetManifest manifest;
    for (const auto& species : a.species) {
        const auto r = fetcher.fetch({species, a.max_results, a.cache_dir});
        note(species + ": " + std::to_string(r.files.size()) + " files (" + std::to_string(r.downloads) +
             " downloaded, " + std::to_string(r.cache_hits) + " cached)");
        manifest.entries.insert(manifest.entries.end(), r.rows.begin(), r.rows.end());
        manifest.label_set.push_back(species);
    }
    for (const auto& f : manifest.entries) std::cout << f.path << '\n';
    if (!a.manifest_out.empty()) {
        const auto base = fs::absolute(fs::path(a.manifest_out)).parent_path();
        for (auto& e : manifest.entries) e.path = fs::relative(fs::absolute(e.path), base).generic_string();
        audio::write_manifest(a.manifest_out, manifest);
    }
    return 0;
}

int run_prepare(const PrepareArgs& a, const Common& c) {
    const auto in = manifest_at(a.manifest);
    audio::TrimParams trim;
    trim.top_db = a.top_db;
    if (!(a.max_seconds > 0.0)) throw ParameterError("--max-seconds must be positive");
    fs::create_directories(a.out_dir);
    std::vector<std::optional<audio::ManifestEntry>> rows(in.entries.size());
    std::mutex log;
    train::parallel_for(in.entries.size(), c.jobs, [&](std::size_t i) {
        const auto& entry = in.entries[i];
        const auto source = in.resolve(entry);
        audio::AudioClip clip;
        try {
            clip = audio::cap_duration(audio::trim_silence(audio::decode_audio(source), trim), a.max_seconds);
        } catch (const EmptyResultError&) {
            std::lock_guard lock(log);
            note("warning: " + entry.path + " is silent; skipped");
            return;
        }
        char prefix[16];
        std::snprintf(prefix, sizeof prefix, "%05zu_", i);
        const std::string name = prefix + source.stem().string() + ".wav";
        audio::write_wav(fs::path(a.out_dir) / name, clip);
        rows[i] = audio::ManifestEntry{name, entry.species, clip.duration_seconds()};
    });
    audio::DatasetManifest out;
    out.label_set = in.label_set;
    for (auto& r : rows) {
        if (r) out.entries.push_back(std::move(*r));
    }
    audio::write_manifest(fs::path(a.out_dir) / "manifest.csv", out);
    note("prepared " + std::to_string(out.entries.size()) + " of " + std::to_string(in.entries.size()) + " clips");
    return 0;
}

int run_features(const FeaturesArgs& a, const Common& c) {
    const auto config = a.features.config();
    const auto manifest = manifest_at(a.manifest);
    const dsp::FeatureCache cache(a.cache_dir);
    const auto data = train::build_dataset(manifest, config, &cache, c.jobs);
    std::cout << data.size() << " matrices (" << config.describe() << "): " << cache.hits() << " cached, "
              << cache.misses() << " computed\n";
    return 0;
}

int run_train(const TrainArgs& a, const Common& c) {
    const auto features = a.features.config();
    const auto tc = a.train.config();
    const auto manifest = manifest_at(a.manifest);
    const auto config = a.model.config(manifest.num_classes());
    if (a.folds == 0 && a.model_out.empty()) throw ParameterError("--folds 0 trains one model and needs --model-out");
    const auto data = dataset_for(manifest, features, a.cache_dir, c.jobs);

    if (a.folds == 0) {
        const auto trained = train::train_model(data, config, tc, c.seed);
        model::save_weights(trained.model, a.model_out);
        const auto& h = trained.history;
        std::cout << "params " << trained.model.param_count() << ", epochs " << h.epochs.size() << ", best epoch "
                  << h.best_epoch << ", best val loss " << h.best_val_loss << '\n';
        if (!a.report.empty()) {
            write_json(a.report, {{"model", config.describe()},
                                  {"features", features.describe()},
                                  {"train", tc.to_json()},
                                  {"seed", c.seed},
                                  {"history", h.to_json()}});
        }
        return 0;
    }

    train::CvOptions cv;
    cv.n_folds = a.folds;
    cv.train_fraction = a.train_fraction;
    cv.master_seed = c.seed;
    cv.jobs = c.jobs;
    cv.knn_k = a.knn;
    const auto result = train::cross_validate(data, config, tc, cv);
    std::cout << train::summary_table(result);
    if (!a.report.empty()) {
        nlohmann::json folds = nlohmann::json::array();
        for (const auto& f : result.folds) folds.push_back(f.to_json(data.label_set));
        write_json(a.report, {{"model", config.describe()},
                              {"features", features.describe()},
                              {"train", tc.to_json()},
                              {"seed", c.seed},
                              {"param_count", result.param_count},
                              {"folds", folds},
                              {"summary", result.summary.to_json()}});
    }
    return 0;
}

int run_gridsearch(const GridArgs& a, const Common& c) {
    train::GridSpec grid;
    grid.depths = a.depths;
    grid.widths = a.widths;
    grid.activations.clear();
    for (const auto& s : a.activations) grid.activations.push_back(nn::activation_from_string(s));
    grid.kinds.clear();
    for (const auto& s : a.descriptors) grid.kinds.push_back(dsp::feature_kind_from_string(s));
    grid.width_divisor = a.width_divisor;
    grid.validate();
    const auto tc = a.train.config();
    const auto manifest = manifest_at(a.manifest);

    std::map<dsp::FeatureKind, train::Dataset> built;
    std::map<dsp::FeatureKind, const train::Dataset*> datasets;
    for (auto kind : grid.kinds) {
        auto opts = a.features;
        opts.descriptor = dsp::to_string(kind);
        built[kind] = dataset_for(manifest, opts.config(), a.cache_dir, c.jobs);
        datasets[kind] = &built[kind];
    }
    train::CvOptions cv;
    cv.n_folds = a.folds;
    cv.train_fraction = a.train_fraction;
    cv.master_seed = c.seed;
    cv.jobs = c.jobs;
    std::optional<fs::path> checkpoint;
    if (!a.checkpoint_dir.empty()) checkpoint = a.checkpoint_dir;
    const auto result = train::grid_search(datasets, grid, manifest.num_classes(), tc, cv, checkpoint);
    std::cout << train::grid_table(result);
    if (!a.report.empty()) {
        nlohmann::json cells = nlohmann::json::array();
        for (const auto& cell : result.cells) cells.push_back(cell.to_json());
        nlohmann::json j{{"cells", cells}, {"seed", c.seed}, {"train", tc.to_json()}};
        if (result.best) j["best"] = result.cells[*result.best].key();
        write_json(a.report, j);
    }
    return 0;
}

int run_eval(const EvalArgs& a, const Common& c) {
    const auto m = load_model(a.model);
    const auto manifest = manifest_at(a.manifest);
    const auto labels = model_labels(manifest, m);
    auto data = train::build_dataset(manifest, *m.features, nullptr, c.jobs);
    std::vector<const train::Sample*> samples;
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
        data.samples[i].label = labels[i];
        samples.push_back(&data.samples[i]);
    }
    const auto metrics = train::evaluate(m, samples);
    std::cout << train::classification_report(metrics, m.label_set);
    if (!a.report.empty()) write_json(a.report, train::to_json(metrics, m.label_set));
    if (!a.confusion.empty()) write_text(a.confusion, train::confusion_csv(metrics, m.label_set));
    return 0;
}

int run_durations(const DurationsArgs& a, const Common& c) {
    const auto m = load_model(a.model);
    const auto clips = clips_for(manifest_at(a.manifest), m, c.jobs);
    const auto points = train::duration_study(m, pointers(clips), a.durations);
    nlohmann::json rows = nlohmann::json::array();
    std::cout << "seconds  accuracy  clips\n";
    for (const auto& p : points) {
        char line[64];
        if (p.accuracy) {
            std::snprintf(line, sizeof line, "%7.1f  %8.4f  %5zu\n", p.seconds, *p.accuracy, p.evaluated);
        } else {
            std::snprintf(line, sizeof line, "%7.1f  %8s  %5zu\n", p.seconds, "skipped", p.evaluated);
        }
        std::cout << line;
        if (p.warning) note("warning: " + *p.warning);
        nlohmann::json r{{"seconds", p.seconds}, {"evaluated", p.evaluated}};
        r["accuracy"] = p.accuracy ? nlohmann::json(*p.accuracy) : nlohmann::json(nullptr);
        if (p.warning) r["warning"] = *p.warning;
        rows.push_back(r);
    }
    if (!a.report.empty()) write_json(a.report, {{"durations", rows}});
    return 0;
}

int run_detect(const DetectArgs& a, const Common& c) {
    stream::ChunkParams cp;
    cp.chunk_seconds = a.chunk;
    cp.hop_seconds = a.hop;
    cp.min_confidence = a.min_confidence;
    cp.low_energy_dbfs = a.low_energy_db;
    cp.validate();
    if (a.input.empty() == a.manifest.empty()) throw ParameterError("give exactly one of --input or --manifest");
    const auto m = load_model(a.model);

    if (!a.manifest.empty()) {
        const auto clips = clips_for(manifest_at(a.manifest), m, c.jobs);
        const auto r = stream::multispecies_eval(m, pointers(clips), cp);
        std::cout << r.to_json(m.label_set).dump() << '\n';
        if (!a.cooccurrence.empty()) write_text(a.cooccurrence, stream::cooccurrence_csv(r, m.label_set));
        return 0;
    }

    auto events = stream::detect(m, audio::decode_audio(a.input), cp);
    if (a.merge) events = stream::merge_events(events);
    for (const auto& e : events) std::cout << e.to_json().dump() << '\n';
    if (a.timeline) std::cerr << stream::timeline_text(stream::merge_events(events));
    return 0;
}

int run_gradcheck(const Common& c) {
    constexpr double kTolerance = 1e-4;
    bool ok = true;
    char line[96];
    for (const auto& check : model::run_gradcheck_suite(c.seed + 1)) {
        const double err = check.report.max_rel_error();
        const bool pass = check.report.passed(kTolerance);
        ok = ok && pass;
        std::snprintf(line, sizeof line, "%-18s %.3e  %s\n", check.layer.c_str(), err, pass ? "ok" : "FAIL");
        std::cout << line;
    }
    const double control = model::fault_injected_check(c.seed + 1).max_rel_error();
    const bool caught = control > 1e-2;
    ok = ok && caught;
    std::snprintf(line, sizeof line, "%-18s %.3e  %s\n", "injected-fault", control, caught ? "detected" : "MISSED");
    std::cout << line;
    return ok ? 0 : kGradCheckFailed;
}

}  // namespace birdfcn::cli
