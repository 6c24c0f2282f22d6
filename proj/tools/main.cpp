// birdfcn: command-line front end for the bird-song classifier pipeline.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "birdfcn/error.hpp"
#include "commands.hpp"

using namespace birdfcn::cli;

namespace {

constexpr const char* kExitCodes = R"(Exit codes:
  0   success
  1   unexpected internal error
  2   usage error (unknown flag, bad value, missing argument)
  3   file could not be read or written
  4   unsupported file format
  5   invalid parameter or configuration
  6   input shape, length or index out of range; empty result
  7   dataset validation failed
  8   archive fetch or response parsing failed
  9   numeric failure or training divergence
  10  corrupted model or cache file
  11  gradient check above tolerance
  12  computation graph misuse
  13  events or calls out of order

Any flag may also come from the file given to --config, one `key = value` per line.
Subcommand flags go under a `[subcommand]` header or as `subcommand.key = value`.)";

void add_features(CLI::App* app, FeatureOptions& f) {
    app->add_option("--descriptor", f.descriptor, "Input features: mel-db (alias mel) or mfcc")
        ->check(CLI::IsMember({"mel-db", "mel", "mfcc"}))
        ->capture_default_str();
    app->add_option("--n-mels", f.n_mels, "Mel bands")->capture_default_str();
    app->add_option("--n-mfcc", f.n_mfcc, "Cepstral coefficients kept")->capture_default_str();
    app->add_option("--fmin", f.fmin, "Lowest filterbank frequency, Hz")->capture_default_str();
    app->add_option("--fmax", f.fmax, "Highest filterbank frequency, Hz")->capture_default_str();
    app->add_option("--preemphasis", f.preemphasis, "Pre-emphasis coefficient (MFCC path)")->capture_default_str();
}

void add_training(CLI::App* app, TrainOptions& t) {
    app->add_option("--epochs", t.epochs, "Maximum epochs")->capture_default_str();
    app->add_option("--batch-size", t.batch_size, "Minibatch size")->capture_default_str();
    app->add_option("--patience", t.patience, "Early-stopping patience, epochs")->capture_default_str();
    app->add_option("--min-delta", t.min_delta, "Smallest validation-loss drop counted as improvement")
        ->capture_default_str();
    app->add_option("--learning-rate", t.learning_rate, "Adam step size")->capture_default_str();
    app->add_option("--validation-fraction", t.validation_fraction,
                    "Share of the training split held out for early stopping")
        ->capture_default_str();
    app->add_flag("--validate-on-test", t.validate_on_test, "Monitor the test split for early stopping (leaks)");
}

void add_model(CLI::App* app, ModelOptions& m) {
    app->add_option("--depth", m.depth, "Conv layers including the 1x1 projection: 3, 4 or 6")->capture_default_str();
    app->add_option("--widest", m.widest, "Widest conv layer of the grid family")->capture_default_str();
    app->add_option("--widths", m.widths, "Explicit hidden widths, comma separated (overrides --depth/--widest)")
        ->delimiter(',');
    app->add_option("--width-divisor", m.width_divisor, "Divide every width by this factor")->capture_default_str();
    app->add_option("--activation", m.activation, "relu, tanh or adaptive")
        ->check(CLI::IsMember({"relu", "tanh", "adaptive"}))
        ->capture_default_str();
    app->add_option("--adaptive-base", m.adaptive_base, "Base function of the adaptive activation: tanh or relu")
        ->check(CLI::IsMember({"tanh", "relu"}))
        ->capture_default_str();
    app->add_option("--adaptive-scale", m.adaptive_scale, "Fixed scale n of the adaptive activation")
        ->capture_default_str();
    app->add_option("--dropout", m.dropout, "Dropout rate after each hidden conv block")->capture_default_str();
}

std::string one_line(std::string s) {
    for (auto& ch : s) {
        if (ch == '\n' || ch == '\r') ch = ' ';
    }
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bird species classification with a fully convolutional network", "birdfcn"};
    app.footer(kExitCodes);
    app.require_subcommand(1);
    app.set_config("--config", "", "File of key = value flag overrides");
    app.allow_config_extras(CLI::config_extras_mode::error);

    Common common;
    app.add_option("--seed", common.seed, "Master random seed")->capture_default_str();
    app.add_option("--jobs", common.jobs, "Worker threads; 1 keeps runs bitwise reproducible")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();

    FetchArgs fetch;
    auto* fetch_cmd = app.add_subcommand("fetch", "Download recordings from the sound archive into a cache");
    fetch_cmd->add_option("--species", fetch.species, "Species query, repeatable")->required();
    fetch_cmd->add_option("--max-results", fetch.max_results, "Recordings per species")->capture_default_str();
    fetch_cmd->add_option("--cache-dir", fetch.cache_dir, "Download cache directory")->required();
    fetch_cmd->add_option("--fetch-config", fetch.fetch_config, "JSON file overriding endpoint and rate settings")
        ->check(CLI::ExistingFile);
    fetch_cmd->add_option("--manifest-out", fetch.manifest_out, "Write a manifest of the fetched files");

    PrepareArgs prepare;
    auto* prepare_cmd = app.add_subcommand("prepare", "Decode, trim silence and cap clips; write WAVs and a manifest");
    prepare_cmd->add_option("--manifest", prepare.manifest, "Input manifest CSV (path,species)")->required();
    prepare_cmd->add_option("--out-dir", prepare.out_dir, "Output directory for WAVs and manifest.csv")->required();
    prepare_cmd->add_option("--max-seconds", prepare.max_seconds, "Keep at most this much audio per clip")
        ->capture_default_str();
    prepare_cmd->add_option("--top-db", prepare.top_db, "Silence threshold below the loudest frame, dB")
        ->capture_default_str();

    FeaturesArgs features;
    auto* features_cmd = app.add_subcommand("features", "Extract and cache feature matrices");
    features_cmd->add_option("--manifest", features.manifest, "Manifest CSV")->required();
    features_cmd->add_option("--cache-dir", features.cache_dir, "Feature cache directory")->required();
    add_features(features_cmd, features.features);

    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "Cross-validate a model, or train one with --folds 0");
    train_cmd->add_option("--manifest", train.manifest, "Manifest CSV")->required();
    train_cmd->add_option("--cache-dir", train.cache_dir, "Optional feature cache directory");
    train_cmd->add_option("--folds", train.folds, "Monte Carlo folds; 0 trains a single model")->capture_default_str();
    train_cmd->add_option("--train-fraction", train.train_fraction, "Train share of each fold")->capture_default_str();
    train_cmd->add_option("--knn", train.knn, "Also score a k-NN baseline with this k (0 = off)")
        ->capture_default_str();
    train_cmd->add_option("--model-out", train.model_out, "Weights file for --folds 0");
    train_cmd->add_option("--report", train.report, "JSON report path");
    add_features(train_cmd, train.features);
    add_model(train_cmd, train.model);
    add_training(train_cmd, train.train);

    GridArgs grid;
    auto* grid_cmd = app.add_subcommand("gridsearch", "Cross-validate every depth x width x activation x descriptor");
    grid_cmd->add_option("--manifest", grid.manifest, "Manifest CSV")->required();
    grid_cmd->add_option("--cache-dir", grid.cache_dir, "Optional feature cache directory");
    grid_cmd->add_option("--depths", grid.depths, "Depths to try")->delimiter(',')->capture_default_str();
    grid_cmd->add_option("--widths", grid.widths, "Widest-layer sizes to try")->delimiter(',')->capture_default_str();
    grid_cmd->add_option("--activations", grid.activations, "Activations to try")
        ->delimiter(',')
        ->check(CLI::IsMember({"relu", "tanh", "adaptive"}))
        ->capture_default_str();
    grid_cmd->add_option("--descriptors", grid.descriptors, "Feature kinds to try")
        ->delimiter(',')
        ->check(CLI::IsMember({"mel-db", "mel", "mfcc"}))
        ->capture_default_str();
    grid_cmd->add_option("--width-divisor", grid.width_divisor, "Divide every width by this factor")
        ->capture_default_str();
    grid_cmd->add_option("--folds", grid.folds, "Monte Carlo folds per cell")->capture_default_str();
    grid_cmd->add_option("--train-fraction", grid.train_fraction, "Train share of each fold")->capture_default_str();
    grid_cmd->add_option("--checkpoint-dir", grid.checkpoint_dir, "Resume from and record finished cells here");
    grid_cmd->add_option("--report", grid.report, "JSON report path");
    add_features(grid_cmd, grid.features);
    add_training(grid_cmd, grid.train);
    grid_cmd->remove_option(grid_cmd->get_option("--descriptor"));

    EvalArgs eval;
    auto* eval_cmd = app.add_subcommand("eval", "Classification report and confusion matrix for a saved model");
    eval_cmd->add_option("--model", eval.model, "Weights file")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--manifest", eval.manifest, "Manifest CSV")->required();
    eval_cmd->add_option("--report", eval.report, "JSON metrics path");
    eval_cmd->add_option("--confusion", eval.confusion, "Confusion matrix CSV path");

    DurationsArgs durations;
    auto* durations_cmd = app.add_subcommand("durations", "Accuracy with clips truncated to each duration");
    durations_cmd->add_option("--model", durations.model, "Weights file")->required()->check(CLI::ExistingFile);
    durations_cmd->add_option("--manifest", durations.manifest, "Manifest CSV")->required();
    durations_cmd->add_option("--durations", durations.durations, "Seconds, comma separated")
        ->delimiter(',')
        ->capture_default_str();
    durations_cmd->add_option("--report", durations.report, "JSON report path");

    DetectArgs detect;
    auto* detect_cmd = app.add_subcommand("detect", "Chunked detection events for a recording, or a multispecies evaluation");
    detect_cmd->add_option("--model", detect.model, "Weights file")->required()->check(CLI::ExistingFile);
    detect_cmd->add_option("--input", detect.input, "WAV file; events go to standard output, one JSON object per line");
    detect_cmd->add_option("--manifest", detect.manifest, "Evaluate chunk vs whole-clip accuracy over a manifest");
    detect_cmd->add_option("--chunk", detect.chunk, "Chunk length, seconds")->capture_default_str();
    detect_cmd->add_option("--hop", detect.hop, "Chunk stride, seconds")->capture_default_str();
    detect_cmd->add_option("--min-confidence", detect.min_confidence, "Drop events below this probability")
        ->capture_default_str();
    detect_cmd->add_option("--low-energy-db", detect.low_energy_db, "Flag chunks quieter than this, dBFS")
        ->capture_default_str();
    detect_cmd->add_flag("--merge", detect.merge, "Join consecutive same-species events");
    detect_cmd->add_flag("--timeline", detect.timeline, "Print a merged timeline to standard error");
    detect_cmd->add_option("--cooccurrence", detect.cooccurrence, "Co-occurrence CSV path (with --manifest)");

    auto* gradcheck_cmd = app.add_subcommand(
        "gradcheck", "Finite-difference check of every layer type; nonzero exit if any error exceeds 1e-4");

    for (auto* sub : app.get_subcommands({})) sub->footer(kExitCodes);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "birdfcn: " << one_line(e.what()) << '\n';
        return 2;
    }

    try {
        if (*fetch_cmd) return run_fetch(fetch, common);
        if (*prepare_cmd) return run_prepare(prepare, common);
        if (*features_cmd) return run_features(features, common);
        if (*train_cmd) return run_train(train, common);
        if (*grid_cmd) return run_gridsearch(grid, common);
        if (*eval_cmd) return run_eval(eval, common);
        if (*durations_cmd) return run_durations(durations, common);
        if (*detect_cmd) return run_detect(detect, common);
        if (*gradcheck_cmd) return run_gradcheck(common);
    } catch (const birdfcn::Error& e) {
        std::cerr << "birdfcn: " << one_line(e.what()) << '\n';
        return e.exit_code();
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "birdfcn: " << one_line(e.what()) << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "birdfcn: internal error: " << one_line(e.what()) << '\n';
        return 1;
    }
    return 1;
}
