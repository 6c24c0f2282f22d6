#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace birdfcn::train {

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
};

struct Averages {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct Metrics {
    /// confusion[truth][predicted]
    std::vector<std::vector<std::size_t>> confusion;
    double accuracy = 0.0;
    std::vector<ClassMetrics> per_class;
    Averages macro;
    Averages weighted;
    std::size_t total = 0;
};

/// A class never predicted has precision 0; a class never present has recall 0;
/// F1 is 0 whenever precision + recall is 0. Macro averages run over all n_classes.
/// ParameterError on empty or mismatched input, IndexError on a label >= n_classes.
Metrics compute_metrics(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& predicted,
                        std::size_t n_classes);

nlohmann::json to_json(const Metrics& m, const std::vector<std::string>& label_set);

/// Confusion matrix with a header row and a leading label column.
std::string confusion_csv(const Metrics& m, const std::vector<std::string>& label_set);

/// Per-class table in the usual precision / recall / f1-score / support layout.
std::string classification_report(const Metrics& m, const std::vector<std::string>& label_set);

}  // namespace birdfcn::train
