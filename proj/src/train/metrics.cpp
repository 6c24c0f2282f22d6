#include "birdfcn/train/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "birdfcn/audio/manifest.hpp"
#include "birdfcn/error.hpp"

namespace birdfcn::train {

Metrics compute_metrics(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& predicted,
                        std::size_t n_classes) {
    if (truth.empty()) throw ParameterError("cannot score an empty prediction set");
    if (truth.size() != predicted.size()) {
        throw ParameterError("truth has " + std::to_string(truth.size()) + " labels but there are " +
                             std::to_string(predicted.size()) + " predictions");
    }
    Metrics m;
    m.total = truth.size();
    m.confusion.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] >= n_classes || predicted[i] >= n_classes) {
            throw IndexError("label outside [0, " + std::to_string(n_classes) + ")");
        }
        ++m.confusion[truth[i]][predicted[i]];
    }
    std::size_t correct = 0;
    for (std::size_t c = 0; c < n_classes; ++c) correct += m.confusion[c][c];
    m.accuracy = static_cast<double>(correct) / static_cast<double>(m.total);

    m.per_class.resize(n_classes);
    for (std::size_t c = 0; c < n_classes; ++c) {
        std::size_t predicted_c = 0, support = 0;
        for (std::size_t r = 0; r < n_classes; ++r) {
            predicted_c += m.confusion[r][c];
            support += m.confusion[c][r];
        }
        auto& pc = m.per_class[c];
        pc.support = support;
        const double tp = static_cast<double>(m.confusion[c][c]);
        pc.precision = predicted_c ? tp / static_cast<double>(predicted_c) : 0.0;
        pc.recall = support ? tp / static_cast<double>(support) : 0.0;
        pc.f1 = pc.precision + pc.recall > 0.0 ? 2.0 * pc.precision * pc.recall / (pc.precision + pc.recall) : 0.0;
        m.macro.precision += pc.precision;
        m.macro.recall += pc.recall;
        m.macro.f1 += pc.f1;
        const double w = static_cast<double>(support);
        m.weighted.precision += w * pc.precision;
        m.weighted.recall += w * pc.recall;
        m.weighted.f1 += w * pc.f1;
    }
    const double k = static_cast<double>(n_classes), n = static_cast<double>(m.total);
    m.macro = {m.macro.precision / k, m.macro.recall / k, m.macro.f1 / k};
    m.weighted = {m.weighted.precision / n, m.weighted.recall / n, m.weighted.f1 / n};
    return m;
}

nlohmann::json to_json(const Metrics& m, const std::vector<std::string>& label_set) {
    nlohmann::json per_class = nlohmann::json::array();
    for (std::size_t c = 0; c < m.per_class.size(); ++c) {
        const auto& pc = m.per_class[c];
        per_class.push_back({{"label", c < label_set.size() ? label_set[c] : std::to_string(c)},
                             {"precision", pc.precision},
                             {"recall", pc.recall},
                             {"f1", pc.f1},
                             {"support", pc.support}});
    }
    auto avg = [](const Averages& a) {
        return nlohmann::json{{"precision", a.precision}, {"recall", a.recall}, {"f1", a.f1}};
    };
    return {{"accuracy", m.accuracy}, {"total", m.total},          {"per_class", per_class},
            {"macro", avg(m.macro)},  {"weighted", avg(m.weighted)}, {"confusion", m.confusion}};
}

std::string confusion_csv(const Metrics& m, const std::vector<std::string>& label_set) {
    std::ostringstream os;
    os << "truth\\predicted";
    for (const auto& name : label_set) os << ',' << audio::csv_escape(name);
    os << '\n';
    for (std::size_t r = 0; r < m.confusion.size(); ++r) {
        os << audio::csv_escape(r < label_set.size() ? label_set[r] : std::to_string(r));
        for (std::size_t v : m.confusion[r]) os << ',' << v;
        os << '\n';
    }
    return os.str();
}

std::string classification_report(const Metrics& m, const std::vector<std::string>& label_set) {
    std::size_t width = 12;
    for (const auto& name : label_set) width = std::max(width, name.size() + 2);
    std::ostringstream os;
    char buf[128];
    auto row = [&](const std::string& name, double p, double r, double f, std::size_t s) {
        std::snprintf(buf, sizeof buf, "%10.2f%10.2f%10.2f%10zu\n", p, r, f, s);
        os << name << std::string(width - std::min(width, name.size()), ' ') << buf;
    };
    os << std::string(width, ' ') << " precision    recall  f1-score   support\n\n";
    for (std::size_t c = 0; c < m.per_class.size(); ++c) {
        const auto& pc = m.per_class[c];
        row(c < label_set.size() ? label_set[c] : std::to_string(c), pc.precision, pc.recall, pc.f1, pc.support);
    }
    os << '\n';
    std::snprintf(buf, sizeof buf, "%30.2f%10zu\n", m.accuracy, m.total);
    os << "accuracy" << std::string(width - 8, ' ') << buf;
    row("macro avg", m.macro.precision, m.macro.recall, m.macro.f1, m.total);
    row("weighted avg", m.weighted.precision, m.weighted.recall, m.weighted.f1, m.total);
    return os.str();
}

}  // namespace birdfcn::train
