#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "episodic_maml/errors.hpp"
#include "episodic_maml/mlp.hpp"

namespace episodic_maml {

// rows = true local class, cols = predicted local class
struct ConfusionMatrix {
    int n_classes = 0;
    std::vector<std::int64_t> counts;

    explicit ConfusionMatrix(int n = 0)
        : n_classes(n), counts(static_cast<std::size_t>(n) * n, 0) {}

    std::int64_t& at(int truth, int predicted) {
        return counts[static_cast<std::size_t>(truth) * n_classes + predicted];
    }
    std::int64_t at(int truth, int predicted) const {
        return counts[static_cast<std::size_t>(truth) * n_classes + predicted];
    }

    std::int64_t total() const {
        std::int64_t t = 0;
        for (auto c : counts) t += c;
        return t;
    }

    std::int64_t row_sum(int truth) const {
        std::int64_t t = 0;
        for (int p = 0; p < n_classes; ++p) t += at(truth, p);
        return t;
    }

    std::int64_t col_sum(int predicted) const {
        std::int64_t t = 0;
        for (int r = 0; r < n_classes; ++r) t += at(r, predicted);
        return t;
    }
};

struct MetricsRecord {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double loss = 0.0;
    int batch_index = 0;
};

/// Argmax class per logit row; ties resolve to the lowest class index.
inline std::vector<int> argmax_predictions(const std::vector<double>& logits, int n_classes) {
    if (n_classes < 1) throw ArgumentError("argmax_predictions: n_classes must be >= 1");
    if (logits.size() % n_classes != 0)
        throw ShapeError("argmax_predictions: logits size not a multiple of n_classes");
    const std::size_t n = logits.size() / n_classes;
    std::vector<int> preds(n);
    for (std::size_t r = 0; r < n; ++r) {
        const double* z = logits.data() + r * n_classes;
        int best = 0;
        for (int c = 1; c < n_classes; ++c)
            if (z[c] > z[best]) best = c;
        preds[r] = best;
    }
    return preds;
}

inline ConfusionMatrix confusion_from_predictions(const std::vector<int>& predictions,
                                                  const std::vector<int>& labels,
                                                  int n_classes) {
    if (predictions.size() != labels.size())
        throw ShapeError("confusion: prediction/label count mismatch");
    ConfusionMatrix conf(n_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= n_classes)
            throw ArgumentError("confusion: label " + std::to_string(labels[i]) +
                                " out of range [0, " + std::to_string(n_classes) + ")");
        conf.at(labels[i], predictions[i]) += 1;
    }
    return conf;
}

/// Accuracy plus macro one-vs-rest precision/recall (0/0 counts as 0) and the
/// mean cross-entropy loss of the logits.
inline MetricsRecord episode_metrics(const std::vector<double>& logits,
                                     const std::vector<int>& labels, int n_classes) {
    if (labels.empty()) throw ArgumentError("episode_metrics: empty label set");
    const auto preds = argmax_predictions(logits, n_classes);
    const auto conf = confusion_from_predictions(preds, labels, n_classes);

    MetricsRecord rec;
    std::int64_t correct = 0;
    for (int c = 0; c < n_classes; ++c) correct += conf.at(c, c);
    rec.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());

    double precision_sum = 0.0;
    double recall_sum = 0.0;
    for (int c = 0; c < n_classes; ++c) {
        const std::int64_t tp = conf.at(c, c);
        const std::int64_t predicted = conf.col_sum(c);
        const std::int64_t actual = conf.row_sum(c);
        precision_sum += predicted > 0 ? static_cast<double>(tp) / predicted : 0.0;
        recall_sum += actual > 0 ? static_cast<double>(tp) / actual : 0.0;
    }
    rec.precision = precision_sum / n_classes;
    rec.recall = recall_sum / n_classes;
    rec.loss = nll_from_logits(logits, labels, n_classes);
    return rec;
}

/// Arithmetic mean of every metric field across the records.
inline MetricsRecord aggregate_metrics(const std::vector<MetricsRecord>& records,
                                       int batch_index = 0) {
    if (records.empty()) throw ArgumentError("aggregate_metrics: no records");
    MetricsRecord agg;
    for (const auto& r : records) {
        agg.accuracy += r.accuracy;
        agg.precision += r.precision;
        agg.recall += r.recall;
        agg.loss += r.loss;
    }
    const double n = static_cast<double>(records.size());
    agg.accuracy /= n;
    agg.precision /= n;
    agg.recall /= n;
    agg.loss /= n;
    agg.batch_index = batch_index;
    return agg;
}

/// Sum(v_i c_i) / Sum(c_i): per-class values weighted by class instance counts.
inline double weighted_average(std::span<const double> values,
                               std::span<const std::int64_t> counts) {
    if (values.size() != counts.size())
        throw ArgumentError("weighted_average: values/counts length mismatch");
    double weighted = 0.0;
    std::int64_t total = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (counts[i] < 0) throw ArgumentError("weighted_average: negative count");
        weighted += values[i] * static_cast<double>(counts[i]);
        total += counts[i];
    }
    if (total == 0) throw ArgumentError("weighted_average: total count is zero");
    return weighted / static_cast<double>(total);
}

}  // namespace episodic_maml
