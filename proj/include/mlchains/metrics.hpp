#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlchains/dataset.hpp"

namespace mlchains {

// One evaluated example: ground truth, per-class scores, thresholded set.
struct PredictionItem {
    LabelSet truth;
    std::vector<double> scores;
    LabelSet predicted;
};

using PredictionBatch = std::vector<PredictionItem>;

struct MetricsReport {
    double hamming_loss = 0.0;
    double subset_01_loss = 0.0;
    double rank_loss = 0.0;
    double one_error = 0.0;
    double coverage = 0.0;
    int n = 0;
};

// Column order matches the result tables emitted by the harness.
inline const std::vector<std::string>& measure_names() {
    static const std::vector<std::string> names = {"hamming_loss", "subset_01_loss", "rank_loss",
                                                   "one_error", "coverage"};
    return names;
}

inline double measure_value(const MetricsReport& report, const std::string& measure) {
    if (measure == "hamming_loss") return report.hamming_loss;
    if (measure == "subset_01_loss") return report.subset_01_loss;
    if (measure == "rank_loss") return report.rank_loss;
    if (measure == "one_error") return report.one_error;
    if (measure == "coverage") return report.coverage;
    throw std::runtime_error("unknown measure: " + measure);
}

namespace detail {

inline void validate_batch(const PredictionBatch& batch) {
    if (batch.empty()) throw std::runtime_error("metrics: empty batch");
    const int c = batch[0].truth.size();
    if (c < 1) throw std::runtime_error("metrics: zero classes");
    for (const auto& item : batch) {
        if (item.truth.size() != c || item.predicted.size() != c ||
            static_cast<int>(item.scores.size()) != c)
            throw std::runtime_error("metrics: inconsistent class count in batch");
        for (double s : item.scores)
            if (!std::isfinite(s)) throw std::runtime_error("metrics: non-finite score");
    }
}

// Classes in descending score order, ties broken toward the lowest class index.
inline std::vector<int> ranking(const std::vector<double>& scores) {
    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });
    return order;
}

}  // namespace detail

inline double hamming_loss(const PredictionBatch& batch) {
    detail::validate_batch(batch);
    const int c = batch[0].truth.size();
    double total = 0.0;
    for (const auto& item : batch) {
        int diff = 0;
        for (int j = 0; j < c; ++j) diff += item.truth.test(j) != item.predicted.test(j);
        total += static_cast<double>(diff) / c;
    }
    return total / static_cast<double>(batch.size());
}

inline double subset_01_loss(const PredictionBatch& batch) {
    detail::validate_batch(batch);
    double wrong = 0.0;
    for (const auto& item : batch) wrong += item.predicted != item.truth ? 1.0 : 0.0;
    return wrong / static_cast<double>(batch.size());
}

// Fraction of relevant/irrelevant pairs ordered incorrectly by score; ties
// count 0.5. Examples with empty or full truth sets contribute 0.
inline double rank_loss(const PredictionBatch& batch) {
    detail::validate_batch(batch);
    const int c = batch[0].truth.size();
    double total = 0.0;
    for (const auto& item : batch) {
        const int relevant = item.truth.count();
        if (relevant == 0 || relevant == c) continue;
        double bad = 0.0;
        for (int a = 0; a < c; ++a) {
            if (!item.truth.test(a)) continue;
            for (int b = 0; b < c; ++b) {
                if (item.truth.test(b)) continue;
                if (item.scores[a] < item.scores[b]) bad += 1.0;
                else if (item.scores[a] == item.scores[b]) bad += 0.5;
            }
        }
        total += bad / (static_cast<double>(relevant) * static_cast<double>(c - relevant));
    }
    return total / static_cast<double>(batch.size());
}

inline double one_error(const PredictionBatch& batch) {
    detail::validate_batch(batch);
    const int c = batch[0].truth.size();
    double errors = 0.0;
    for (const auto& item : batch) {
        int top = 0;
        for (int j = 1; j < c; ++j)
            if (item.scores[j] > item.scores[top]) top = j;
        if (!item.truth.test(top)) errors += 1.0;
    }
    return errors / static_cast<double>(batch.size());
}

// Mean (1-based rank of the worst-ranked relevant label) - 1; empty truth
// sets contribute 0.
inline double coverage(const PredictionBatch& batch) {
    detail::validate_batch(batch);
    double total = 0.0;
    for (const auto& item : batch) {
        if (item.truth.count() == 0) continue;
        const auto order = detail::ranking(item.scores);
        int deepest = 0;
        for (std::size_t pos = 0; pos < order.size(); ++pos)
            if (item.truth.test(order[pos])) deepest = static_cast<int>(pos);
        total += static_cast<double>(deepest);
    }
    return total / static_cast<double>(batch.size());
}

inline MetricsReport compute_metrics(const PredictionBatch& batch) {
    MetricsReport report;
    report.hamming_loss = hamming_loss(batch);
    report.subset_01_loss = subset_01_loss(batch);
    report.rank_loss = rank_loss(batch);
    report.one_error = one_error(batch);
    report.coverage = coverage(batch);
    report.n = static_cast<int>(batch.size());
    return report;
}

// ---------------------------------------------------------------------------
// Win-loss aggregation across classifiers
// ---------------------------------------------------------------------------

struct WinLossEntry {
    int wins = 0;
    int losses = 0;
    int ties = 0;
};

// Pairwise win-loss counts over every (dataset, measure) comparison. All five
// measures are losses, so the strictly lower value wins; equal values tie and
// count for neither side.
struct WinLossTable {
    std::vector<std::string> classifiers;
    std::vector<WinLossEntry> entries;  // row-major [a][b]

    const WinLossEntry& versus(const std::string& a, const std::string& b) const {
        const auto ia = std::find(classifiers.begin(), classifiers.end(), a);
        const auto ib = std::find(classifiers.begin(), classifiers.end(), b);
        if (ia == classifiers.end() || ib == classifiers.end())
            throw std::runtime_error("win_loss: unknown classifier");
        return entries[static_cast<std::size_t>(ia - classifiers.begin()) * classifiers.size() +
                       static_cast<std::size_t>(ib - classifiers.begin())];
    }
};

// reports[classifier][dataset]; every classifier must cover the same datasets.
inline WinLossTable win_loss(const std::vector<std::string>& classifiers,
                             const std::vector<std::vector<MetricsReport>>& reports) {
    if (classifiers.size() != reports.size())
        throw std::runtime_error("win_loss: classifier/report count mismatch");
    const std::size_t k = classifiers.size();
    const std::size_t datasets = k == 0 ? 0 : reports[0].size();
    for (const auto& r : reports)
        if (r.size() != datasets) throw std::runtime_error("win_loss: dataset count mismatch");

    WinLossTable table;
    table.classifiers = classifiers;
    table.entries.assign(k * k, WinLossEntry{});
    for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = 0; b < k; ++b) {
            if (a == b) continue;
            WinLossEntry& cell = table.entries[a * k + b];
            for (std::size_t ds = 0; ds < datasets; ++ds) {
                for (const auto& measure : measure_names()) {
                    const double va = measure_value(reports[a][ds], measure);
                    const double vb = measure_value(reports[b][ds], measure);
                    if (va < vb) ++cell.wins;
                    else if (va > vb) ++cell.losses;
                    else ++cell.ties;
                }
            }
        }
    }
    return table;
}

}  // namespace mlchains
