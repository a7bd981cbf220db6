#pragma once
// Cumulative-sum trace features and a k-nearest-neighbour baseline
// classifier over them.
//
// A trace maps to [count_out, count_in, bytes_out, bytes_in] followed by
// n_points samples of the running signed byte total, linearly interpolated
// at evenly spaced positions across the cell sequence.

#include <wf/errors.hpp>
#include <wf/trace.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

namespace wf {

inline constexpr std::size_t kCumulPoints = 100;

inline std::vector<double> cumul_features(const Trace& trace, std::size_t n_points = kCumulPoints) {
    if (n_points < 2) throw ConfigError("cumul features need at least 2 sample points");
    if (trace.empty()) throw DataError("cannot featurize an empty trace");

    double count_out = 0.0, count_in = 0.0, bytes_out = 0.0, bytes_in = 0.0;
    std::vector<double> running;
    running.reserve(trace.size());
    double total = 0.0;
    for (const Cell& cell : trace.cells) {
        if (cell.outgoing()) {
            count_out += 1.0;
            bytes_out += static_cast<double>(cell.size);
        } else {
            count_in += 1.0;
            bytes_in += static_cast<double>(-cell.size);
        }
        total += static_cast<double>(cell.size);
        running.push_back(total);
    }

    std::vector<double> features{count_out, count_in, bytes_out, bytes_in};
    features.reserve(4 + n_points);
    const std::size_t m = running.size();
    const double step = m > 1 ? static_cast<double>(m - 1) / static_cast<double>(n_points - 1) : 0.0;
    for (std::size_t p = 0; p < n_points; ++p) {
        const double pos = static_cast<double>(p) * step;
        std::size_t lo = static_cast<std::size_t>(pos);
        if (lo >= m - 1) {
            features.push_back(running[m - 1]);
            continue;
        }
        const double frac = pos - static_cast<double>(lo);
        features.push_back(running[lo] + frac * (running[lo + 1] - running[lo]));
    }
    return features;
}

inline std::vector<std::string> cumul_feature_names(std::size_t n_points = kCumulPoints) {
    std::vector<std::string> names{"count_out", "count_in", "bytes_out", "bytes_in"};
    names.reserve(4 + n_points);
    for (std::size_t p = 0; p < n_points; ++p) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "c%03zu", p);
        names.emplace_back(buf);
    }
    return names;
}

// ---------------------------------------------------------------------------
// k-nearest-neighbour baseline

struct KnnModel {
    std::vector<std::vector<double>> train;  // standardized rows
    std::vector<std::size_t> labels;         // class index per row
    std::vector<double> mean;                // per-feature training mean
    std::vector<double> sd;                  // per-feature training stddev (0 = constant feature)
    std::size_t classes = 0;

    std::size_t width() const { return mean.size(); }
};

namespace cumuldetail {

inline std::vector<double> standardize(const std::vector<double>& row,
                                       const std::vector<double>& mean,
                                       const std::vector<double>& sd) {
    std::vector<double> z(row.size());
    for (std::size_t j = 0; j < row.size(); ++j)
        z[j] = sd[j] > 0.0 ? (row[j] - mean[j]) / sd[j] : 0.0;
    return z;
}

}  // namespace cumuldetail

// Fits feature standardisation from the training rows only; constant
// features are neutralised rather than dividing by zero.
inline KnnModel knn_fit(const std::vector<std::vector<double>>& rows,
                        const std::vector<std::size_t>& labels, std::size_t classes) {
    if (rows.empty()) throw DataError("k-NN fit needs at least one training row");
    if (rows.size() != labels.size())
        throw DataError("k-NN fit: row/label count mismatch");
    if (classes < 1) throw DataError("k-NN fit needs at least one class");
    const std::size_t width = rows.front().size();
    if (width == 0) throw DataError("k-NN fit: empty feature rows");

    KnnModel model;
    model.classes = classes;
    model.mean.assign(width, 0.0);
    model.sd.assign(width, 0.0);
    const double n = static_cast<double>(rows.size());

    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != width) throw DataError("k-NN fit: ragged feature rows");
        if (labels[i] >= classes) throw DataError("k-NN fit: label out of range");
        for (std::size_t j = 0; j < width; ++j) model.mean[j] += rows[i][j];
    }
    for (double& m : model.mean) m /= n;
    for (const std::vector<double>& row : rows)
        for (std::size_t j = 0; j < width; ++j) {
            const double d = row[j] - model.mean[j];
            model.sd[j] += d * d;
        }
    for (double& s : model.sd) s = std::sqrt(s / n);

    model.train.reserve(rows.size());
    for (const std::vector<double>& row : rows)
        model.train.push_back(cumuldetail::standardize(row, model.mean, model.sd));
    model.labels = labels;
    return model;
}

// Class probabilities = vote fractions among the k nearest training rows
// (squared Euclidean distance in standardized space).  Distance ties break
// toward the lower training index, so results are deterministic.
inline std::vector<double> knn_classify(const KnnModel& model, const std::vector<double>& query,
                                        std::size_t k = 6) {
    if (model.train.empty()) throw DataError("k-NN model has no training rows");
    if (k < 1 || k > model.train.size())
        throw DataError("k must lie in [1, training size]");
    if (query.size() != model.width())
        throw DataError("query feature width mismatch");

    const std::vector<double> z = cumuldetail::standardize(query, model.mean, model.sd);
    std::vector<std::pair<double, std::size_t>> order;
    order.reserve(model.train.size());
    for (std::size_t i = 0; i < model.train.size(); ++i) {
        double d = 0.0;
        const std::vector<double>& row = model.train[i];
        for (std::size_t j = 0; j < row.size(); ++j) {
            const double diff = z[j] - row[j];
            d += diff * diff;
        }
        order.emplace_back(d, i);
    }
    std::sort(order.begin(), order.end());

    std::vector<double> probs(model.classes, 0.0);
    for (std::size_t i = 0; i < k; ++i) probs[model.labels[order[i].second]] += 1.0;
    for (double& p : probs) p /= static_cast<double>(k);
    return probs;
}

}  // namespace wf
