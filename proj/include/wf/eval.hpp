#pragma once
// Closed- and open-world evaluation: accuracy, confusion counts,
// precision/recall, threshold sweeps, ROC area, top-N accuracy, and the
// paired-molding defense scenarios (symmetric and asymmetric).

#include <wf/dataset.hpp>
#include <wf/defenses.hpp>
#include <wf/df.hpp>
#include <wf/errors.hpp>
#include <wf/rng.hpp>
#include <wf/synth.hpp>

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace wf {

// ---------------------------------------------------------------------------
// Core metrics

inline double closed_world_accuracy(const std::vector<std::size_t>& predicted,
                                    const std::vector<std::size_t>& truth) {
    if (predicted.size() != truth.size())
        throw DataError("prediction/truth length mismatch");
    if (predicted.empty()) throw DataError("cannot score an empty prediction set");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i)
        if (predicted[i] == truth[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(truth.size());
}

// Open-world decision rule: the visit is called monitored iff the highest
// probability lands on a monitored class AND exceeds the threshold.  A tie
// between the unmonitored class and any monitored class resolves to
// unmonitored.  Returns the monitored class index, or nullopt.
inline std::optional<std::size_t> open_world_decide(const std::vector<double>& row,
                                                    std::size_t unmon_index,
                                                    double threshold) {
    if (row.empty()) throw DataError("empty probability row");
    if (unmon_index >= row.size()) throw DataError("unmonitored index out of range");
    double best = row[0];
    std::size_t arg = 0;
    for (std::size_t i = 1; i < row.size(); ++i)
        if (row[i] > best) {
            best = row[i];
            arg = i;
        }
    if (row[unmon_index] == best) return std::nullopt;  // ties favour unmonitored
    if (arg == unmon_index || best <= threshold) return std::nullopt;
    return arg;
}

struct ConfusionCounts {
    std::size_t tp = 0;  // monitored called monitored
    std::size_t fp = 0;  // unmonitored called monitored
    std::size_t tn = 0;  // unmonitored called unmonitored
    std::size_t fn = 0;  // monitored called unmonitored

    std::size_t total() const { return tp + fp + tn + fn; }
    std::size_t positives() const { return tp + fn; }
    std::size_t negatives() const { return fp + tn; }
};

inline ConfusionCounts confusion(const std::vector<bool>& decided_monitored,
                                 const std::vector<bool>& truth_monitored) {
    if (decided_monitored.size() != truth_monitored.size())
        throw DataError("decision/truth length mismatch");
    ConfusionCounts c;
    for (std::size_t i = 0; i < truth_monitored.size(); ++i) {
        if (truth_monitored[i])
            ++(decided_monitored[i] ? c.tp : c.fn);
        else
            ++(decided_monitored[i] ? c.fp : c.tn);
    }
    return c;
}

struct PrecisionRecall {
    double precision = 0.0;
    double recall = 0.0;
    bool precision_defined = false;  // false when nothing was called monitored
    bool recall_defined = false;     // false when there are no monitored visits
};

inline PrecisionRecall precision_recall(const ConfusionCounts& c) {
    PrecisionRecall pr;
    if (c.tp + c.fp > 0) {
        pr.precision_defined = true;
        pr.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    }
    if (c.positives() > 0) {
        pr.recall_defined = true;
        pr.recall = static_cast<double>(c.tp) / static_cast<double>(c.positives());
    }
    return pr;
}

struct Rates {
    double tpr = 0.0;  // tp / (tp + fn); 0 when there are no positives
    double fpr = 0.0;  // fp / (fp + tn); 0 when there are no negatives
};

inline Rates rates(const ConfusionCounts& c) {
    Rates r;
    if (c.positives() > 0) r.tpr = static_cast<double>(c.tp) / static_cast<double>(c.positives());
    if (c.negatives() > 0) r.fpr = static_cast<double>(c.fp) / static_cast<double>(c.negatives());
    return r;
}

// ---------------------------------------------------------------------------
// Threshold sweeps

struct SweepPoint {
    double threshold = 0.0;
    ConfusionCounts counts;
    double tpr = 0.0;
    double fpr = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    bool precision_defined = false;
};

inline std::vector<bool> decide_all(const std::vector<std::vector<double>>& rows,
                                    std::size_t unmon_index, double threshold) {
    std::vector<bool> out;
    out.reserve(rows.size());
    for (const std::vector<double>& row : rows)
        out.push_back(open_world_decide(row, unmon_index, threshold).has_value());
    return out;
}

// Threshold grid: 50 evenly spaced values on [0, 1], every observed
// monitored-argmax score, and 1.0; sorted and deduplicated.
inline std::vector<double> default_thresholds(const std::vector<std::vector<double>>& rows,
                                              std::size_t unmon_index) {
    std::vector<double> grid;
    for (int i = 0; i < 50; ++i) grid.push_back(static_cast<double>(i) / 49.0);
    for (const std::vector<double>& row : rows) {
        const std::optional<std::size_t> call = open_world_decide(row, unmon_index, 0.0);
        if (call.has_value()) grid.push_back(row[*call]);
    }
    grid.push_back(1.0);
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    return grid;
}

inline std::vector<SweepPoint> sweep(const std::vector<std::vector<double>>& rows,
                                     const std::vector<bool>& truth_monitored,
                                     std::size_t unmon_index,
                                     const std::vector<double>& thresholds) {
    if (rows.size() != truth_monitored.size())
        throw DataError("row/truth length mismatch");
    std::vector<double> grid = thresholds;
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    std::vector<SweepPoint> points;
    points.reserve(grid.size());
    for (double threshold : grid) {
        SweepPoint p;
        p.threshold = threshold;
        p.counts = confusion(decide_all(rows, unmon_index, threshold), truth_monitored);
        const Rates r = rates(p.counts);
        p.tpr = r.tpr;
        p.fpr = r.fpr;
        const PrecisionRecall pr = precision_recall(p.counts);
        p.precision = pr.precision;
        p.precision_defined = pr.precision_defined;
        p.recall = pr.recall;
        points.push_back(p);
    }
    return points;
}

// Trapezoidal area under the ROC curve traced by the sweep, anchored at
// (0,0) and (1,1).
inline double roc_auc(const std::vector<SweepPoint>& points) {
    std::vector<std::pair<double, double>> curve;
    curve.reserve(points.size() + 2);
    curve.emplace_back(0.0, 0.0);
    for (const SweepPoint& p : points) curve.emplace_back(p.fpr, p.tpr);
    curve.emplace_back(1.0, 1.0);
    std::sort(curve.begin(), curve.end());
    double area = 0.0;
    for (std::size_t i = 1; i < curve.size(); ++i)
        area += (curve[i].first - curve[i - 1].first) *
                (curve[i].second + curve[i - 1].second) * 0.5;
    return area;
}

inline double top_n_accuracy(const std::vector<std::vector<double>>& rows,
                             const std::vector<std::size_t>& truth, std::size_t n) {
    if (rows.size() != truth.size()) throw DataError("row/truth length mismatch");
    if (rows.empty()) throw DataError("cannot score an empty prediction set");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::vector<std::size_t> best = top_n(rows[i], n);
        if (std::find(best.begin(), best.end(), truth[i]) != best.end()) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(rows.size());
}

// ---------------------------------------------------------------------------
// Paired-molding defense scenarios

enum class WtScenario { Symmetric, AsymmetricClosed, AsymmetricOpen };

inline std::string to_string(WtScenario s) {
    switch (s) {
        case WtScenario::Symmetric: return "symmetric";
        case WtScenario::AsymmetricClosed: return "asymmetric_closed";
        case WtScenario::AsymmetricOpen: return "asymmetric_open";
    }
    throw DataError("unknown scenario");
}

inline WtScenario wt_scenario_from_string(const std::string& s) {
    if (s == "symmetric") return WtScenario::Symmetric;
    if (s == "asymmetric_closed") return WtScenario::AsymmetricClosed;
    if (s == "asymmetric_open") return WtScenario::AsymmetricOpen;
    throw ConfigError("unknown scenario '" + s + "'");
}

struct WtReport {
    WtScenario scenario = WtScenario::Symmetric;
    double top1 = 0.0;  // over monitored test visits
    double top2 = 0.0;
    double tpr = 0.0;   // open world, threshold 0
    double fpr = 0.0;
    std::vector<SweepPoint> sweep;  // open world only
    OverheadReport overhead;
    std::size_t train_count = 0;
    std::size_t test_count = 0;
};

namespace evaldetail {

// Largest-remainder 8:1:1 apportionment, mirroring dataset splitting but
// with a fixed in-order assignment (no shuffle): visit j of every class
// lands in the same split, which keeps molded twins on the same side.
inline std::array<std::size_t, 3> split_counts_811(std::size_t n) {
    const std::array<double, 3> ratio{0.8, 0.1, 0.1};
    std::array<std::size_t, 3> count{};
    std::array<double, 3> remainder{};
    std::size_t assigned = 0;
    for (int s = 0; s < 3; ++s) {
        const double share = ratio[s] * static_cast<double>(n);
        count[s] = static_cast<std::size_t>(share);
        remainder[s] = share - static_cast<double>(count[s]);
        assigned += count[s];
    }
    std::array<int, 3> order{0, 1, 2};
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (remainder[a] != remainder[b]) return remainder[a] > remainder[b];
        return a < b;
    });
    for (std::size_t extra = 0; extra < n - assigned; ++extra) ++count[order[extra % 3]];
    return count;
}

inline Split split_of(std::size_t position, const std::array<std::size_t, 3>& counts) {
    if (position < counts[0]) return Split::Train;
    if (position < counts[0] + counts[1]) return Split::Valid;
    return Split::Test;
}

}  // namespace evaldetail

// Runs one defense scenario end to end on a synthetic world: mold every
// visit against a decoy, retrain the classifier on the defended traces, and
// score the test split.
//
//  - symmetric: monitored classes are paired off (sorted label order) and
//    visit j of each class is molded against visit j of its twin, both ways.
//    Twins end up with identical direction vectors, so top-1 accuracy is
//    capped near 50% while top-2 stays high.
//  - asymmetric_closed: every monitored visit is molded (one way only)
//    against a uniformly random unmonitored background page — the defense's
//    decoy rule without the symmetric bookkeeping.  Backgrounds are decoy
//    fodder only: they are never trained on or classified, so the world must
//    contain unmonitored visits.  Because a decoy is never a candidate
//    class, accuracy recovers far above the symmetric ceiling.
//  - asymmetric_open: monitored visits are molded against random unmonitored
//    visits and vice versa; a `mispair_fraction` of visits instead receive a
//    same-kind decoy, which weakens the disguise asymmetrically (mispaired
//    unmonitored visits stop imitating monitored pages, so the false-positive
//    rate drops relative to strict cross-kind pairing).
inline WtReport wt_scenarios(const Dataset& world, const DFConfig& cfg, WtScenario scenario,
                             std::uint64_t seed, double mispair_fraction = 0.1) {
    if (mispair_fraction < 0.0 || mispair_fraction > 1.0)
        throw ConfigError("mispair_fraction must lie in [0, 1]");
    const bool open = scenario == WtScenario::AsymmetricOpen;

    // Partition the world's visit indices.
    std::vector<std::string> monitored_labels;
    std::map<std::string, std::vector<std::size_t>> by_label;
    std::vector<std::size_t> unmonitored;
    for (std::size_t i = 0; i < world.visits.size(); ++i) {
        const std::string& label = world.visits[i].label;
        if (label == kUnmonitoredLabel) {
            unmonitored.push_back(i);
        } else {
            if (by_label.find(label) == by_label.end()) monitored_labels.push_back(label);
            by_label[label].push_back(i);
        }
    }
    std::sort(monitored_labels.begin(), monitored_labels.end());

    if (monitored_labels.size() < 2)
        throw DataError("scenario needs at least two monitored classes");
    if (scenario == WtScenario::Symmetric && monitored_labels.size() % 2 != 0)
        throw DataError("symmetric pairing needs an even number of monitored classes");
    if (scenario != WtScenario::Symmetric && unmonitored.empty())
        throw DataError("asymmetric scenarios need unmonitored decoy visits");

    // Keep only the relevant visits; assign splits by within-class position.
    Dataset defended;
    std::vector<std::size_t> kept;  // world index per defended visit
    const auto keep = [&](std::size_t world_index, Split split) {
        Visit v = world.visits[world_index];
        defended.visits.push_back(std::move(v));
        defended.splits.push_back(split);
        kept.push_back(world_index);
    };
    for (const std::string& label : monitored_labels) {
        const std::vector<std::size_t>& indices = by_label[label];
        const auto counts = evaldetail::split_counts_811(indices.size());
        if (counts[2] == 0)
            throw DataError("label '" + label + "' has too few visits for a test split");
        for (std::size_t j = 0; j < indices.size(); ++j)
            keep(indices[j], evaldetail::split_of(j, counts));
    }
    if (open) {
        const auto counts = evaldetail::split_counts_811(unmonitored.size());
        if (counts[0] == 0 || counts[2] == 0)
            throw DataError("too few unmonitored visits for an open-world split");
        for (std::size_t j = 0; j < unmonitored.size(); ++j)
            keep(unmonitored[j], evaldetail::split_of(j, counts));
    }

    // Original (pre-defense) copies of exactly the kept visits, for overhead.
    Dataset original;
    original.visits = defended.visits;
    original.splits = defended.splits;

    // Decoy selection and molding.
    if (scenario == WtScenario::Symmetric) {
        for (std::size_t p = 0; p + 1 < monitored_labels.size(); p += 2) {
            const std::vector<std::size_t>& a = by_label[monitored_labels[p]];
            const std::vector<std::size_t>& b = by_label[monitored_labels[p + 1]];
            if (a.size() != b.size())
                throw DataError("symmetric pairing needs equal visit counts per class");
        }
        // defended.visits holds monitored classes in sorted-label blocks of
        // equal per-class order, so twin lookup is by block offset.
        std::map<std::string, std::size_t> block_start;
        std::size_t cursor = 0;
        for (const std::string& label : monitored_labels) {
            block_start[label] = cursor;
            cursor += by_label[label].size();
        }
        for (std::size_t p = 0; p + 1 < monitored_labels.size(); p += 2) {
            const std::size_t start_a = block_start[monitored_labels[p]];
            const std::size_t start_b = block_start[monitored_labels[p + 1]];
            const std::size_t visits = by_label[monitored_labels[p]].size();
            for (std::size_t j = 0; j < visits; ++j) {
                const Trace ta = original.visits[start_a + j].trace;
                const Trace tb = original.visits[start_b + j].trace;
                defended.visits[start_a + j].trace = apply_wt(ta, tb, true).trace;
                defended.visits[start_b + j].trace = apply_wt(tb, ta, true).trace;
            }
        }
    } else if (!open) {
        // Closed world: each monitored visit molds with a random background
        // page straight from the source world (backgrounds are not kept).
        for (std::size_t i = 0; i < defended.visits.size(); ++i) {
            Rng rng = derive_stream(seed, "decoy", i);
            const Trace& decoy =
                world.visits[unmonitored[rng.uniform_int(unmonitored.size())]].trace;
            defended.visits[i].trace =
                apply_wt(original.visits[i].trace, decoy, false).trace;
        }
    } else {
        // Open world: random cross-kind decoys, one derived stream per
        // defended visit; a mispaired visit gets a same-kind decoy instead.
        const std::size_t monitored_count = defended.visits.size() - unmonitored.size();
        for (std::size_t i = 0; i < defended.visits.size(); ++i) {
            Rng rng = derive_stream(seed, "decoy", i);
            const bool subject_monitored = i < monitored_count;
            const bool mispair = rng.uniform() < mispair_fraction;

            std::size_t decoy_index;
            if ((subject_monitored && mispair) || (!subject_monitored && !mispair)) {
                // A monitored decoy from another class (or any monitored
                // visit when the subject is unmonitored).
                if (subject_monitored) {
                    const std::string& own = defended.visits[i].label;
                    std::vector<std::size_t> pool;
                    pool.reserve(monitored_count);
                    for (std::size_t c = 0; c < monitored_count; ++c)
                        if (defended.visits[c].label != own) pool.push_back(c);
                    decoy_index = pool[rng.uniform_int(pool.size())];
                } else {
                    decoy_index = rng.uniform_int(monitored_count);
                }
            } else {
                // An unmonitored decoy (other visit than the subject).
                const std::size_t pool = defended.visits.size() - monitored_count;
                if (subject_monitored) {
                    decoy_index = monitored_count + rng.uniform_int(pool);
                } else {
                    if (pool < 2)
                        throw DataError("mispairing needs at least two unmonitored visits");
                    std::size_t j = rng.uniform_int(pool - 1);
                    const std::size_t self = i - monitored_count;
                    if (j >= self) ++j;
                    decoy_index = monitored_count + j;
                }
            }
            defended.visits[i].trace =
                apply_wt(original.visits[i].trace, original.visits[decoy_index].trace, false)
                    .trace;
        }
    }

    // Retrain on the defended world and score the test split.
    DFConfig fit = cfg;
    TrainedModel model = train_df(defended, fit, hash_tag(seed, "train"));
    const LabeledTensor test = vectorize(defended, Split::Test, model.config.input_length,
                                         model.labels);

    WtReport report;
    report.scenario = scenario;
    report.train_count = defended.indices_in(Split::Train).size();
    report.test_count = test.y.size();
    report.overhead = overheads(original, defended);

    Tensor probs = predict_proba(model, test.x);
    std::vector<std::vector<double>> rows;
    rows.reserve(test.y.size());
    for (std::size_t i = 0; i < test.y.size(); ++i) rows.push_back(proba_row(probs, i));

    if (open) {
        const std::size_t unmon_index = label_index(model.labels, kUnmonitoredLabel);
        std::vector<bool> truth;
        std::vector<std::vector<double>> monitored_rows;
        std::vector<std::size_t> monitored_truth;
        for (std::size_t i = 0; i < test.y.size(); ++i) {
            truth.push_back(test.y[i] != unmon_index);
            if (test.y[i] != unmon_index) {
                monitored_rows.push_back(rows[i]);
                monitored_truth.push_back(test.y[i]);
            }
        }
        const ConfusionCounts base = confusion(decide_all(rows, unmon_index, 0.0), truth);
        const Rates r = rates(base);
        report.tpr = r.tpr;
        report.fpr = r.fpr;
        report.sweep = sweep(rows, truth, unmon_index, default_thresholds(rows, unmon_index));
        if (!monitored_rows.empty()) {
            report.top1 = top_n_accuracy(monitored_rows, monitored_truth, 1);
            report.top2 = top_n_accuracy(monitored_rows, monitored_truth, 2);
        }
    } else {
        report.top1 = top_n_accuracy(rows, test.y, 1);
        report.top2 = top_n_accuracy(rows, test.y, 2);
    }
    return report;
}

}  // namespace wf
