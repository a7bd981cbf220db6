// Closed- and open-world metrics: decision rule, confusion counting,
// precision/recall against brute-force recounts, threshold sweeps, and the
// ROC trapezoid.

#include <catch2/catch_amalgamated.hpp>

#include <wf/eval.hpp>
#include <wf/rng.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

using namespace wf;

namespace {

// A random probability row over `k` classes (positive entries, sums to 1).
std::vector<double> random_row(std::size_t k, Rng& rng) {
    std::vector<double> row(k);
    double sum = 0.0;
    for (double& v : row) {
        v = rng.uniform(0.01, 1.0);
        sum += v;
    }
    for (double& v : row) v /= sum;
    return row;
}

// Independent reimplementation of the open-world call, for recounts.
bool brute_called_monitored(const std::vector<double>& row, std::size_t unmon,
                            double threshold) {
    std::size_t arg = 0;
    for (std::size_t i = 1; i < row.size(); ++i)
        if (row[i] > row[arg]) arg = i;
    if (row[unmon] == row[arg]) return false;
    return arg != unmon && row[arg] > threshold;
}

}  // namespace

TEST_CASE("closed-world accuracy is a plain fraction") {
    CHECK(closed_world_accuracy({0, 1, 2, 1}, {0, 1, 1, 1}) == 0.75);
    CHECK(closed_world_accuracy({5}, {5}) == 1.0);
    CHECK_THROWS_AS(closed_world_accuracy({0}, {0, 1}), DataError);
    CHECK_THROWS_AS(closed_world_accuracy({}, {}), DataError);
}

TEST_CASE("open-world decision rule") {
    SECTION("monitored argmax above threshold is called") {
        const auto call = open_world_decide({0.2, 0.5, 0.3}, 0, 0.4);
        REQUIRE(call.has_value());
        CHECK(*call == 1);
    }
    SECTION("the threshold is strict") {
        CHECK_FALSE(open_world_decide({0.2, 0.5, 0.3}, 0, 0.5).has_value());
    }
    SECTION("unmonitored argmax is never called") {
        CHECK_FALSE(open_world_decide({0.6, 0.4}, 0, 0.0).has_value());
    }
    SECTION("a tie with the unmonitored class resolves to unmonitored") {
        CHECK_FALSE(open_world_decide({0.5, 0.5}, 0, 0.0).has_value());
    }
    SECTION("a tie between monitored classes keeps the first") {
        const auto call = open_world_decide({0.1, 0.45, 0.45}, 0, 0.0);
        REQUIRE(call.has_value());
        CHECK(*call == 1);
    }
    SECTION("threshold zero calls any monitored argmax") {
        CHECK(open_world_decide({0.01, 0.99}, 0, 0.0).has_value());
    }
    SECTION("validation") {
        CHECK_THROWS_AS(open_world_decide({}, 0, 0.5), DataError);
        CHECK_THROWS_AS(open_world_decide({0.5, 0.5}, 2, 0.5), DataError);
    }
}

TEST_CASE("confusion counts split four ways and sum to the input size") {
    const std::vector<bool> decided{true, true, false, false, true};
    const std::vector<bool> truth{true, false, true, false, true};
    const ConfusionCounts c = confusion(decided, truth);
    CHECK(c.tp == 2);
    CHECK(c.fp == 1);
    CHECK(c.tn == 1);
    CHECK(c.fn == 1);
    CHECK(c.total() == 5);
    CHECK(c.positives() == 3);
    CHECK(c.negatives() == 2);
    CHECK_THROWS_AS(confusion({true}, {true, false}), DataError);
}

TEST_CASE("precision and recall carry defined-ness flags") {
    ConfusionCounts c;
    c.tp = 2;
    c.fp = 1;
    c.fn = 1;
    c.tn = 6;
    const PrecisionRecall pr = precision_recall(c);
    CHECK(pr.precision_defined);
    CHECK(pr.precision == 2.0 / 3.0);
    CHECK(pr.recall_defined);
    CHECK(pr.recall == 2.0 / 3.0);

    SECTION("nothing called monitored leaves precision undefined") {
        ConfusionCounts none;
        none.tn = 5;
        none.fn = 2;
        const PrecisionRecall quiet = precision_recall(none);
        CHECK_FALSE(quiet.precision_defined);
        CHECK(quiet.recall_defined);
        CHECK(quiet.recall == 0.0);
    }
    SECTION("no monitored visits leaves recall undefined") {
        ConfusionCounts empty;
        empty.tn = 3;
        empty.fp = 1;
        const PrecisionRecall open = precision_recall(empty);
        CHECK(open.precision_defined);
        CHECK(open.precision == 0.0);
        CHECK_FALSE(open.recall_defined);
    }
}

TEST_CASE("tpr and fpr degrade to zero on empty denominators") {
    ConfusionCounts c;
    c.fp = 1;
    c.tn = 3;
    CHECK(rates(c).tpr == 0.0);
    CHECK(rates(c).fpr == 0.25);
    ConfusionCounts d;
    d.tp = 3;
    d.fn = 1;
    CHECK(rates(d).tpr == 0.75);
    CHECK(rates(d).fpr == 0.0);
}

TEST_CASE("sweeps are monotone and internally consistent") {
    Rng rng = derive_stream(1234, "sweep-world");
    const std::size_t unmon = 0;
    std::vector<std::vector<double>> rows;
    std::vector<bool> truth;
    for (std::size_t i = 0; i < 300; ++i) {
        rows.push_back(random_row(5, rng));
        truth.push_back(rng.uniform() < 0.6);
    }

    const std::vector<double> grid = default_thresholds(rows, unmon);
    const std::vector<SweepPoint> points = sweep(rows, truth, unmon, grid);
    REQUIRE(points.size() == grid.size());

    for (std::size_t i = 0; i < points.size(); ++i) {
        const SweepPoint& p = points[i];
        CHECK(p.counts.total() == rows.size());

        // Brute-force recount of the whole confusion table at this threshold.
        ConfusionCounts brute;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const bool called = brute_called_monitored(rows[r], unmon, p.threshold);
            if (truth[r])
                ++(called ? brute.tp : brute.fn);
            else
                ++(called ? brute.fp : brute.tn);
        }
        CHECK(p.counts.tp == brute.tp);
        CHECK(p.counts.fp == brute.fp);
        CHECK(p.counts.tn == brute.tn);
        CHECK(p.counts.fn == brute.fn);

        if (brute.tp + brute.fp > 0) {
            CHECK(p.precision_defined);
            CHECK(p.precision ==
                  static_cast<double>(brute.tp) / static_cast<double>(brute.tp + brute.fp));
        } else {
            CHECK_FALSE(p.precision_defined);
        }
        CHECK(p.recall ==
              static_cast<double>(brute.tp) / static_cast<double>(brute.tp + brute.fn));

        if (i > 0) {
            // Raising the threshold can only withdraw calls.
            CHECK(points[i].tpr <= points[i - 1].tpr);
            CHECK(points[i].fpr <= points[i - 1].fpr);
            CHECK(points[i].counts.tp <= points[i - 1].counts.tp);
            CHECK(points[i].counts.fp <= points[i - 1].counts.fp);
        }
    }

    // The top of the grid is 1.0, where nothing clears the strict threshold.
    CHECK(points.back().counts.tp == 0);
    CHECK(points.back().counts.fp == 0);

    CHECK_THROWS_AS(sweep(rows, std::vector<bool>{true}, unmon, grid), DataError);
}

TEST_CASE("precision and recall match brute recounts on random fixtures") {
    Rng rng = derive_stream(777, "pr-fixtures");
    for (int fixture = 0; fixture < 100; ++fixture) {
        std::vector<std::vector<double>> rows;
        std::vector<bool> truth;
        const std::size_t n = 5 + rng.uniform_int(30);
        for (std::size_t i = 0; i < n; ++i) {
            rows.push_back(random_row(4, rng));
            truth.push_back(rng.uniform() < 0.5);
        }
        const double threshold = rng.uniform(0.0, 1.0);

        const ConfusionCounts c = confusion(decide_all(rows, 0, threshold), truth);
        const PrecisionRecall pr = precision_recall(c);

        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const bool called = brute_called_monitored(rows[i], 0, threshold);
            if (called && truth[i]) ++tp;
            if (called && !truth[i]) ++fp;
            if (!called && truth[i]) ++fn;
        }
        if (tp + fp > 0) {
            REQUIRE(pr.precision_defined);
            CHECK(pr.precision == static_cast<double>(tp) / static_cast<double>(tp + fp));
        } else {
            CHECK_FALSE(pr.precision_defined);
        }
        if (tp + fn > 0) {
            REQUIRE(pr.recall_defined);
            CHECK(pr.recall == static_cast<double>(tp) / static_cast<double>(tp + fn));
        } else {
            CHECK_FALSE(pr.recall_defined);
        }
    }
}

TEST_CASE("roc area matches the trapezoid rule on hand curves") {
    const auto point = [](double fpr, double tpr) {
        SweepPoint p;
        p.fpr = fpr;
        p.tpr = tpr;
        return p;
    };

    SECTION("two interior points") {
        // (0,0) -> (0.2,0.5) -> (0.6,0.9) -> (1,1):
        // 0.2*0.25 + 0.4*0.7 + 0.4*0.95 = 0.71
        const double area = roc_auc({point(0.2, 0.5), point(0.6, 0.9)});
        CHECK(std::fabs(area - 0.71) <= 1e-12);
    }
    SECTION("perfect separation") {
        CHECK(std::fabs(roc_auc({point(0.0, 1.0)}) - 1.0) <= 1e-12);
    }
    SECTION("chance diagonal") {
        CHECK(std::fabs(roc_auc({point(0.5, 0.5)}) - 0.5) <= 1e-12);
    }
    SECTION("empty sweep degenerates to the anchor diagonal") {
        CHECK(std::fabs(roc_auc({}) - 0.5) <= 1e-12);
    }
    SECTION("points arrive unsorted") {
        const double area = roc_auc({point(0.6, 0.9), point(0.2, 0.5)});
        CHECK(std::fabs(area - 0.71) <= 1e-12);
    }
}

TEST_CASE("top-n accuracy generalises the closed-world score") {
    const std::vector<std::vector<double>> rows{
        {0.6, 0.3, 0.1},  // argmax 0
        {0.2, 0.5, 0.3},  // argmax 1
        {0.1, 0.2, 0.7},  // argmax 2
        {0.4, 0.35, 0.25},
    };
    const std::vector<std::size_t> truth{0, 2, 2, 1};

    std::vector<std::size_t> argmax;
    for (const auto& row : rows) argmax.push_back(row_argmax(row));
    CHECK(top_n_accuracy(rows, truth, 1) == closed_world_accuracy(argmax, truth));
    CHECK(top_n_accuracy(rows, truth, 1) == 0.5);
    CHECK(top_n_accuracy(rows, truth, 2) == 1.0);
    CHECK(top_n_accuracy(rows, truth, 3) == 1.0);
    CHECK_THROWS_AS(top_n_accuracy({}, {}, 1), DataError);
    CHECK_THROWS_AS(top_n_accuracy(rows, {0}, 1), DataError);
}

TEST_CASE("fixed 8:1:1 apportionment matches hand counts") {
    using evaldetail::split_counts_811;
    CHECK(split_counts_811(10) == std::array<std::size_t, 3>{8, 1, 1});
    CHECK(split_counts_811(100) == std::array<std::size_t, 3>{80, 10, 10});
    CHECK(split_counts_811(7) == std::array<std::size_t, 3>{5, 1, 1});
    CHECK(split_counts_811(15) == std::array<std::size_t, 3>{12, 2, 1});

    using evaldetail::split_of;
    const auto counts = split_counts_811(10);
    CHECK(split_of(0, counts) == Split::Train);
    CHECK(split_of(7, counts) == Split::Train);
    CHECK(split_of(8, counts) == Split::Valid);
    CHECK(split_of(9, counts) == Split::Test);
}

TEST_CASE("scenario names round trip") {
    for (WtScenario s : {WtScenario::Symmetric, WtScenario::AsymmetricClosed,
                         WtScenario::AsymmetricOpen})
        CHECK(wt_scenario_from_string(to_string(s)) == s);
    CHECK_THROWS_AS(wt_scenario_from_string("sideways"), ConfigError);
}
