// Cumulative-sum features and the k-nearest-neighbour baseline.

#include <catch2/catch_amalgamated.hpp>

#include <wf/cumul.hpp>
#include <wf/df.hpp>
#include <wf/synth.hpp>

#include <cmath>
#include <string>
#include <vector>

using namespace wf;

namespace {

Trace from_sizes(const std::vector<int>& sizes) {
    Trace t;
    for (std::size_t i = 0; i < sizes.size(); ++i)
        t.cells.push_back(Cell{static_cast<double>(i) / 100.0, sizes[i]});
    return t;
}

}  // namespace

TEST_CASE("summary counts and byte totals are exact") {
    const Trace t = from_sizes({512, -512, -512, 512});
    const std::vector<double> f = cumul_features(t, 4);
    REQUIRE(f.size() == 8);
    CHECK(f[0] == 2.0);     // outgoing cells
    CHECK(f[1] == 2.0);     // incoming cells
    CHECK(f[2] == 1024.0);  // outgoing bytes
    CHECK(f[3] == 1024.0);  // incoming bytes (positive magnitude)
    // Running totals 512, 0, -512, 0 sampled at stride 1.
    CHECK(f[4] == 512.0);
    CHECK(f[5] == 0.0);
    CHECK(f[6] == -512.0);
    CHECK(f[7] == 0.0);
}

TEST_CASE("interpolation hits hand-computed midpoints") {
    // Running totals 100, 60, 70 sampled at positions 0, 0.5, 1, 1.5, 2.
    const Trace t = from_sizes({100, -40, 10});
    const std::vector<double> f = cumul_features(t, 5);
    REQUIRE(f.size() == 9);
    CHECK(f[4] == 100.0);
    CHECK(f[5] == 80.0);  // halfway from 100 down to 60 (dyadic, exact)
    CHECK(f[6] == 60.0);
    CHECK(f[7] == 65.0);
    CHECK(f[8] == 70.0);
}

TEST_CASE("a trace as long as the grid reproduces its running sums") {
    const Trace t = from_sizes({7, -3, 11, -5, 2, 9});
    const std::vector<double> f = cumul_features(t, 6);
    const std::vector<double> expected{7, 4, 15, 10, 12, 21};
    for (std::size_t i = 0; i < 6; ++i) CHECK(f[4 + i] == expected[i]);
}

TEST_CASE("a single-cell trace fills the grid with its total") {
    const Trace t = from_sizes({-512});
    const std::vector<double> f = cumul_features(t);
    REQUIRE(f.size() == 4 + kCumulPoints);
    CHECK(f[0] == 0.0);
    CHECK(f[1] == 1.0);
    CHECK(f[3] == 512.0);
    for (std::size_t i = 4; i < f.size(); ++i) CHECK(f[i] == -512.0);
}

TEST_CASE("feature extraction input validation") {
    CHECK_THROWS_AS(cumul_features(Trace{}), DataError);
    CHECK_THROWS_AS(cumul_features(from_sizes({512}), 1), ConfigError);
}

TEST_CASE("feature names align with the feature vector") {
    const std::vector<std::string> names = cumul_feature_names(100);
    REQUIRE(names.size() == 104);
    CHECK(names[0] == "count_out");
    CHECK(names[1] == "count_in");
    CHECK(names[2] == "bytes_out");
    CHECK(names[3] == "bytes_in");
    CHECK(names[4] == "c000");
    CHECK(names[103] == "c099");
    CHECK(names.size() == cumul_features(from_sizes({512, -512})).size());
}

TEST_CASE("standardisation uses training statistics only") {
    const std::vector<std::vector<double>> rows{{0.0, 5.0}, {2.0, 5.0}};
    const KnnModel model = knn_fit(rows, {0, 1}, 2);
    CHECK(model.mean == std::vector<double>{1.0, 5.0});
    CHECK(model.sd[0] == 1.0);  // population stddev of {0, 2}
    CHECK(model.sd[1] == 0.0);  // constant feature
    CHECK(model.train[0] == std::vector<double>{-1.0, 0.0});
    CHECK(model.train[1] == std::vector<double>{1.0, 0.0});
}

TEST_CASE("nearest-neighbour votes match hand counting") {
    // One feature, three training rows: 0 and 1 in class 0, 10 in class 1.
    const std::vector<std::vector<double>> rows{{0.0}, {1.0}, {10.0}};
    const KnnModel model = knn_fit(rows, {0, 0, 1}, 2);

    CHECK(knn_classify(model, {0.4}, 1) == std::vector<double>{1.0, 0.0});
    CHECK(knn_classify(model, {9.0}, 1) == std::vector<double>{0.0, 1.0});
    CHECK(knn_classify(model, {0.4}, 3) ==
          std::vector<double>{2.0 / 3.0, 1.0 / 3.0});
}

TEST_CASE("distance ties break toward the lower training index") {
    const std::vector<std::vector<double>> rows{{1.0}, {1.0}};
    const KnnModel model = knn_fit(rows, {1, 0}, 2);
    // Both rows standardize to 0 and sit at distance 0; index 0 wins.
    CHECK(knn_classify(model, {1.0}, 1) == std::vector<double>{0.0, 1.0});
}

TEST_CASE("classifier input validation") {
    const std::vector<std::vector<double>> rows{{0.0}, {1.0}};
    const KnnModel model = knn_fit(rows, {0, 1}, 2);
    CHECK_THROWS_AS(knn_classify(model, {0.0}, 0), DataError);
    CHECK_THROWS_AS(knn_classify(model, {0.0}, 3), DataError);
    CHECK_THROWS_AS(knn_classify(model, {0.0, 1.0}, 1), DataError);
    CHECK_THROWS_AS(knn_classify(KnnModel{}, {0.0}, 1), DataError);

    CHECK_THROWS_AS(knn_fit({}, {}, 2), DataError);
    CHECK_THROWS_AS(knn_fit(rows, {0}, 2), DataError);
    CHECK_THROWS_AS(knn_fit(rows, {0, 2}, 2), DataError);
    CHECK_THROWS_AS(knn_fit(rows, {0, 1}, 0), DataError);
    CHECK_THROWS_AS(knn_fit({{1.0}, {1.0, 2.0}}, {0, 1}, 2), DataError);
    CHECK_THROWS_AS(knn_fit({{}, {}}, {0, 1}, 2), DataError);
}

TEST_CASE("the baseline separates an easy generated world") {
    Dataset world = generate_world(4, 0, 20, 99);
    world = split_dataset(world, SplitRatios{}, 99);
    const std::vector<std::string> labels = class_labels(world, Split::Train);

    std::vector<std::vector<double>> train_rows;
    std::vector<std::size_t> train_labels;
    for (std::size_t i : world.indices_in(Split::Train)) {
        train_rows.push_back(cumul_features(world.visits[i].trace));
        train_labels.push_back(label_index(labels, world.visits[i].label));
    }
    const KnnModel model = knn_fit(train_rows, train_labels, labels.size());

    std::size_t correct = 0, total = 0;
    for (std::size_t i : world.indices_in(Split::Test)) {
        const std::vector<double> probs =
            knn_classify(model, cumul_features(world.visits[i].trace), 3);
        if (row_argmax(probs) == label_index(labels, world.visits[i].label)) ++correct;
        ++total;
    }
    REQUIRE(total == 8);  // 4 classes x 15 visits split 12/1/2... checked below
    CHECK(correct * 2 >= total);  // comfortably above the 25% chance floor
}
