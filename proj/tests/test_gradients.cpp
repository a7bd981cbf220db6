// Analytic gradients versus central finite differences for every layer kind,
// the loss, and a miniature two-block network end to end.

#include <catch2/catch_amalgamated.hpp>

#include <wf/gradcheck.hpp>

#include <string>
#include <vector>

using namespace wf;
using namespace wf::nn;

TEST_CASE("every layer kind passes the finite-difference check") {
    const std::vector<GradCheckRow> rows = run_layer_checks(1234);
    REQUIRE(rows.size() >= 11);
    for (const GradCheckRow& row : rows) {
        CAPTURE(row.layer, row.max_rel_err, row.coords, row.skipped);
        CHECK(row.pass);
        CHECK(row.coords > 0);
        CHECK(row.max_rel_err <= 1e-4);
        // Kink skipping must stay a rare exception, never the common case.
        CHECK(row.skipped * 20 <= row.coords + row.skipped);
    }
}

TEST_CASE("the miniature conv stack passes end to end") {
    const GradCheckRow row = check_mini_stack(1234);
    CAPTURE(row.max_rel_err, row.coords, row.skipped);
    CHECK(row.pass);
    CHECK(row.layer == "mini-stack");
    CHECK(row.coords > 100);
}

TEST_CASE("the full sweep is deterministic in the seed") {
    const std::vector<GradCheckRow> a = run_all_checks(77);
    const std::vector<GradCheckRow> b = run_all_checks(77);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].layer == b[i].layer);
        CHECK(a[i].max_rel_err == b[i].max_rel_err);
        CHECK(a[i].coords == b[i].coords);
        CHECK(a[i].skipped == b[i].skipped);
    }
    for (const GradCheckRow& row : a) CHECK(row.pass);
}
