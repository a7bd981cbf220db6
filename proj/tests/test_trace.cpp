// Trace model: parse/format round trips, per-line parse errors, the
// accept/reject rule, and direction vectors.

#include <catch2/catch_amalgamated.hpp>

#include <wf/errors.hpp>
#include <wf/rng.hpp>
#include <wf/trace.hpp>

#include "helpers.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

using namespace wf;

namespace {

Trace make_trace(std::size_t n, int first_sign = +1) {
    Trace t;
    for (std::size_t i = 0; i < n; ++i) {
        const int sign = (i % 3 == 2) ? -first_sign : first_sign;
        // i/100 as a correctly-rounded division survives a %.6f text round trip.
        t.cells.push_back({static_cast<double>(i) / 100.0, sign * 512});
    }
    return t;
}

}  // namespace

TEST_CASE("format -> parse round trip preserves every cell") {
    // 60 lines with microsecond-resolution timestamps: the oracle is the
    // original in-memory trace, independent of the formatting code path.
    Rng rng(2024);
    Trace original;
    double t = 0.0;
    for (int i = 0; i < 60; ++i) {
        t += std::floor(rng.uniform(0.0, 5000.0)) / 1e6;  // exact multiples of 1us
        const int size = rng.uniform() < 0.4 ? 512 : -512;
        original.cells.push_back({t, size});
    }

    const std::string text = format_trace(original);
    const Trace parsed = parse_trace(text);
    REQUIRE(parsed.size() == original.size());
    for (std::size_t i = 0; i < parsed.size(); ++i) {
        // %.6f is exact for microsecond-grained values in this range.
        CHECK(parsed.cells[i].time == Catch::Approx(original.cells[i].time).margin(1e-12));
        CHECK(parsed.cells[i].size == original.cells[i].size);
    }
}

TEST_CASE("file save/load round trip") {
    testutil::TempDir dir("trace");
    const Trace original = make_trace(55);
    save_trace(original, dir / "a.cells");
    const Trace loaded = load_trace(dir / "a.cells");
    REQUIRE(loaded.size() == original.size());
    CHECK(loaded.cells == original.cells);
}

TEST_CASE("parse errors carry the 1-based line number") {
    auto line_of = [](const std::string& text) -> std::string {
        try {
            parse_trace(text, "t");
        } catch (const ParseError& e) {
            return e.what();
        }
        return "<no error>";
    };

    CHECK_THAT(line_of("0.0\t512\nbogus\n"), Catch::Matchers::StartsWith("t:2:"));
    CHECK_THAT(line_of("0.0\t512\n0.1 512\n"), Catch::Matchers::ContainsSubstring("t:2:"));
    CHECK_THAT(line_of("x\t512\n"), Catch::Matchers::ContainsSubstring("t:1:"));
    CHECK_THAT(line_of("0.0\t512\n0.1\tzz\n"), Catch::Matchers::ContainsSubstring("t:2:"));
    CHECK_THAT(line_of("0.0\t512\n0.1\t0\n"), Catch::Matchers::ContainsSubstring("t:2:"));
    CHECK_THAT(line_of("-1.0\t512\n"), Catch::Matchers::ContainsSubstring("t:1:"));
    CHECK_THAT(line_of("0.5\t512\n0.2\t-512\n"), Catch::Matchers::ContainsSubstring("t:2:"));
    CHECK_THAT(line_of("0.0\t512\n\n0.2\t512\n"), Catch::Matchers::ContainsSubstring("t:2:"));
}

TEST_CASE("trailing blank lines are tolerated") {
    const Trace t = parse_trace("0.0\t512\n0.1\t-512\n\n\n");
    CHECK(t.size() == 2);
}

TEST_CASE("equal timestamps are allowed, decreasing are not") {
    CHECK_NOTHROW(parse_trace("0.5\t512\n0.5\t-512\n"));
    CHECK_THROWS_AS(parse_trace("0.5\t512\n0.4999\t-512\n"), ParseError);
}

TEST_CASE("trace statistics") {
    Trace t;
    t.cells = {{0.0, 512}, {0.5, -512}, {1.25, -512}, {2.0, 512}};
    CHECK(t.duration() == 2.0);
    CHECK(t.count_outgoing() == 2);
    CHECK(t.count_incoming() == 2);
    CHECK(Trace{}.duration() == 0.0);
}

TEST_CASE("accept/reject rule") {
    SECTION("accepts a two-direction trace of 50+ cells") {
        const CleanVerdict v = clean(make_trace(50));
        CHECK(v.accepted);
        CHECK(v.reason == RejectReason::None);
    }
    SECTION("rejects 49 cells as too short") {
        const CleanVerdict v = clean(make_trace(49));
        CHECK_FALSE(v.accepted);
        CHECK(v.reason == RejectReason::TooShort);
    }
    SECTION("rejects one-directional traffic, both signs") {
        Trace all_out;
        for (int i = 0; i < 64; ++i) all_out.cells.push_back({i * 0.01, 512});
        Trace all_in;
        for (int i = 0; i < 64; ++i) all_in.cells.push_back({i * 0.01, -512});
        CHECK(clean(all_out).reason == RejectReason::OneDirectional);
        CHECK(clean(all_in).reason == RejectReason::OneDirectional);
    }
    SECTION("is idempotent: re-cleaning an accepted trace accepts it") {
        const Trace t = make_trace(80);
        REQUIRE(clean(t).accepted);
        CHECK(clean(t).accepted);
    }
    SECTION("honours a custom minimum") {
        CHECK(clean(make_trace(10), 10).accepted);
        CHECK_FALSE(clean(make_trace(9), 10).accepted);
    }
    SECTION("reason names") {
        CHECK(to_string(RejectReason::TooShort) == "too_short");
        CHECK(to_string(RejectReason::OneDirectional) == "one_directional");
        CHECK(to_string(RejectReason::None) == "none");
    }
}

TEST_CASE("direction vector truncates or zero-pads on the right") {
    Trace t;
    t.cells = {{0.0, 310}, {0.1, -500}, {0.2, 1200}};

    SECTION("shorter than the trace: truncation") {
        const auto v = to_direction_vector(t, 2);
        CHECK(v == std::vector<std::int8_t>{1, -1});
    }
    SECTION("exact length") {
        const auto v = to_direction_vector(t, 3);
        CHECK(v == std::vector<std::int8_t>{1, -1, 1});
    }
    SECTION("longer: zeros only at the tail") {
        const auto v = to_direction_vector(t, 5);
        CHECK(v == std::vector<std::int8_t>{1, -1, 1, 0, 0});
        const auto w = to_direction_vector(t, 5000);
        CHECK(w.size() == 5000);
        for (std::size_t i = 3; i < w.size(); ++i) REQUIRE(w[i] == 0);
    }
    SECTION("sign comes from direction, not magnitude") {
        const auto v = to_direction_vector(t, 3);
        CHECK(v[0] == 1);   // +310
        CHECK(v[2] == 1);   // +1200
    }
    SECTION("length must be positive") {
        CHECK_THROWS_AS(to_direction_vector(t, 0), DataError);
    }
    SECTION("empty trace maps to all zeros") {
        const auto v = to_direction_vector(Trace{}, 4);
        CHECK(v == std::vector<std::int8_t>{0, 0, 0, 0});
    }
}
