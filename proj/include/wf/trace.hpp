#pragma once
// Trace model: a network trace is a time-ordered sequence of cells, each a
// (timestamp, signed size) pair.  Positive sizes travel client→server
// ("outgoing"), negative sizes server→client ("incoming").
//
// On-disk format: one cell per line, "<timestamp>\t<signed size>", timestamp
// printed with six decimal places.  Parsing validates per line and reports
// the first offending line number.

#include <wf/errors.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace wf {

struct Cell {
    double time = 0.0;   // seconds since the first cell of the visit
    int size = 0;        // signed bytes; sign encodes direction, never zero

    bool outgoing() const { return size > 0; }
    friend bool operator==(const Cell&, const Cell&) = default;
};

struct Trace {
    std::vector<Cell> cells;

    bool empty() const { return cells.empty(); }
    std::size_t size() const { return cells.size(); }

    double duration() const {
        return cells.empty() ? 0.0 : cells.back().time - cells.front().time;
    }

    std::size_t count_outgoing() const {
        return static_cast<std::size_t>(
            std::count_if(cells.begin(), cells.end(),
                          [](const Cell& c) { return c.outgoing(); }));
    }
    std::size_t count_incoming() const { return size() - count_outgoing(); }
};

// ---------------------------------------------------------------------------
// Parsing / serialization

namespace detail {

inline bool parse_double(std::string_view text, double& out) {
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc{} && ptr == last;
}

inline bool parse_int(std::string_view text, int& out) {
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc{} && ptr == last;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    return s;
}

}  // namespace detail

// Parse one trace from text.  Throws ParseError naming the 1-based line of
// the first problem: malformed fields, zero size, negative timestamp, or a
// timestamp earlier than its predecessor.  Blank lines are allowed only at
// the end of the file.
inline Trace parse_trace(std::string_view text, std::string_view origin = "<memory>") {
    Trace trace;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    auto fail = [&](const std::string& what) {
        throw ParseError(std::string(origin) + ":" + std::to_string(line_no) + ": " + what);
    };

    while (pos < text.size()) {
        const std::size_t eol = text.find('\n', pos);
        std::string_view line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos
                                                                               : eol - pos);
        pos = eol == std::string_view::npos ? text.size() : eol + 1;
        ++line_no;

        line = detail::trim(line);
        if (line.empty()) {
            // Only trailing blank lines are tolerated.
            std::string_view rest = text.substr(pos);
            if (rest.find_first_not_of(" \r\n") != std::string_view::npos)
                fail("blank line inside trace body");
            break;
        }

        const std::size_t tab = line.find('\t');
        if (tab == std::string_view::npos)
            fail("expected '<timestamp>\\t<signed size>'");

        double time = 0.0;
        int size = 0;
        if (!detail::parse_double(detail::trim(line.substr(0, tab)), time))
            fail("unparsable timestamp");
        if (!detail::parse_int(detail::trim(line.substr(tab + 1)), size))
            fail("unparsable size field");
        if (!std::isfinite(time)) fail("non-finite timestamp");
        if (time < 0.0) fail("negative timestamp");
        if (size == 0) fail("zero size (sign carries direction; zero is meaningless)");
        if (!trace.cells.empty() && time < trace.cells.back().time)
            fail("timestamp decreases");

        trace.cells.push_back(Cell{time, size});
    }
    return trace;
}

inline Trace load_trace(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open trace file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_trace(buf.str(), path.string());
}

inline std::string format_trace(const Trace& trace) {
    std::string out;
    out.reserve(trace.size() * 18);
    char line[64];
    for (const Cell& c : trace.cells) {
        const int n = std::snprintf(line, sizeof line, "%.6f\t%d\n", c.time, c.size);
        out.append(line, static_cast<std::size_t>(n));
    }
    return out;
}

inline void save_trace(const Trace& trace, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write trace file: " + path.string());
    out << format_trace(trace);
    if (!out) throw IoError("short write: " + path.string());
}

// ---------------------------------------------------------------------------
// Cleaning

enum class RejectReason : std::uint8_t {
    None,
    TooShort,        // fewer than min_cells cells
    OneDirectional,  // all cells share one direction
};

struct CleanVerdict {
    bool accepted = false;
    RejectReason reason = RejectReason::None;
};

inline constexpr std::size_t kMinCleanCells = 50;

// Accept/reject rule applied before a trace may enter a dataset: at least
// `min_cells` cells and traffic in both directions.  Pure; the trace itself
// is never modified, so cleaning an already-accepted trace accepts it again.
inline CleanVerdict clean(const Trace& trace, std::size_t min_cells = kMinCleanCells) {
    if (trace.size() < min_cells) return {false, RejectReason::TooShort};
    const std::size_t out = trace.count_outgoing();
    if (out == 0 || out == trace.size()) return {false, RejectReason::OneDirectional};
    return {true, RejectReason::None};
}

inline std::string_view to_string(RejectReason r) {
    switch (r) {
        case RejectReason::None: return "none";
        case RejectReason::TooShort: return "too_short";
        case RejectReason::OneDirectional: return "one_directional";
    }
    return "unknown";
}

// ---------------------------------------------------------------------------
// Direction vectors

// Fixed-length (+1/-1/0) representation used as classifier input: +1 for an
// outgoing cell, -1 for incoming, truncated or zero-padded on the right to
// exactly `length`.  Zeros therefore appear only as trailing padding.
inline std::vector<std::int8_t> to_direction_vector(const Trace& trace, std::size_t length) {
    if (length < 1) throw DataError("direction vector length must be >= 1");
    std::vector<std::int8_t> v(length, 0);
    const std::size_t n = std::min(length, trace.size());
    for (std::size_t i = 0; i < n; ++i)
        v[i] = trace.cells[i].outgoing() ? std::int8_t{1} : std::int8_t{-1};
    return v;
}

}  // namespace wf
