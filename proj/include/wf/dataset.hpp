#pragma once
// Labeled trace collections, deterministic splitting, and manifest I/O.
//
// A dataset directory looks like:
//   manifest.csv            header "path,label" (paths relative to the csv)
//   splits.csv              optional, header "path,label,split"
//   traces/<id>.cells       one trace file per visit
//   traces/<id>.dummy       optional, emitted by defenses (see defenses.hpp)

#include <wf/errors.hpp>
#include <wf/rng.hpp>
#include <wf/trace.hpp>

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

namespace wf {

enum class Split : std::uint8_t { Train = 0, Valid = 1, Test = 2 };

inline std::string_view to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Valid: return "valid";
        case Split::Test: return "test";
    }
    return "unknown";
}

inline Split split_from_string(std::string_view s) {
    if (s == "train") return Split::Train;
    if (s == "valid") return Split::Valid;
    if (s == "test") return Split::Test;
    throw ParseError("unknown split name: " + std::string(s));
}

struct Visit {
    std::string id;     // unique within the dataset; doubles as the filename stem
    std::string label;  // site identity, or "unmonitored"
    Trace trace;
};

struct Dataset {
    std::vector<Visit> visits;
    std::vector<Split> splits;  // empty until split_dataset() assigns them

    bool has_splits() const { return splits.size() == visits.size(); }

    std::vector<std::string> labels() const {
        std::vector<std::string> out;
        for (const Visit& v : visits)
            if (std::find(out.begin(), out.end(), v.label) == out.end())
                out.push_back(v.label);
        std::sort(out.begin(), out.end());
        return out;
    }

    std::vector<std::size_t> indices_in(Split s) const {
        if (!has_splits()) throw DataError("dataset has no split assignment");
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < visits.size(); ++i)
            if (splits[i] == s) idx.push_back(i);
        return idx;
    }
};

struct SplitRatios {
    double train = 0.8;
    double valid = 0.1;
    double test = 0.1;
};

// Stratified split with deterministic per-label shuffling.  Counts use
// largest-remainder rounding so they always sum to the class size; every
// split with a nonzero ratio must receive at least one visit per label,
// otherwise the class is too small and we refuse rather than silently emit
// an empty split.  The RNG stream is derived from (seed, label), so the
// assignment for one label is independent of all others and of visit order
// across labels.
inline Dataset split_dataset(const Dataset& input, const SplitRatios& ratios,
                             std::uint64_t seed) {
    const double sum = ratios.train + ratios.valid + ratios.test;
    if (!(sum > 0.999 && sum < 1.001))
        throw ConfigError("split ratios must sum to 1");
    if (ratios.train < 0 || ratios.valid < 0 || ratios.test < 0)
        throw ConfigError("split ratios must be non-negative");

    // Group visit indices by label, preserving manifest order within a label.
    std::map<std::string, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < input.visits.size(); ++i)
        by_label[input.visits[i].label].push_back(i);

    Dataset out = input;
    out.splits.assign(input.visits.size(), Split::Train);

    const std::array<double, 3> ratio{ratios.train, ratios.valid, ratios.test};
    for (auto& [label, indices] : by_label) {
        const std::size_t n = indices.size();

        // Largest-remainder apportionment of n visits over the three splits.
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
            return a < b;  // deterministic tie-break: train, valid, test
        });
        for (std::size_t extra = 0; extra < n - assigned; ++extra)
            ++count[order[extra % 3]];

        for (int s = 0; s < 3; ++s)
            if (ratio[s] > 0.0 && count[s] == 0)
                throw DataError("label '" + label + "' has too few visits (" +
                                std::to_string(n) + ") for the requested split");

        // Fisher–Yates with the label's own stream.
        Rng rng = derive_stream(seed, "split:" + label);
        for (std::size_t i = n - 1; i > 0; --i) {
            const std::size_t j = rng.uniform_int(i + 1);
            std::swap(indices[i], indices[j]);
        }

        std::size_t cursor = 0;
        for (int s = 0; s < 3; ++s)
            for (std::size_t k = 0; k < count[s]; ++k)
                out.splits[indices[cursor++]] = static_cast<Split>(s);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Manifest I/O

namespace detail {

inline void require_header(std::string_view got, std::string_view want,
                           const std::filesystem::path& path) {
    if (trim(got) != want)
        throw ParseError(path.string() + ":1: expected header '" + std::string(want) +
                         "', got '" + std::string(trim(got)) + "'");
}

}  // namespace detail

// Writes traces plus manifest.csv (and splits.csv when assigned) under dir.
inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "traces");

    std::ofstream manifest(dir / "manifest.csv", std::ios::binary);
    if (!manifest) throw IoError("cannot write " + (dir / "manifest.csv").string());
    manifest << "path,label\n";
    for (const Visit& v : ds.visits) {
        const std::string rel = "traces/" + v.id + ".cells";
        save_trace(v.trace, dir / rel);
        manifest << rel << ',' << v.label << '\n';
    }
    if (!manifest) throw IoError("short write: manifest.csv");

    if (ds.has_splits()) {
        std::ofstream sp(dir / "splits.csv", std::ios::binary);
        if (!sp) throw IoError("cannot write " + (dir / "splits.csv").string());
        sp << "path,label,split\n";
        for (std::size_t i = 0; i < ds.visits.size(); ++i)
            sp << "traces/" << ds.visits[i].id << ".cells," << ds.visits[i].label << ','
               << to_string(ds.splits[i]) << '\n';
        if (!sp) throw IoError("short write: splits.csv");
    }
}

// Loads a dataset directory.  splits.csv, if present, must list exactly the
// manifest's rows in the same order.
inline Dataset load_dataset(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    const fs::path manifest_path = dir / "manifest.csv";
    std::ifstream manifest(manifest_path, std::ios::binary);
    if (!manifest) throw IoError("cannot open " + manifest_path.string());

    Dataset ds;
    std::string line;
    if (!std::getline(manifest, line))
        throw ParseError(manifest_path.string() + ": empty manifest");
    detail::require_header(line, "path,label", manifest_path);

    std::size_t line_no = 1;
    while (std::getline(manifest, line)) {
        ++line_no;
        const std::string_view l = detail::trim(line);
        if (l.empty()) continue;
        const std::size_t comma = l.rfind(',');
        if (comma == std::string_view::npos)
            throw ParseError(manifest_path.string() + ":" + std::to_string(line_no) +
                             ": expected 'path,label'");
        const std::string rel(l.substr(0, comma));
        const std::string label(l.substr(comma + 1));
        if (rel.empty() || label.empty())
            throw ParseError(manifest_path.string() + ":" + std::to_string(line_no) +
                             ": empty path or label");
        Visit v;
        v.label = label;
        const fs::path p = dir / rel;
        v.id = p.stem().string();
        v.trace = load_trace(p);
        ds.visits.push_back(std::move(v));
    }

    const fs::path splits_path = dir / "splits.csv";
    if (fs::exists(splits_path)) {
        std::ifstream sp(splits_path, std::ios::binary);
        if (!sp) throw IoError("cannot open " + splits_path.string());
        if (!std::getline(sp, line))
            throw ParseError(splits_path.string() + ": empty file");
        detail::require_header(line, "path,label,split", splits_path);
        std::size_t i = 0;
        std::size_t sp_line = 1;
        while (std::getline(sp, line)) {
            ++sp_line;
            const std::string_view l = detail::trim(line);
            if (l.empty()) continue;
            if (i >= ds.visits.size())
                throw ParseError(splits_path.string() + ": more rows than manifest");
            const std::size_t c2 = l.rfind(',');
            if (c2 == std::string_view::npos)
                throw ParseError(splits_path.string() + ":" + std::to_string(sp_line) +
                                 ": expected 'path,label,split'");
            ds.splits.push_back(split_from_string(l.substr(c2 + 1)));
            ++i;
        }
        if (i != ds.visits.size())
            throw ParseError(splits_path.string() + ": fewer rows than manifest");
    }
    return ds;
}

}  // namespace wf
