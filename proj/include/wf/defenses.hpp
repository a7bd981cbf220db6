#pragma once
// Padding defenses over traces, plus overhead accounting.
//
// Four simulators:
//   buflo     - both directions send on one fixed-rate slot grid; dummies
//               fill every free slot until max(original end, min_duration).
//   tamaraw   - per-direction rates; after a direction's last real cell its
//               count is padded up to a multiple of pad_multiple.
//   wtfpad    - adaptive padding: real cells are never delayed; dummies are
//               injected when a sampled timeout expires inside a large gap.
//   apply_wt  - walkie-talkie mold padding: the subject's burst sequence is
//               raised to the element-wise max with a decoy's.
//
// Shared guarantees (checked by the property suite): real cells are never
// dropped or reordered — filtering dummies out of any defended trace yields
// the original cells in order with their directions; timestamps never
// decrease; a real cell is never emitted earlier than its original time.

#include <wf/dataset.hpp>
#include <wf/errors.hpp>
#include <wf/rng.hpp>
#include <wf/trace.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

namespace wf {

struct DefendedTrace {
    Trace trace;
    std::vector<std::uint8_t> dummy;  // parallel to trace.cells; 1 = padding
    std::string origin_id;            // visit id of the source trace, if known

    std::size_t dummy_count() const {
        std::size_t n = 0;
        for (const std::uint8_t f : dummy) n += f;
        return n;
    }
};

namespace detail {

// Smallest integer k with k/rate >= t.  ceil(t*rate) can land one slot high
// or low through rounding of the product, so nudge until k/rate is the
// actual minimal covering slot under double division.
inline std::int64_t ceil_slot(double t, double rate) {
    if (t <= 0.0) return 0;
    auto k = static_cast<std::int64_t>(std::ceil(t * rate));
    while (k > 0 && static_cast<double>(k - 1) / rate >= t) --k;
    while (static_cast<double>(k) / rate < t) ++k;
    return k;
}

struct PendingCell {
    double time;
    int size;
    bool dummy;
    std::int64_t order;  // original index for reals; slot-derived for dummies
};

// Reals sort before dummies at equal times; reals keep original order.
inline void merge_events(std::vector<PendingCell>& cells, DefendedTrace& out) {
    std::stable_sort(cells.begin(), cells.end(), [](const PendingCell& a, const PendingCell& b) {
        if (a.time != b.time) return a.time < b.time;
        if (a.dummy != b.dummy) return !a.dummy;
        return a.order < b.order;
    });
    out.trace.cells.reserve(cells.size());
    out.dummy.reserve(cells.size());
    for (const PendingCell& c : cells) {
        out.trace.cells.push_back(Cell{c.time, c.size});
        out.dummy.push_back(c.dummy ? 1 : 0);
    }
}

inline int direction_of(const Cell& c) { return c.outgoing() ? 0 : 1; }

// Assign each real cell to a slot on its direction's grid: at or after its
// own timestamp, after its direction's previous cell (FIFO), and never
// before the previously assigned cell of either direction — the last rule
// keeps the global real-cell order intact even when one direction backlogs.
inline std::vector<std::int64_t> assign_slots(const Trace& in, const double rate_by_dir[2]) {
    std::vector<std::int64_t> slot(in.size());
    std::int64_t next_free[2] = {0, 0};
    double prev_time = 0.0;
    for (std::size_t i = 0; i < in.size(); ++i) {
        const int d = direction_of(in.cells[i]);
        const double earliest = std::max(in.cells[i].time, prev_time);
        const std::int64_t k =
            std::max(next_free[d], ceil_slot(earliest, rate_by_dir[d]));
        slot[i] = k;
        next_free[d] = k + 1;
        prev_time = static_cast<double>(k) / rate_by_dir[d];
    }
    return slot;
}

inline constexpr std::int64_t kMaxSlots = 100'000'000;

inline void check_slot_budget(std::int64_t slots, const char* defense) {
    if (slots > kMaxSlots)
        throw DataError(std::string(defense) +
                        ": rate x duration implies more than 1e8 slots; refusing");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// BuFLO

// Constant-rate padding in both directions on the grid t = k/rate.  Dummies
// occupy every slot not taken by a real cell, up to the slot covering
// max(original end time, min_duration); real cells queued past that point
// are still delivered, but no padding follows them.
inline DefendedTrace buflo(const Trace& in, double rate, int cell_size,
                           double min_duration = 10.0) {
    if (!(rate > 0.0)) throw DataError("buflo: rate must be positive");
    if (cell_size <= 0) throw DataError("buflo: cell_size must be positive");
    if (min_duration < 0.0) throw DataError("buflo: min_duration must be >= 0");
    if (in.empty()) throw DataError("buflo: empty trace");

    const double rates[2] = {rate, rate};
    const std::vector<std::int64_t> slot = detail::assign_slots(in, rates);

    const double pad_until = std::max(in.cells.back().time, min_duration);
    const std::int64_t pad_slot = detail::ceil_slot(pad_until, rate);
    detail::check_slot_budget(pad_slot + 1, "buflo");

    std::vector<std::int64_t> real_slots[2];
    for (std::size_t i = 0; i < in.size(); ++i)
        real_slots[detail::direction_of(in.cells[i])].push_back(slot[i]);

    std::vector<detail::PendingCell> cells;
    for (std::size_t i = 0; i < in.size(); ++i)
        cells.push_back({static_cast<double>(slot[i]) / rate, in.cells[i].size, false,
                         static_cast<std::int64_t>(i)});
    for (int d = 0; d < 2; ++d) {
        const int size = d == 0 ? cell_size : -cell_size;
        std::size_t next_real = 0;
        for (std::int64_t k = 0; k <= pad_slot; ++k) {
            while (next_real < real_slots[d].size() && real_slots[d][next_real] < k)
                ++next_real;
            if (next_real < real_slots[d].size() && real_slots[d][next_real] == k) continue;
            cells.push_back({static_cast<double>(k) / rate, size, true, k * 2 + d});
        }
    }

    DefendedTrace out;
    detail::merge_events(cells, out);
    return out;
}

// ---------------------------------------------------------------------------
// Tamaraw

// Constant-rate per direction with independent rates; after the last real
// cell in a direction, padding continues until that direction's total count
// is a multiple of pad_multiple.
inline DefendedTrace tamaraw(const Trace& in, double rate_out = 50.0,
                             double rate_in = 50.0, std::size_t pad_multiple = 100) {
    if (!(rate_out > 0.0) || !(rate_in > 0.0))
        throw DataError("tamaraw: rates must be positive");
    if (pad_multiple < 1) throw DataError("tamaraw: pad_multiple must be >= 1");
    if (in.empty()) throw DataError("tamaraw: empty trace");

    const double rates[2] = {rate_out, rate_in};
    const std::vector<std::int64_t> slot = detail::assign_slots(in, rates);

    std::vector<std::int64_t> real_slots[2];
    int dummy_size[2] = {512, -512};
    for (std::size_t i = 0; i < in.size(); ++i) {
        const int d = detail::direction_of(in.cells[i]);
        if (real_slots[d].empty()) dummy_size[d] = d == 0 ? std::abs(in.cells[i].size)
                                                          : -std::abs(in.cells[i].size);
        real_slots[d].push_back(slot[i]);
    }

    std::vector<detail::PendingCell> cells;
    for (std::size_t i = 0; i < in.size(); ++i)
        cells.push_back({static_cast<double>(slot[i]) / rates[detail::direction_of(in.cells[i])],
                         in.cells[i].size, false, static_cast<std::int64_t>(i)});
    for (int d = 0; d < 2; ++d) {
        if (real_slots[d].empty()) continue;  // count 0 is already a multiple
        const std::int64_t last_real = real_slots[d].back();
        // Every slot up to the last real cell is occupied; then pad the count
        // up to the next multiple of pad_multiple.
        const auto occupied = static_cast<std::size_t>(last_real) + 1;
        const std::size_t target =
            ((occupied + pad_multiple - 1) / pad_multiple) * pad_multiple;
        detail::check_slot_budget(static_cast<std::int64_t>(target), "tamaraw");
        std::size_t next_real = 0;
        for (std::int64_t k = 0; k < static_cast<std::int64_t>(target); ++k) {
            while (next_real < real_slots[d].size() && real_slots[d][next_real] < k)
                ++next_real;
            if (next_real < real_slots[d].size() && real_slots[d][next_real] == k) continue;
            cells.push_back({static_cast<double>(k) / rates[d], dummy_size[d], true, k * 2 + d});
        }
    }

    DefendedTrace out;
    detail::merge_events(cells, out);
    return out;
}

// ---------------------------------------------------------------------------
// WTF-PAD style adaptive padding

// Token histogram: finite bins [edges[i], edges[i+1]) plus one infinity bin.
// Sampling draws a bin uniformly over remaining tokens, consumes one token,
// and returns a uniform value inside the bin (infinity for the last).  When
// all tokens are spent the histogram refills to its initial counts.
struct PadHistogram {
    std::vector<double> edges;           // >= 2 entries, strictly increasing
    std::vector<std::uint64_t> tokens;   // edges.size()-1 finite bins + 1 infinity bin

    void validate() const {
        if (edges.size() < 2) throw DataError("PadHistogram: need >= 1 finite bin");
        for (std::size_t i = 1; i < edges.size(); ++i)
            if (!(edges[i] > edges[i - 1]))
                throw DataError("PadHistogram: edges must be strictly increasing");
        if (edges.front() < 0.0) throw DataError("PadHistogram: negative delay bin");
        if (tokens.size() != edges.size())
            throw DataError("PadHistogram: token count must equal finite bins + 1");
    }

    static PadHistogram disabled() {
        return PadHistogram{{0.0, 1.0}, {0, 1}};  // all tokens on infinity
    }
};

namespace detail {

class HistSampler {
public:
    explicit HistSampler(const PadHistogram& hist) : hist_(hist), live_(hist.tokens) {
        hist_.validate();
        total_ = 0;
        for (const std::uint64_t t : live_) total_ += t;
        initial_total_ = total_;
    }

    // Sampled delay in seconds; +infinity selects the infinity bin.
    double sample(Rng& rng) {
        if (initial_total_ == 0) return std::numeric_limits<double>::infinity();
        if (total_ == 0) {  // refill
            live_ = hist_.tokens;
            total_ = initial_total_;
        }
        std::uint64_t r = rng.uniform_int(total_);
        std::size_t bin = 0;
        while (r >= live_[bin]) {
            r -= live_[bin];
            ++bin;
        }
        --live_[bin];
        --total_;
        if (bin + 1 == live_.size()) return std::numeric_limits<double>::infinity();
        return rng.uniform(hist_.edges[bin], hist_.edges[bin + 1]);
    }

private:
    PadHistogram hist_;
    std::vector<std::uint64_t> live_;
    std::uint64_t total_ = 0;
    std::uint64_t initial_total_ = 0;
};

}  // namespace detail

// Adaptive padding.  Real cells keep their exact timestamps (this defense
// never delays traffic).  Per direction, after every real cell a timeout is
// drawn from gap_histogram; if it expires before that direction's next real
// cell, a dummy is emitted and a fake burst continues with timeouts drawn
// from burst_histogram until an infinity draw hands control back to the gap
// state.  Dummies never pass the trace's last real timestamp, so measured
// latency overhead is exactly zero.
inline DefendedTrace wtfpad(const Trace& in, const PadHistogram& gap_histogram,
                            const PadHistogram& burst_histogram, std::uint64_t seed) {
    if (in.empty()) throw DataError("wtfpad: empty trace");
    gap_histogram.validate();
    burst_histogram.validate();

    const double horizon = in.cells.back().time;

    std::vector<double> real_times[2];
    int dummy_size[2] = {512, -512};
    for (const Cell& c : in.cells) {
        const int d = detail::direction_of(c);
        if (real_times[d].empty())
            dummy_size[d] = d == 0 ? std::abs(c.size) : -std::abs(c.size);
        real_times[d].push_back(c.time);
    }

    std::vector<detail::PendingCell> cells;
    for (std::size_t i = 0; i < in.size(); ++i)
        cells.push_back({in.cells[i].time, in.cells[i].size, false,
                         static_cast<std::int64_t>(i)});

    for (int d = 0; d < 2; ++d) {
        if (real_times[d].empty()) continue;
        Rng rng = derive_stream(seed, d == 0 ? "wtfpad-out" : "wtfpad-in");
        detail::HistSampler gap_sampler(gap_histogram);
        detail::HistSampler burst_sampler(burst_histogram);
        std::int64_t emitted = 0;
        for (std::size_t i = 0; i < real_times[d].size(); ++i) {
            const double next_real = i + 1 < real_times[d].size()
                                         ? real_times[d][i + 1]
                                         : std::numeric_limits<double>::infinity();
            double cursor = real_times[d][i];
            bool in_fake_burst = false;
            while (true) {
                const double delay =
                    in_fake_burst ? burst_sampler.sample(rng) : gap_sampler.sample(rng);
                if (std::isinf(delay)) {
                    if (in_fake_burst) {  // fake burst over; rearm the gap timer
                        in_fake_burst = false;
                        continue;
                    }
                    break;  // gap state idles until the next real cell
                }
                const double fire = cursor + delay;
                if (fire >= next_real || fire > horizon) break;  // preempted
                cells.push_back({fire, dummy_size[d], true, emitted++});
                cursor = fire;
                in_fake_burst = true;
            }
        }
    }

    DefendedTrace out;
    detail::merge_events(cells, out);
    return out;
}

struct WtfPadFit {
    std::size_t bins = 16;
    double gap_infinity = 0.25;    // probability mass on "do not start a fake burst"
    double burst_infinity = 0.10;  // probability mass on "end the fake burst"
};

// Fits (gap, burst) histograms from observed per-direction inter-arrival
// times: log-spaced bins, split at the geometric mean — deltas above it are
// "large gaps" worth filling, deltas below it set fake-burst pacing.
// Callers should pass training-split traces only.
inline std::pair<PadHistogram, PadHistogram> fit_pad_histograms(
    const std::vector<const Trace*>& traces, const WtfPadFit& fit = {}) {
    if (fit.bins < 1) throw ConfigError("fit_pad_histograms: bins must be >= 1");
    if (!(fit.gap_infinity >= 0.0 && fit.gap_infinity <= 1.0) ||
        !(fit.burst_infinity >= 0.0 && fit.burst_infinity <= 1.0))
        throw ConfigError("fit_pad_histograms: infinity fractions must be in [0,1]");

    std::vector<double> deltas;
    for (const Trace* t : traces) {
        double last_seen[2] = {-1.0, -1.0};
        for (const Cell& c : t->cells) {
            const int d = detail::direction_of(c);
            if (last_seen[d] >= 0.0 && c.time > last_seen[d])
                deltas.push_back(c.time - last_seen[d]);
            last_seen[d] = c.time;
        }
    }
    if (deltas.empty())
        return {PadHistogram::disabled(), PadHistogram::disabled()};

    double log_sum = 0.0;
    for (const double dt : deltas) log_sum += std::log(dt);
    const double split = std::exp(log_sum / static_cast<double>(deltas.size()));

    auto build = [&](bool above, double infinity_fraction) {
        // All mass on the infinity token disables this half of the sampler.
        if (infinity_fraction >= 1.0) return PadHistogram::disabled();
        std::vector<double> subset;
        for (const double dt : deltas)
            if ((dt >= split) == above) subset.push_back(dt);
        if (subset.empty()) return PadHistogram::disabled();

        auto [lo_it, hi_it] = std::minmax_element(subset.begin(), subset.end());
        double lo = *lo_it;
        double hi = *hi_it * (1.0 + 1e-9);  // keep the max inside the last bin
        if (!(hi > lo)) hi = lo * 1.5 + 1e-9;

        PadHistogram h;
        const std::size_t nbins = fit.bins;
        h.edges.resize(nbins + 1);
        const double llo = std::log(lo);
        const double lhi = std::log(hi);
        for (std::size_t i = 0; i <= nbins; ++i)
            h.edges[i] = std::exp(llo + (lhi - llo) * static_cast<double>(i) /
                                            static_cast<double>(nbins));
        h.edges.front() = lo;
        h.edges.back() = hi;
        h.tokens.assign(nbins + 1, 0);
        for (const double dt : subset) {
            const auto it = std::upper_bound(h.edges.begin(), h.edges.end(), dt);
            std::size_t bin = static_cast<std::size_t>(it - h.edges.begin());
            bin = bin == 0 ? 0 : bin - 1;
            if (bin >= nbins) bin = nbins - 1;
            ++h.tokens[bin];
        }
        const auto finite = static_cast<double>(subset.size());
        h.tokens.back() = static_cast<std::uint64_t>(
            std::llround(finite * infinity_fraction / (1.0 - infinity_fraction)));
        h.validate();
        return h;
    };

    return {build(true, fit.gap_infinity), build(false, fit.burst_infinity)};
}

// ---------------------------------------------------------------------------
// Walkie-Talkie mold padding

// Half-duplex form: maximal same-direction runs, in order.  This is an
// approximation of true half-duplex capture — consecutive same-direction
// cells merge into one burst and bursts then alternate by construction.
struct BurstSeq {
    bool first_outgoing = true;
    std::vector<std::size_t> counts;  // all positive; directions alternate
};

inline BurstSeq burst_counts(const Trace& trace) {
    BurstSeq seq;
    if (trace.empty()) return seq;
    seq.first_outgoing = trace.cells.front().outgoing();
    bool current = seq.first_outgoing;
    std::size_t run = 0;
    for (const Cell& c : trace.cells) {
        if (c.outgoing() == current) {
            ++run;
        } else {
            seq.counts.push_back(run);
            current = c.outgoing();
            run = 1;
        }
    }
    seq.counts.push_back(run);
    return seq;
}

// Element-wise maximum after right-padding the shorter sequence with zero
// bursts.  Commutative, idempotent, and dominating by construction.
inline std::vector<std::size_t> wt_mold(const std::vector<std::size_t>& a,
                                        const std::vector<std::size_t>& b) {
    std::vector<std::size_t> molded(std::max(a.size(), b.size()), 0);
    for (std::size_t i = 0; i < molded.size(); ++i) {
        const std::size_t av = i < a.size() ? a[i] : 0;
        const std::size_t bv = i < b.size() ? b[i] : 0;
        molded[i] = std::max(av, bv);
    }
    return molded;
}

// Mold the subject's bursts to the pairwise supersequence with a decoy.
// Dummy cells extend each burst at its last real timestamp, so real cells
// are never delayed.  In symmetric mode subject and decoy must begin in the
// same direction (the pair then shares one defended direction vector); in
// asymmetric mode a decoy starting opposite is shifted one burst to align.
inline DefendedTrace apply_wt(const Trace& subject, const Trace& decoy, bool symmetric) {
    if (subject.empty() || decoy.empty()) throw DataError("apply_wt: empty trace");
    const BurstSeq runs_s = burst_counts(subject);
    BurstSeq runs_d = burst_counts(decoy);
    if (runs_d.first_outgoing != runs_s.first_outgoing) {
        if (symmetric)
            throw DataError("apply_wt: symmetric pair must start in the same direction");
        runs_d.counts.insert(runs_d.counts.begin(), 0);
    }
    const std::vector<std::size_t> molded = wt_mold(runs_s.counts, runs_d.counts);

    const int unit = std::abs(subject.cells.front().size);
    DefendedTrace out;
    std::size_t cell_idx = 0;
    double anchor = subject.cells.front().time;
    bool outgoing = runs_s.first_outgoing;
    for (std::size_t b = 0; b < molded.size(); ++b) {
        const std::size_t real = b < runs_s.counts.size() ? runs_s.counts[b] : 0;
        for (std::size_t j = 0; j < real; ++j, ++cell_idx) {
            out.trace.cells.push_back(subject.cells[cell_idx]);
            out.dummy.push_back(0);
            anchor = subject.cells[cell_idx].time;
        }
        for (std::size_t j = real; j < molded[b]; ++j) {
            out.trace.cells.push_back(Cell{anchor, outgoing ? unit : -unit});
            out.dummy.push_back(1);
        }
        outgoing = !outgoing;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Overhead accounting

struct OverheadReport {
    double bandwidth_overhead = 0.0;  // (defended cells - real cells) / real cells
    double latency_overhead = 0.0;    // (sum defended durations - sum original) / sum original
};

// Datasets must contain the same visit ids.  Bandwidth counts cells; latency
// compares per-trace durations (last timestamp - first timestamp).
inline OverheadReport overheads(const Dataset& original, const Dataset& defended) {
    if (original.visits.size() != defended.visits.size())
        throw DataError("overheads: datasets differ in size");
    std::map<std::string, const Visit*> by_id;
    for (const Visit& v : original.visits) by_id[v.id] = &v;

    long double orig_cells = 0, def_cells = 0, orig_dur = 0, def_dur = 0;
    for (const Visit& dv : defended.visits) {
        const auto it = by_id.find(dv.id);
        if (it == by_id.end())
            throw DataError("overheads: defended visit '" + dv.id + "' not in original");
        const Visit& ov = *it->second;
        orig_cells += static_cast<long double>(ov.trace.size());
        def_cells += static_cast<long double>(dv.trace.size());
        orig_dur += ov.trace.duration();
        def_dur += dv.trace.duration();
    }
    if (orig_cells == 0) throw DataError("overheads: original dataset has no cells");

    OverheadReport report;
    report.bandwidth_overhead = static_cast<double>((def_cells - orig_cells) / orig_cells);
    if (orig_dur > 0)
        report.latency_overhead = static_cast<double>((def_dur - orig_dur) / orig_dur);
    else if (def_dur > orig_dur)
        throw DataError("overheads: zero original duration but positive defended duration");
    return report;
}

// ---------------------------------------------------------------------------
// Defended dataset I/O: trace-model format plus a ".dummy" mask per trace.

struct DefendedDataset {
    Dataset dataset;
    std::vector<std::vector<std::uint8_t>> masks;  // parallel to dataset.visits
};

inline void save_defended_dataset(const DefendedDataset& dd, const std::filesystem::path& dir) {
    if (dd.masks.size() != dd.dataset.visits.size())
        throw DataError("save_defended_dataset: mask/visit count mismatch");
    save_dataset(dd.dataset, dir);
    for (std::size_t i = 0; i < dd.dataset.visits.size(); ++i) {
        const Visit& v = dd.dataset.visits[i];
        if (dd.masks[i].size() != v.trace.size())
            throw DataError("save_defended_dataset: mask length mismatch for " + v.id);
        std::ofstream out(dir / "traces" / (v.id + ".dummy"), std::ios::binary);
        if (!out) throw IoError("cannot write dummy mask for " + v.id);
        for (const std::uint8_t f : dd.masks[i]) out << (f ? '1' : '0') << '\n';
        if (!out) throw IoError("short write: dummy mask for " + v.id);
    }
}

inline DefendedDataset load_defended_dataset(const std::filesystem::path& dir) {
    DefendedDataset dd;
    dd.dataset = load_dataset(dir);
    dd.masks.reserve(dd.dataset.visits.size());
    for (const Visit& v : dd.dataset.visits) {
        const std::filesystem::path p = dir / "traces" / (v.id + ".dummy");
        std::ifstream in(p, std::ios::binary);
        if (!in) throw IoError("cannot open " + p.string());
        std::vector<std::uint8_t> mask;
        std::string line;
        while (std::getline(in, line)) {
            const std::string_view l = detail::trim(line);
            if (l.empty()) continue;
            if (l == "0")
                mask.push_back(0);
            else if (l == "1")
                mask.push_back(1);
            else
                throw ParseError(p.string() + ": mask lines must be 0 or 1");
        }
        if (mask.size() != v.trace.size())
            throw ParseError(p.string() + ": mask length does not match trace");
        dd.masks.push_back(std::move(mask));
    }
    return dd;
}

}  // namespace wf
