#pragma once
// Synthetic world generation.
//
// Pages are modeled as alternating request/response bursts: a short outgoing
// burst (the request) followed by a longer incoming burst (the response),
// repeated.  A SiteSignature fixes the burst skeleton; per-visit jitter
// perturbs burst lengths and timing so visits of one site cluster without
// being identical.  Burst structure (rather than i.i.d. cells) is the point:
// padding defenses and the classifiers all key on burst patterns.

#include <wf/dataset.hpp>
#include <wf/errors.hpp>
#include <wf/rng.hpp>
#include <wf/trace.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

namespace wf {

struct BurstSpec {
    bool outgoing = true;
    double mean = 1.0;    // expected cells in this burst
    double jitter = 0.0;  // additive stddev, in cells
};

struct SiteSignature {
    std::vector<BurstSpec> bursts;  // alternating directions, first outgoing
    double base_gap = 0.004;        // seconds between cells inside a burst
    double gap_jitter = 0.001;      // additive stddev, seconds
    int cell_size = 512;            // bytes per cell
};

namespace detail {

// Pause between bursts, as a multiple of the in-burst gap.  Chosen large so
// inter-arrival histograms are clearly bimodal (in-burst vs between-burst).
inline constexpr double kBurstPauseFactor = 12.0;

inline double positive_gap(Rng& rng, double mean, double sd) {
    const double g = rng.normal(mean, sd);
    return g > 1e-6 ? g : 1e-6;
}

}  // namespace detail

// One visit synthesized from a signature using the caller's stream.
inline Trace synth_visit(const SiteSignature& sig, Rng& rng) {
    Trace trace;
    double t = 0.0;
    bool first_cell = true;
    for (std::size_t b = 0; b < sig.bursts.size(); ++b) {
        const BurstSpec& burst = sig.bursts[b];
        const long drawn = std::llround(rng.normal(burst.mean, burst.jitter));
        const std::size_t count = drawn < 1 ? 1 : static_cast<std::size_t>(drawn);
        for (std::size_t j = 0; j < count; ++j) {
            if (!first_cell) {
                const bool crossing = (j == 0);
                const double mean =
                    crossing ? detail::kBurstPauseFactor * sig.base_gap : sig.base_gap;
                const double sd =
                    crossing ? detail::kBurstPauseFactor * sig.gap_jitter : sig.gap_jitter;
                t += detail::positive_gap(rng, mean, sd);
            }
            trace.cells.push_back(
                Cell{t, burst.outgoing ? sig.cell_size : -sig.cell_size});
            first_cell = false;
        }
    }
    return trace;
}

// Generates `visits` traces for one signature.  Deterministic per
// (signature, seed); every returned trace passes clean().  A visit whose
// jitter draw lands below the cleaning bar is redrawn from the same stream;
// a signature that cannot plausibly clear 50 cells is rejected up front.
inline std::vector<Trace> generate_site(const SiteSignature& sig, std::size_t visits,
                                        std::uint64_t seed) {
    if (visits < 1) throw DataError("generate_site: visits must be >= 1");
    if (sig.bursts.empty()) throw DataError("generate_site: empty burst pattern");
    double expected = 0.0;
    bool has_out = false;
    bool has_in = false;
    for (const BurstSpec& b : sig.bursts) {
        if (b.mean < 1.0) throw DataError("generate_site: burst mean < 1");
        expected += b.mean;
        (b.outgoing ? has_out : has_in) = true;
    }
    if (!(has_out && has_in))
        throw DataError("generate_site: signature is one-directional, cannot pass clean()");
    if (expected < static_cast<double>(kMinCleanCells))
        throw DataError("generate_site: signature expects <50 cells per visit");
    if (!(sig.base_gap > 0.0))
        throw DataError("generate_site: base_gap must be positive");

    std::vector<Trace> out;
    out.reserve(visits);
    for (std::size_t v = 0; v < visits; ++v) {
        Rng rng = derive_stream(seed, "visit", v);
        Trace trace;
        for (int attempt = 0;; ++attempt) {
            trace = synth_visit(sig, rng);
            if (clean(trace).accepted) break;
            if (attempt >= 64)
                throw DataError("generate_site: signature cannot produce a clean trace");
        }
        out.push_back(std::move(trace));
    }
    return out;
}

// Draws a random page signature.  jitter_scale sets how noisy visits are:
// burst-length stddev = jitter_scale * sqrt(mean).  The default world is
// learnable but not trivial.
inline SiteSignature random_signature(Rng& rng, double jitter_scale = 0.8) {
    SiteSignature sig;
    const std::size_t pairs = 12 + rng.uniform_int(19);  // 12..30 request/response rounds
    sig.bursts.reserve(pairs * 2);
    for (std::size_t p = 0; p < pairs; ++p) {
        const double out_mean = rng.uniform(2.0, 6.0);
        const double in_mean = rng.uniform(4.0, 18.0);
        sig.bursts.push_back({true, out_mean, jitter_scale * std::sqrt(out_mean)});
        sig.bursts.push_back({false, in_mean, jitter_scale * std::sqrt(in_mean)});
    }
    sig.base_gap = rng.uniform(0.003, 0.006);
    sig.gap_jitter = 0.25 * sig.base_gap;
    return sig;
}

inline constexpr const char* kUnmonitoredLabel = "unmonitored";

// Full world: num_monitored sites with visits_monitored traces each, plus
// num_unmonitored distinct one-visit sites sharing the single label
// "unmonitored" (open-world pools train as one extra class).
inline Dataset generate_world(std::size_t num_monitored, std::size_t num_unmonitored,
                              std::size_t visits_monitored, std::uint64_t seed,
                              double jitter_scale = 0.8) {
    if (num_monitored < 1) throw DataError("generate_world: need >= 1 monitored site");
    if (visits_monitored < 1) throw DataError("generate_world: visits must be >= 1");

    Dataset ds;
    char buf[64];
    for (std::size_t s = 0; s < num_monitored; ++s) {
        Rng sig_rng = derive_stream(seed, "signature", s);
        const SiteSignature sig = random_signature(sig_rng, jitter_scale);
        std::snprintf(buf, sizeof buf, "site-%03zu", s);
        const std::string label = buf;
        const std::uint64_t site_seed = hash_tag(seed, "site:" + label);
        std::vector<Trace> traces = generate_site(sig, visits_monitored, site_seed);
        for (std::size_t v = 0; v < traces.size(); ++v) {
            std::snprintf(buf, sizeof buf, "site-%03zu-v%04zu", s, v);
            ds.visits.push_back(Visit{buf, label, std::move(traces[v])});
        }
    }
    for (std::size_t u = 0; u < num_unmonitored; ++u) {
        Rng sig_rng = derive_stream(seed, "other-signature", u);
        const SiteSignature sig = random_signature(sig_rng, jitter_scale);
        const std::uint64_t site_seed = hash_tag(seed, "other:" + std::to_string(u));
        std::vector<Trace> traces = generate_site(sig, 1, site_seed);
        std::snprintf(buf, sizeof buf, "other-%05zu-v0000", u);
        ds.visits.push_back(Visit{buf, kUnmonitoredLabel, std::move(traces[0])});
    }
    return ds;
}

}  // namespace wf
