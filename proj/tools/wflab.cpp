// wflab: deterministic website-fingerprinting laboratory.
//
//   wflab <command> --config experiment.cfg [--seed N] [--out DIR]
//
// Commands: synth | defend | featurize | train | eval | gradcheck | timing.
// Configs are flat `key = value` files; --seed and --out override the
// corresponding config keys.  Every command writes only under the output
// directory and reruns byte-identically from the same config + seed.

#include <CLI11.hpp>

#include <wf/config.hpp>
#include <wf/cumul.hpp>
#include <wf/dataset.hpp>
#include <wf/defenses.hpp>
#include <wf/df.hpp>
#include <wf/errors.hpp>
#include <wf/eval.hpp>
#include <wf/gradcheck.hpp>
#include <wf/io.hpp>
#include <wf/rng.hpp>
#include <wf/synth.hpp>
#include <wf/trace.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace wf;

namespace {

// Union of keys across all commands; unknown keys fail loudly no matter
// which command reads the file.
const std::vector<std::string> kAllowedKeys{
    "seed", "out",
    // synth
    "monitored", "unmonitored", "visits", "jitter", "split_train", "split_valid",
    "split_test",
    // defend
    "input", "defense", "buflo_rate", "buflo_cell", "buflo_min_duration",
    "tamaraw_rate_out", "tamaraw_rate_in", "tamaraw_multiple", "wtfpad_bins",
    "wtfpad_gap_infinity", "wtfpad_burst_infinity", "wt_mode",
    // train
    "length", "epochs", "batch", "lr", "resume",
    // eval
    "checkpoint", "mode", "unmonitored_label", "scenario", "mispair_fraction",
    // featurize
    "points",
};

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
};

struct Run {
    KeyValueConfig cfg;
    std::uint64_t seed = 0;
    fs::path out;
};

Run resolve(const Options& o, bool config_required) {
    Run run;
    if (!o.config_path.empty()) {
        run.cfg = KeyValueConfig::from_file(o.config_path);
        run.cfg.restrict_keys(kAllowedKeys);
    } else if (config_required) {
        throw ConfigError("this command needs --config");
    }
    run.seed = o.seed.has_value() ? *o.seed : run.cfg.get_u64("seed", 0);
    const std::string out = !o.out.empty() ? o.out : run.cfg.get_string("out", "");
    if (out.empty()) throw ConfigError("no output directory: pass --out or set key 'out'");
    run.out = out;
    std::error_code ec;
    fs::create_directories(run.out, ec);
    if (ec) throw IoError("cannot create output directory '" + out + "': " + ec.message());
    return run;
}

std::ofstream open_csv(const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

// ---------------------------------------------------------------------------
// synth

int cmd_synth(const Run& run) {
    const std::size_t monitored = run.cfg.get_u64("monitored", 20);
    const std::size_t unmonitored = run.cfg.get_u64("unmonitored", 0);
    const std::size_t visits = run.cfg.get_u64("visits", 100);
    const double jitter = run.cfg.get_double("jitter", 0.8);
    SplitRatios ratios;
    ratios.train = run.cfg.get_double("split_train", 0.8);
    ratios.valid = run.cfg.get_double("split_valid", 0.1);
    ratios.test = run.cfg.get_double("split_test", 0.1);

    Dataset world = generate_world(monitored, unmonitored, visits, run.seed, jitter);
    world = split_dataset(world, ratios, hash_tag(run.seed, "split"));
    const fs::path dir = run.out / "dataset";
    save_dataset(world, dir);
    std::cout << "synth: " << world.visits.size() << " visits, "
              << world.labels().size() << " labels -> " << dir.string() << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// defend

DefendedTrace defend_one(const std::string& defense, const Run& run, const Dataset& ds,
                         std::size_t index, const PadHistogram& gap,
                         const PadHistogram& burst,
                         const std::vector<std::size_t>& wt_decoys) {
    const Visit& visit = ds.visits[index];
    if (defense == "buflo") {
        return buflo(visit.trace, run.cfg.get_double("buflo_rate", 50.0),
                     static_cast<int>(run.cfg.get_u64("buflo_cell", 512)),
                     run.cfg.get_double("buflo_min_duration", 10.0));
    }
    if (defense == "tamaraw") {
        return tamaraw(visit.trace, run.cfg.get_double("tamaraw_rate_out", 50.0),
                       run.cfg.get_double("tamaraw_rate_in", 50.0),
                       run.cfg.get_u64("tamaraw_multiple", 100));
    }
    if (defense == "wtfpad") {
        return wtfpad(visit.trace, gap, burst, hash_tag(run.seed, "defend:" + visit.id));
    }
    if (defense == "walkie_talkie") {
        const bool symmetric = run.cfg.get_string("wt_mode", "asymmetric") == "symmetric";
        return apply_wt(visit.trace, ds.visits[wt_decoys[index]].trace, symmetric);
    }
    throw ConfigError("unknown defense '" + defense + "'");
}

// Decoy index per visit for the paired-molding defense.
std::vector<std::size_t> pick_wt_decoys(const Dataset& ds, const Run& run) {
    const std::string mode = run.cfg.get_string("wt_mode", "asymmetric");
    std::vector<std::size_t> decoys(ds.visits.size());
    if (mode == "symmetric") {
        // Pair sorted labels (0,1), (2,3), ... and twin visit j with visit j.
        std::map<std::string, std::vector<std::size_t>> by_label;
        for (std::size_t i = 0; i < ds.visits.size(); ++i)
            by_label[ds.visits[i].label].push_back(i);
        std::vector<std::string> labels;
        for (const auto& [label, _] : by_label) labels.push_back(label);
        if (labels.size() % 2 != 0)
            throw DataError("symmetric molding needs an even number of labels");
        for (std::size_t p = 0; p + 1 < labels.size(); p += 2) {
            const auto& a = by_label[labels[p]];
            const auto& b = by_label[labels[p + 1]];
            if (a.size() != b.size())
                throw DataError("symmetric molding needs equal visit counts per label");
            for (std::size_t j = 0; j < a.size(); ++j) {
                decoys[a[j]] = b[j];
                decoys[b[j]] = a[j];
            }
        }
    } else if (mode == "asymmetric") {
        for (std::size_t i = 0; i < ds.visits.size(); ++i) {
            std::vector<std::size_t> pool;
            for (std::size_t j = 0; j < ds.visits.size(); ++j)
                if (ds.visits[j].label != ds.visits[i].label) pool.push_back(j);
            if (pool.empty())
                throw DataError("asymmetric molding needs visits of another label");
            Rng rng = derive_stream(run.seed, "decoy", i);
            decoys[i] = pool[rng.uniform_int(pool.size())];
        }
    } else {
        throw ConfigError("wt_mode must be 'symmetric' or 'asymmetric'");
    }
    return decoys;
}

int cmd_defend(const Run& run) {
    const Dataset ds = load_dataset(run.cfg.require_string("input"));
    const std::string defense = run.cfg.require_string("defense");

    PadHistogram gap = PadHistogram::disabled();
    PadHistogram burst = PadHistogram::disabled();
    if (defense == "wtfpad") {
        WtfPadFit fit;
        fit.bins = run.cfg.get_u64("wtfpad_bins", fit.bins);
        fit.gap_infinity = run.cfg.get_double("wtfpad_gap_infinity", fit.gap_infinity);
        fit.burst_infinity = run.cfg.get_double("wtfpad_burst_infinity", fit.burst_infinity);
        std::vector<const Trace*> sample;
        const std::vector<std::size_t> train =
            ds.has_splits() ? ds.indices_in(Split::Train) : std::vector<std::size_t>{};
        if (!train.empty())
            for (std::size_t i : train) sample.push_back(&ds.visits[i].trace);
        else
            for (const Visit& v : ds.visits) sample.push_back(&v.trace);
        const auto pair = fit_pad_histograms(sample, fit);
        gap = pair.first;
        burst = pair.second;
    }
    std::vector<std::size_t> wt_decoys;
    if (defense == "walkie_talkie") wt_decoys = pick_wt_decoys(ds, run);

    DefendedDataset dd;
    dd.dataset = ds;
    dd.masks.reserve(ds.visits.size());
    for (std::size_t i = 0; i < ds.visits.size(); ++i) {
        DefendedTrace dt = defend_one(defense, run, ds, i, gap, burst, wt_decoys);
        dd.dataset.visits[i].trace = std::move(dt.trace);
        dd.masks.push_back(std::move(dt.dummy));
    }

    const fs::path dir = run.out / "defended";
    save_defended_dataset(dd, dir);

    const OverheadReport report = overheads(ds, dd.dataset);
    std::ofstream csv = open_csv(run.out / "overheads.csv");
    csv << "bandwidth_overhead,latency_overhead\n"
        << format_double(report.bandwidth_overhead) << ','
        << format_double(report.latency_overhead) << '\n';

    std::cout << "defend: " << defense << " over " << ds.visits.size()
              << " visits, bandwidth overhead " << format_double(report.bandwidth_overhead)
              << ", latency overhead " << format_double(report.latency_overhead) << " -> "
              << dir.string() << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// featurize

int cmd_featurize(const Run& run) {
    const Dataset ds = load_dataset(run.cfg.require_string("input"));
    const std::size_t points = run.cfg.get_u64("points", kCumulPoints);

    std::ofstream csv = open_csv(run.out / "features.csv");
    csv << "id,label";
    if (ds.has_splits()) csv << ",split";
    for (const std::string& name : cumul_feature_names(points)) csv << ',' << name;
    csv << '\n';
    for (std::size_t i = 0; i < ds.visits.size(); ++i) {
        const Visit& v = ds.visits[i];
        csv << v.id << ',' << v.label;
        if (ds.has_splits()) csv << ',' << to_string(ds.splits[i]);
        for (double f : cumul_features(v.trace, points)) csv << ',' << format_double(f);
        csv << '\n';
    }
    std::cout << "featurize: " << ds.visits.size() << " visits, " << 4 + points
              << " features -> " << (run.out / "features.csv").string() << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// train

DFConfig model_config_from(const Run& run) {
    DFConfig cfg;
    cfg.input_length = run.cfg.get_u64("length", cfg.input_length);
    cfg.epochs = run.cfg.get_u64("epochs", cfg.epochs);
    cfg.batch_size = run.cfg.get_u64("batch", cfg.batch_size);
    cfg.optimizer.lr = run.cfg.get_double("lr", cfg.optimizer.lr);
    return cfg;
}

int cmd_train(const Run& run) {
    const Dataset ds = load_dataset(run.cfg.require_string("input"));
    if (!ds.has_splits()) throw DataError("training needs a dataset with split assignment");
    const DFConfig cfg = model_config_from(run);

    TrainedModel model = [&] {
        if (run.cfg.has("resume")) {
            TrainedModel resumed = load_model(run.cfg.require_string("resume"));
            resumed.config.epochs = cfg.epochs;  // adopt this run's target
            const LabeledTensor train =
                vectorize(ds, Split::Train, resumed.config.input_length, resumed.labels);
            const LabeledTensor test =
                vectorize(ds, Split::Test, resumed.config.input_length, resumed.labels);
            train_to_epoch(resumed, train, test, cfg.epochs);
            return resumed;
        }
        return train_df(ds, cfg, run.seed);
    }();

    save_model(model, run.out / "checkpoint.dfnn");
    std::ofstream csv = open_csv(run.out / "epochs.csv");
    write_history_csv(model, csv);

    const EpochRow last = model.history.empty() ? EpochRow{} : model.history.back();
    std::cout << "train: " << model.epochs_done << " epochs, train_acc "
              << format_double(last.train_acc) << ", test_acc " << format_double(last.test_acc)
              << " -> " << (run.out / "checkpoint.dfnn").string() << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// eval

int cmd_eval(const Run& run) {
    TrainedModel model = load_model(run.cfg.require_string("checkpoint"));
    const Dataset ds = load_dataset(run.cfg.require_string("input"));
    if (!ds.has_splits()) throw DataError("evaluation needs a dataset with split assignment");
    const std::string mode = run.cfg.get_string("mode", "closed");

    const LabeledTensor test = vectorize(ds, Split::Test, model.config.input_length,
                                         model.labels);
    if (test.y.empty()) throw DataError("test split is empty");
    Tensor probs = predict_proba(model, test.x);
    std::vector<std::vector<double>> rows;
    rows.reserve(test.y.size());
    for (std::size_t i = 0; i < test.y.size(); ++i) rows.push_back(proba_row(probs, i));

    std::ofstream metrics = open_csv(run.out / "metrics.csv");
    metrics << "metric,value\n";

    if (mode == "closed") {
        std::vector<std::size_t> predicted;
        predicted.reserve(rows.size());
        for (const auto& row : rows) predicted.push_back(row_argmax(row));
        const double accuracy = closed_world_accuracy(predicted, test.y);
        metrics << "accuracy," << format_double(accuracy) << '\n'
                << "top2_accuracy," << format_double(top_n_accuracy(rows, test.y, 2)) << '\n'
                << "test_loss," << format_double(nn::cross_entropy(probs, test.y).loss) << '\n'
                << "test_count," << test.y.size() << '\n';
        std::cout << "eval: closed world, accuracy " << format_double(accuracy) << " over "
                  << test.y.size() << " test visits\n";
        return 0;
    }
    if (mode != "open") throw ConfigError("mode must be 'closed' or 'open'");

    const std::string unmon = run.cfg.get_string("unmonitored_label", kUnmonitoredLabel);
    const std::size_t unmon_index = label_index(model.labels, unmon);
    std::vector<bool> truth;
    truth.reserve(test.y.size());
    for (std::size_t y : test.y) truth.push_back(y != unmon_index);

    const std::vector<SweepPoint> points =
        sweep(rows, truth, unmon_index, default_thresholds(rows, unmon_index));
    const ConfusionCounts base = confusion(decide_all(rows, unmon_index, 0.0), truth);
    const Rates r = rates(base);

    metrics << "tpr," << format_double(r.tpr) << '\n'
            << "fpr," << format_double(r.fpr) << '\n'
            << "roc_auc," << format_double(roc_auc(points)) << '\n'
            << "test_count," << test.y.size() << '\n';

    std::ofstream sweep_csv = open_csv(run.out / "sweep.csv");
    sweep_csv << "threshold,tpr,fpr,precision,recall\n";
    for (const SweepPoint& p : points) {
        sweep_csv << format_double(p.threshold) << ',' << format_double(p.tpr) << ','
                  << format_double(p.fpr) << ',';
        if (p.precision_defined) sweep_csv << format_double(p.precision);
        sweep_csv << ',' << format_double(p.recall) << '\n';
    }
    std::cout << "eval: open world, tpr " << format_double(r.tpr) << ", fpr "
              << format_double(r.fpr) << ", roc_auc " << format_double(roc_auc(points))
              << " over " << test.y.size() << " test visits\n";
    return 0;
}

// ---------------------------------------------------------------------------
// gradcheck

int cmd_gradcheck(const Run& run) {
    const std::vector<nn::GradCheckRow> rows = nn::run_all_checks(run.seed);
    std::ofstream csv = open_csv(run.out / "gradcheck.csv");
    csv << "layer,max_rel_err,coords,status\n";
    bool all_pass = true;
    for (const nn::GradCheckRow& row : rows) {
        const char* status = row.pass ? "pass" : "FAIL";
        csv << row.layer << ',' << format_double(row.max_rel_err) << ',' << row.coords << ','
            << status << '\n';
        std::cout << "gradcheck: " << row.layer << "  max_rel_err "
                  << format_double(row.max_rel_err) << "  " << status << '\n';
        all_pass = all_pass && row.pass;
    }
    if (!all_pass) {
        std::cerr << "error:data: gradient check failed\n";
        return 1;
    }
    return 0;
}

// ---------------------------------------------------------------------------
// timing

int cmd_timing(const Run& run) {
    using clock = std::chrono::steady_clock;
    std::vector<std::pair<std::string, double>> phases;
    const auto timed = [&](const std::string& name, auto&& fn) {
        const auto start = clock::now();
        fn();
        const std::chrono::duration<double> elapsed = clock::now() - start;
        phases.emplace_back(name, elapsed.count());
    };

    timed("synth", [&] { cmd_synth(run); });

    const std::string defense = run.cfg.get_string("defense", "");
    fs::path train_input = run.out / "dataset";
    if (!defense.empty()) {
        Run defend_run = run;
        defend_run.cfg.set("input", (run.out / "dataset").string());
        timed("defend", [&] { cmd_defend(defend_run); });
        train_input = run.out / "defended";
    }

    Run train_run = run;
    train_run.cfg.set("input", train_input.string());
    timed("train", [&] { cmd_train(train_run); });

    Run eval_run = run;
    eval_run.cfg.set("input", train_input.string());
    eval_run.cfg.set("checkpoint", (run.out / "checkpoint.dfnn").string());
    timed("eval", [&] { cmd_eval(eval_run); });

    std::ofstream csv = open_csv(run.out / "timing.csv");
    csv << "phase,seconds\n";
    for (const auto& [name, seconds] : phases) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3f", seconds);
        csv << name << ',' << buf << '\n';
        std::cout << "timing: " << name << ' ' << buf << "s\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deterministic website-fingerprinting laboratory"};
    app.require_subcommand(1);

    Options options;
    app.add_option("--config", options.config_path, "experiment config file (key = value)");
    app.add_option("--seed", options.seed, "root seed (overrides config key 'seed')");
    app.add_option("--out", options.out, "output directory (overrides config key 'out')");

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic labeled world");
    CLI::App* defend = app.add_subcommand("defend", "apply a padding defense to a dataset");
    CLI::App* featurize = app.add_subcommand("featurize", "emit cumulative trace features");
    CLI::App* train = app.add_subcommand("train", "train the traffic classifier");
    CLI::App* eval_cmd = app.add_subcommand("eval", "score a checkpoint on a dataset");
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "verify gradients against finite differences");
    CLI::App* timing = app.add_subcommand("timing", "run the pipeline and report per-phase wall time");
    for (CLI::App* sub : {synth, defend, featurize, train, eval_cmd, gradcheck, timing})
        sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "error:config: " << e.what() << '\n';
        return 1;
    }

    try {
        if (synth->parsed()) return cmd_synth(resolve(options, true));
        if (defend->parsed()) return cmd_defend(resolve(options, true));
        if (featurize->parsed()) return cmd_featurize(resolve(options, true));
        if (train->parsed()) return cmd_train(resolve(options, true));
        if (eval_cmd->parsed()) return cmd_eval(resolve(options, true));
        if (gradcheck->parsed()) return cmd_gradcheck(resolve(options, false));
        if (timing->parsed()) return cmd_timing(resolve(options, true));
        throw ConfigError("no command given");
    } catch (const ParseError& e) {
        std::cerr << "error:parse: " << e.what() << '\n';
    } catch (const ConfigError& e) {
        std::cerr << "error:config: " << e.what() << '\n';
    } catch (const DataError& e) {
        std::cerr << "error:data: " << e.what() << '\n';
    } catch (const IoError& e) {
        std::cerr << "error:io: " << e.what() << '\n';
    } catch (const std::exception& e) {
        std::cerr << "error:internal: " << e.what() << '\n';
    }
    return 1;
}
