#pragma once
// The convolutional traffic classifier: configuration, network builder,
// deterministic trainer with resumable checkpoints, and inference helpers.
//
// Input is a batch of fixed-length direction vectors shaped [N, 1, L].
// The network is four conv blocks (conv-BN-act twice, then max-pool and
// dropout; ELU in the first block, ReLU afterwards), a flatten, two
// dense-BN-ReLU-dropout blocks, and a dense prediction layer under softmax.

#include <wf/dataset.hpp>
#include <wf/errors.hpp>
#include <wf/io.hpp>
#include <wf/layers.hpp>
#include <wf/network.hpp>
#include <wf/optim.hpp>
#include <wf/rng.hpp>
#include <wf/tensor.hpp>
#include <wf/trace.hpp>

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace wf {

struct DFConfig {
    std::size_t input_length = 5000;
    std::size_t classes = 2;

    std::size_t blocks = 4;
    std::array<std::size_t, 4> block_filters{32, 64, 128, 256};
    std::size_t kernel = 8;
    std::size_t pool = 8;
    std::size_t pool_stride = 4;
    double pool_dropout = 0.1;

    std::size_t fc_count = 2;
    std::array<std::size_t, 2> fc_units{512, 512};
    std::array<double, 2> fc_dropout{0.7, 0.5};

    nn::AdamaxConfig optimizer{};
    std::size_t batch_size = 128;
    std::size_t epochs = 30;

    void validate() const {
        if (input_length < 1) throw ConfigError("input_length must be at least 1");
        if (classes < 2) throw ConfigError("classes must be at least 2");
        if (blocks < 1 || blocks > 4) throw ConfigError("blocks must be between 1 and 4");
        if (kernel < 1) throw ConfigError("kernel must be at least 1");
        if (pool < 1) throw ConfigError("pool must be at least 1");
        if (pool_stride < 1) throw ConfigError("pool_stride must be at least 1");
        if (fc_count > 2) throw ConfigError("fc_count must be at most 2");
        if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
        for (std::size_t b = 0; b < blocks; ++b)
            if (block_filters[b] < 1)
                throw ConfigError("block " + std::to_string(b + 1) + " needs at least one filter");
        for (std::size_t i = 0; i < fc_count; ++i)
            if (fc_units[i] < 1)
                throw ConfigError("dense block " + std::to_string(i + 1) + " needs at least one unit");
        const auto rate_ok = [](double r) { return r >= 0.0 && r < 1.0; };
        if (!rate_ok(pool_dropout) || !rate_ok(fc_dropout[0]) || !rate_ok(fc_dropout[1]))
            throw ConfigError("dropout rates must lie in [0, 1)");
    }

    void serialize(BinWriter& w) const {
        w.u64(input_length);
        w.u64(classes);
        w.u64(blocks);
        for (std::size_t f : block_filters) w.u64(f);
        w.u64(kernel);
        w.u64(pool);
        w.u64(pool_stride);
        w.f64(pool_dropout);
        w.u64(fc_count);
        for (std::size_t u : fc_units) w.u64(u);
        for (double d : fc_dropout) w.f64(d);
        w.f64(optimizer.lr);
        w.f64(optimizer.beta1);
        w.f64(optimizer.beta2);
        w.f64(optimizer.eps);
        w.u64(batch_size);
        w.u64(epochs);
    }

    static DFConfig deserialize(BinReader& r) {
        DFConfig c;
        c.input_length = r.u64();
        c.classes = r.u64();
        c.blocks = r.u64();
        for (std::size_t& f : c.block_filters) f = r.u64();
        c.kernel = r.u64();
        c.pool = r.u64();
        c.pool_stride = r.u64();
        c.pool_dropout = r.f64();
        c.fc_count = r.u64();
        for (std::size_t& u : c.fc_units) u = r.u64();
        for (double& d : c.fc_dropout) d = r.f64();
        c.optimizer.lr = r.f64();
        c.optimizer.beta1 = r.f64();
        c.optimizer.beta2 = r.f64();
        c.optimizer.eps = r.f64();
        c.batch_size = r.u64();
        c.epochs = r.u64();
        return c;
    }
};

// Sequence-length bookkeeping through the conv blocks.
struct DFShape {
    std::array<std::size_t, 4> block_lengths{};  // length after each block's pool
    std::size_t flatten_width = 0;
};

inline DFShape df_shape(const DFConfig& cfg) {
    cfg.validate();
    DFShape shape;
    std::size_t length = cfg.input_length;
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
        if (length < cfg.pool)
            throw DataError("input_length " + std::to_string(cfg.input_length) +
                            " is too small for " + std::to_string(cfg.blocks) +
                            " pooling stages");
        length = (length - cfg.pool) / cfg.pool_stride + 1;
        shape.block_lengths[b] = length;
    }
    shape.flatten_width = cfg.block_filters[cfg.blocks - 1] * length;
    return shape;
}

// Builds the untrained network.  All weight initialisation and dropout
// streams are derived from `seed`, so two builds with equal arguments are
// bitwise identical.
inline nn::Network build_df(const DFConfig& cfg, std::uint64_t seed) {
    df_shape(cfg);  // validates config and pooling feasibility
    nn::Network net;

    std::uint64_t init_index = 0;
    const auto init_stream = [&]() { return derive_stream(seed, "init", init_index++); };
    std::uint64_t drop_index = 0;
    const auto drop_stream = [&]() { return derive_stream(seed, "dropout", drop_index++); };

    std::size_t channels = 1;
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
        const std::size_t filters = cfg.block_filters[b];
        const nn::Act act = b == 0 ? nn::Act::Elu : nn::Act::Relu;
        for (int half = 0; half < 2; ++half) {
            auto& conv = net.add<nn::Conv1d>(channels, filters, cfg.kernel, 1,
                                             nn::Padding::Same);
            Rng rng = init_stream();
            conv.init_params(rng);
            channels = filters;
            net.add<nn::BatchNorm>(filters);
            net.add<nn::Activation>(act);
        }
        net.add<nn::MaxPool1d>(cfg.pool, cfg.pool_stride);
        net.add<nn::Dropout>(cfg.pool_dropout).seed_stream(drop_stream());
    }

    net.add<nn::Flatten>();
    std::size_t width = df_shape(cfg).flatten_width;
    for (std::size_t i = 0; i < cfg.fc_count; ++i) {
        auto& dense = net.add<nn::Dense>(width, cfg.fc_units[i]);
        Rng rng = init_stream();
        dense.init_params(rng);
        width = cfg.fc_units[i];
        net.add<nn::BatchNorm>(cfg.fc_units[i]);
        net.add<nn::Activation>(nn::Act::Relu);
        net.add<nn::Dropout>(cfg.fc_dropout[i]).seed_stream(drop_stream());
    }

    auto& prediction = net.add<nn::Dense>(width, cfg.classes);
    Rng rng = init_stream();
    prediction.init_params(rng);
    net.add<nn::Activation>(nn::Act::Softmax);
    return net;
}

// ---------------------------------------------------------------------------
// Dataset vectorisation

struct LabeledTensor {
    Tensor x;  // [N, 1, L]
    std::vector<std::size_t> y;
    std::vector<std::string> ids;
};

// Sorted unique labels appearing in one split of the dataset.
inline std::vector<std::string> class_labels(const Dataset& ds, Split split) {
    if (!ds.has_splits()) throw DataError("dataset has no split assignment");
    std::vector<std::string> labels;
    for (std::size_t i : ds.indices_in(split)) labels.push_back(ds.visits[i].label);
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    return labels;
}

inline std::size_t label_index(const std::vector<std::string>& labels, const std::string& label) {
    const auto it = std::lower_bound(labels.begin(), labels.end(), label);
    if (it == labels.end() || *it != label)
        throw DataError("label '" + label + "' is not present in the training split");
    return static_cast<std::size_t>(it - labels.begin());
}

inline LabeledTensor vectorize(const Dataset& ds, Split split, std::size_t length,
                               const std::vector<std::string>& labels) {
    const std::vector<std::size_t> indices = ds.indices_in(split);
    LabeledTensor out;
    out.x = Tensor::zeros({indices.size(), 1, length});
    out.y.reserve(indices.size());
    out.ids.reserve(indices.size());
    for (std::size_t row = 0; row < indices.size(); ++row) {
        const Visit& visit = ds.visits[indices[row]];
        const std::vector<std::int8_t> dir = to_direction_vector(visit.trace, length);
        double* dst = out.x.data.data() + row * length;
        for (std::size_t i = 0; i < length; ++i) dst[i] = static_cast<double>(dir[i]);
        out.y.push_back(label_index(labels, visit.label));
        out.ids.push_back(visit.id);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Inference helpers

// Indices of the n largest entries, ties resolved toward the lower index.
inline std::vector<std::size_t> top_n(const std::vector<double>& row, std::size_t n) {
    std::vector<std::size_t> order(row.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (row[a] != row[b]) return row[a] > row[b];
        return a < b;
    });
    order.resize(std::min(n, order.size()));
    return order;
}

inline std::size_t row_argmax(const std::vector<double>& row) {
    if (row.empty()) throw DataError("argmax of an empty row");
    std::size_t best = 0;
    for (std::size_t i = 1; i < row.size(); ++i)
        if (row[i] > row[best]) best = i;
    return best;
}

struct EpochRow {
    std::size_t epoch = 0;  // 1-based
    double train_acc = 0.0;
    double test_acc = 0.0;
    double train_loss = 0.0;
    double test_loss = 0.0;
};

struct TrainedModel {
    DFConfig config;
    std::vector<std::string> labels;  // class index -> label
    nn::Network net;
    nn::Adamax opt;
    Rng shuffle_rng{0};
    std::uint64_t epochs_done = 0;
    std::vector<EpochRow> history;
};

// Class probabilities for a batch [N, 1, L] -> [N, K].  Samples run through
// the network one at a time, so results never depend on how callers batch.
inline Tensor predict_proba(TrainedModel& model, const Tensor& x) {
    x.check_consistent("predict input");
    if (x.rank() != 3 || x.dim(1) != 1 || x.dim(2) != model.config.input_length)
        throw DataError("predict input must be shaped [N, 1, " +
                        std::to_string(model.config.input_length) + "]");
    const std::size_t n = x.dim(0);
    const std::size_t length = x.dim(2);
    const std::size_t k = model.labels.size();
    Tensor out = Tensor::zeros({n, k});
    Tensor sample = Tensor::zeros({1, 1, length});
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>(i * length), length,
                    sample.data.begin());
        const Tensor probs = model.net.forward(sample, nn::Mode::Infer);
        std::copy_n(probs.data.begin(), k, out.data.begin() + static_cast<std::ptrdiff_t>(i * k));
    }
    return out;
}

inline std::vector<double> proba_row(const Tensor& probs, std::size_t row) {
    const std::size_t k = probs.dim(1);
    return {probs.data.begin() + static_cast<std::ptrdiff_t>(row * k),
            probs.data.begin() + static_cast<std::ptrdiff_t>((row + 1) * k)};
}

// ---------------------------------------------------------------------------
// Training

namespace dfdetail {

inline std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i)
        std::swap(order[i - 1], order[rng.uniform_int(i)]);
    return order;
}

inline void gather(const LabeledTensor& src, const std::vector<std::size_t>& order,
                   std::size_t start, std::size_t count, Tensor& x,
                   std::vector<std::size_t>& y) {
    const std::size_t length = src.x.dim(2);
    x = Tensor::zeros({count, 1, length});
    y.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t s = order[start + i];
        std::copy_n(src.x.data.begin() + static_cast<std::ptrdiff_t>(s * length), length,
                    x.data.begin() + static_cast<std::ptrdiff_t>(i * length));
        y[i] = src.y[s];
    }
}

inline std::size_t count_correct(const Tensor& probs, const std::vector<std::size_t>& y) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < y.size(); ++i)
        if (row_argmax(proba_row(probs, i)) == y[i]) ++correct;
    return correct;
}

}  // namespace dfdetail

// Advances training until `target_epochs` epochs have been completed.  Calling
// this on a freshly built model, or on one reloaded from a checkpoint taken
// mid-run, produces the same trajectory: all random state lives in the model.
inline void train_to_epoch(TrainedModel& model, const LabeledTensor& train,
                           const LabeledTensor& test, std::size_t target_epochs) {
    const std::size_t n = train.x.dim(0);
    if (n == 0) throw DataError("training split is empty");
    const std::size_t batch = model.config.batch_size;

    while (model.epochs_done < target_epochs) {
        const std::vector<std::size_t> order = dfdetail::shuffled_indices(n, model.shuffle_rng);

        double loss_sum = 0.0;
        std::size_t correct = 0;
        Tensor xb;
        std::vector<std::size_t> yb;
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t count = std::min(batch, n - start);
            dfdetail::gather(train, order, start, count, xb, yb);

            const Tensor probs = model.net.forward(xb, nn::Mode::Train);
            const nn::LossResult ce = nn::cross_entropy(probs, yb);
            loss_sum += ce.loss * static_cast<double>(count);
            correct += dfdetail::count_correct(probs, yb);

            model.net.zero_grads();
            model.net.backward(ce.dprobs);
            model.opt.step(model.net.params());
        }

        EpochRow row;
        row.epoch = static_cast<std::size_t>(model.epochs_done) + 1;
        row.train_acc = static_cast<double>(correct) / static_cast<double>(n);
        row.train_loss = loss_sum / static_cast<double>(n);
        if (test.x.dim(0) > 0) {
            const Tensor probs = predict_proba(model, test.x);
            row.test_acc = static_cast<double>(dfdetail::count_correct(probs, test.y)) /
                           static_cast<double>(test.y.size());
            row.test_loss = nn::cross_entropy(probs, test.y).loss;
        }
        model.history.push_back(row);
        ++model.epochs_done;
    }
}

// End-to-end training on a split dataset.  Class set and order come from the
// training split; any test-split label missing from it is an error.
inline TrainedModel train_df(const Dataset& ds, const DFConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::vector<std::string> labels = class_labels(ds, Split::Train);
    if (labels.size() < 2) throw DataError("training split needs at least two classes");

    DFConfig fit = cfg;
    fit.classes = labels.size();

    const LabeledTensor train = vectorize(ds, Split::Train, fit.input_length, labels);
    const LabeledTensor test = vectorize(ds, Split::Test, fit.input_length, labels);

    TrainedModel model{fit,
                       std::move(labels),
                       build_df(fit, hash_tag(seed, "model")),
                       nn::Adamax(fit.optimizer),
                       derive_stream(seed, "shuffle")};
    train_to_epoch(model, train, test, fit.epochs);
    return model;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline void save_model(const TrainedModel& model, const std::filesystem::path& path) {
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw IoError("cannot write checkpoint: " + path.string());
    BinWriter w(file);
    nn::write_checkpoint_header(w);
    model.net.write_specs(w);
    model.net.write_states(w);
    model.opt.serialize(w);
    model.config.serialize(w);
    w.u64(model.labels.size());
    for (const std::string& label : model.labels) w.str(label);
    for (std::uint64_t word : model.shuffle_rng.state()) w.u64(word);
    w.u64(model.epochs_done);
    w.u64(model.history.size());
    for (const EpochRow& row : model.history) {
        w.u64(row.epoch);
        w.f64(row.train_acc);
        w.f64(row.test_acc);
        w.f64(row.train_loss);
        w.f64(row.test_loss);
    }
}

inline TrainedModel load_model(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw IoError("cannot open checkpoint: " + path.string());
    BinReader r(file);
    nn::read_checkpoint_header(r);
    nn::Network net = nn::Network::from_specs(r);
    net.read_states(r);
    nn::Adamax opt;
    opt.deserialize(r);
    DFConfig cfg = DFConfig::deserialize(r);

    const std::uint64_t label_count = r.u64();
    std::vector<std::string> labels;
    labels.reserve(label_count);
    for (std::uint64_t i = 0; i < label_count; ++i) labels.push_back(r.str());

    std::array<std::uint64_t, 4> words{};
    for (std::uint64_t& word : words) word = r.u64();
    Rng shuffle(0);
    shuffle.set_state(words);

    TrainedModel model{std::move(cfg), std::move(labels), std::move(net), std::move(opt),
                       shuffle};
    model.epochs_done = r.u64();
    const std::uint64_t rows = r.u64();
    model.history.reserve(rows);
    for (std::uint64_t i = 0; i < rows; ++i) {
        EpochRow row;
        row.epoch = r.u64();
        row.train_acc = r.f64();
        row.test_acc = r.f64();
        row.train_loss = r.f64();
        row.test_loss = r.f64();
        model.history.push_back(row);
    }
    return model;
}

inline void write_history_csv(const TrainedModel& model, std::ostream& out) {
    out << "epoch,train_acc,test_acc,train_loss,test_loss\n";
    for (const EpochRow& row : model.history)
        out << row.epoch << ',' << format_double(row.train_acc) << ','
            << format_double(row.test_acc) << ',' << format_double(row.train_loss) << ','
            << format_double(row.test_loss) << '\n';
}

}  // namespace wf
