#pragma once
// Gradient verification: analytic backward passes vs central finite
// differences.  Each check builds a small layer (or the full conv stack at
// tiny scale), evaluates a scalar loss, and compares every analytic
// derivative — inputs and parameters — against (f(x+h) - f(x-h)) / 2h.

#include <wf/df.hpp>
#include <wf/layers.hpp>
#include <wf/network.hpp>
#include <wf/rng.hpp>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace wf::nn {

struct GradCheckRow {
    std::string layer;
    double max_rel_err = 0.0;
    std::size_t coords = 0;
    std::size_t skipped = 0;  // coordinates with a kink inside the probe interval
    bool pass = false;
};

namespace graddetail {

inline double rel_err(double analytic, double fd) {
    return std::fabs(analytic - fd) /
           (std::fabs(analytic) + std::fabs(fd) + 1e-3);
}

// Sweep coordinates of `storage`, comparing `analytic` to central FD of
// `loss`.  Checks every coordinate when there are at most `budget`,
// otherwise an evenly strided subsample.
//
// Central differences are meaningless when a derivative discontinuity (a
// ReLU sign change or a max-pool argmax flip) falls inside [x-h, x+h], so
// each coordinate first compares its two one-sided slopes: a jump between
// them marks the coordinate non-smooth and it is skipped (and counted).  A
// wrong analytic gradient cannot hide behind this filter — the function is
// smooth at such a coordinate, the slopes agree, and the mismatch is kept.
inline void fd_sweep(std::vector<double>& storage, const std::vector<double>& analytic,
                     const std::function<double()>& loss, double h, std::size_t budget,
                     GradCheckRow& row) {
    const std::size_t n = storage.size();
    const std::size_t stride = n <= budget ? 1 : (n + budget - 1) / budget;
    const double base = loss();
    for (std::size_t i = 0; i < n; i += stride) {
        const double saved = storage[i];
        storage[i] = saved + h;
        const double up = loss();
        storage[i] = saved - h;
        const double down = loss();
        storage[i] = saved;
        const double left = (base - down) / h;
        const double right = (up - base) / h;
        if (std::fabs(left - right) >
            2e-4 * (std::fabs(left) + std::fabs(right) + 1.0)) {
            ++row.skipped;
            continue;
        }
        const double fd = (up - down) / (2.0 * h);
        row.max_rel_err = std::max(row.max_rel_err, rel_err(analytic[i], fd));
        ++row.coords;
    }
}

inline Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// A row passes when every smooth coordinate agrees and non-smooth skips
// stayed rare (at most 5%), so the filter cannot mask systematic failures.
inline void finish_row(GradCheckRow& row, double tolerance) {
    row.pass = row.max_rel_err <= tolerance && row.coords > 0 &&
               row.skipped * 20 <= row.coords + row.skipped;
}

// Checks d(loss)/d(input) and d(loss)/d(params) for a single layer under
// loss = sum(c .* forward(x)), c fixed random.
inline GradCheckRow check_layer(const std::string& label, Layer& layer, Tensor x,
                                Mode mode, Rng& rng, double h = 1e-5,
                                double tolerance = 1e-4, std::size_t budget = 4096) {
    GradCheckRow row{label};

    Tensor y0 = layer.forward(x, mode);
    Tensor c = random_tensor(y0.shape, rng);

    const auto loss = [&]() {
        Tensor y = layer.forward(x, mode);
        double acc = 0.0;
        for (std::size_t i = 0; i < y.data.size(); ++i) acc += c.data[i] * y.data[i];
        return acc;
    };

    layer.zero_grads();
    layer.forward(x, mode);
    const Tensor dx = layer.backward(c);

    fd_sweep(x.data, dx.data, loss, h, budget, row);
    for (const ParamView& p : layer.params()) fd_sweep(*p.value, *p.grad, loss, h, budget, row);

    finish_row(row, tolerance);
    return row;
}

}  // namespace graddetail

// Cross-entropy gradient (w.r.t. probabilities) against finite differences.
inline GradCheckRow check_cross_entropy(std::uint64_t seed) {
    Rng rng = derive_stream(seed, "gradcheck:ce");
    GradCheckRow row{"cross_entropy"};
    Tensor probs = graddetail::random_tensor({4, 6}, rng, 0.05, 1.0);
    std::vector<std::size_t> labels{0, 3, 5, 2};

    const auto loss = [&]() { return cross_entropy(probs, labels).loss; };
    const Tensor dprobs = cross_entropy(probs, labels).dprobs;
    graddetail::fd_sweep(probs.data, dprobs.data, loss, 1e-6, 4096, row);
    graddetail::finish_row(row, 1e-6);  // tighter bound: the op is elementary
    return row;
}

// Full per-layer-kind suite.  Deterministic per seed.
inline std::vector<GradCheckRow> run_layer_checks(std::uint64_t seed) {
    using graddetail::check_layer;
    using graddetail::random_tensor;
    std::vector<GradCheckRow> rows;

    {
        Rng rng = derive_stream(seed, "gradcheck:conv-same");
        Conv1d conv(2, 3, 5, 1, Padding::Same);
        conv.init_params(rng);
        rows.push_back(check_layer("conv1d(same)", conv,
                                   random_tensor({2, 2, 12}, rng), Mode::Train, rng));
    }
    {
        Rng rng = derive_stream(seed, "gradcheck:conv-valid");
        Conv1d conv(2, 3, 5, 2, Padding::Valid);
        conv.init_params(rng);
        rows.push_back(check_layer("conv1d(valid,stride2)", conv,
                                   random_tensor({2, 2, 14}, rng), Mode::Train, rng));
    }
    {
        Rng rng = derive_stream(seed, "gradcheck:bn3");
        BatchNorm bn(3);
        rows.push_back(check_layer("batchnorm[N,C,L]", bn,
                                   random_tensor({4, 3, 6}, rng), Mode::Train, rng));
    }
    {
        Rng rng = derive_stream(seed, "gradcheck:bn2");
        BatchNorm bn(4);
        rows.push_back(check_layer("batchnorm[N,U]", bn,
                                   random_tensor({5, 4}, rng), Mode::Train, rng));
    }
    {
        Rng rng = derive_stream(seed, "gradcheck:elu");
        Activation elu(Act::Elu);
        Tensor x = random_tensor({2, 3, 7}, rng);
        rows.push_back(check_layer("elu", elu, x, Mode::Train, rng));
    }
    {
        Rng rng = derive_stream(seed, "gradcheck:relu");
        Activation relu(Act::Relu);
        // Keep inputs away from the kink at 0 where FD is ill-defined.
        Tensor x = random_tensor({2, 3, 7}, rng);
        for (double& v : x.data)
            if (std::fabs(v) < 0.05) v += v >= 0.0 ? 0.05 : -0.05;
        rows.push_back(check_layer("relu", relu, x, Mode::Train, rng));
    }
    {
        Rng rng = derive_stream(seed, "gradcheck:softmax");
        Activation softmax(Act::Softmax);
        rows.push_back(check_layer("softmax", softmax,
                                   random_tensor({3, 5}, rng, -3.0, 3.0), Mode::Train, rng));
    }
    {
        Rng rng = derive_stream(seed, "gradcheck:maxpool");
        MaxPool1d pool(4, 2);
        rows.push_back(check_layer("maxpool1d", pool,
                                   random_tensor({2, 2, 13}, rng), Mode::Train, rng));
    }
    {
        Rng rng = derive_stream(seed, "gradcheck:dropout");
        Dropout drop(0.3);
        drop.seed_stream(derive_stream(seed, "gradcheck:dropout-mask"));
        drop.freeze_mask(true);  // FD needs the same mask on every evaluation
        rows.push_back(check_layer("dropout(frozen)", drop,
                                   random_tensor({3, 11}, rng), Mode::Train, rng));
    }
    {
        Rng rng = derive_stream(seed, "gradcheck:dense");
        Dense dense(4, 5);
        dense.init_params(rng);
        rows.push_back(check_layer("dense", dense,
                                   random_tensor({3, 4}, rng), Mode::Train, rng));
    }
    {
        Rng rng = derive_stream(seed, "gradcheck:flatten");
        Flatten flat;
        rows.push_back(check_layer("flatten", flat,
                                   random_tensor({2, 3, 4}, rng), Mode::Train, rng));
    }
    rows.push_back(check_cross_entropy(seed));
    return rows;
}

// Two-block miniature of the traffic classifier (L=64) checked end to end
// through softmax + cross-entropy.  Dropout rates are zero (checkable
// function must be deterministic); batchnorm runs in train mode.
inline GradCheckRow check_mini_stack(std::uint64_t seed) {
    GradCheckRow row{"mini-stack"};

    DFConfig cfg;
    cfg.input_length = 64;
    cfg.blocks = 2;
    cfg.block_filters = {8, 16, 0, 0};
    cfg.fc_units = {32, 0};
    cfg.fc_count = 1;
    cfg.pool_dropout = 0.0;
    cfg.fc_dropout = {0.0, 0.0};
    cfg.classes = 4;
    Network net = build_df(cfg, hash_tag(seed, "mini-stack-init"));

    Rng rng = derive_stream(seed, "gradcheck:mini-stack");
    Tensor x = graddetail::random_tensor({3, 1, 64}, rng);
    std::vector<std::size_t> labels{1, 0, 3};

    const auto loss = [&]() {
        Tensor probs = net.forward(x, Mode::Train);
        return cross_entropy(probs, labels).loss;
    };

    net.zero_grads();
    Tensor probs = net.forward(x, Mode::Train);
    LossResult ce = cross_entropy(probs, labels);
    Tensor dx = net.backward(ce.dprobs);

    graddetail::fd_sweep(x.data, dx.data, loss, 1e-5, 512, row);
    for (const ParamView& p : net.params())
        graddetail::fd_sweep(*p.value, *p.grad, loss, 1e-5, 512, row);

    graddetail::finish_row(row, 1e-4);
    return row;
}

inline std::vector<GradCheckRow> run_all_checks(std::uint64_t seed) {
    std::vector<GradCheckRow> rows = run_layer_checks(seed);
    rows.push_back(check_mini_stack(seed));
    return rows;
}

}  // namespace wf::nn
