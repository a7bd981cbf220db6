#pragma once
// Neural-network layers with explicit forward/backward passes.
//
// Determinism contract: given identical inputs, parameters, and (for
// dropout) stream state, every method here is bit-reproducible.  Inference
// paths process samples one at a time so a batch prediction equals the
// concatenation of single-sample predictions exactly; training-only code
// (batch statistics, gradient reductions) uses fixed accumulation order.
//
// Matrix products go through Eigen (single-threaded here); everything else —
// layout, padding, caching, gradients — is explicit in this file.

#include <wf/io.hpp>
#include <wf/rng.hpp>
#include <wf/tensor.hpp>

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace wf::nn {

enum class Mode { Train, Infer };

struct ParamView {
    std::string name;
    std::vector<double>* value;
    std::vector<double>* grad;
};

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapCM = Eigen::Map<const MatRM>;

// Layer kind tags (also the checkpoint spec ids).
enum class LayerKind : std::uint32_t {
    Conv1d = 1,
    BatchNorm = 2,
    Activation = 3,
    MaxPool1d = 4,
    Dropout = 5,
    Dense = 6,
    Flatten = 7,
};

class Layer {
public:
    virtual ~Layer() = default;

    virtual LayerKind kind() const = 0;
    virtual std::string name() const = 0;

    virtual Tensor forward(const Tensor& x, Mode mode) = 0;
    virtual Tensor backward(const Tensor& dy) = 0;

    virtual std::vector<ParamView> params() { return {}; }

    // Structural hyperparameters (checkpoint "layer specs" section).
    virtual void write_spec(BinWriter& w) const = 0;
    // Learned parameters and persistent buffers (running stats, RNG state).
    virtual void write_state(BinWriter& w) const {
        for (const ParamView& p : const_cast<Layer*>(this)->params()) w.vec(*p.value);
    }
    virtual void read_state(BinReader& r) {
        for (const ParamView& p : params()) {
            std::vector<double> v = r.vec();
            if (v.size() != p.value->size())
                throw IoError("checkpoint parameter size mismatch in " + name());
            *p.value = std::move(v);
        }
    }

    void zero_grads() {
        for (const ParamView& p : params()) p.grad->assign(p.grad->size(), 0.0);
    }

protected:
    static void require(bool ok, const std::string& msg) {
        if (!ok) throw DataError(msg);
    }
};

// Fan-balanced uniform init (used by conv and dense): limit
// sqrt(6/(fan_in+fan_out)), which keeps forward activations and backward
// gradients at comparable scale through deep stacks.
inline void glorot_uniform(std::vector<double>& w, std::size_t fan_in,
                           std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& v : w) v = rng.uniform(-limit, limit);
}

// ---------------------------------------------------------------------------
// Conv1d: input [N, C, L] -> output [N, F, L_out], cross-correlation.
// "same" padding follows the usual convention: pad_total = (out-1)*stride +
// kernel - L with the extra cell on the right.

enum class Padding : std::uint32_t { Same = 0, Valid = 1 };

class Conv1d final : public Layer {
public:
    Conv1d(std::size_t in_channels, std::size_t filters, std::size_t kernel,
           std::size_t stride = 1, Padding padding = Padding::Same)
        : in_c_(in_channels), filters_(filters), kernel_(kernel), stride_(stride),
          padding_(padding) {
        require(in_c_ > 0 && filters_ > 0 && kernel_ > 0 && stride_ > 0,
                "conv1d: hyperparameters must be positive");
        w_.assign(filters_ * in_c_ * kernel_, 0.0);
        b_.assign(filters_, 0.0);
        dw_.assign(w_.size(), 0.0);
        db_.assign(b_.size(), 0.0);
    }

    void init_params(Rng& rng) {
        glorot_uniform(w_, in_c_ * kernel_, filters_ * kernel_, rng);
        b_.assign(filters_, 0.0);
    }

    LayerKind kind() const override { return LayerKind::Conv1d; }
    std::string name() const override { return "conv1d"; }

    std::size_t out_length(std::size_t in_len) const {
        if (padding_ == Padding::Same) return (in_len + stride_ - 1) / stride_;
        require(in_len >= kernel_, "conv1d: input shorter than kernel (valid padding)");
        return (in_len - kernel_) / stride_ + 1;
    }

    Tensor forward(const Tensor& x, Mode) override {
        x.check_consistent("conv1d input");
        require(x.rank() == 3, "conv1d: input must be [N, C, L]");
        require(x.dim(1) == in_c_, "conv1d: channel count mismatch");
        const std::size_t n = x.dim(0), len = x.dim(2);
        const std::size_t out_len = out_length(len);
        pad_left_ = 0;
        if (padding_ == Padding::Same) {
            const std::size_t span = (out_len - 1) * stride_ + kernel_;
            pad_left_ = span > len ? (span - len) / 2 : 0;
        }
        in_len_ = len;
        out_len_ = out_len;
        x_ = x;

        Tensor y = Tensor::zeros({n, filters_, out_len});
        col_.assign(in_c_ * kernel_ * out_len, 0.0);
        MapCM wm(w_.data(), static_cast<Eigen::Index>(filters_),
                 static_cast<Eigen::Index>(in_c_ * kernel_));
        for (std::size_t s = 0; s < n; ++s) {
            im2col(x.data.data() + s * in_c_ * len);
            MapCM cm(col_.data(), static_cast<Eigen::Index>(in_c_ * kernel_),
                     static_cast<Eigen::Index>(out_len));
            MapM ym(y.data.data() + s * filters_ * out_len,
                    static_cast<Eigen::Index>(filters_), static_cast<Eigen::Index>(out_len));
            ym.noalias() = wm * cm;
            for (std::size_t f = 0; f < filters_; ++f)
                ym.row(static_cast<Eigen::Index>(f)).array() += b_[f];
        }
        y.check_finite("conv1d output");
        return y;
    }

    Tensor backward(const Tensor& dy) override {
        require(!x_.data.empty(), "conv1d: backward before forward");
        dy.check_consistent("conv1d upstream gradient");
        require(dy.rank() == 3 && dy.dim(1) == filters_ && dy.dim(2) == out_len_,
                "conv1d: upstream gradient shape mismatch");
        const std::size_t n = x_.dim(0);
        Tensor dx = Tensor::zeros(x_.shape);
        std::fill(dw_.begin(), dw_.end(), 0.0);
        std::fill(db_.begin(), db_.end(), 0.0);

        const std::size_t ck = in_c_ * kernel_;
        std::vector<double> dcol(ck * out_len_);
        MapCM wm(w_.data(), static_cast<Eigen::Index>(filters_), static_cast<Eigen::Index>(ck));
        MapM dwm(dw_.data(), static_cast<Eigen::Index>(filters_), static_cast<Eigen::Index>(ck));
        for (std::size_t s = 0; s < n; ++s) {
            MapCM dym(dy.data.data() + s * filters_ * out_len_,
                      static_cast<Eigen::Index>(filters_), static_cast<Eigen::Index>(out_len_));
            // Input gradient: spread W^T * dY back over the receptive fields.
            MapM dcm(dcol.data(), static_cast<Eigen::Index>(ck),
                     static_cast<Eigen::Index>(out_len_));
            dcm.noalias() = wm.transpose() * dym;
            col2im_add(dcol.data(), dx.data.data() + s * in_c_ * in_len_);
            // Weight gradient: dW += dY * col^T (col rebuilt; nothing cached).
            im2col(x_.data.data() + s * in_c_ * in_len_);
            MapCM cm(col_.data(), static_cast<Eigen::Index>(ck),
                     static_cast<Eigen::Index>(out_len_));
            dwm.noalias() += dym * cm.transpose();
            for (std::size_t f = 0; f < filters_; ++f) {
                const double* row = dy.data.data() + (s * filters_ + f) * out_len_;
                double acc = 0.0;
                for (std::size_t o = 0; o < out_len_; ++o) acc += row[o];
                db_[f] += acc;
            }
        }
        dx.check_finite("conv1d input gradient");
        return dx;
    }

    std::vector<ParamView> params() override {
        return {{"conv1d.w", &w_, &dw_}, {"conv1d.b", &b_, &db_}};
    }

    void write_spec(BinWriter& w) const override {
        w.u32(static_cast<std::uint32_t>(kind()));
        w.u64(in_c_);
        w.u64(filters_);
        w.u64(kernel_);
        w.u64(stride_);
        w.u32(static_cast<std::uint32_t>(padding_));
    }

private:
    void im2col(const double* x) {
        for (std::size_t c = 0; c < in_c_; ++c) {
            const double* src = x + c * in_len_;
            for (std::size_t k = 0; k < kernel_; ++k) {
                double* dst = col_.data() + (c * kernel_ + k) * out_len_;
                for (std::size_t o = 0; o < out_len_; ++o) {
                    const std::ptrdiff_t idx =
                        static_cast<std::ptrdiff_t>(o * stride_ + k) -
                        static_cast<std::ptrdiff_t>(pad_left_);
                    dst[o] = (idx >= 0 && idx < static_cast<std::ptrdiff_t>(in_len_))
                                 ? src[idx]
                                 : 0.0;
                }
            }
        }
    }

    void col2im_add(const double* dcol, double* dx) const {
        for (std::size_t c = 0; c < in_c_; ++c) {
            double* dst = dx + c * in_len_;
            for (std::size_t k = 0; k < kernel_; ++k) {
                const double* src = dcol + (c * kernel_ + k) * out_len_;
                for (std::size_t o = 0; o < out_len_; ++o) {
                    const std::ptrdiff_t idx =
                        static_cast<std::ptrdiff_t>(o * stride_ + k) -
                        static_cast<std::ptrdiff_t>(pad_left_);
                    if (idx >= 0 && idx < static_cast<std::ptrdiff_t>(in_len_))
                        dst[idx] += src[o];
                }
            }
        }
    }

    std::size_t in_c_, filters_, kernel_, stride_;
    Padding padding_;
    std::vector<double> w_, b_, dw_, db_;
    std::vector<double> col_;
    Tensor x_;
    std::size_t in_len_ = 0, out_len_ = 0, pad_left_ = 0;
};

// ---------------------------------------------------------------------------
// BatchNorm over the channel axis: [N, C, L] normalizes per C across N*L;
// [N, U] normalizes per U across N.  Train mode uses (biased) batch variance
// and updates running averages; infer mode uses the running averages only.

class BatchNorm final : public Layer {
public:
    explicit BatchNorm(std::size_t channels, double eps = 1e-5, double momentum = 0.1)
        : channels_(channels), eps_(eps), momentum_(momentum) {
        require(channels_ > 0, "batchnorm: channels must be positive");
        gamma_.assign(channels_, 1.0);
        beta_.assign(channels_, 0.0);
        dgamma_.assign(channels_, 0.0);
        dbeta_.assign(channels_, 0.0);
        running_mean_.assign(channels_, 0.0);
        running_var_.assign(channels_, 1.0);
    }

    LayerKind kind() const override { return LayerKind::BatchNorm; }
    std::string name() const override { return "batchnorm"; }

    Tensor forward(const Tensor& x, Mode mode) override {
        x.check_consistent("batchnorm input");
        require(x.rank() == 2 || x.rank() == 3, "batchnorm: input must be rank 2 or 3");
        const std::size_t c_axis = x.rank() == 3 ? 1 : 1;  // channel axis is 1 in both layouts
        require(x.dim(c_axis) == channels_, "batchnorm: channel count mismatch");
        const std::size_t n = x.dim(0);
        const std::size_t len = x.rank() == 3 ? x.dim(2) : 1;

        Tensor y = Tensor::zeros(x.shape);
        if (mode == Mode::Train) {
            require(n >= 2, "batchnorm: train mode needs batch size >= 2");
            const double m = static_cast<double>(n * len);
            xhat_ = Tensor::zeros(x.shape);
            inv_std_.assign(channels_, 0.0);
            train_shape_ = x.shape;
            for (std::size_t c = 0; c < channels_; ++c) {
                double sum = 0.0;
                for (std::size_t s = 0; s < n; ++s) {
                    const double* src = x.data.data() + (s * channels_ + c) * len;
                    for (std::size_t l = 0; l < len; ++l) sum += src[l];
                }
                const double mean = sum / m;
                double varsum = 0.0;
                for (std::size_t s = 0; s < n; ++s) {
                    const double* src = x.data.data() + (s * channels_ + c) * len;
                    for (std::size_t l = 0; l < len; ++l) {
                        const double d = src[l] - mean;
                        varsum += d * d;
                    }
                }
                const double var = varsum / m;  // biased, as is conventional for BN
                const double inv = 1.0 / std::sqrt(var + eps_);
                inv_std_[c] = inv;
                running_mean_[c] = (1.0 - momentum_) * running_mean_[c] + momentum_ * mean;
                running_var_[c] = (1.0 - momentum_) * running_var_[c] + momentum_ * var;
                for (std::size_t s = 0; s < n; ++s) {
                    const double* src = x.data.data() + (s * channels_ + c) * len;
                    double* xh = xhat_.data.data() + (s * channels_ + c) * len;
                    double* dst = y.data.data() + (s * channels_ + c) * len;
                    for (std::size_t l = 0; l < len; ++l) {
                        xh[l] = (src[l] - mean) * inv;
                        dst[l] = gamma_[c] * xh[l] + beta_[c];
                    }
                }
            }
        } else {
            for (std::size_t c = 0; c < channels_; ++c) {
                const double inv = 1.0 / std::sqrt(running_var_[c] + eps_);
                const double scale = gamma_[c] * inv;
                const double shift = beta_[c] - running_mean_[c] * scale;
                for (std::size_t s = 0; s < n; ++s) {
                    const double* src = x.data.data() + (s * channels_ + c) * len;
                    double* dst = y.data.data() + (s * channels_ + c) * len;
                    for (std::size_t l = 0; l < len; ++l) dst[l] = src[l] * scale + shift;
                }
            }
        }
        y.check_finite("batchnorm output");
        return y;
    }

    Tensor backward(const Tensor& dy) override {
        require(!xhat_.data.empty(), "batchnorm: backward before train-mode forward");
        dy.check_consistent("batchnorm upstream gradient");
        require(dy.shape == train_shape_, "batchnorm: upstream gradient shape mismatch");
        const std::size_t n = dy.dim(0);
        const std::size_t len = dy.rank() == 3 ? dy.dim(2) : 1;
        const double m = static_cast<double>(n * len);

        Tensor dx = Tensor::zeros(dy.shape);
        for (std::size_t c = 0; c < channels_; ++c) {
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (std::size_t s = 0; s < n; ++s) {
                const double* g = dy.data.data() + (s * channels_ + c) * len;
                const double* xh = xhat_.data.data() + (s * channels_ + c) * len;
                for (std::size_t l = 0; l < len; ++l) {
                    sum_dy += g[l];
                    sum_dy_xhat += g[l] * xh[l];
                }
            }
            dgamma_[c] = sum_dy_xhat;
            dbeta_[c] = sum_dy;
            const double k = gamma_[c] * inv_std_[c] / m;
            for (std::size_t s = 0; s < n; ++s) {
                const double* g = dy.data.data() + (s * channels_ + c) * len;
                const double* xh = xhat_.data.data() + (s * channels_ + c) * len;
                double* d = dx.data.data() + (s * channels_ + c) * len;
                for (std::size_t l = 0; l < len; ++l)
                    d[l] = k * (m * g[l] - sum_dy - xh[l] * sum_dy_xhat);
            }
        }
        dx.check_finite("batchnorm input gradient");
        return dx;
    }

    std::vector<ParamView> params() override {
        return {{"batchnorm.gamma", &gamma_, &dgamma_}, {"batchnorm.beta", &beta_, &dbeta_}};
    }

    void write_spec(BinWriter& w) const override {
        w.u32(static_cast<std::uint32_t>(kind()));
        w.u64(channels_);
        w.f64(eps_);
        w.f64(momentum_);
    }

    void write_state(BinWriter& w) const override {
        Layer::write_state(w);
        w.vec(running_mean_);
        w.vec(running_var_);
    }

    void read_state(BinReader& r) override {
        Layer::read_state(r);
        running_mean_ = r.vec();
        running_var_ = r.vec();
        if (running_mean_.size() != channels_ || running_var_.size() != channels_)
            throw IoError("checkpoint batchnorm buffer size mismatch");
    }

    const std::vector<double>& running_mean() const { return running_mean_; }
    const std::vector<double>& running_var() const { return running_var_; }

private:
    std::size_t channels_;
    double eps_, momentum_;
    std::vector<double> gamma_, beta_, dgamma_, dbeta_;
    std::vector<double> running_mean_, running_var_;
    Tensor xhat_;
    std::vector<double> inv_std_;
    std::vector<std::size_t> train_shape_;
};

// ---------------------------------------------------------------------------
// Elementwise activations and row softmax.

enum class Act : std::uint32_t { Elu = 0, Relu = 1, Softmax = 2 };

class Activation final : public Layer {
public:
    explicit Activation(Act fn) : fn_(fn) {}

    LayerKind kind() const override { return LayerKind::Activation; }
    std::string name() const override {
        switch (fn_) {
            case Act::Elu: return "elu";
            case Act::Relu: return "relu";
            case Act::Softmax: return "softmax";
        }
        return "activation";
    }

    Tensor forward(const Tensor& x, Mode) override {
        x.check_consistent("activation input");
        Tensor y = x;
        switch (fn_) {
            case Act::Elu:
                for (double& v : y.data) v = v >= 0.0 ? v : std::expm1(v);
                break;
            case Act::Relu:
                for (double& v : y.data) v = v > 0.0 ? v : 0.0;
                break;
            case Act::Softmax: {
                require(x.rank() == 2, "softmax: input must be [N, K]");
                const std::size_t n = x.dim(0), k = x.dim(1);
                for (std::size_t s = 0; s < n; ++s) {
                    double* row = y.data.data() + s * k;
                    double mx = row[0];
                    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
                    double sum = 0.0;
                    for (std::size_t j = 0; j < k; ++j) {
                        row[j] = std::exp(row[j] - mx);
                        sum += row[j];
                    }
                    for (std::size_t j = 0; j < k; ++j) row[j] /= sum;
                }
                break;
            }
        }
        y_ = y;
        y.check_finite("activation output");
        return y;
    }

    Tensor backward(const Tensor& dy) override {
        require(!y_.data.empty(), "activation: backward before forward");
        dy.check_consistent("activation upstream gradient");
        require(dy.shape == y_.shape, "activation: upstream gradient shape mismatch");
        Tensor dx = dy;
        switch (fn_) {
            case Act::Elu:
                // y = e^x - 1 on the negative side, so dy/dx = y + 1 there.
                for (std::size_t i = 0; i < dx.data.size(); ++i)
                    if (y_.data[i] < 0.0) dx.data[i] *= y_.data[i] + 1.0;
                break;
            case Act::Relu:
                for (std::size_t i = 0; i < dx.data.size(); ++i)
                    if (y_.data[i] <= 0.0) dx.data[i] = 0.0;
                break;
            case Act::Softmax: {
                const std::size_t n = y_.dim(0), k = y_.dim(1);
                for (std::size_t s = 0; s < n; ++s) {
                    const double* p = y_.data.data() + s * k;
                    const double* g = dy.data.data() + s * k;
                    double dot = 0.0;
                    for (std::size_t j = 0; j < k; ++j) dot += g[j] * p[j];
                    double* d = dx.data.data() + s * k;
                    for (std::size_t j = 0; j < k; ++j) d[j] = p[j] * (g[j] - dot);
                }
                break;
            }
        }
        dx.check_finite("activation input gradient");
        return dx;
    }

    void write_spec(BinWriter& w) const override {
        w.u32(static_cast<std::uint32_t>(kind()));
        w.u32(static_cast<std::uint32_t>(fn_));
    }

    Act fn() const { return fn_; }

private:
    Act fn_;
    Tensor y_;
};

// ---------------------------------------------------------------------------
// MaxPool1d: [N, C, L] -> [N, C, floor((L - pool)/stride) + 1], windows may
// overlap.  The argmax (first maximum on ties) is cached for backward.

class MaxPool1d final : public Layer {
public:
    MaxPool1d(std::size_t pool, std::size_t stride) : pool_(pool), stride_(stride) {
        require(pool_ > 0 && stride_ > 0, "maxpool1d: pool and stride must be positive");
    }

    LayerKind kind() const override { return LayerKind::MaxPool1d; }
    std::string name() const override { return "maxpool1d"; }

    Tensor forward(const Tensor& x, Mode) override {
        x.check_consistent("maxpool1d input");
        require(x.rank() == 3, "maxpool1d: input must be [N, C, L]");
        const std::size_t n = x.dim(0), c = x.dim(1), len = x.dim(2);
        require(len >= pool_, "maxpool1d: input shorter than pool window");
        const std::size_t out_len = (len - pool_) / stride_ + 1;
        in_shape_ = x.shape;

        Tensor y = Tensor::zeros({n, c, out_len});
        argmax_.assign(n * c * out_len, 0);
        for (std::size_t s = 0; s < n; ++s)
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double* src = x.data.data() + (s * c + ch) * len;
                double* dst = y.data.data() + (s * c + ch) * out_len;
                std::size_t* am = argmax_.data() + (s * c + ch) * out_len;
                for (std::size_t o = 0; o < out_len; ++o) {
                    const std::size_t start = o * stride_;
                    double best = src[start];
                    std::size_t best_i = start;
                    for (std::size_t j = 1; j < pool_; ++j)
                        if (src[start + j] > best) {
                            best = src[start + j];
                            best_i = start + j;
                        }
                    dst[o] = best;
                    am[o] = best_i;
                }
            }
        y.check_finite("maxpool1d output");
        return y;
    }

    Tensor backward(const Tensor& dy) override {
        require(!argmax_.empty(), "maxpool1d: backward before forward");
        dy.check_consistent("maxpool1d upstream gradient");
        const std::size_t n = in_shape_[0], c = in_shape_[1], len = in_shape_[2];
        const std::size_t out_len = dy.dim(2);
        require(dy.dim(0) == n && dy.dim(1) == c && n * c * out_len == argmax_.size(),
                "maxpool1d: upstream gradient shape mismatch");
        Tensor dx = Tensor::zeros(in_shape_);
        for (std::size_t s = 0; s < n; ++s)
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double* g = dy.data.data() + (s * c + ch) * out_len;
                const std::size_t* am = argmax_.data() + (s * c + ch) * out_len;
                double* d = dx.data.data() + (s * c + ch) * len;
                for (std::size_t o = 0; o < out_len; ++o) d[am[o]] += g[o];
            }
        return dx;
    }

    void write_spec(BinWriter& w) const override {
        w.u32(static_cast<std::uint32_t>(kind()));
        w.u64(pool_);
        w.u64(stride_);
    }

private:
    std::size_t pool_, stride_;
    std::vector<std::size_t> argmax_;
    std::vector<std::size_t> in_shape_;
};

// ---------------------------------------------------------------------------
// Inverted dropout: train mode zeroes units with probability `rate` and
// scales survivors by 1/(1-rate); infer mode is the identity.  The layer
// owns a derived RNG stream whose state persists in checkpoints so a resumed
// run draws the same masks as an uninterrupted one.

class Dropout final : public Layer {
public:
    explicit Dropout(double rate) : rate_(rate) {
        require(rate_ >= 0.0 && rate_ < 1.0, "dropout: rate must be in [0, 1)");
    }

    LayerKind kind() const override { return LayerKind::Dropout; }
    std::string name() const override { return "dropout"; }

    void seed_stream(const Rng& rng) { rng_ = rng; }

    // Gradient checking needs a fixed mask across repeated forwards.
    void freeze_mask(bool frozen) { frozen_ = frozen; }

    Tensor forward(const Tensor& x, Mode mode) override {
        x.check_consistent("dropout input");
        if (mode == Mode::Infer || rate_ == 0.0) {
            mask_.clear();
            identity_ = true;
            out_size_ = x.data.size();
            return x;
        }
        identity_ = false;
        const bool reuse = frozen_ && mask_.size() == x.data.size();
        if (!reuse) {
            mask_.resize(x.data.size());
            const double keep_scale = 1.0 / (1.0 - rate_);
            for (double& m : mask_) m = rng_.uniform() < rate_ ? 0.0 : keep_scale;
        }
        Tensor y = x;
        for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] *= mask_[i];
        out_size_ = x.data.size();
        return y;
    }

    Tensor backward(const Tensor& dy) override {
        dy.check_consistent("dropout upstream gradient");
        require(dy.data.size() == out_size_, "dropout: backward before forward");
        if (identity_) return dy;
        Tensor dx = dy;
        for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] *= mask_[i];
        return dx;
    }

    void write_spec(BinWriter& w) const override {
        w.u32(static_cast<std::uint32_t>(kind()));
        w.f64(rate_);
    }

    void write_state(BinWriter& w) const override {
        for (const std::uint64_t word : rng_.state()) w.u64(word);
    }

    void read_state(BinReader& r) override {
        std::array<std::uint64_t, 4> s;
        for (std::uint64_t& word : s) word = r.u64();
        rng_.set_state(s);
    }

    double rate() const { return rate_; }

private:
    double rate_;
    Rng rng_;
    std::vector<double> mask_;
    bool identity_ = true;
    bool frozen_ = false;
    std::size_t out_size_ = 0;
};

// ---------------------------------------------------------------------------
// Dense: [N, In] -> [N, Out].  Forward multiplies row by row so that batch
// inference and single-sample inference are bit-identical; the training-only
// gradient reductions use whole-batch products with fixed shapes.

class Dense final : public Layer {
public:
    Dense(std::size_t in, std::size_t units) : in_(in), units_(units) {
        require(in_ > 0 && units_ > 0, "dense: dimensions must be positive");
        w_.assign(in_ * units_, 0.0);  // [In, Out], row-major
        b_.assign(units_, 0.0);
        dw_.assign(w_.size(), 0.0);
        db_.assign(b_.size(), 0.0);
    }

    void init_params(Rng& rng) {
        glorot_uniform(w_, in_, units_, rng);
        b_.assign(units_, 0.0);
    }

    LayerKind kind() const override { return LayerKind::Dense; }
    std::string name() const override { return "dense"; }

    Tensor forward(const Tensor& x, Mode) override {
        x.check_consistent("dense input");
        require(x.rank() == 2, "dense: input must be [N, In]");
        require(x.dim(1) == in_, "dense: input width mismatch");
        const std::size_t n = x.dim(0);
        x_ = x;
        Tensor y = Tensor::zeros({n, units_});
        MapCM wm(w_.data(), static_cast<Eigen::Index>(in_), static_cast<Eigen::Index>(units_));
        for (std::size_t s = 0; s < n; ++s) {
            MapCM xr(x.data.data() + s * in_, 1, static_cast<Eigen::Index>(in_));
            MapM yr(y.data.data() + s * units_, 1, static_cast<Eigen::Index>(units_));
            yr.noalias() = xr * wm;
            for (std::size_t u = 0; u < units_; ++u) y.data[s * units_ + u] += b_[u];
        }
        y.check_finite("dense output");
        return y;
    }

    Tensor backward(const Tensor& dy) override {
        require(!x_.data.empty(), "dense: backward before forward");
        dy.check_consistent("dense upstream gradient");
        require(dy.rank() == 2 && dy.dim(0) == x_.dim(0) && dy.dim(1) == units_,
                "dense: upstream gradient shape mismatch");
        const std::size_t n = x_.dim(0);
        MapCM wm(w_.data(), static_cast<Eigen::Index>(in_), static_cast<Eigen::Index>(units_));
        MapCM xm(x_.data.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(in_));
        MapCM dym(dy.data.data(), static_cast<Eigen::Index>(n),
                  static_cast<Eigen::Index>(units_));

        std::fill(dw_.begin(), dw_.end(), 0.0);
        std::fill(db_.begin(), db_.end(), 0.0);
        MapM dwm(dw_.data(), static_cast<Eigen::Index>(in_), static_cast<Eigen::Index>(units_));
        dwm.noalias() = xm.transpose() * dym;
        for (std::size_t s = 0; s < n; ++s)
            for (std::size_t u = 0; u < units_; ++u) db_[u] += dy.data[s * units_ + u];

        Tensor dx = Tensor::zeros(x_.shape);
        MapM dxm(dx.data.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(in_));
        dxm.noalias() = dym * wm.transpose();
        dx.check_finite("dense input gradient");
        return dx;
    }

    std::vector<ParamView> params() override {
        return {{"dense.w", &w_, &dw_}, {"dense.b", &b_, &db_}};
    }

    void write_spec(BinWriter& w) const override {
        w.u32(static_cast<std::uint32_t>(kind()));
        w.u64(in_);
        w.u64(units_);
    }

private:
    std::size_t in_, units_;
    std::vector<double> w_, b_, dw_, db_;
    Tensor x_;
};

// ---------------------------------------------------------------------------
// Flatten: [N, C, L] -> [N, C*L].

class Flatten final : public Layer {
public:
    LayerKind kind() const override { return LayerKind::Flatten; }
    std::string name() const override { return "flatten"; }

    Tensor forward(const Tensor& x, Mode) override {
        x.check_consistent("flatten input");
        require(x.rank() >= 2, "flatten: input must have a batch axis");
        in_shape_ = x.shape;
        std::size_t width = 1;
        for (std::size_t i = 1; i < x.rank(); ++i) width *= x.shape[i];
        return x.reshaped({x.dim(0), width});
    }

    Tensor backward(const Tensor& dy) override {
        require(!in_shape_.empty(), "flatten: backward before forward");
        dy.check_consistent("flatten upstream gradient");
        return dy.reshaped(in_shape_);
    }

    void write_spec(BinWriter& w) const override {
        w.u32(static_cast<std::uint32_t>(kind()));
    }

private:
    std::vector<std::size_t> in_shape_;
};

// ---------------------------------------------------------------------------
// Categorical cross-entropy over probability rows (post-softmax).
// Returns the mean loss and the gradient with respect to the probabilities,
// so it composes with the softmax layer's backward.

struct LossResult {
    double loss;
    Tensor dprobs;
};

inline LossResult cross_entropy(const Tensor& probs, const std::vector<std::size_t>& labels) {
    probs.check_consistent("cross_entropy probabilities");
    if (probs.rank() != 2) throw DataError("cross_entropy: probabilities must be [N, K]");
    const std::size_t n = probs.dim(0), k = probs.dim(1);
    if (labels.size() != n) throw DataError("cross_entropy: label count mismatch");

    // Probability floor keeps log/division finite if a class collapses to 0.
    constexpr double floor = 1e-300;
    LossResult r{0.0, Tensor::zeros(probs.shape)};
    for (std::size_t s = 0; s < n; ++s) {
        if (labels[s] >= k) throw DataError("cross_entropy: label out of range");
        const double p = std::max(probs.data[s * k + labels[s]], floor);
        r.loss -= std::log(p);
        r.dprobs.data[s * k + labels[s]] = -1.0 / (p * static_cast<double>(n));
    }
    r.loss /= static_cast<double>(n);
    return r;
}

}  // namespace wf::nn
