#pragma once
// A network is an ordered stack of layers.  This header also implements the
// structural half of the checkpoint format:
//
//   magic "DFNN" | u32 version | u64 layer count | layer specs
//   | per-layer state (parameters + persistent buffers, little-endian f64)
//
// Optimizer and trainer state follow in the same file; the training wrapper
// owns those sections (see df.hpp).

#include <wf/io.hpp>
#include <wf/layers.hpp>

#include <memory>
#include <utility>
#include <vector>

namespace wf::nn {

class Network {
public:
    Network() = default;
    Network(Network&&) = default;
    Network& operator=(Network&&) = default;

    template <typename L, typename... Args>
    L& add(Args&&... args) {
        auto layer = std::make_unique<L>(std::forward<Args>(args)...);
        L& ref = *layer;
        layers_.push_back(std::move(layer));
        return ref;
    }

    std::size_t size() const { return layers_.size(); }
    Layer& layer(std::size_t i) { return *layers_.at(i); }
    const Layer& layer(std::size_t i) const { return *layers_.at(i); }

    Tensor forward(Tensor x, Mode mode) {
        for (const auto& l : layers_) x = l->forward(x, mode);
        return x;
    }

    Tensor backward(Tensor dy) {
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
            dy = (*it)->backward(std::move(dy));
        return dy;
    }

    std::vector<ParamView> params() {
        std::vector<ParamView> all;
        for (std::size_t i = 0; i < layers_.size(); ++i)
            for (ParamView p : layers_[i]->params()) {
                p.name = "layer" + std::to_string(i) + "." + p.name;
                all.push_back(p);
            }
        return all;
    }

    void zero_grads() {
        for (const auto& l : layers_) l->zero_grads();
    }

    std::size_t param_count() {
        std::size_t n = 0;
        for (const ParamView& p : params()) n += p.value->size();
        return n;
    }

    void write_specs(BinWriter& w) const {
        w.u64(layers_.size());
        for (const auto& l : layers_) l->write_spec(w);
    }

    void write_states(BinWriter& w) const {
        for (const auto& l : layers_) l->write_state(w);
    }

    void read_states(BinReader& r) {
        for (const auto& l : layers_) l->read_state(r);
    }

    static Network from_specs(BinReader& r) {
        Network net;
        const std::uint64_t count = r.u64();
        if (count > 4096) throw IoError("corrupt checkpoint: layer count");
        for (std::uint64_t i = 0; i < count; ++i) {
            const auto kind = static_cast<LayerKind>(r.u32());
            switch (kind) {
                case LayerKind::Conv1d: {
                    const std::uint64_t in_c = r.u64(), filters = r.u64(), kernel = r.u64(),
                                        stride = r.u64();
                    const auto pad = static_cast<Padding>(r.u32());
                    net.add<Conv1d>(in_c, filters, kernel, stride, pad);
                    break;
                }
                case LayerKind::BatchNorm: {
                    const std::uint64_t channels = r.u64();
                    const double eps = r.f64(), momentum = r.f64();
                    net.add<BatchNorm>(channels, eps, momentum);
                    break;
                }
                case LayerKind::Activation:
                    net.add<Activation>(static_cast<Act>(r.u32()));
                    break;
                case LayerKind::MaxPool1d: {
                    const std::uint64_t pool = r.u64(), stride = r.u64();
                    net.add<MaxPool1d>(pool, stride);
                    break;
                }
                case LayerKind::Dropout:
                    net.add<Dropout>(r.f64());
                    break;
                case LayerKind::Dense: {
                    const std::uint64_t in = r.u64(), units = r.u64();
                    net.add<Dense>(in, units);
                    break;
                }
                case LayerKind::Flatten:
                    net.add<Flatten>();
                    break;
                default:
                    throw IoError("corrupt checkpoint: unknown layer kind");
            }
        }
        return net;
    }

private:
    std::vector<std::unique_ptr<Layer>> layers_;
};

inline constexpr char kCheckpointMagic[4] = {'D', 'F', 'N', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void write_checkpoint_header(BinWriter& w) {
    w.raw(kCheckpointMagic, 4);
    w.u32(kCheckpointVersion);
}

inline void read_checkpoint_header(BinReader& r) {
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw IoError("not a checkpoint file (bad magic)");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version));
}

}  // namespace wf::nn
