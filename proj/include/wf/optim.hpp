#pragma once
// Adamax optimizer (the infinity-norm member of the Adam family):
//   m <- beta1*m + (1-beta1)*g
//   u <- max(beta2*u, |g|)
//   theta <- theta - (lr / (1 - beta1^t)) * m / (u + eps)
// with t counting steps from 1.

#include <wf/io.hpp>
#include <wf/layers.hpp>

#include <cmath>
#include <cstdint>
#include <vector>

namespace wf::nn {

struct AdamaxConfig {
    double lr = 0.002;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adamax {
public:
    Adamax() = default;
    explicit Adamax(AdamaxConfig cfg) : cfg_(cfg) {
        if (!(cfg_.lr > 0.0)) throw ConfigError("adamax: learning rate must be positive");
        if (!(cfg_.beta1 >= 0.0 && cfg_.beta1 < 1.0) ||
            !(cfg_.beta2 >= 0.0 && cfg_.beta2 < 1.0))
            throw ConfigError("adamax: betas must be in [0, 1)");
        if (!(cfg_.eps > 0.0)) throw ConfigError("adamax: eps must be positive");
    }

    const AdamaxConfig& config() const { return cfg_; }
    std::uint64_t steps() const { return t_; }

    // One update over the parameter views; gradients must already be filled.
    void step(const std::vector<ParamView>& params) {
        if (m_.empty()) init(params);
        if (m_.size() != params.size())
            throw DataError("adamax: parameter list changed between steps");
        ++t_;
        const double bias = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double scale = cfg_.lr / bias;
        for (std::size_t p = 0; p < params.size(); ++p) {
            std::vector<double>& theta = *params[p].value;
            const std::vector<double>& g = *params[p].grad;
            std::vector<double>& m = m_[p];
            std::vector<double>& u = u_[p];
            if (theta.size() != g.size() || theta.size() != m.size())
                throw DataError("adamax: tensor size mismatch for " + params[p].name);
            for (std::size_t i = 0; i < theta.size(); ++i) {
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
                const double ag = std::fabs(g[i]);
                u[i] = std::max(cfg_.beta2 * u[i], ag);
                theta[i] -= scale * m[i] / (u[i] + cfg_.eps);
            }
        }
    }

    void serialize(BinWriter& w) const {
        w.f64(cfg_.lr);
        w.f64(cfg_.beta1);
        w.f64(cfg_.beta2);
        w.f64(cfg_.eps);
        w.u64(t_);
        w.u64(m_.size());
        for (std::size_t p = 0; p < m_.size(); ++p) {
            w.vec(m_[p]);
            w.vec(u_[p]);
        }
    }

    void deserialize(BinReader& r) {
        cfg_.lr = r.f64();
        cfg_.beta1 = r.f64();
        cfg_.beta2 = r.f64();
        cfg_.eps = r.f64();
        t_ = r.u64();
        const std::uint64_t n = r.u64();
        m_.assign(n, {});
        u_.assign(n, {});
        for (std::size_t p = 0; p < n; ++p) {
            m_[p] = r.vec();
            u_[p] = r.vec();
        }
    }

    // Test hook: accumulator access.
    const std::vector<std::vector<double>>& first_moments() const { return m_; }
    const std::vector<std::vector<double>>& infinity_norms() const { return u_; }

private:
    void init(const std::vector<ParamView>& params) {
        m_.clear();
        u_.clear();
        for (const ParamView& p : params) {
            m_.emplace_back(p.value->size(), 0.0);
            u_.emplace_back(p.value->size(), 0.0);
        }
    }

    AdamaxConfig cfg_;
    std::uint64_t t_ = 0;
    std::vector<std::vector<double>> m_, u_;
};

}  // namespace wf::nn
