#pragma once
// Dense row-major double tensor.  Deliberately minimal: the layer set below
// only ever needs rank-2 ([N, units]) and rank-3 ([N, channels, length])
// views plus contiguous elementwise access.

#include <wf/errors.hpp>

#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

namespace wf {

struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;

    static Tensor zeros(std::vector<std::size_t> s) {
        Tensor t;
        t.shape = std::move(s);
        t.data.assign(t.count(), 0.0);
        return t;
    }

    std::size_t count() const {
        std::size_t n = 1;
        for (const std::size_t d : shape) n *= d;
        return shape.empty() ? 0 : n;
    }

    std::size_t rank() const { return shape.size(); }

    std::size_t dim(std::size_t i) const {
        if (i >= shape.size()) throw DataError("tensor rank too small");
        return shape[i];
    }

    // Throws if shape and data length disagree (the core Tensor invariant).
    void check_consistent(const char* context) const {
        if (count() != data.size())
            throw DataError(std::string(context) + ": tensor shape/data mismatch");
    }

    // Enforces the all-finite invariant; every layer checks its output.
    void check_finite(const char* context) const {
        for (const double v : data)
            if (!std::isfinite(v))
                throw DataError(std::string(context) + ": non-finite value in tensor");
    }

    Tensor reshaped(std::vector<std::size_t> s) const {
        Tensor t;
        t.shape = std::move(s);
        if (t.count() != data.size()) throw DataError("reshape: element count mismatch");
        t.data = data;
        return t;
    }
};

}  // namespace wf
