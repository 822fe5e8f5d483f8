#pragma once

#include <cstdint>
#include <vector>

#include "sfim/core/rng.hpp"
#include "sfim/core/tensor.hpp"

namespace sfim::test {

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    Rng rng(seed);
    for (double& v : t.mutable_values()) v = rng.uniform(lo, hi);
    return t;
}

inline double max_abs(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace sfim::test
