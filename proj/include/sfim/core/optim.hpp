#pragma once

#include <cstdint>
#include <vector>

#include "sfim/core/tensor.hpp"

namespace sfim {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 0.01;
    double eps = 1e-8;
};

struct AdamWState {
    std::uint64_t step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    // Sizes the moments for params (zeros) if they are still empty.
    void ensure(const std::vector<Tensor>& params);
};

// One AdamW update of every param from its accumulated grad (absent grad
// counts as zero). Decay is decoupled: p <- p - lr*wd*p before the Adam step.
void adamw_step(const std::vector<Tensor>& params, AdamWState& state, double lr, const AdamWConfig& cfg = {});

// Scales all grads so their joint L2 norm is at most max_norm. Returns the
// norm before clipping.
double clip_grad_norm(const std::vector<Tensor>& params, double max_norm);

} // namespace sfim
