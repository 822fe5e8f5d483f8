#pragma once

#include <cstddef>

#include "sfim/core/ops.hpp"
#include "sfim/core/params.hpp"

namespace sfim::blocks {

// Convolution with "same" padding (k / 2) for odd k. Reflection padding by
// default; the bias is optional.
struct Conv2d {
    Tensor weight;  // Cout x Cin x k x k
    Tensor bias;    // Cout, or undefined
    std::size_t kernel = 1;
    std::size_t stride = 1;
    ops::PadMode mode = ops::PadMode::Reflect;

    Conv2d() = default;
    // init_scale multiplies the He-uniform bound; residual branches use a
    // small value so deep chains start near the identity.
    Conv2d(ParamScope scope, std::size_t cin, std::size_t cout, std::size_t k, bool with_bias = true,
           std::size_t stride = 1, double init_scale = 1.0);

    Tensor operator()(const Tensor& x) const;
    std::size_t in_channels() const { return weight.dim(1); }
    std::size_t out_channels() const { return weight.dim(0); }
};

struct DepthwiseConv2d {
    Tensor weight;  // C x m x k x k
    Tensor bias;    // C * m, or undefined
    std::size_t kernel = 3;

    DepthwiseConv2d() = default;
    DepthwiseConv2d(ParamScope scope, std::size_t channels, std::size_t multiplier, std::size_t k,
                    bool with_bias = true);

    Tensor operator()(const Tensor& x) const;
};

// Channel layer norm with per-channel affine (gamma = 1, beta = 0 at init).
struct LayerNorm {
    Tensor gamma;
    Tensor beta;

    LayerNorm() = default;
    LayerNorm(ParamScope scope, std::size_t channels);

    Tensor operator()(const Tensor& x) const;
};

// Bound scale for convs that close a residual branch.
inline constexpr double kResidualInitScale = 0.1;

// Sets every value of the tensor to zero (weights stay registered).
void zero_fill(Tensor t);

} // namespace sfim::blocks
