#include "sfim/blocks/layers.hpp"

#include <algorithm>

namespace sfim::blocks {

Conv2d::Conv2d(ParamScope scope, std::size_t cin, std::size_t cout, std::size_t k, bool with_bias,
               std::size_t stride_, double init_scale)
    : kernel(k), stride(stride_) {
    if (cin == 0 || cout == 0 || k % 2 == 0) {
        throw ConfigError("conv " + scope.name("") + ": invalid shape " + std::to_string(cout) + "x" +
                          std::to_string(cin) + "x" + std::to_string(k));
    }
    weight = scope.he_uniform("weight", {cout, cin, k, k}, cin * k * k, init_scale);
    if (with_bias) bias = scope.constant("bias", {cout}, 0.0);
}

Tensor Conv2d::operator()(const Tensor& x) const {
    return ops::conv2d(x, weight, bias, {stride, kernel / 2, mode});
}

DepthwiseConv2d::DepthwiseConv2d(ParamScope scope, std::size_t channels, std::size_t multiplier, std::size_t k,
                                 bool with_bias)
    : kernel(k) {
    weight = scope.he_uniform("weight", {channels, multiplier, k, k}, k * k);
    if (with_bias) bias = scope.constant("bias", {channels * multiplier}, 0.0);
}

Tensor DepthwiseConv2d::operator()(const Tensor& x) const {
    return ops::depthwise_conv2d(x, weight, bias, {1, kernel / 2});
}

LayerNorm::LayerNorm(ParamScope scope, std::size_t channels) {
    gamma = scope.constant("gamma", {channels}, 1.0);
    beta = scope.constant("beta", {channels}, 0.0);
}

Tensor LayerNorm::operator()(const Tensor& x) const { return ops::layer_norm_channels(x, gamma, beta); }

void zero_fill(Tensor t) {
    if (!t.defined()) return;
    auto v = t.mutable_values();
    std::fill(v.begin(), v.end(), 0.0);
}

} // namespace sfim::blocks
