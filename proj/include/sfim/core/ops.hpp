#pragma once

#include <cstddef>
#include <vector>

#include "sfim/core/tensor.hpp"

// Differentiable operators. Each op validates shapes, computes its output in
// 64-bit, rejects non-finite results (NumericError naming the op), and, when a
// tape is active and any input requires grad, records its backward.
//
// Feature maps are rank-3 C x H x W.

namespace sfim::ops {

enum class PadMode { Reflect, Zero };

struct ConvOptions {
    std::size_t stride = 1;
    std::size_t padding = 0;
    PadMode mode = PadMode::Reflect;
};

// Cross-correlation. weight: Cout x Cin x k x k; bias: Cout or undefined.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, ConvOptions opt = {});

// weight: C x m x k x k. Output channel c*m + j reads input channel c only.
Tensor depthwise_conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, ConvOptions opt = {});

// Elementwise binary ops broadcast over extents that match or equal 1 (same rank).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& x, double s);
Tensor mul_scalar(const Tensor& x, double s);

Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
// tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
Tensor gelu(const Tensor& x);
// Channels split in half [a; b]; returns a * gelu(b).
Tensor geglu(const Tensor& x);

double gelu_value(double x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// sum(x * w) with a constant weight tensor (no gradient into w).
Tensor weighted_sum(const Tensor& x, const Tensor& w);

Tensor concat_channels(const std::vector<Tensor>& parts);
Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t count);

// Per-site normalization over the channel axis, then per-channel affine.
Tensor layer_norm_channels(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-6);

// Bilinear resize, align_corners = false.
Tensor interpolate_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w);

Tensor global_avg_pool(const Tensor& x);  // C x 1 x 1
Tensor global_max_pool(const Tensor& x);  // C x 1 x 1
Tensor spatial_mean(const Tensor& x);     // 1 x H x W
Tensor spatial_max(const Tensor& x);      // 1 x H x W

Tensor reflect_pad(const Tensor& x, std::size_t top, std::size_t bottom, std::size_t left, std::size_t right);
Tensor crop(const Tensor& x, std::size_t top, std::size_t left, std::size_t h, std::size_t w);

// C x H x W -> (C * ceil(H/P) * ceil(W/P)) x P x P, patches ordered
// (channel, patch row, patch col). Reflection-pads to multiples of P.
Tensor patch_unfold(const Tensor& x, std::size_t patch);
// Inverse of patch_unfold; crops the padding away.
Tensor patch_fold(const Tensor& patches, std::size_t channels, std::size_t height, std::size_t width,
                  std::size_t patch);

// Per-patch Re(IFFT2(FFT2(q) * conj(FFT2(k)))), i.e. circular
// cross-correlation a[s] = sum_t q[t + s] k[t]. q, k: N x P x P.
Tensor freq_correlate(const Tensor& q, const Tensor& k);

// Per-patch Re(IFFT2(W * FFT2(z))). W is P x P (shared by all patches) or
// G x P x P with N / G consecutive patches per group.
Tensor freq_filter(const Tensor& z, const Tensor& weight);

// Reflection index into [0, n).
std::size_t reflect_index(long i, std::size_t n);

} // namespace sfim::ops
