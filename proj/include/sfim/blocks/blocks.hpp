#pragma once

#include <cstddef>
#include <vector>

#include "sfim/blocks/layers.hpp"

namespace sfim::blocks {

// Residual dense block: three GELU(conv3x3) layers over the running
// concatenation [F_{d-1}, F_{d,1}, ...], a 1x1 fusion back to G0, plus the
// input. Layer c reads G0 + (c - 1) G channels.
struct Rdb {
    std::size_t base = 0;    // G0
    std::size_t growth = 0;  // G
    std::vector<Conv2d> layers;
    Conv2d fusion;

    Rdb() = default;
    Rdb(ParamScope scope, std::size_t g0, std::size_t g);
    Tensor forward(const Tensor& x) const;
    static std::size_t layer_input_width(std::size_t g0, std::size_t g, std::size_t c) { return g0 + (c - 1) * g; }
};

// Spatial domain block: a chain of RDBs (8 by default).
struct Sdb {
    std::vector<Rdb> rdbs;

    Sdb() = default;
    Sdb(ParamScope scope, std::size_t channels, std::size_t growth, std::size_t count = 8);
    Tensor forward(const Tensor& x) const;
};

// Frequency-domain self-attention: A = fold(IFFT(FFT(Q) conj(FFT(K)))) per
// PxP patch, V = LN(A) * F_v, out = x + Conv1x1(V).
struct Fsas {
    std::size_t channels = 0;
    std::size_t patch = 8;
    LayerNorm norm;
    Conv2d to_qkv;           // C -> 3C, 1x1
    DepthwiseConv2d qkv_dw;  // 3C, multiplier 1, 3x3
    LayerNorm attn_norm;
    Conv2d project;          // C -> C, 1x1

    Fsas() = default;
    Fsas(ParamScope scope, std::size_t c, std::size_t p = 8);
    Tensor forward(const Tensor& x) const;
};

// Frequency feed-forward: Z1 = Conv1x1(LN(x)) (C -> 2C), per-patch
// Re(IFFT(W * FFT(Z1))), fold, GEGLU back to C, 1x1 projection, residual.
// W is one PxP matrix, or one per expanded channel when per_channel is set.
struct Dffn {
    std::size_t channels = 0;
    std::size_t patch = 8;
    LayerNorm norm;
    Conv2d expand;  // C -> 2C
    Tensor freq_weight;
    Conv2d project;  // C -> C

    Dffn() = default;
    Dffn(ParamScope scope, std::size_t c, std::size_t p = 8, bool per_channel = false);
    Tensor forward(const Tensor& x) const;
};

struct Fdb {
    Fsas fsas;
    Dffn dffn;

    Fdb() = default;
    Fdb(ParamScope scope, std::size_t c, std::size_t p = 8, bool per_channel_w = false);
    Tensor forward(const Tensor& x) const { return dffn.forward(fsas.forward(x)); }
};

// CBAM channel attention: s = sigmoid(MLP(avg) + MLP(max)), out = Z * s.
struct ChannelAttention {
    Conv2d fc1;  // C -> C / r, ReLU
    Conv2d fc2;  // C / r -> C

    ChannelAttention() = default;
    ChannelAttention(ParamScope scope, std::size_t c, std::size_t reduction = 8);
    Tensor scores(const Tensor& z) const;  // C x 1 x 1
    Tensor forward(const Tensor& z) const;
};

// CBAM spatial attention: m = sigmoid(Conv kxk([mean_c; max_c])), out = Z * m.
struct SpatialAttention {
    Conv2d conv;  // 2 -> 1

    SpatialAttention() = default;
    SpatialAttention(ParamScope scope, std::size_t kernel = 7);
    Tensor map(const Tensor& z) const;  // 1 x H x W
    Tensor forward(const Tensor& z) const;
};

// Multi-level integration: resize every level's feature to level i's
// extent, concatenate, 1x1 conv to C_i.
struct Mib {
    std::size_t level = 0;  // zero-based
    Conv2d fuse;

    Mib() = default;
    Mib(ParamScope scope, const std::vector<std::size_t>& widths, std::size_t level);
    Tensor forward(const std::vector<Tensor>& features) const;
};

struct AmibSwitches {
    bool mib = true;
    bool ca = true;
    bool sa = true;

    bool operator==(const AmibSwitches&) const = default;
};

// Z1, Z2 = split(DConv3x3_{x2}(M_i)); Z = Conv1x1([s(Z1) Z2; s(Z2) Z1]);
// F_i = SA(CA(Z)). A disabled MIB stage passes Y_i through in place of Z.
struct Amib {
    std::size_t level = 0;
    AmibSwitches switches;
    Mib mib;
    DepthwiseConv2d split;  // C, multiplier 2
    Conv2d mix;             // 2C -> C
    ChannelAttention ca;
    SpatialAttention sa;

    Amib() = default;
    Amib(ParamScope scope, const std::vector<std::size_t>& widths, std::size_t level, AmibSwitches sw,
         std::size_t reduction = 8, std::size_t sa_kernel = 7);
    Tensor forward(const std::vector<Tensor>& features) const;
    // The gated mix alone, from explicit halves (exposes the Eq.-level symmetry).
    Tensor gate(const Tensor& z1, const Tensor& z2) const;
};

struct SamOutput {
    Tensor features;
    Tensor attention;  // S_i
    Tensor image;      // I_R_i
};

// I_R = Conv(F) + I_D; S = sigmoid(Conv(I_R)); features = F * S + F.
struct Sam {
    Conv2d to_image;      // C -> image channels, 3x3
    Conv2d to_attention;  // image channels -> C, 3x3

    Sam() = default;
    Sam(ParamScope scope, std::size_t c, std::size_t image_channels);
    SamOutput forward(const Tensor& f, const Tensor& degraded) const;
};

// Y^C = Conv1x1(resize(Y_prev)); out = Y^C + Conv3x3(X * Y^C).
struct Fam {
    Conv2d adapter;  // C_prev -> C
    Conv2d mix;      // C -> C, 3x3

    Fam() = default;
    Fam(ParamScope scope, std::size_t c_prev, std::size_t c);
    Tensor adapt(const Tensor& y_prev, std::size_t h, std::size_t w) const;
    Tensor forward(const Tensor& x, const Tensor& y_prev) const;
};

} // namespace sfim::blocks
