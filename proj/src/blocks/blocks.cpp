#include "sfim/blocks/blocks.hpp"

#include <algorithm>

namespace sfim::blocks {

Rdb::Rdb(ParamScope scope, std::size_t g0, std::size_t g) : base(g0), growth(g) {
    if (g0 == 0 || g == 0) throw ConfigError("rdb: widths must be positive");
    for (std::size_t c = 1; c <= 3; ++c) {
        layers.emplace_back(scope.sub("conv" + std::to_string(c)), layer_input_width(g0, g, c), g, 3);
    }
    fusion = Conv2d(scope.sub("fusion"), g0 + 3 * g, g0, 1, true, 1, kResidualInitScale);
}

Tensor Rdb::forward(const Tensor& x) const {
    if (x.channels() != base) {
        throw ShapeError("rdb: expected " + std::to_string(base) + " channels, got " + shape_string(x.shape()));
    }
    std::vector<Tensor> feats{x};
    for (const auto& layer : layers) feats.push_back(ops::gelu(layer(ops::concat_channels(feats))));
    return ops::add(fusion(ops::concat_channels(feats)), x);
}

Sdb::Sdb(ParamScope scope, std::size_t channels, std::size_t growth, std::size_t count) {
    for (std::size_t d = 0; d < count; ++d) rdbs.emplace_back(scope.sub("rdb" + std::to_string(d)), channels, growth);
}

Tensor Sdb::forward(const Tensor& x) const {
    Tensor y = x;
    for (const auto& r : rdbs) y = r.forward(y);
    return y;
}

Fsas::Fsas(ParamScope scope, std::size_t c, std::size_t p)
    : channels(c),
      patch(p),
      norm(scope.sub("norm"), c),
      to_qkv(scope.sub("to_qkv"), c, 3 * c, 1),
      qkv_dw(scope.sub("qkv_dw"), 3 * c, 1, 3),
      attn_norm(scope.sub("attn_norm"), c),
      project(scope.sub("project"), c, c, 1, true, 1, kResidualInitScale) {}

Tensor Fsas::forward(const Tensor& x) const {
    const std::size_t h = x.height(), w = x.width();
    const Tensor qkv = qkv_dw(to_qkv(norm(x)));
    const Tensor q = ops::slice_channels(qkv, 0, channels);
    const Tensor k = ops::slice_channels(qkv, channels, channels);
    const Tensor v = ops::slice_channels(qkv, 2 * channels, channels);
    const Tensor corr = ops::freq_correlate(ops::patch_unfold(q, patch), ops::patch_unfold(k, patch));
    const Tensor a = ops::patch_fold(corr, channels, h, w, patch);
    const Tensor v_att = ops::mul(attn_norm(a), v);
    return ops::add(x, project(v_att));
}

Dffn::Dffn(ParamScope scope, std::size_t c, std::size_t p, bool per_channel)
    : channels(c),
      patch(p),
      norm(scope.sub("norm"), c),
      expand(scope.sub("expand"), c, 2 * c, 1),
      project(scope.sub("project"), c, c, 1, true, 1, kResidualInitScale) {
    freq_weight = per_channel ? scope.constant("freq_weight", {2 * c, p, p}, 1.0)
                              : scope.constant("freq_weight", {p, p}, 1.0);
}

Tensor Dffn::forward(const Tensor& x) const {
    const std::size_t h = x.height(), w = x.width();
    const Tensor z1 = expand(norm(x));
    const Tensor z2 = ops::freq_filter(ops::patch_unfold(z1, patch), freq_weight);
    const Tensor folded = ops::patch_fold(z2, 2 * channels, h, w, patch);
    return ops::add(project(ops::geglu(folded)), x);
}

Fdb::Fdb(ParamScope scope, std::size_t c, std::size_t p, bool per_channel_w)
    : fsas(scope.sub("fsas"), c, p), dffn(scope.sub("dffn"), c, p, per_channel_w) {}

ChannelAttention::ChannelAttention(ParamScope scope, std::size_t c, std::size_t reduction) {
    const std::size_t hidden = std::max<std::size_t>(1, c / std::max<std::size_t>(1, reduction));
    fc1 = Conv2d(scope.sub("fc1"), c, hidden, 1, false);
    fc2 = Conv2d(scope.sub("fc2"), hidden, c, 1, false);
}

Tensor ChannelAttention::scores(const Tensor& z) const {
    auto mlp = [&](const Tensor& t) { return fc2(ops::relu(fc1(t))); };
    return ops::sigmoid(ops::add(mlp(ops::global_avg_pool(z)), mlp(ops::global_max_pool(z))));
}

Tensor ChannelAttention::forward(const Tensor& z) const { return ops::mul(z, scores(z)); }

SpatialAttention::SpatialAttention(ParamScope scope, std::size_t kernel) : conv(scope.sub("conv"), 2, 1, kernel) {}

Tensor SpatialAttention::map(const Tensor& z) const {
    return ops::sigmoid(conv(ops::concat_channels({ops::spatial_mean(z), ops::spatial_max(z)})));
}

Tensor SpatialAttention::forward(const Tensor& z) const { return ops::mul(z, map(z)); }

namespace {

std::size_t sum_widths(const std::vector<std::size_t>& widths) {
    std::size_t s = 0;
    for (auto w : widths) s += w;
    return s;
}

} // namespace

Mib::Mib(ParamScope scope, const std::vector<std::size_t>& widths, std::size_t level_) : level(level_) {
    if (level >= widths.size()) {
        throw ConfigError("mib: level " + std::to_string(level + 1) + " out of range for " +
                          std::to_string(widths.size()) + " levels");
    }
    fuse = Conv2d(scope.sub("fuse"), sum_widths(widths), widths[level], 1);
}

Tensor Mib::forward(const std::vector<Tensor>& features) const {
    if (level >= features.size()) {
        throw ShapeError("mib: level " + std::to_string(level + 1) + " out of range for " +
                         std::to_string(features.size()) + " features");
    }
    const std::size_t h = features[level].height(), w = features[level].width();
    std::vector<Tensor> resized;
    for (std::size_t j = 0; j < features.size(); ++j) {
        resized.push_back(j == level ? features[j] : ops::interpolate_bilinear(features[j], h, w));
    }
    return fuse(ops::concat_channels(resized));
}

Amib::Amib(ParamScope scope, const std::vector<std::size_t>& widths, std::size_t level_, AmibSwitches sw,
           std::size_t reduction, std::size_t sa_kernel)
    : level(level_), switches(sw) {
    if (level >= widths.size()) throw ConfigError("amib: level out of range");
    const std::size_t c = widths[level];
    if (sw.mib) {
        mib = Mib(scope.sub("mib"), widths, level);
        split = DepthwiseConv2d(scope.sub("split"), c, 2, 3);
        mix = Conv2d(scope.sub("mix"), 2 * c, c, 1);
    }
    if (sw.ca) ca = ChannelAttention(scope.sub("ca"), c, reduction);
    if (sw.sa) sa = SpatialAttention(scope.sub("sa"), sa_kernel);
}

Tensor Amib::gate(const Tensor& z1, const Tensor& z2) const {
    return mix(ops::concat_channels({ops::mul(ops::sigmoid(z1), z2), ops::mul(ops::sigmoid(z2), z1)}));
}

Tensor Amib::forward(const std::vector<Tensor>& features) const {
    if (level >= features.size()) throw ShapeError("amib: level out of range");
    Tensor z = features[level];
    if (switches.mib) {
        const std::size_t c = z.channels();
        const Tensor halves = split(mib.forward(features));
        z = gate(ops::slice_channels(halves, 0, c), ops::slice_channels(halves, c, c));
    }
    if (switches.ca) z = ca.forward(z);
    if (switches.sa) z = sa.forward(z);
    return z;
}

Sam::Sam(ParamScope scope, std::size_t c, std::size_t image_channels)
    : to_image(scope.sub("to_image"), c, image_channels, 3, true, 1, kResidualInitScale), to_attention(scope.sub("to_attention"), image_channels, c, 3) {}

SamOutput Sam::forward(const Tensor& f, const Tensor& degraded) const {
    SamOutput out;
    out.image = ops::add(to_image(f), degraded);
    out.attention = ops::sigmoid(to_attention(out.image));
    out.features = ops::add(ops::mul(f, out.attention), f);
    return out;
}

Fam::Fam(ParamScope scope, std::size_t c_prev, std::size_t c)
    : adapter(scope.sub("adapter"), c_prev, c, 1), mix(scope.sub("mix"), c, c, 3) {}

Tensor Fam::adapt(const Tensor& y_prev, std::size_t h, std::size_t w) const {
    return adapter(ops::interpolate_bilinear(y_prev, h, w));
}

Tensor Fam::forward(const Tensor& x, const Tensor& y_prev) const {
    const Tensor yc = adapt(y_prev, x.height(), x.width());
    return ops::add(yc, mix(ops::mul(x, yc)));
}

} // namespace sfim::blocks
