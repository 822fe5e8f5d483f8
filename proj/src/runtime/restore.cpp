#include "sfim/runtime/restore.hpp"

#include <algorithm>

#include "sfim/core/ops.hpp"

namespace sfim::runtime {

namespace {

Tensor restore_whole(const model::Model& model, const Tensor& x) {
    Tensor out = model.forward(x).restored.front();
    for (double& v : out.mutable_values()) v = std::clamp(v, 0.0, 1.0);
    return out;
}

// Tile origins covering [0, n) with the given tile and overlap; the last
// tile is pulled back to end at n.
std::vector<std::size_t> origins(std::size_t n, std::size_t tile, std::size_t overlap) {
    std::vector<std::size_t> out{0};
    if (tile >= n) return out;
    const std::size_t stride = tile - overlap;
    while (out.back() + tile < n) out.push_back(std::min(out.back() + stride, n - tile));
    return out;
}

// Weight along one axis inside a tile: ramps from ~0 to 1 across the overlap
// on sides shared with a neighbour, flat elsewhere.
double ramp(std::size_t i, std::size_t len, std::size_t overlap, bool lead, bool trail) {
    double w = 1.0;
    if (overlap == 0) return w;
    const double o = static_cast<double>(overlap);
    if (lead) w = std::min(w, (static_cast<double>(i) + 0.5) / o);
    if (trail) w = std::min(w, (static_cast<double>(len - i) - 0.5) / o);
    return w;
}

} // namespace

Tensor restore_image(const model::Model& model, const Tensor& degraded, const RestoreOptions& opt) {
    if (degraded.rank() != 3) throw ShapeError("restore: expected C x H x W, got " + shape_string(degraded.shape()));
    if (degraded.channels() != model.config().image_channels) {
        throw ShapeError("restore: image has " + std::to_string(degraded.channels()) + " channels, model expects " +
                         std::to_string(model.config().image_channels));
    }
    const std::size_t c = degraded.channels(), h = degraded.height(), w = degraded.width();
    if (opt.tile == 0 || (opt.tile >= h && opt.tile >= w)) return restore_whole(model, degraded);
    if (opt.tile <= 2 * opt.overlap) throw ConfigError("restore: tile must exceed twice the overlap");

    const std::size_t th = std::min(opt.tile, h), tw = std::min(opt.tile, w);
    const auto ys = origins(h, th, opt.overlap), xs = origins(w, tw, opt.overlap);
    std::vector<double> acc(c * h * w, 0.0), weight(h * w, 0.0);
    for (std::size_t yi = 0; yi < ys.size(); ++yi)
        for (std::size_t xi = 0; xi < xs.size(); ++xi) {
            const std::size_t y0 = ys[yi], x0 = xs[xi];
            const Tensor tile = restore_whole(model, ops::crop(degraded, y0, x0, th, tw));
            const auto tv = tile.values();
            for (std::size_t y = 0; y < th; ++y) {
                const double wy = ramp(y, th, opt.overlap, yi > 0, yi + 1 < ys.size());
                for (std::size_t x = 0; x < tw; ++x) {
                    const double wt = wy * ramp(x, tw, opt.overlap, xi > 0, xi + 1 < xs.size());
                    weight[(y0 + y) * w + x0 + x] += wt;
                    for (std::size_t ch = 0; ch < c; ++ch) {
                        acc[(ch * h + y0 + y) * w + x0 + x] += wt * tv[(ch * th + y) * tw + x];
                    }
                }
            }
        }
    Tensor out(degraded.shape());
    auto ov = out.mutable_values();
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < h * w; ++i) ov[ch * h * w + i] = acc[ch * h * w + i] / weight[i];
    return out;
}

} // namespace sfim::runtime
