#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "ops_common.hpp"

namespace sfim::ops {

using detail::NodePtr;

Tensor concat_channels(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_channels: no inputs");
    const std::size_t h = parts[0].height(), w = parts[0].width();
    std::size_t channels = 0;
    for (const auto& p : parts) {
        detail::require_rank("concat_channels", p, 3);
        if (p.height() != h || p.width() != w) {
            throw ShapeError("concat_channels: spatial mismatch " + shape_string(parts[0].shape()) + " vs " +
                             shape_string(p.shape()));
        }
        channels += p.channels();
    }
    Tensor out(Shape{channels, h, w});
    auto ov = out.mutable_values();
    std::size_t offset = 0;
    for (const auto& p : parts) {
        std::copy(p.values().begin(), p.values().end(), ov.begin() + static_cast<std::ptrdiff_t>(offset));
        offset += p.numel();
    }
    if (needs_grad(parts)) {
        std::vector<NodePtr> nodes;
        for (const auto& p : parts) nodes.push_back(p.handle());
        NodePtr on = out.handle();
        active_tape()->record("concat_channels", parts, out, [nodes, on] {
            std::size_t offset = 0;
            for (const auto& n : nodes) {
                if (n->requires_grad) {
                    double* g = n->grad_buffer().data();
                    for (std::size_t i = 0; i < n->value.size(); ++i) g[i] += on->grad[offset + i];
                }
                offset += n->value.size();
            }
        });
    }
    return out;
}

Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t count) {
    detail::require_rank("slice_channels", x, 3);
    if (begin + count > x.channels() || count == 0) {
        throw ShapeError("slice_channels: [" + std::to_string(begin) + ", +" + std::to_string(count) + ") of " +
                         shape_string(x.shape()));
    }
    const std::size_t plane = x.height() * x.width();
    Tensor out(Shape{count, x.height(), x.width()});
    auto xv = x.values();
    std::copy(xv.begin() + static_cast<std::ptrdiff_t>(begin * plane),
              xv.begin() + static_cast<std::ptrdiff_t>((begin + count) * plane), out.mutable_values().begin());
    if (needs_grad({&x})) {
        NodePtr xn = x.handle(), on = out.handle();
        const std::size_t offset = begin * plane;
        active_tape()->record("slice_channels", {&x}, out, [xn, on, offset] {
            double* g = xn->grad_buffer().data() + offset;
            for (std::size_t i = 0; i < on->grad.size(); ++i) g[i] += on->grad[i];
        });
    }
    return out;
}

Tensor layer_norm_channels(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    detail::require_rank("layer_norm", x, 3);
    const std::size_t c = x.channels(), plane = x.height() * x.width();
    if (c == 0) throw ShapeError("layer_norm: channel extent must be >= 1");
    if (gamma.numel() != c || beta.numel() != c) {
        throw ShapeError("layer_norm: affine size mismatch for " + shape_string(x.shape()));
    }
    Tensor out(x.shape());
    auto xhat = std::make_shared<std::vector<double>>(x.numel());
    auto inv_std = std::make_shared<std::vector<double>>(plane);
    auto xv = x.values();
    auto gv = gamma.values();
    auto bv = beta.values();
    auto ov = out.mutable_values();
    for (std::size_t s = 0; s < plane; ++s) {
        double mu = 0.0;
        for (std::size_t ch = 0; ch < c; ++ch) mu += xv[ch * plane + s];
        mu /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double d = xv[ch * plane + s] - mu;
            var += d * d;
        }
        var /= static_cast<double>(c);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[s] = is;
        for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t i = ch * plane + s;
            (*xhat)[i] = (xv[i] - mu) * is;
            ov[i] = gv[ch] * (*xhat)[i] + bv[ch];
        }
    }
    detail::check_finite("layer_norm", out);
    if (needs_grad({&x, &gamma, &beta})) {
        NodePtr xn = x.handle(), gn = gamma.handle(), bn = beta.handle(), on = out.handle();
        active_tape()->record("layer_norm", {&x, &gamma, &beta}, out, [xn, gn, bn, on, xhat, inv_std, c, plane] {
            const auto& g = on->grad;
            double* gg = detail::grad_sink(gn);
            double* gb = detail::grad_sink(bn);
            double* gx = detail::grad_sink(xn);
            const auto& gam = gn->value;
            for (std::size_t s = 0; s < plane; ++s) {
                double mean_d = 0.0, mean_dx = 0.0;
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const std::size_t i = ch * plane + s;
                    if (gg) gg[ch] += g[i] * (*xhat)[i];
                    if (gb) gb[ch] += g[i];
                    const double d = g[i] * gam[ch];
                    mean_d += d;
                    mean_dx += d * (*xhat)[i];
                }
                if (!gx) continue;
                mean_d /= static_cast<double>(c);
                mean_dx /= static_cast<double>(c);
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const std::size_t i = ch * plane + s;
                    const double d = g[i] * gam[ch];
                    gx[i] += (*inv_std)[s] * (d - mean_d - (*xhat)[i] * mean_dx);
                }
            }
        });
    }
    return out;
}

namespace {

struct Axis {
    std::vector<std::size_t> i0, i1;
    std::vector<double> frac;
};

Axis bilinear_axis(std::size_t in, std::size_t out) {
    Axis a;
    a.i0.resize(out);
    a.i1.resize(out);
    a.frac.resize(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t d = 0; d < out; ++d) {
        double src = (static_cast<double>(d) + 0.5) * scale - 0.5;
        if (src < 0) src = 0;
        std::size_t lo = static_cast<std::size_t>(std::floor(src));
        if (lo > in - 1) lo = in - 1;
        a.i0[d] = lo;
        a.i1[d] = lo + (lo < in - 1 ? 1 : 0);
        a.frac[d] = src - static_cast<double>(lo);
    }
    return a;
}

} // namespace

Tensor interpolate_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w) {
    detail::require_rank("interpolate", x, 3);
    if (out_h == 0 || out_w == 0) throw ShapeError("interpolate: target extent must be >= 1");
    const std::size_t c = x.channels(), h = x.height(), w = x.width();
    if (h == out_h && w == out_w) {
        // identity resize keeps the graph simple
        Tensor out = add_scalar(x, 0.0);
        return out;
    }
    auto ay = std::make_shared<Axis>(bilinear_axis(h, out_h));
    auto ax = std::make_shared<Axis>(bilinear_axis(w, out_w));
    Tensor out(Shape{c, out_h, out_w});
    auto xv = x.values();
    auto ov = out.mutable_values();
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* src = xv.data() + ch * h * w;
        double* dst = ov.data() + ch * out_h * out_w;
        for (std::size_t y = 0; y < out_h; ++y) {
            const double fy = ay->frac[y];
            const double* r0 = src + ay->i0[y] * w;
            const double* r1 = src + ay->i1[y] * w;
            for (std::size_t xx = 0; xx < out_w; ++xx) {
                const double fx = ax->frac[xx];
                const double top = (1 - fx) * r0[ax->i0[xx]] + fx * r0[ax->i1[xx]];
                const double bot = (1 - fx) * r1[ax->i0[xx]] + fx * r1[ax->i1[xx]];
                dst[y * out_w + xx] = (1 - fy) * top + fy * bot;
            }
        }
    }
    detail::check_finite("interpolate", out);
    if (needs_grad({&x})) {
        NodePtr xn = x.handle(), on = out.handle();
        active_tape()->record("interpolate", {&x}, out, [xn, on, ay, ax, c, h, w, out_h, out_w] {
            double* gx = xn->grad_buffer().data();
            const double* g = on->grad.data();
            for (std::size_t ch = 0; ch < c; ++ch) {
                double* dst = gx + ch * h * w;
                const double* gs = g + ch * out_h * out_w;
                for (std::size_t y = 0; y < out_h; ++y) {
                    const double fy = ay->frac[y];
                    double* r0 = dst + ay->i0[y] * w;
                    double* r1 = dst + ay->i1[y] * w;
                    for (std::size_t xx = 0; xx < out_w; ++xx) {
                        const double fx = ax->frac[xx];
                        const double gv = gs[y * out_w + xx];
                        r0[ax->i0[xx]] += (1 - fy) * (1 - fx) * gv;
                        r0[ax->i1[xx]] += (1 - fy) * fx * gv;
                        r1[ax->i0[xx]] += fy * (1 - fx) * gv;
                        r1[ax->i1[xx]] += fy * fx * gv;
                    }
                }
            }
        });
    }
    return out;
}

namespace {

// Pools share one shape: every output element reduces a list of input offsets.
enum class Reduce { Mean, Max };

Tensor pool(const char* name, const Tensor& x, Reduce kind, bool over_space) {
    detail::require_rank(name, x, 3);
    const std::size_t c = x.channels(), plane = x.height() * x.width();
    if (plane == 0 || c == 0) throw ShapeError(std::string(name) + ": empty input");
    const std::size_t outputs = over_space ? c : plane;
    const std::size_t reduce = over_space ? plane : c;
    auto at = [=](std::size_t o, std::size_t r) { return over_space ? o * plane + r : r * plane + o; };
    Tensor out(over_space ? Shape{c, 1, 1} : Shape{1, x.height(), x.width()});
    auto argmax = std::make_shared<std::vector<std::size_t>>(kind == Reduce::Max ? outputs : 0);
    auto xv = x.values();
    auto ov = out.mutable_values();
    for (std::size_t o = 0; o < outputs; ++o) {
        if (kind == Reduce::Mean) {
            double acc = 0.0;
            for (std::size_t r = 0; r < reduce; ++r) acc += xv[at(o, r)];
            ov[o] = acc / static_cast<double>(reduce);
        } else {
            std::size_t best = at(o, 0);
            for (std::size_t r = 1; r < reduce; ++r) {
                if (xv[at(o, r)] > xv[best]) best = at(o, r);
            }
            (*argmax)[o] = best;
            ov[o] = xv[best];
        }
    }
    detail::check_finite(name, out);
    if (needs_grad({&x})) {
        NodePtr xn = x.handle(), on = out.handle();
        active_tape()->record(name, {&x}, out, [xn, on, argmax, kind, outputs, reduce, at] {
            double* gx = xn->grad_buffer().data();
            for (std::size_t o = 0; o < outputs; ++o) {
                const double g = on->grad[o];
                if (kind == Reduce::Max) {
                    gx[(*argmax)[o]] += g;
                } else {
                    const double share = g / static_cast<double>(reduce);
                    for (std::size_t r = 0; r < reduce; ++r) gx[at(o, r)] += share;
                }
            }
        });
    }
    return out;
}

} // namespace

Tensor global_avg_pool(const Tensor& x) { return pool("global_avg_pool", x, Reduce::Mean, true); }
Tensor global_max_pool(const Tensor& x) { return pool("global_max_pool", x, Reduce::Max, true); }
Tensor spatial_mean(const Tensor& x) { return pool("spatial_mean", x, Reduce::Mean, false); }
Tensor spatial_max(const Tensor& x) { return pool("spatial_max", x, Reduce::Max, false); }

namespace {

// Output tensor gathered from x through a fixed index map (out[i] = x[map[i]]).
Tensor gather(const char* name, const Tensor& x, Shape out_shape, std::shared_ptr<std::vector<std::size_t>> map) {
    Tensor out(std::move(out_shape));
    auto xv = x.values();
    auto ov = out.mutable_values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = xv[(*map)[i]];
    if (needs_grad({&x})) {
        NodePtr xn = x.handle(), on = out.handle();
        active_tape()->record(name, {&x}, out, [xn, on, map] {
            double* gx = xn->grad_buffer().data();
            for (std::size_t i = 0; i < on->grad.size(); ++i) gx[(*map)[i]] += on->grad[i];
        });
    }
    return out;
}

} // namespace

Tensor reflect_pad(const Tensor& x, std::size_t top, std::size_t bottom, std::size_t left, std::size_t right) {
    detail::require_rank("reflect_pad", x, 3);
    const std::size_t c = x.channels(), h = x.height(), w = x.width();
    const std::size_t oh = h + top + bottom, ow = w + left + right;
    auto map = std::make_shared<std::vector<std::size_t>>(c * oh * ow);
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < oh; ++y) {
            const std::size_t sy = reflect_index(static_cast<long>(y) - static_cast<long>(top), h);
            for (std::size_t xx = 0; xx < ow; ++xx) {
                const std::size_t sx = reflect_index(static_cast<long>(xx) - static_cast<long>(left), w);
                (*map)[(ch * oh + y) * ow + xx] = (ch * h + sy) * w + sx;
            }
        }
    }
    return gather("reflect_pad", x, Shape{c, oh, ow}, map);
}

Tensor crop(const Tensor& x, std::size_t top, std::size_t left, std::size_t h, std::size_t w) {
    detail::require_rank("crop", x, 3);
    if (top + h > x.height() || left + w > x.width() || h == 0 || w == 0) {
        throw ShapeError("crop: window out of range for " + shape_string(x.shape()));
    }
    const std::size_t c = x.channels(), iw = x.width(), ih = x.height();
    auto map = std::make_shared<std::vector<std::size_t>>(c * h * w);
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t xx = 0; xx < w; ++xx) {
                (*map)[(ch * h + y) * w + xx] = (ch * ih + top + y) * iw + left + xx;
            }
        }
    }
    return gather("crop", x, Shape{c, h, w}, map);
}

Tensor patch_unfold(const Tensor& x, std::size_t patch) {
    detail::require_rank("patch_unfold", x, 3);
    if (patch == 0) throw ShapeError("patch_unfold: patch size must be >= 1");
    const std::size_t c = x.channels(), h = x.height(), w = x.width();
    const std::size_t nh = (h + patch - 1) / patch, nw = (w + patch - 1) / patch;
    const std::size_t count = c * nh * nw;
    auto map = std::make_shared<std::vector<std::size_t>>(count * patch * patch);
    std::size_t i = 0;
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t py = 0; py < nh; ++py) {
            for (std::size_t px = 0; px < nw; ++px) {
                for (std::size_t r = 0; r < patch; ++r) {
                    const std::size_t sy = reflect_index(static_cast<long>(py * patch + r), h);
                    for (std::size_t q = 0; q < patch; ++q) {
                        const std::size_t sx = reflect_index(static_cast<long>(px * patch + q), w);
                        (*map)[i++] = (ch * h + sy) * w + sx;
                    }
                }
            }
        }
    }
    return gather("patch_unfold", x, Shape{count, patch, patch}, map);
}

Tensor patch_fold(const Tensor& patches, std::size_t channels, std::size_t height, std::size_t width,
                  std::size_t patch) {
    detail::require_rank("patch_fold", patches, 3);
    const std::size_t nh = (height + patch - 1) / patch, nw = (width + patch - 1) / patch;
    if (patches.dim(0) != channels * nh * nw || patches.dim(1) != patch || patches.dim(2) != patch) {
        throw ShapeError("patch_fold: " + shape_string(patches.shape()) + " does not tile " + std::to_string(channels) +
                         "x" + std::to_string(height) + "x" + std::to_string(width) + " with patch " +
                         std::to_string(patch));
    }
    auto map = std::make_shared<std::vector<std::size_t>>(channels * height * width);
    for (std::size_t ch = 0; ch < channels; ++ch) {
        for (std::size_t y = 0; y < height; ++y) {
            for (std::size_t xx = 0; xx < width; ++xx) {
                const std::size_t n = (ch * nh + y / patch) * nw + xx / patch;
                (*map)[(ch * height + y) * width + xx] = (n * patch + y % patch) * patch + xx % patch;
            }
        }
    }
    return gather("patch_fold", patches, Shape{channels, height, width}, map);
}

} // namespace sfim::ops
