#include <algorithm>
#include <vector>

#include "ops_common.hpp"
#include "sfim/core/parallel.hpp"

namespace sfim::ops {

using detail::NodePtr;

std::size_t reflect_index(long i, std::size_t n) {
    if (n == 1) return 0;
    const long period = 2 * static_cast<long>(n) - 2;
    long r = i % period;
    if (r < 0) r += period;
    if (r >= static_cast<long>(n)) r = period - r;
    return static_cast<std::size_t>(r);
}

namespace {

struct Geometry {
    std::size_t cin, h, w, cout, k, stride, pad, hp, wp, ho, wo;
    PadMode mode;
};

// Source row/col of a padded coordinate, or -1 for a zero pad.
long source_index(long i, std::size_t n, PadMode mode) {
    if (i >= 0 && i < static_cast<long>(n)) return i;
    if (mode == PadMode::Zero) return -1;
    return static_cast<long>(reflect_index(i, n));
}

std::vector<double> pad_planes(const double* x, std::size_t planes, std::size_t h, std::size_t w, std::size_t pad,
                               PadMode mode) {
    const std::size_t hp = h + 2 * pad, wp = w + 2 * pad;
    std::vector<double> out(planes * hp * wp, 0.0);
    std::vector<long> cols(wp);
    for (std::size_t px = 0; px < wp; ++px) cols[px] = source_index(static_cast<long>(px) - static_cast<long>(pad), w, mode);
    for (std::size_t c = 0; c < planes; ++c) {
        const double* src = x + c * h * w;
        double* dst = out.data() + c * hp * wp;
        for (std::size_t py = 0; py < hp; ++py) {
            const long sy = source_index(static_cast<long>(py) - static_cast<long>(pad), h, mode);
            if (sy < 0) continue;
            const double* row = src + static_cast<std::size_t>(sy) * w;
            double* drow = dst + py * wp;
            for (std::size_t px = 0; px < wp; ++px) {
                if (cols[px] >= 0) drow[px] = row[cols[px]];
            }
        }
    }
    return out;
}

// Adjoint of pad_planes for a single plane: gx += P^T gpad.
void unpad_accumulate(const double* gpad, double* gx, std::size_t h, std::size_t w, std::size_t pad, PadMode mode) {
    const std::size_t hp = h + 2 * pad, wp = w + 2 * pad;
    for (std::size_t py = 0; py < hp; ++py) {
        const long sy = source_index(static_cast<long>(py) - static_cast<long>(pad), h, mode);
        if (sy < 0) continue;
        for (std::size_t px = 0; px < wp; ++px) {
            const long sx = source_index(static_cast<long>(px) - static_cast<long>(pad), w, mode);
            if (sx < 0) continue;
            gx[static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)] += gpad[py * wp + px];
        }
    }
}

// dst[y][x] += sum_{ky,kx} w[ky][kx] * src[(y*s + ky) * src_w + x*s + kx]
void correlate_plane(const double* src, std::size_t src_w, double* dst, std::size_t ho, std::size_t wo,
                     const double* w, std::size_t k, std::size_t stride) {
    if (stride == 1) {
        if (k == 3) {
            for (std::size_t ky = 0; ky < 3; ++ky) {
                const double w0 = w[ky * 3], w1 = w[ky * 3 + 1], w2 = w[ky * 3 + 2];
                for (std::size_t y = 0; y < ho; ++y) {
                    const double* s = src + (y + ky) * src_w;
                    double* d = dst + y * wo;
#pragma omp simd
                    for (std::size_t x = 0; x < wo; ++x) d[x] += w0 * s[x] + w1 * s[x + 1] + w2 * s[x + 2];
                }
            }
            return;
        }
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
                const double wv = w[ky * k + kx];
                for (std::size_t y = 0; y < ho; ++y) {
                    const double* s = src + (y + ky) * src_w + kx;
                    double* d = dst + y * wo;
#pragma omp simd
                    for (std::size_t x = 0; x < wo; ++x) d[x] += wv * s[x];
                }
            }
        }
        return;
    }
    for (std::size_t y = 0; y < ho; ++y) {
        for (std::size_t x = 0; x < wo; ++x) {
            double acc = 0.0;
            for (std::size_t ky = 0; ky < k; ++ky) {
                const double* s = src + (y * stride + ky) * src_w + x * stride;
                for (std::size_t kx = 0; kx < k; ++kx) acc += w[ky * k + kx] * s[kx];
            }
            dst[y * wo + x] += acc;
        }
    }
}

// gw[ky][kx] += sum_{y,x} g[y][x] * src[(y*s + ky) * src_w + x*s + kx]
void weight_grad_plane(const double* g, std::size_t ho, std::size_t wo, const double* src, std::size_t src_w,
                       double* gw, std::size_t k, std::size_t stride) {
    for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
            double acc = 0.0;
            for (std::size_t y = 0; y < ho; ++y) {
                const double* s = src + (y * stride + ky) * src_w + kx;
                const double* gr = g + y * wo;
                if (stride == 1) {
#pragma omp simd reduction(+ : acc)
                    for (std::size_t x = 0; x < wo; ++x) acc += gr[x] * s[x];
                } else {
                    for (std::size_t x = 0; x < wo; ++x) acc += gr[x] * s[x * stride];
                }
            }
            gw[ky * k + kx] += acc;
        }
    }
}

// gpad[(y*s+ky)*wp + x*s+kx] += w[ky][kx] * g[y][x]
void scatter_plane(const double* g, std::size_t ho, std::size_t wo, const double* w, std::size_t k, std::size_t stride,
                   double* gpad, std::size_t wp) {
    for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
            const double wv = w[ky * k + kx];
            for (std::size_t y = 0; y < ho; ++y) {
                double* d = gpad + (y * stride + ky) * wp + kx;
                const double* gr = g + y * wo;
                if (stride == 1) {
#pragma omp simd
                    for (std::size_t x = 0; x < wo; ++x) d[x] += wv * gr[x];
                } else {
                    for (std::size_t x = 0; x < wo; ++x) d[x * stride] += wv * gr[x];
                }
            }
        }
    }
}

Geometry conv_geometry(const char* op, const Tensor& x, std::size_t cout, std::size_t k, const ConvOptions& opt) {
    detail::require_rank(op, x, 3);
    if (opt.stride < 1) throw ShapeError(std::string(op) + ": stride must be >= 1");
    Geometry g{};
    g.cin = x.dim(0);
    g.h = x.dim(1);
    g.w = x.dim(2);
    g.cout = cout;
    g.k = k;
    g.stride = opt.stride;
    g.pad = opt.padding;
    g.mode = opt.mode;
    g.hp = g.h + 2 * g.pad;
    g.wp = g.w + 2 * g.pad;
    if (k == 0 || k > g.hp || k > g.wp) {
        throw ShapeError(std::string(op) + ": kernel " + std::to_string(k) + " does not fit padded input " +
                         shape_string(x.shape()));
    }
    g.ho = (g.hp - k) / g.stride + 1;
    g.wo = (g.wp - k) / g.stride + 1;
    return g;
}

// Padded view of x: either x itself or a padded copy held in `storage`.
const double* padded_input(const double* x, const Geometry& g, std::vector<double>& storage) {
    if (g.pad == 0) return x;
    storage = pad_planes(x, g.cin, g.h, g.w, g.pad, g.mode);
    return storage.data();
}

// Input gradient through the padded buffer for one input plane.
void input_grad_plane(const std::vector<double>& gpad, double* gx_plane, const Geometry& g) {
    if (g.pad == 0) {
        for (std::size_t i = 0; i < g.h * g.w; ++i) gx_plane[i] += gpad[i];
    } else {
        unpad_accumulate(gpad.data(), gx_plane, g.h, g.w, g.pad, g.mode);
    }
}

} // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, ConvOptions opt) {
    detail::require_rank("conv2d", weight, 4);
    const std::size_t cout = weight.dim(0), k = weight.dim(2);
    if (weight.dim(3) != k) throw ShapeError("conv2d: kernel must be square, got " + shape_string(weight.shape()));
    const Geometry g = conv_geometry("conv2d", x, cout, k, opt);
    if (weight.dim(1) != g.cin) {
        throw ShapeError("conv2d: weight " + shape_string(weight.shape()) + " vs input " + shape_string(x.shape()));
    }
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) {
        throw ShapeError("conv2d: bias " + shape_string(bias.shape()) + " for " + std::to_string(cout) + " outputs");
    }

    Tensor out(Shape{cout, g.ho, g.wo});
    std::vector<double> pad_storage;
    const double* xp = padded_input(x.values().data(), g, pad_storage);
    const double* wv = weight.values().data();
    const double* bv = bias.defined() ? bias.values().data() : nullptr;
    double* ov = out.mutable_values().data();
    const std::size_t plane_in = g.hp * g.wp, plane_out = g.ho * g.wo, kk = k * k;

    parallel_for(cout, 1, [&](std::size_t b, std::size_t e) {
        for (std::size_t co = b; co < e; ++co) {
            double* o = ov + co * plane_out;
            std::fill(o, o + plane_out, bv ? bv[co] : 0.0);
            if (k == 1 && g.stride == 1) {
                for (std::size_t ci = 0; ci < g.cin; ++ci) {
                    const double wc = wv[co * g.cin + ci];
                    const double* s = xp + ci * plane_in;
#pragma omp simd
                    for (std::size_t i = 0; i < plane_out; ++i) o[i] += wc * s[i];
                }
            } else {
                for (std::size_t ci = 0; ci < g.cin; ++ci) {
                    correlate_plane(xp + ci * plane_in, g.wp, o, g.ho, g.wo, wv + (co * g.cin + ci) * kk, k, g.stride);
                }
            }
        }
    });
    detail::check_finite("conv2d", out);

    if (needs_grad({&x, &weight, &bias})) {
        NodePtr xn = x.handle(), wn = weight.handle(), bn = bias.defined() ? bias.handle() : nullptr;
        NodePtr on = out.handle();
        active_tape()->record("conv2d", {&x, &weight, &bias}, out, [xn, wn, bn, on, g] {
            const double* go = on->grad.data();
            const std::size_t plane_in = g.hp * g.wp, plane_out = g.ho * g.wo, kk = g.k * g.k;
            std::vector<double> pad_storage;
            const double* xp = padded_input(xn->value.data(), g, pad_storage);
            const double* wv = wn->value.data();
            if (bn && bn->requires_grad) {
                double* gb = bn->grad_buffer().data();
                for (std::size_t co = 0; co < g.cout; ++co) {
                    double acc = 0.0;
                    const double* gr = go + co * plane_out;
                    for (std::size_t i = 0; i < plane_out; ++i) acc += gr[i];
                    gb[co] += acc;
                }
            }
            if (wn->requires_grad) {
                double* gw = wn->grad_buffer().data();
                parallel_for(g.cout, 1, [&](std::size_t b, std::size_t e) {
                    for (std::size_t co = b; co < e; ++co) {
                        const double* gr = go + co * plane_out;
                        for (std::size_t ci = 0; ci < g.cin; ++ci) {
                            if (g.k == 1 && g.stride == 1) {
                                const double* s = xp + ci * plane_in;
                                double acc = 0.0;
#pragma omp simd reduction(+ : acc)
                                for (std::size_t i = 0; i < plane_out; ++i) acc += gr[i] * s[i];
                                gw[co * g.cin + ci] += acc;
                            } else {
                                weight_grad_plane(gr, g.ho, g.wo, xp + ci * plane_in, g.wp, gw + (co * g.cin + ci) * kk,
                                                  g.k, g.stride);
                            }
                        }
                    }
                });
            }
            if (xn->requires_grad) {
                double* gx = xn->grad_buffer().data();
                parallel_for(g.cin, 1, [&](std::size_t b, std::size_t e) {
                    std::vector<double> gpad(plane_in);
                    for (std::size_t ci = b; ci < e; ++ci) {
                        std::fill(gpad.begin(), gpad.end(), 0.0);
                        for (std::size_t co = 0; co < g.cout; ++co) {
                            const double* gr = go + co * plane_out;
                            if (g.k == 1 && g.stride == 1) {
                                const double wc = wv[co * g.cin + ci];
#pragma omp simd
                                for (std::size_t i = 0; i < plane_out; ++i) gpad[i] += wc * gr[i];
                            } else {
                                scatter_plane(gr, g.ho, g.wo, wv + (co * g.cin + ci) * kk, g.k, g.stride, gpad.data(),
                                              g.wp);
                            }
                        }
                        input_grad_plane(gpad, gx + ci * g.h * g.w, g);
                    }
                });
            }
        });
    }
    return out;
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, ConvOptions opt) {
    detail::require_rank("depthwise_conv2d", weight, 4);
    const std::size_t c = weight.dim(0), mult = weight.dim(1), k = weight.dim(2);
    if (weight.dim(3) != k) throw ShapeError("depthwise_conv2d: kernel must be square");
    const Geometry g = conv_geometry("depthwise_conv2d", x, c * mult, k, opt);
    if (g.cin != c) {
        throw ShapeError("depthwise_conv2d: weight " + shape_string(weight.shape()) + " vs input " +
                         shape_string(x.shape()));
    }
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != c * mult)) {
        throw ShapeError("depthwise_conv2d: bias " + shape_string(bias.shape()));
    }

    Tensor out(Shape{c * mult, g.ho, g.wo});
    std::vector<double> pad_storage;
    const double* xp = padded_input(x.values().data(), g, pad_storage);
    const double* wv = weight.values().data();
    const double* bv = bias.defined() ? bias.values().data() : nullptr;
    double* ov = out.mutable_values().data();
    const std::size_t plane_in = g.hp * g.wp, plane_out = g.ho * g.wo, kk = k * k;

    parallel_for(c * mult, 1, [&](std::size_t b, std::size_t e) {
        for (std::size_t oc = b; oc < e; ++oc) {
            double* o = ov + oc * plane_out;
            std::fill(o, o + plane_out, bv ? bv[oc] : 0.0);
            correlate_plane(xp + (oc / mult) * plane_in, g.wp, o, g.ho, g.wo, wv + oc * kk, k, g.stride);
        }
    });
    detail::check_finite("depthwise_conv2d", out);

    if (needs_grad({&x, &weight, &bias})) {
        NodePtr xn = x.handle(), wn = weight.handle(), bn = bias.defined() ? bias.handle() : nullptr;
        NodePtr on = out.handle();
        active_tape()->record("depthwise_conv2d", {&x, &weight, &bias}, out, [xn, wn, bn, on, g, mult] {
            const double* go = on->grad.data();
            const std::size_t plane_in = g.hp * g.wp, plane_out = g.ho * g.wo, kk = g.k * g.k;
            std::vector<double> pad_storage;
            const double* xp = padded_input(xn->value.data(), g, pad_storage);
            const double* wv = wn->value.data();
            if (bn && bn->requires_grad) {
                double* gb = bn->grad_buffer().data();
                for (std::size_t oc = 0; oc < g.cout; ++oc) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < plane_out; ++i) acc += go[oc * plane_out + i];
                    gb[oc] += acc;
                }
            }
            if (wn->requires_grad) {
                double* gw = wn->grad_buffer().data();
                for (std::size_t oc = 0; oc < g.cout; ++oc) {
                    weight_grad_plane(go + oc * plane_out, g.ho, g.wo, xp + (oc / mult) * plane_in, g.wp, gw + oc * kk,
                                      g.k, g.stride);
                }
            }
            if (xn->requires_grad) {
                double* gx = xn->grad_buffer().data();
                std::vector<double> gpad(plane_in);
                for (std::size_t ci = 0; ci < g.cin; ++ci) {
                    std::fill(gpad.begin(), gpad.end(), 0.0);
                    for (std::size_t j = 0; j < mult; ++j) {
                        const std::size_t oc = ci * mult + j;
                        scatter_plane(go + oc * plane_out, g.ho, g.wo, wv + oc * kk, g.k, g.stride, gpad.data(), g.wp);
                    }
                    input_grad_plane(gpad, gx + ci * g.h * g.w, g);
                }
            }
        });
    }
    return out;
}

} // namespace sfim::ops
