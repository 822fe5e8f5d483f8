#pragma once

// Brute-force reference implementations used only by tests. They share no
// code with the library kernels.

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <vector>

namespace sfim::oracle {

inline long reflect(long i, long n) {
    if (n == 1) return 0;
    const long period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

// out[o][y][x] = b[o] + sum_{c,i,j} w[o][c][i][j] * in[c][y*s+i-p][x*s+j-p]
inline std::vector<double> conv2d(const std::vector<double>& in, std::size_t cin, std::size_t h, std::size_t w,
                                  const std::vector<double>& wt, const std::vector<double>& bias, std::size_t cout,
                                  std::size_t k, std::size_t stride, std::size_t pad, bool reflect_pad,
                                  std::size_t& oh, std::size_t& ow) {
    oh = (h + 2 * pad - k) / stride + 1;
    ow = (w + 2 * pad - k) / stride + 1;
    std::vector<double> out(cout * oh * ow, 0.0);
    for (std::size_t o = 0; o < cout; ++o)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t x = 0; x < ow; ++x) {
                double acc = bias.empty() ? 0.0 : bias[o];
                for (std::size_t c = 0; c < cin; ++c)
                    for (std::size_t i = 0; i < k; ++i)
                        for (std::size_t j = 0; j < k; ++j) {
                            long sy = static_cast<long>(y * stride + i) - static_cast<long>(pad);
                            long sx = static_cast<long>(x * stride + j) - static_cast<long>(pad);
                            if (reflect_pad) {
                                sy = reflect(sy, static_cast<long>(h));
                                sx = reflect(sx, static_cast<long>(w));
                            } else if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) || sx >= static_cast<long>(w)) {
                                continue;
                            }
                            acc += wt[((o * cin + c) * k + i) * k + j] * in[(c * h + sy) * w + sx];
                        }
                out[(o * oh + y) * ow + x] = acc;
            }
    return out;
}

inline std::vector<double> depthwise(const std::vector<double>& in, std::size_t c, std::size_t h, std::size_t w,
                                     const std::vector<double>& wt, std::size_t m, std::size_t k, std::size_t pad,
                                     bool reflect_pad) {
    std::vector<double> out(c * m * h * w, 0.0);
    const std::size_t oh = h + 2 * pad - k + 1, ow = w + 2 * pad - k + 1;
    out.assign(c * m * oh * ow, 0.0);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t x = 0; x < ow; ++x) {
                    double acc = 0.0;
                    for (std::size_t a = 0; a < k; ++a)
                        for (std::size_t b = 0; b < k; ++b) {
                            long sy = static_cast<long>(y + a) - static_cast<long>(pad);
                            long sx = static_cast<long>(x + b) - static_cast<long>(pad);
                            if (reflect_pad) {
                                sy = reflect(sy, static_cast<long>(h));
                                sx = reflect(sx, static_cast<long>(w));
                            } else if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) || sx >= static_cast<long>(w)) {
                                continue;
                            }
                            acc += wt[((ch * m + j) * k + a) * k + b] * in[(ch * h + sy) * w + sx];
                        }
                    out[((ch * m + j) * oh + y) * ow + x] = acc;
                }
    return out;
}

// Direct O(N^4) 2-D DFT of one real plane.
inline std::vector<std::complex<double>> dft2(const std::vector<double>& x, std::size_t h, std::size_t w) {
    std::vector<std::complex<double>> out(h * w);
    for (std::size_t u = 0; u < h; ++u)
        for (std::size_t v = 0; v < w; ++v) {
            std::complex<double> acc = 0.0;
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t z = 0; z < w; ++z) {
                    const double ph = -2.0 * std::numbers::pi *
                                      (static_cast<double>(u * y) / static_cast<double>(h) +
                                       static_cast<double>(v * z) / static_cast<double>(w));
                    acc += x[y * w + z] * std::complex<double>(std::cos(ph), std::sin(ph));
                }
            out[u * w + v] = acc;
        }
    return out;
}

// a[s] = sum_t q[t + s] k[t], indices modulo the patch extents.
inline std::vector<double> circular_xcorr(const double* q, const double* k, std::size_t h, std::size_t w) {
    std::vector<double> a(h * w, 0.0);
    for (std::size_t sy = 0; sy < h; ++sy)
        for (std::size_t sx = 0; sx < w; ++sx) {
            double acc = 0.0;
            for (std::size_t ty = 0; ty < h; ++ty)
                for (std::size_t tx = 0; tx < w; ++tx)
                    acc += q[((ty + sy) % h) * w + (tx + sx) % w] * k[ty * w + tx];
            a[sy * w + sx] = acc;
        }
    return a;
}

// Amplitude and wrapped-phase L1 sums of two planes via the direct DFT.
inline void fft_loss_terms(const std::vector<double>& r, const std::vector<double>& g, std::size_t c, std::size_t h,
                           std::size_t w, double& amp, double& phase) {
    amp = 0.0;
    phase = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) {
        std::vector<double> pr(r.begin() + ch * h * w, r.begin() + (ch + 1) * h * w);
        std::vector<double> pg(g.begin() + ch * h * w, g.begin() + (ch + 1) * h * w);
        const auto fr = dft2(pr, h, w);
        const auto fg = dft2(pg, h, w);
        for (std::size_t i = 0; i < h * w; ++i) {
            amp += std::abs(std::abs(fr[i]) - std::abs(fg[i]));
            double d = std::arg(fr[i]) - std::arg(fg[i]);
            while (d > std::numbers::pi) d -= 2.0 * std::numbers::pi;
            while (d <= -std::numbers::pi) d += 2.0 * std::numbers::pi;
            phase += std::abs(d);
        }
    }
}

inline double complex_l1(const std::vector<double>& r, const std::vector<double>& g, std::size_t c, std::size_t h,
                         std::size_t w) {
    double acc = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) {
        std::vector<double> pr(r.begin() + ch * h * w, r.begin() + (ch + 1) * h * w);
        std::vector<double> pg(g.begin() + ch * h * w, g.begin() + (ch + 1) * h * w);
        const auto fr = dft2(pr, h, w);
        const auto fg = dft2(pg, h, w);
        for (std::size_t i = 0; i < h * w; ++i) {
            acc += std::abs(fr[i].real() - fg[i].real()) + std::abs(fr[i].imag() - fg[i].imag());
        }
    }
    return acc;
}

// AdamW written from the lr_t form: lr_t = lr sqrt(1 - b2^t) / (1 - b1^t),
// p -= lr_t m / (sqrt(v) + eps sqrt(1 - b2^t)), after decoupled decay.
struct ReferenceAdamW {
    double lr, b1 = 0.9, b2 = 0.999, wd = 0.01, eps = 1e-8;
    double m = 0.0, v = 0.0;
    int t = 0;

    double step(double p, double g) {
        ++t;
        p *= 1.0 - lr * wd;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        const double bc1 = 1.0 - std::pow(b1, t);
        const double bc2 = 1.0 - std::pow(b2, t);
        const double lr_t = lr * std::sqrt(bc2) / bc1;
        return p - lr_t * m / (std::sqrt(v) + eps * std::sqrt(bc2));
    }
};

// Parameters of the frequency self-attention block, as flat row-major arrays.
struct FsasParams {
    std::size_t c = 0, p = 8;
    std::vector<double> norm_gamma, norm_beta;  // C
    std::vector<double> qkv_w, qkv_b;           // 3C x C, 3C
    std::vector<double> dw_w, dw_b;             // 3C x 3 x 3, 3C
    std::vector<double> attn_gamma, attn_beta;  // C
    std::vector<double> proj_w, proj_b;         // C x C, C
};

// Channel layer norm at every site (biased variance, eps 1e-6).
inline std::vector<double> layer_norm(const std::vector<double>& x, std::size_t c, std::size_t plane,
                                      const std::vector<double>& gamma, const std::vector<double>& beta) {
    std::vector<double> out(x.size());
    for (std::size_t s = 0; s < plane; ++s) {
        double mu = 0.0, var = 0.0;
        for (std::size_t ch = 0; ch < c; ++ch) mu += x[ch * plane + s];
        mu /= static_cast<double>(c);
        for (std::size_t ch = 0; ch < c; ++ch) var += (x[ch * plane + s] - mu) * (x[ch * plane + s] - mu);
        var /= static_cast<double>(c);
        for (std::size_t ch = 0; ch < c; ++ch) {
            out[ch * plane + s] = gamma[ch] * (x[ch * plane + s] - mu) / std::sqrt(var + 1e-6) + beta[ch];
        }
    }
    return out;
}

// x + Proj(LN(A) * V) with A the per-patch spatial circular
// cross-correlation of Q and K, Q/K/V from a 1x1 conv and a 3x3 depthwise
// conv (reflect padding) of LN(x). h and w must be multiples of p.
inline std::vector<double> fsas(const std::vector<double>& x, std::size_t h, std::size_t w, const FsasParams& f) {
    const std::size_t c = f.c, plane = h * w, p = f.p;
    std::size_t oh = 0, ow = 0;
    const auto n = layer_norm(x, c, plane, f.norm_gamma, f.norm_beta);
    const auto qkv0 = conv2d(n, c, h, w, f.qkv_w, f.qkv_b, 3 * c, 1, 1, 0, true, oh, ow);
    auto qkv = depthwise(qkv0, 3 * c, h, w, f.dw_w, 1, 3, 1, true);
    for (std::size_t ch = 0; ch < 3 * c; ++ch)
        for (std::size_t i = 0; i < plane; ++i) qkv[ch * plane + i] += f.dw_b[ch];

    std::vector<double> a(c * plane, 0.0), qp(p * p), kp(p * p);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t py = 0; py < h; py += p)
            for (std::size_t px = 0; px < w; px += p) {
                for (std::size_t y = 0; y < p; ++y)
                    for (std::size_t z = 0; z < p; ++z) {
                        qp[y * p + z] = qkv[(ch * h + py + y) * w + px + z];
                        kp[y * p + z] = qkv[((c + ch) * h + py + y) * w + px + z];
                    }
                const auto corr = circular_xcorr(qp.data(), kp.data(), p, p);
                for (std::size_t y = 0; y < p; ++y)
                    for (std::size_t z = 0; z < p; ++z) a[(ch * h + py + y) * w + px + z] = corr[y * p + z];
            }
    auto att = layer_norm(a, c, plane, f.attn_gamma, f.attn_beta);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < plane; ++i) att[ch * plane + i] *= qkv[(2 * c + ch) * plane + i];
    auto out = conv2d(att, c, h, w, f.proj_w, f.proj_b, c, 1, 1, 0, true, oh, ow);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += x[i];
    return out;
}

} // namespace sfim::oracle
