#include "sfim/core/fft.hpp"

#include <cmath>
#include <numbers>
#include <unordered_map>

namespace sfim {

namespace {

constexpr std::size_t kMaxDirectRadix = 31;

std::vector<std::size_t> factorize(std::size_t n) {
    std::vector<std::size_t> f;
    while (n % 4 == 0) {
        f.push_back(4);
        n /= 4;
    }
    while (n % 2 == 0) {
        f.push_back(2);
        n /= 2;
    }
    for (std::size_t p = 3; p * p <= n; p += 2) {
        while (n % p == 0) {
            f.push_back(p);
            n /= p;
        }
    }
    if (n > 1) f.push_back(n);
    return f;
}

std::size_t next_pow2(std::size_t n) {
    std::size_t m = 1;
    while (m < n) m <<= 1;
    return m;
}

} // namespace

struct FftPlan::Bluestein {
    std::size_t m = 0;
    std::vector<cplx> chirp;         // exp(-i pi k^2 / n), k < n
    std::vector<cplx> kernel_freq;   // FFT_m of the conjugate chirp, wrapped
    std::unique_ptr<FftPlan> inner;  // power-of-two plan of length m
    std::vector<cplx> work;
};

FftPlan::FftPlan(std::size_t n) : n_(n) {
    if (n == 0) throw ShapeError("fft: length must be >= 1");
    factors_ = factorize(n);
    twiddles_.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double phase = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
        twiddles_[k] = {std::cos(phase), std::sin(phase)};
    }

    const bool large_prime = !factors_.empty() && factors_.back() > kMaxDirectRadix;
    if (large_prime) {
        bluestein_ = std::make_unique<Bluestein>();
        auto& b = *bluestein_;
        b.m = next_pow2(2 * n - 1);
        b.inner = std::make_unique<FftPlan>(b.m);
        b.chirp.resize(n);
        const std::size_t two_n = 2 * n;
        for (std::size_t k = 0; k < n; ++k) {
            // k^2 mod 2n keeps the argument small and exact.
            const std::size_t k2 = static_cast<std::size_t>((static_cast<unsigned __int128>(k) * k) % two_n);
            const double phase = -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n);
            b.chirp[k] = {std::cos(phase), std::sin(phase)};
        }
        b.kernel_freq.assign(b.m, cplx{});
        b.kernel_freq[0] = std::conj(b.chirp[0]);
        for (std::size_t k = 1; k < n; ++k) {
            b.kernel_freq[k] = std::conj(b.chirp[k]);
            b.kernel_freq[b.m - k] = std::conj(b.chirp[k]);
        }
        b.inner->forward(b.kernel_freq);
        b.work.resize(b.m);
    } else {
        scratch_.resize(n + kMaxDirectRadix);
    }
}

FftPlan::~FftPlan() = default;

void FftPlan::forward(std::span<cplx> data) const {
    if (data.size() != n_) throw ShapeError("fft: buffer length does not match plan");
    if (n_ == 1) return;
    if (bluestein_) {
        auto& b = *bluestein_;
        std::fill(b.work.begin(), b.work.end(), cplx{});
        for (std::size_t k = 0; k < n_; ++k) b.work[k] = data[k] * b.chirp[k];
        b.inner->forward(b.work);
        for (std::size_t k = 0; k < b.m; ++k) b.work[k] *= b.kernel_freq[k];
        b.inner->inverse(b.work);
        const double scale = 1.0 / static_cast<double>(b.m);
        for (std::size_t k = 0; k < n_; ++k) data[k] = b.work[k] * b.chirp[k] * scale;
        return;
    }
    // out-of-place recursion: copy the input aside, write into data
    std::copy(data.begin(), data.end(), scratch_.begin());
    recurse(data.data(), scratch_.data(), 1, 0, n_);
}

void FftPlan::inverse(std::span<cplx> data) const {
    for (auto& v : data) v = std::conj(v);
    forward(data);
    for (auto& v : data) v = std::conj(v);
}

void FftPlan::recurse(cplx* out, const cplx* in, std::size_t stride, std::size_t factor_index,
                      std::size_t n) const {
    const std::size_t p = factors_[factor_index];
    const std::size_t m = n / p;
    cplx* const begin = out;
    if (m == 1) {
        for (std::size_t q = 0; q < p; ++q) out[q] = in[q * stride];
    } else {
        for (std::size_t q = 0; q < p; ++q) {
            recurse(out, in, stride * p, factor_index + 1, m);
            in += stride;
            out += m;
        }
    }
    butterfly(begin, stride, m, p);
}

void FftPlan::butterfly(cplx* out, std::size_t stride, std::size_t m, std::size_t p) const {
    const cplx* tw = twiddles_.data();
    if (p == 2) {
        for (std::size_t k = 0; k < m; ++k) {
            const cplx t = out[k + m] * tw[k * stride];
            out[k + m] = out[k] - t;
            out[k] += t;
        }
        return;
    }
    if (p == 4) {
        for (std::size_t k = 0; k < m; ++k) {
            const cplx s0 = out[k + m] * tw[k * stride];
            const cplx s1 = out[k + 2 * m] * tw[2 * k * stride];
            const cplx s2 = out[k + 3 * m] * tw[3 * k * stride];
            const cplx s5 = out[k] - s1;
            const cplx a = out[k] + s1;
            const cplx s3 = s0 + s2;
            const cplx s4 = s0 - s2;
            out[k + 2 * m] = a - s3;
            out[k] = a + s3;
            out[k + m] = {s5.real() + s4.imag(), s5.imag() - s4.real()};
            out[k + 3 * m] = {s5.real() - s4.imag(), s5.imag() + s4.real()};
        }
        return;
    }
    // generic odd radix: direct p-point DFT on twiddled inputs
    cplx* scratch = scratch_.data() + n_;
    for (std::size_t u = 0; u < m; ++u) {
        std::size_t k = u;
        for (std::size_t q = 0; q < p; ++q, k += m) scratch[q] = out[k];
        k = u;
        for (std::size_t q1 = 0; q1 < p; ++q1, k += m) {
            std::size_t tw_index = 0;
            cplx acc = scratch[0];
            for (std::size_t q = 1; q < p; ++q) {
                tw_index += stride * k;
                tw_index %= n_;
                acc += scratch[q] * tw[tw_index];
            }
            out[k] = acc;
        }
    }
}

const FftPlan& fft_plan(std::size_t n) {
    thread_local std::unordered_map<std::size_t, std::unique_ptr<FftPlan>> cache;
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, std::make_unique<FftPlan>(n)).first;
    return *it->second;
}

void fft2_inplace(std::span<cplx> data, std::size_t h, std::size_t w, bool inverse) {
    if (data.size() != h * w) throw ShapeError("fft2: buffer does not match extents");
    const FftPlan& row_plan = fft_plan(w);
    const FftPlan& col_plan = fft_plan(h);
    for (std::size_t y = 0; y < h; ++y) {
        auto row = data.subspan(y * w, w);
        inverse ? row_plan.inverse(row) : row_plan.forward(row);
    }
    if (h > 1) {
        thread_local std::vector<cplx> column;
        column.resize(h);
        for (std::size_t x = 0; x < w; ++x) {
            for (std::size_t y = 0; y < h; ++y) column[y] = data[y * w + x];
            inverse ? col_plan.inverse(column) : col_plan.forward(column);
            for (std::size_t y = 0; y < h; ++y) data[y * w + x] = column[y];
        }
    }
    if (inverse) {
        const double scale = 1.0 / static_cast<double>(h * w);
        for (auto& v : data) v *= scale;
    }
}

namespace {

void plane_extents(const Shape& shape, std::size_t& planes, std::size_t& h, std::size_t& w) {
    if (shape.size() < 2) throw ShapeError("fft2: need rank >= 2, got " + shape_string(shape));
    h = shape[shape.size() - 2];
    w = shape[shape.size() - 1];
    planes = shape_numel(shape) / (h * w);
}

} // namespace

ComplexTensor fft2(const Tensor& x) {
    std::size_t planes, h, w;
    plane_extents(x.shape(), planes, h, w);
    ComplexTensor out;
    out.shape = x.shape();
    out.real.resize(x.numel());
    out.imag.resize(x.numel());
    std::vector<cplx> buf(h * w);
    auto xv = x.values();
    for (std::size_t p = 0; p < planes; ++p) {
        const std::size_t off = p * h * w;
        for (std::size_t i = 0; i < h * w; ++i) buf[i] = {xv[off + i], 0.0};
        fft2_inplace(buf, h, w, false);
        for (std::size_t i = 0; i < h * w; ++i) {
            out.real[off + i] = buf[i].real();
            out.imag[off + i] = buf[i].imag();
        }
    }
    return out;
}

Tensor ifft2(const ComplexTensor& x) {
    std::size_t planes, h, w;
    plane_extents(x.shape, planes, h, w);
    Tensor out(x.shape);
    auto ov = out.mutable_values();
    std::vector<cplx> buf(h * w);
    for (std::size_t p = 0; p < planes; ++p) {
        const std::size_t off = p * h * w;
        for (std::size_t i = 0; i < h * w; ++i) buf[i] = {x.real[off + i], x.imag[off + i]};
        fft2_inplace(buf, h, w, true);
        for (std::size_t i = 0; i < h * w; ++i) ov[off + i] = buf[i].real();
    }
    return out;
}

std::vector<double> fftshift(std::span<const double> plane, std::size_t h, std::size_t w) {
    std::vector<double> out(h * w);
    for (std::size_t y = 0; y < h; ++y) {
        const std::size_t ty = (y + h / 2) % h;
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t tx = (x + w / 2) % w;
            out[ty * w + tx] = plane[y * w + x];
        }
    }
    return out;
}

} // namespace sfim
