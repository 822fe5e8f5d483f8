#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "sfim/core/tensor.hpp"

namespace sfim {

using cplx = std::complex<double>;

// One-dimensional complex DFT of a fixed length. Lengths whose prime factors
// are all small run a recursive mixed-radix decimation in time (radix 4 and 2
// butterflies plus a generic odd-radix butterfly); lengths with a large
// prime factor go through Bluestein's chirp-z on a power-of-two grid.
//
// forward: X[k] = sum_n x[n] exp(-2 pi i k n / N)   (unnormalized)
// inverse: x[n] = sum_k X[k] exp(+2 pi i k n / N)   (unnormalized; callers scale)
class FftPlan {
public:
    explicit FftPlan(std::size_t n);
    ~FftPlan();
    FftPlan(const FftPlan&) = delete;
    FftPlan& operator=(const FftPlan&) = delete;

    std::size_t size() const noexcept { return n_; }
    bool uses_bluestein() const noexcept { return bluestein_ != nullptr; }

    void forward(std::span<cplx> data) const;
    void inverse(std::span<cplx> data) const;

private:
    struct Bluestein;

    void recurse(cplx* out, const cplx* in, std::size_t stride, std::size_t factor_index, std::size_t n) const;
    void butterfly(cplx* out, std::size_t stride, std::size_t m, std::size_t p) const;

    std::size_t n_;
    std::vector<std::size_t> factors_;
    std::vector<cplx> twiddles_;
    std::unique_ptr<Bluestein> bluestein_;
    mutable std::vector<cplx> scratch_;
};

// Thread-local plan cache.
const FftPlan& fft_plan(std::size_t n);

// Row-column 2-D transform of an h x w row-major block, in place.
// The inverse applies the 1/(h w) factor.
void fft2_inplace(std::span<cplx> data, std::size_t h, std::size_t w, bool inverse);

struct ComplexTensor {
    Shape shape;
    std::vector<double> real;
    std::vector<double> imag;

    std::size_t numel() const noexcept { return real.size(); }
    cplx at(std::size_t i) const { return {real[i], imag[i]}; }
};

// Per-channel transform of a C x H x W (or H x W) tensor.
ComplexTensor fft2(const Tensor& x);
// Real part of the per-channel inverse transform.
Tensor ifft2(const ComplexTensor& x);

// Quadrant swap moving the DC bin to (H/2, W/2), per channel.
std::vector<double> fftshift(std::span<const double> plane, std::size_t h, std::size_t w);

} // namespace sfim
