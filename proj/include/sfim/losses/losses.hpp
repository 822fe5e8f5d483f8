#pragma once

#include <string>
#include <vector>

#include "sfim/core/tensor.hpp"

namespace sfim::losses {

inline constexpr double kCharbonnierEps = 1e-3;

// sqrt(||R - G||_F^2 + eps^2) over the whole image. With per_pixel set:
// mean over pixels of sqrt((R - G)^2 + eps^2).
Tensor charbonnier(const Tensor& r, const Tensor& g, bool per_pixel = false, double eps = kCharbonnierEps);

// Mean SSIM over valid 11x11 Gaussian windows (sigma 1.5, K1 0.01, K2 0.03,
// range 1), per channel then averaged. Images smaller than the window in
// either axis use one global window per channel. Differentiable in both.
Tensor ssim(const Tensor& r, const Tensor& g);
Tensor ssim_loss(const Tensor& r, const Tensor& g);  // 1 - ssim

// Per-channel full-image 2-D FFT terms (unnormalized sums over bins):
//   amplitude: sum | |F_R| - |F_G| |
//   phase:     sum | wrap(arg F_R - arg F_G) |, wrap to (-pi, pi]
//   complex:   sum |Re F_R - Re F_G| + |Im F_R - Im F_G|
Tensor fft_amplitude_loss(const Tensor& r, const Tensor& g);
Tensor fft_phase_loss(const Tensor& r, const Tensor& g);
Tensor ecfnet_fft_loss(const Tensor& r, const Tensor& g);

struct FftLoss {
    Tensor amplitude;
    Tensor phase;
};
FftLoss fft_loss(const Tensor& r, const Tensor& g);

double wrap_phase(double d);

enum class FftVariant { AmpPhase, ComplexL1, None };
std::string to_string(FftVariant v);
FftVariant parse_fft_variant(const std::string& s);

struct LossWeights {
    double lambda1 = 1.0;  // SSIM
    double lambda2 = 1.0;  // amplitude, or the complex term
    double lambda3 = 1.0;  // phase
    FftVariant variant = FftVariant::AmpPhase;
    bool per_pixel_charbonnier = false;

    void validate() const;
};

struct LevelLoss {
    double charbonnier = 0.0;
    double ssim = 0.0;  // the SSIM loss term, 1 - SSIM
    double amplitude = 0.0;
    double phase = 0.0;
    double complex_l1 = 0.0;
    double total = 0.0;
};

struct LossReport {
    std::vector<LevelLoss> levels;
    double total = 0.0;
    Tensor total_tensor;  // differentiable grand total

    // "level=1 char=... ssim=... amp=... phase=... cplx=... total=..." joined by " | "
    std::string to_line() const;
};

// L = sum_l [Char + l1 SSIM + l2 Amp + l3 Phase] (AmpPhase), with the complex
// term in place of Amp + Phase for ComplexL1 (weighted by l2), neither for None.
LossReport total_loss(const std::vector<Tensor>& restored, const std::vector<Tensor>& targets,
                      const LossWeights& weights);

} // namespace sfim::losses
