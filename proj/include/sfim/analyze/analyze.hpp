#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sfim/core/tensor.hpp"

namespace sfim::analyze {

inline constexpr double kPsnrCap = 100.0;
inline constexpr double kTopBinFraction = 0.001;

// |amplitude(degraded) - amplitude(clean)| per channel with DC moved to
// (H/2, W/2); `summary` is the channel average.
struct SpectralDiffMap {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> per_channel;  // C x H x W
    std::vector<double> summary;      // H x W

    std::size_t dc_index() const { return (height / 2) * width + width / 2; }
};

SpectralDiffMap spectral_diff(const Tensor& degraded, const Tensor& clean);

// Display copy: log(1 + v / c) / log(1 + max / c), all zero when max = 0.
std::vector<double> log_compress(const std::vector<double>& map, double c);

// Energy (squared amplitude) share of the top 0.1% of bins, DC excluded.
// Zero for an all-zero map; invariant to positive scaling of the map.
double flare_prior_score(const std::vector<double>& map, std::size_t h, std::size_t w);
double flare_prior_score(const SpectralDiffMap& map);

// Largest off-DC bin of the summary map as (row, col).
std::pair<std::size_t, std::size_t> peak_off_dc(const SpectralDiffMap& map);

// 10 log10(1 / mse) with peak 1 and the mse pooled over all channels;
// identical inputs report kPsnrCap.
double psnr(const Tensor& r, const Tensor& g);
// Windowed SSIM shared with the training loss (equals 1 - ssim_loss).
double ssim(const Tensor& r, const Tensor& g);

struct QualityReport {
    double psnr = 0.0;
    double ssim = 0.0;
    std::string to_line() const;  // "psnr=... ssim=..."
};
QualityReport quality(const Tensor& r, const Tensor& g);

enum class Colormap { Gray, Viridis };

// Normalizes by the map maximum (optionally after log compression) and maps
// to an 8-bit-ready image: 1 x H x W for Gray, 3 x H x W for Viridis.
Tensor heatmap_image(const std::vector<double>& map, std::size_t h, std::size_t w, bool log_scale,
                     Colormap cmap = Colormap::Viridis, double log_constant = 1.0);
void export_heatmap(const std::vector<double>& map, std::size_t h, std::size_t w, const std::filesystem::path& path,
                    bool log_scale, Colormap cmap = Colormap::Viridis, double log_constant = 1.0);

// |degraded - clean| scaled so the largest difference is white.
Tensor spatial_diff_image(const Tensor& degraded, const Tensor& clean);

// Flare-versus-noise comparison on a Panels scene: a slit-aperture flare pair
// and a Gaussian-noise pair whose sigma is bisected to the same PSNR.
struct FlareProbe {
    bool vertical_slit = true;
    Tensor clean, flared, noisy;
    SpectralDiffMap flare_map, noise_map;
    double flare_psnr = 0.0, noise_psnr = 0.0, noise_sigma = 0.0;
    double flare_score = 0.0, noise_score = 0.0;
    std::pair<std::size_t, std::size_t> flare_peak;

    // Peak within one bin of the frequency axis orthogonal to the slit
    // (the horizontal axis for a vertical slit).
    bool peak_on_orthogonal_axis() const;
};

FlareProbe flare_probe(std::size_t size, std::uint64_t seed, bool vertical_slit = true);

} // namespace sfim::analyze
