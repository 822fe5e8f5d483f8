#include "sfim/analyze/analyze.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <iomanip>
#include <sstream>

#include "sfim/core/fft.hpp"
#include "sfim/core/rng.hpp"
#include "sfim/degrade/degrade.hpp"
#include "sfim/io/image_io.hpp"
#include "sfim/losses/losses.hpp"

namespace sfim::analyze {

namespace {

void require_pair(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    }
    if (a.rank() != 3) throw ShapeError(std::string(op) + ": expected C x H x W, got " + shape_string(a.shape()));
}

} // namespace

SpectralDiffMap spectral_diff(const Tensor& degraded, const Tensor& clean) {
    require_pair("spectral_diff", degraded, clean);
    SpectralDiffMap m;
    m.channels = clean.channels();
    m.height = clean.height();
    m.width = clean.width();
    const std::size_t plane = m.height * m.width;
    const ComplexTensor fd = fft2(degraded), fc = fft2(clean);
    std::vector<double> diff(plane);
    m.per_channel.resize(m.channels * plane);
    m.summary.assign(plane, 0.0);
    for (std::size_t ch = 0; ch < m.channels; ++ch) {
        for (std::size_t i = 0; i < plane; ++i) {
            const std::size_t at = ch * plane + i;
            diff[i] = std::abs(std::abs(fd.at(at)) - std::abs(fc.at(at)));
        }
        const std::vector<double> shifted = fftshift(diff, m.height, m.width);
        std::copy(shifted.begin(), shifted.end(), m.per_channel.begin() + static_cast<std::ptrdiff_t>(ch * plane));
        for (std::size_t i = 0; i < plane; ++i) m.summary[i] += shifted[i] / static_cast<double>(m.channels);
    }
    return m;
}

std::vector<double> log_compress(const std::vector<double>& map, double c) {
    if (!(c > 0.0)) throw ConfigError("log compression constant must be > 0");
    const double peak = map.empty() ? 0.0 : *std::max_element(map.begin(), map.end());
    std::vector<double> out(map.size(), 0.0);
    if (peak <= 0.0) return out;
    const double norm = std::log1p(peak / c);
    for (std::size_t i = 0; i < map.size(); ++i) out[i] = std::log1p(std::max(0.0, map[i]) / c) / norm;
    return out;
}

double flare_prior_score(const std::vector<double>& map, std::size_t h, std::size_t w) {
    if (map.size() != h * w || map.empty()) throw ShapeError("flare_prior_score: map does not match extents");
    const std::size_t dc = (h / 2) * w + w / 2;
    std::vector<double> energy;
    energy.reserve(map.size());
    double total = 0.0;
    for (std::size_t i = 0; i < map.size(); ++i) {
        if (i == dc) continue;
        energy.push_back(map[i] * map[i]);
        total += energy.back();
    }
    if (energy.empty() || total <= 0.0) return 0.0;
    const std::size_t top = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(kTopBinFraction * static_cast<double>(energy.size()))));
    std::nth_element(energy.begin(), energy.begin() + static_cast<std::ptrdiff_t>(top - 1), energy.end(),
                     std::greater<>());
    double head = 0.0;
    for (std::size_t i = 0; i < top; ++i) head += energy[i];
    return head / total;
}

double flare_prior_score(const SpectralDiffMap& map) { return flare_prior_score(map.summary, map.height, map.width); }

std::pair<std::size_t, std::size_t> peak_off_dc(const SpectralDiffMap& map) {
    const std::size_t dc = map.dc_index();
    std::size_t best = dc == 0 ? 1 : 0;
    for (std::size_t i = 0; i < map.summary.size(); ++i) {
        if (i != dc && map.summary[i] > map.summary[best]) best = i;
    }
    return {best / map.width, best % map.width};
}

double psnr(const Tensor& r, const Tensor& g) {
    require_pair("psnr", r, g);
    double se = 0.0;
    const auto rv = r.values(), gv = g.values();
    for (std::size_t i = 0; i < rv.size(); ++i) se += (rv[i] - gv[i]) * (rv[i] - gv[i]);
    if (se == 0.0) return kPsnrCap;
    const double mse = se / static_cast<double>(rv.size());
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Tensor& r, const Tensor& g) { return losses::ssim(r, g).item(); }

std::string QualityReport::to_line() const {
    std::ostringstream out;
    out << std::fixed << std::setprecision(4) << "psnr=" << psnr << " ssim=" << std::setprecision(6) << ssim;
    return out.str();
}

QualityReport quality(const Tensor& r, const Tensor& g) { return {psnr(r, g), ssim(r, g)}; }

namespace {

// Viridis sampled at nine evenly spaced stops.
constexpr std::array<std::array<double, 3>, 9> kViridis{{
    {0.267004, 0.004874, 0.329415},
    {0.282623, 0.140926, 0.457517},
    {0.253935, 0.265254, 0.529983},
    {0.206756, 0.371758, 0.553117},
    {0.163625, 0.471133, 0.558148},
    {0.127568, 0.566949, 0.550556},
    {0.134692, 0.658636, 0.517649},
    {0.266941, 0.748751, 0.440573},
    {0.993248, 0.906157, 0.143936},
}};

std::array<double, 3> viridis(double t) {
    t = std::clamp(t, 0.0, 1.0) * static_cast<double>(kViridis.size() - 1);
    const std::size_t i = std::min(static_cast<std::size_t>(t), kViridis.size() - 2);
    const double f = t - static_cast<double>(i);
    std::array<double, 3> out{};
    for (int c = 0; c < 3; ++c) out[c] = kViridis[i][c] * (1 - f) + kViridis[i + 1][c] * f;
    return out;
}

} // namespace

Tensor heatmap_image(const std::vector<double>& map, std::size_t h, std::size_t w, bool log_scale, Colormap cmap,
                     double log_constant) {
    if (map.size() != h * w) throw ShapeError("heatmap: map does not match extents");
    std::vector<double> norm;
    if (log_scale) {
        norm = log_compress(map, log_constant);
    } else {
        const double peak = map.empty() ? 0.0 : *std::max_element(map.begin(), map.end());
        norm.assign(map.size(), 0.0);
        if (peak > 0.0)
            for (std::size_t i = 0; i < map.size(); ++i) norm[i] = std::max(0.0, map[i]) / peak;
    }
    if (cmap == Colormap::Gray) return Tensor(Shape{1, h, w}, std::move(norm));
    // a zero map stays black rather than taking the colormap's dark purple
    const bool all_zero = std::all_of(norm.begin(), norm.end(), [](double v) { return v == 0.0; });
    Tensor out(Shape{3, h, w});
    auto ov = out.mutable_values();
    if (all_zero) return out;
    for (std::size_t i = 0; i < h * w; ++i) {
        const auto rgb = viridis(norm[i]);
        for (std::size_t c = 0; c < 3; ++c) ov[c * h * w + i] = rgb[c];
    }
    return out;
}

void export_heatmap(const std::vector<double>& map, std::size_t h, std::size_t w, const std::filesystem::path& path,
                    bool log_scale, Colormap cmap, double log_constant) {
    io::write_png(path, heatmap_image(map, h, w, log_scale, cmap, log_constant));
}

Tensor spatial_diff_image(const Tensor& degraded, const Tensor& clean) {
    require_pair("spatial_diff", degraded, clean);
    Tensor out(clean.shape());
    auto ov = out.mutable_values();
    double peak = 0.0;
    for (std::size_t i = 0; i < ov.size(); ++i) {
        ov[i] = std::abs(degraded.at(i) - clean.at(i));
        peak = std::max(peak, ov[i]);
    }
    if (peak > 0.0)
        for (double& v : ov) v /= peak;
    return out;
}

bool FlareProbe::peak_on_orthogonal_axis() const {
    const auto dist = [](std::size_t a, std::size_t b) { return a > b ? a - b : b - a; };
    return vertical_slit ? dist(flare_peak.first, flare_map.height / 2) <= 1
                         : dist(flare_peak.second, flare_map.width / 2) <= 1;
}

FlareProbe flare_probe(std::size_t size, std::uint64_t seed, bool vertical_slit) {
    FlareProbe p;
    p.vertical_slit = vertical_slit;
    p.clean = degrade::procedural_scene(degrade::SceneKind::Panels, 3, size, size, seed);

    degrade::DegradationSpec flare;
    flare.aperture = vertical_slit ? "slit:4" : "slit:4:h";
    flare.aperture_size = 128;
    flare.psf = degrade::aperture_to_psf(degrade::parse_aperture(flare.aperture, flare.aperture_size), 63);
    flare.highlight_gain = 8.0;
    p.flared = degrade::degrade_image(p.clean, flare, derive_seed(seed, 1));
    p.flare_psnr = psnr(p.flared, p.clean);

    // PSNR falls monotonically with sigma (up to clipping), so bisect in log sigma
    const std::uint64_t noise_seed = derive_seed(seed, 2);
    double lo = std::log(1e-5), hi = std::log(0.5);
    for (int it = 0; it < 48; ++it) {
        const double mid = 0.5 * (lo + hi);
        degrade::DegradationSpec noise;
        noise.noise_sigma = std::exp(mid);
        const double q = psnr(degrade::degrade_image(p.clean, noise, noise_seed), p.clean);
        (q > p.flare_psnr ? lo : hi) = mid;
    }
    degrade::DegradationSpec noise;
    noise.noise_sigma = p.noise_sigma = std::exp(0.5 * (lo + hi));
    p.noisy = degrade::degrade_image(p.clean, noise, noise_seed);
    p.noise_psnr = psnr(p.noisy, p.clean);

    p.flare_map = spectral_diff(p.flared, p.clean);
    p.noise_map = spectral_diff(p.noisy, p.clean);
    p.flare_score = flare_prior_score(p.flare_map);
    p.noise_score = flare_prior_score(p.noise_map);
    p.flare_peak = peak_off_dc(p.flare_map);
    return p;
}

} // namespace sfim::analyze
