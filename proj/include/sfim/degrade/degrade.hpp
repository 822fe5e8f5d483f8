#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sfim/core/ini.hpp"
#include "sfim/core/rng.hpp"
#include "sfim/core/tensor.hpp"

namespace sfim::degrade {

// Transmission of the display layer in front of the lens, h x w in [0, 1].
struct ApertureMask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> transmission;

    double at(std::size_t y, std::size_t x) const { return transmission[y * width + x]; }
    void validate() const;  // ConfigError when empty, out of range or all zero
};

ApertureMask open_aperture(std::size_t n);
// One centered slit of the given width spanning the whole mask; vertical
// slits run along y.
ApertureMask slit_aperture(std::size_t n, std::size_t slit_width, bool vertical = true);
// Square openings of side `opening`, repeated every `period` pixels.
ApertureMask grid_aperture(std::size_t n, std::size_t period, std::size_t opening);
// Display-pixel layout: rectangular openings open_w x open_h per period x
// period cell. Tall narrow openings diffract into horizontal streaks.
ApertureMask display_aperture(std::size_t n, std::size_t period, std::size_t open_w, std::size_t open_h);

// Parses "open", "slit:W[:h]", "grid:P:O", "display:P:W:H" at mask size n.
ApertureMask parse_aperture(const std::string& descriptor, std::size_t n);

// Fraunhofer PSF: |FFT2(mask)|^2, DC moved to the center, center-cropped to
// k x k (k odd, k <= mask extents), normalized to unit sum.
Tensor aperture_to_psf(const ApertureMask& mask, std::size_t k);

struct DegradationSpec {
    Tensor psf = Tensor(Shape{1, 1}, 1.0);  // k x k, k odd, unit sum
    double noise_sigma = 0.0;               // intensity units, [0, 0.5]
    double blur_sigma = 0.0;                // pixels, [0, 10]
    double transmittance = 1.0;             // (0, 1]
    double highlight_threshold = 0.9;       // pixels above it are boosted
    double highlight_gain = 1.0;            // >= 1; 1 disables the boost
    std::string aperture = "delta";         // provenance of the PSF
    std::size_t aperture_size = 0;          // mask extent the PSF came from

    void validate() const;
    static DegradationSpec identity();
    // Display-pixel flare, mild blur and noise, 0.75 transmittance.
    static DegradationSpec default_flare();
};

// boost highlights -> convolve with psf -> * transmittance -> Gaussian blur
// -> + N(0, noise_sigma) -> clip to [0, 1]. Deterministic per seed.
Tensor degrade_image(const Tensor& clean, const DegradationSpec& spec, std::uint64_t seed);

// Ranges that per-pair specs are drawn from.
struct SpecDistribution {
    std::size_t aperture_size = 64;
    std::size_t psf_size = 31;
    std::vector<std::string> apertures{"display:8:4:7", "display:8:3:6", "display:16:6:13", "slit:10"};
    double noise_min = 0.005, noise_max = 0.02;
    double blur_min = 0.4, blur_max = 1.2;
    double transmittance_min = 0.6, transmittance_max = 0.85;
    double highlight_threshold = 0.9;
    double highlight_gain = 8.0;

    void validate() const;
    DegradationSpec sample(Rng& rng) const;
    void write(Ini& ini, const std::string& section) const;
    static SpecDistribution read(const Ini& ini, const std::string& section);
};

enum class SceneKind { Lights, Texture, Panels };

// Procedural clean images in [0, 1]. Lights: dark backgrounds with a few
// saturated sources (flare-dominant). Texture: shapes, gratings and ramps
// (blur/noise-dominant). Panels: axis-aligned rectangles and small lights on
// a flat dark field, whose spectrum sits on the axes; used to probe the
// direction of diffraction streaks.
Tensor procedural_scene(SceneKind kind, std::size_t channels, std::size_t h, std::size_t w, std::uint64_t seed);

// Mid-gray checkerboard with a regular grid of saturated light spots.
Tensor test_card(std::size_t channels, std::size_t h, std::size_t w);

struct Pair {
    std::string id;
    Tensor degraded;
    Tensor clean;
    DegradationSpec spec;
    std::uint64_t seed = 0;
};

struct DatasetOptions {
    std::size_t count = 0;
    std::size_t channels = 3;
    std::size_t height = 64;
    std::size_t width = 64;
    double lights_fraction = 0.5;  // share of Lights scenes when procedural
    SpecDistribution distribution;
    std::uint64_t seed = 0;
};

// Item i uses seeds derived from (seed, i), so pairs are independent of the
// thread count and of how many pairs are requested after it.
std::vector<Pair> make_dataset(const DatasetOptions& opt);
// Random crops (with flips) of the given clean sources, cycled in order.
std::vector<Pair> make_dataset(const DatasetOptions& opt, const std::vector<Tensor>& sources);

// <dir>/manifest.ini plus <dir>/<id>_clean.sftn and <id>_degraded.sftn.
void write_dataset(const std::filesystem::path& dir, const std::vector<Pair>& pairs);
std::vector<Pair> read_dataset(const std::filesystem::path& dir);
std::string manifest_text(const std::vector<Pair>& pairs);

} // namespace sfim::degrade
