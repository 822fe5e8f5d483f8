#include "sfim/degrade/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <sstream>

#include "sfim/core/fft.hpp"
#include "sfim/core/ops.hpp"
#include "sfim/core/parallel.hpp"
#include "sfim/core/tensor_io.hpp"

namespace sfim::degrade {

namespace {

std::string fmt(double v) {
    std::ostringstream out;
    out << std::setprecision(17) << v;
    return out.str();
}

void require_range(const char* what, double v, double lo, double hi) {
    if (!(v >= lo && v <= hi)) {
        throw ConfigError(std::string(what) + " = " + fmt(v) + " outside [" + fmt(lo) + ", " + fmt(hi) + "]");
    }
}

ApertureMask blank(std::size_t n) {
    if (n == 0) throw ConfigError("aperture size must be >= 1");
    return {n, n, std::vector<double>(n * n, 0.0)};
}

// Centered 1-D kernel with radius ceil(3 sigma), unit sum.
std::vector<double> gaussian_kernel(double sigma) {
    const long radius = std::max<long>(1, static_cast<long>(std::ceil(3.0 * sigma)));
    std::vector<double> k(2 * radius + 1);
    double s = 0.0;
    for (long i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
        s += k[i + radius];
    }
    for (double& v : k) v /= s;
    return k;
}

// True 2-D convolution with a centered k x k kernel, reflected borders.
std::vector<double> convolve_plane(const double* x, std::size_t h, std::size_t w, const Tensor& kernel) {
    const std::size_t kh = kernel.dim(0), kw = kernel.dim(1);
    const long cy = static_cast<long>(kh / 2), cx = static_cast<long>(kw / 2);
    const auto kv = kernel.values();
    std::vector<double> out(h * w, 0.0);
    std::vector<std::size_t> xs(w + kw);
    for (std::size_t y = 0; y < h; ++y) {
        double* dst = out.data() + y * w;
        for (std::size_t u = 0; u < kh; ++u) {
            // out[y][x] += k[u][v] * in[y - (u - cy)][x - (v - cx)]
            const std::size_t sy = ops::reflect_index(static_cast<long>(y) - (static_cast<long>(u) - cy), h);
            const double* row = x + sy * w;
            for (std::size_t v = 0; v < kw; ++v) {
                const double k = kv[u * kw + v];
                if (k == 0.0) continue;
                const long shift = static_cast<long>(v) - cx;
                for (std::size_t c = 0; c < w; ++c) {
                    dst[c] += k * row[ops::reflect_index(static_cast<long>(c) - shift, w)];
                }
            }
        }
    }
    return out;
}

void blur_plane(double* x, std::size_t h, std::size_t w, const std::vector<double>& k) {
    const long r = static_cast<long>(k.size() / 2);
    std::vector<double> tmp(h * w, 0.0);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t c = 0; c < w; ++c) {
            double acc = 0.0;
            for (long i = -r; i <= r; ++i) acc += k[i + r] * x[y * w + ops::reflect_index(static_cast<long>(c) + i, w)];
            tmp[y * w + c] = acc;
        }
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t c = 0; c < w; ++c) {
            double acc = 0.0;
            for (long i = -r; i <= r; ++i) acc += k[i + r] * tmp[ops::reflect_index(static_cast<long>(y) + i, h) * w + c];
            x[y * w + c] = acc;
        }
}

} // namespace

void ApertureMask::validate() const {
    if (height == 0 || width == 0 || transmission.size() != height * width) {
        throw ConfigError("aperture mask: extents do not match its data");
    }
    bool any = false;
    for (double v : transmission) {
        if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("aperture mask: transmission outside [0, 1]");
        any = any || v > 0.0;
    }
    if (!any) throw ConfigError("aperture mask: all entries are zero");
}

ApertureMask open_aperture(std::size_t n) {
    ApertureMask m = blank(n);
    std::fill(m.transmission.begin(), m.transmission.end(), 1.0);
    return m;
}

ApertureMask slit_aperture(std::size_t n, std::size_t slit_width, bool vertical) {
    if (slit_width == 0 || slit_width > n) throw ConfigError("slit width must be in [1, n]");
    ApertureMask m = blank(n);
    const std::size_t begin = (n - slit_width) / 2;
    for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) {
            const std::size_t across = vertical ? x : y;
            if (across >= begin && across < begin + slit_width) m.transmission[y * n + x] = 1.0;
        }
    return m;
}

ApertureMask grid_aperture(std::size_t n, std::size_t period, std::size_t opening) {
    return display_aperture(n, period, opening, opening);
}

ApertureMask display_aperture(std::size_t n, std::size_t period, std::size_t open_w, std::size_t open_h) {
    if (period == 0 || open_w == 0 || open_h == 0 || open_w > period || open_h > period) {
        throw ConfigError("display aperture: openings must fit in the period");
    }
    ApertureMask m = blank(n);
    for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) {
            if (y % period < open_h && x % period < open_w) m.transmission[y * n + x] = 1.0;
        }
    return m;
}

ApertureMask parse_aperture(const std::string& descriptor, std::size_t n) {
    std::vector<std::string> parts;
    std::stringstream ss(descriptor);
    for (std::string item; std::getline(ss, item, ':');) parts.push_back(item);
    auto num = [&](std::size_t i) -> std::size_t {
        try {
            return static_cast<std::size_t>(std::stoul(parts.at(i)));
        } catch (const std::exception&) {
            throw ConfigError("aperture '" + descriptor + "': bad or missing field " + std::to_string(i));
        }
    };
    if (parts.empty()) throw ConfigError("empty aperture descriptor");
    const std::string& kind = parts[0];
    if (kind == "open" && parts.size() == 1) return open_aperture(n);
    if (kind == "slit" && (parts.size() == 2 || parts.size() == 3)) {
        return slit_aperture(n, num(1), parts.size() == 2 || parts[2] != "h");
    }
    if (kind == "grid" && parts.size() == 3) return grid_aperture(n, num(1), num(2));
    if (kind == "display" && parts.size() == 4) return display_aperture(n, num(1), num(2), num(3));
    throw ConfigError("unknown aperture '" + descriptor + "' (open, slit:W[:h], grid:P:O, display:P:W:H)");
}

Tensor aperture_to_psf(const ApertureMask& mask, std::size_t k) {
    mask.validate();
    if (k == 0 || k % 2 == 0 || k > mask.height || k > mask.width) {
        throw ConfigError("psf size must be odd and no larger than the aperture, got " + std::to_string(k));
    }
    const std::size_t h = mask.height, w = mask.width;
    std::vector<cplx> field(h * w);
    for (std::size_t i = 0; i < h * w; ++i) field[i] = {mask.transmission[i], 0.0};
    fft2_inplace(field, h, w, false);
    std::vector<double> power(h * w);
    for (std::size_t i = 0; i < h * w; ++i) power[i] = std::norm(field[i]);
    const std::vector<double> centered = fftshift(power, h, w);

    Tensor psf(Shape{k, k});
    auto pv = psf.mutable_values();
    const std::size_t top = h / 2 - k / 2, left = w / 2 - k / 2;
    double total = 0.0;
    for (std::size_t y = 0; y < k; ++y)
        for (std::size_t x = 0; x < k; ++x) {
            pv[y * k + x] = centered[(top + y) * w + left + x];
            total += pv[y * k + x];
        }
    // the DC bin is (sum of mask)^2 > 0 and always inside the crop
    for (double& v : pv) v /= total;
    // one corrective pass keeps the sum at 1 to within an ulp or two
    double check = 0.0;
    for (double v : pv) check += v;
    pv[(k / 2) * k + k / 2] += 1.0 - check;
    return psf;
}

void DegradationSpec::validate() const {
    if (!psf.defined() || psf.rank() != 2 || psf.dim(0) % 2 == 0 || psf.dim(1) % 2 == 0) {
        throw ConfigError("psf must be a k x k kernel with odd k");
    }
    double sum = 0.0;
    for (double v : psf.values()) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("psf entries must be finite and >= 0");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("psf must sum to 1, sums to " + fmt(sum));
    require_range("noise_sigma", noise_sigma, 0.0, 0.5);
    require_range("blur_sigma", blur_sigma, 0.0, 10.0);
    require_range("transmittance", transmittance, 1e-6, 1.0);
    require_range("highlight_threshold", highlight_threshold, 0.0, 1.0);
    require_range("highlight_gain", highlight_gain, 1.0, 1000.0);
}

DegradationSpec DegradationSpec::identity() { return {}; }

DegradationSpec DegradationSpec::default_flare() {
    DegradationSpec s;
    s.aperture = "display:8:4:7";
    s.aperture_size = 64;
    s.psf = aperture_to_psf(parse_aperture(s.aperture, s.aperture_size), 31);
    s.noise_sigma = 0.01;
    s.blur_sigma = 0.8;
    s.transmittance = 0.75;
    s.highlight_gain = 8.0;
    return s;
}

Tensor degrade_image(const Tensor& clean, const DegradationSpec& spec, std::uint64_t seed) {
    spec.validate();
    if (clean.rank() != 3) throw ShapeError("degrade_image: expected C x H x W, got " + shape_string(clean.shape()));
    const std::size_t c = clean.channels(), h = clean.height(), w = clean.width(), plane = h * w;
    Tensor out(clean.shape());
    auto ov = out.mutable_values();
    const auto cv = clean.values();
    const bool delta = spec.psf.numel() == 1;
    const std::vector<double> blur = spec.blur_sigma > 0.0 ? gaussian_kernel(spec.blur_sigma) : std::vector<double>{};

    parallel_for(c, 1, [&](std::size_t begin, std::size_t end) {
        std::vector<double> boosted(plane);
        for (std::size_t ch = begin; ch < end; ++ch) {
            for (std::size_t i = 0; i < plane; ++i) {
                const double v = cv[ch * plane + i];
                boosted[i] = v > spec.highlight_threshold ? v * spec.highlight_gain : v;
            }
            std::vector<double> y = delta ? boosted : convolve_plane(boosted.data(), h, w, spec.psf);
            for (double& v : y) v *= spec.transmittance;
            if (!blur.empty()) blur_plane(y.data(), h, w, blur);
            std::copy(y.begin(), y.end(), ov.begin() + static_cast<std::ptrdiff_t>(ch * plane));
        }
    });
    // noise drawn serially in index order so the stream is thread-count free
    if (spec.noise_sigma > 0.0) {
        Rng rng(seed);
        for (double& v : ov) v += spec.noise_sigma * rng.normal();
    }
    for (double& v : ov) v = std::clamp(v, 0.0, 1.0);
    return out;
}

void SpecDistribution::validate() const {
    if (apertures.empty()) throw ConfigError("degrade: no apertures listed");
    if (psf_size % 2 == 0 || psf_size > aperture_size) throw ConfigError("degrade: psf_size must be odd and <= aperture_size");
    for (const auto& a : apertures) parse_aperture(a, aperture_size).validate();
    require_range("noise_min", noise_min, 0.0, 0.5);
    require_range("noise_max", noise_max, noise_min, 0.5);
    require_range("blur_min", blur_min, 0.0, 10.0);
    require_range("blur_max", blur_max, blur_min, 10.0);
    require_range("transmittance_min", transmittance_min, 1e-6, 1.0);
    require_range("transmittance_max", transmittance_max, transmittance_min, 1.0);
    require_range("highlight_threshold", highlight_threshold, 0.0, 1.0);
    require_range("highlight_gain", highlight_gain, 1.0, 1000.0);
}

DegradationSpec SpecDistribution::sample(Rng& rng) const {
    DegradationSpec s;
    s.aperture = apertures[rng.below(apertures.size())];
    s.aperture_size = aperture_size;
    s.psf = aperture_to_psf(parse_aperture(s.aperture, aperture_size), psf_size);
    s.noise_sigma = rng.uniform(noise_min, noise_max);
    s.blur_sigma = rng.uniform(blur_min, blur_max);
    s.transmittance = rng.uniform(transmittance_min, transmittance_max);
    s.highlight_threshold = highlight_threshold;
    s.highlight_gain = highlight_gain;
    return s;
}

void SpecDistribution::write(Ini& ini, const std::string& section) const {
    std::string list;
    for (const auto& a : apertures) list += (list.empty() ? "" : ",") + a;
    ini.set(section, "apertures", list);
    ini.set(section, "aperture_size", std::to_string(aperture_size));
    ini.set(section, "psf_size", std::to_string(psf_size));
    ini.set(section, "noise_min", fmt(noise_min));
    ini.set(section, "noise_max", fmt(noise_max));
    ini.set(section, "blur_min", fmt(blur_min));
    ini.set(section, "blur_max", fmt(blur_max));
    ini.set(section, "transmittance_min", fmt(transmittance_min));
    ini.set(section, "transmittance_max", fmt(transmittance_max));
    ini.set(section, "highlight_threshold", fmt(highlight_threshold));
    ini.set(section, "highlight_gain", fmt(highlight_gain));
}

SpecDistribution SpecDistribution::read(const Ini& ini, const std::string& section) {
    SpecDistribution d;
    if (ini.has(section, "apertures")) d.apertures = split_list(ini.get(section, "apertures"));
    d.aperture_size = static_cast<std::size_t>(ini.get_int(section, "aperture_size", static_cast<std::int64_t>(d.aperture_size)));
    d.psf_size = static_cast<std::size_t>(ini.get_int(section, "psf_size", static_cast<std::int64_t>(d.psf_size)));
    d.noise_min = ini.get_double(section, "noise_min", d.noise_min);
    d.noise_max = ini.get_double(section, "noise_max", d.noise_max);
    d.blur_min = ini.get_double(section, "blur_min", d.blur_min);
    d.blur_max = ini.get_double(section, "blur_max", d.blur_max);
    d.transmittance_min = ini.get_double(section, "transmittance_min", d.transmittance_min);
    d.transmittance_max = ini.get_double(section, "transmittance_max", d.transmittance_max);
    d.highlight_threshold = ini.get_double(section, "highlight_threshold", d.highlight_threshold);
    d.highlight_gain = ini.get_double(section, "highlight_gain", d.highlight_gain);
    d.validate();
    return d;
}

namespace {

struct Canvas {
    std::size_t c, h, w;
    std::vector<double> v;
    double& at(std::size_t ch, std::size_t y, std::size_t x) { return v[(ch * h + y) * w + x]; }
};

std::vector<double> random_color(Rng& rng, std::size_t c, double lo, double hi) {
    std::vector<double> col(c);
    for (double& x : col) x = rng.uniform(lo, hi);
    return col;
}

void paint_ellipse(Canvas& cv, double cy, double cx, double ry, double rx, const std::vector<double>& col, double alpha) {
    for (std::size_t y = 0; y < cv.h; ++y)
        for (std::size_t x = 0; x < cv.w; ++x) {
            const double dy = (static_cast<double>(y) - cy) / ry, dx = (static_cast<double>(x) - cx) / rx;
            if (dy * dy + dx * dx <= 1.0) {
                for (std::size_t ch = 0; ch < cv.c; ++ch) cv.at(ch, y, x) = (1 - alpha) * cv.at(ch, y, x) + alpha * col[ch];
            }
        }
}

void paint_rect(Canvas& cv, std::size_t y0, std::size_t x0, std::size_t y1, std::size_t x1, const std::vector<double>& col) {
    for (std::size_t y = y0; y < std::min(y1, cv.h); ++y)
        for (std::size_t x = x0; x < std::min(x1, cv.w); ++x)
            for (std::size_t ch = 0; ch < cv.c; ++ch) cv.at(ch, y, x) = col[ch];
}

void ramp_background(Canvas& cv, Rng& rng, double lo, double hi) {
    const auto a = random_color(rng, cv.c, lo, hi), b = random_color(rng, cv.c, lo, hi);
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double ca = std::cos(angle), sa = std::sin(angle);
    const double span = std::abs(ca) * static_cast<double>(cv.h) + std::abs(sa) * static_cast<double>(cv.w) + 1.0;
    for (std::size_t y = 0; y < cv.h; ++y)
        for (std::size_t x = 0; x < cv.w; ++x) {
            const double t = 0.5 + (ca * (static_cast<double>(y) - cv.h / 2.0) + sa * (static_cast<double>(x) - cv.w / 2.0)) / span;
            for (std::size_t ch = 0; ch < cv.c; ++ch) cv.at(ch, y, x) = a[ch] + (b[ch] - a[ch]) * t;
        }
}

} // namespace

Tensor procedural_scene(SceneKind kind, std::size_t channels, std::size_t h, std::size_t w, std::uint64_t seed) {
    if (channels == 0 || h == 0 || w == 0) throw ShapeError("procedural_scene: empty extents");
    Rng rng(seed);
    Canvas cv{channels, h, w, std::vector<double>(channels * h * w, 0.0)};
    const double hd = static_cast<double>(h), wd = static_cast<double>(w);
    if (kind == SceneKind::Lights) {
        ramp_background(cv, rng, 0.02, 0.2);
        const std::size_t shapes = 2 + rng.below(4);
        for (std::size_t i = 0; i < shapes; ++i) {
            paint_ellipse(cv, rng.uniform(0, hd), rng.uniform(0, wd), rng.uniform(2, hd / 4), rng.uniform(2, wd / 4),
                          random_color(rng, channels, 0.05, 0.45), 1.0);
        }
        const std::size_t lights = 1 + rng.below(4);
        for (std::size_t i = 0; i < lights; ++i) {
            const double cy = rng.uniform(4, hd - 4), cx = rng.uniform(4, wd - 4);
            const double r = rng.uniform(1.0, 3.0);
            std::vector<double> warm = random_color(rng, channels, 0.92, 1.0);
            paint_ellipse(cv, cy, cx, r * 2.2, r * 2.2, random_color(rng, channels, 0.4, 0.7), 0.5);  // glow
            paint_ellipse(cv, cy, cx, r, r, warm, 1.0);
        }
    } else if (kind == SceneKind::Panels) {
        std::fill(cv.v.begin(), cv.v.end(), 0.05);
        for (int i = 0; i < 6; ++i) {
            const std::size_t y0 = rng.below(h), x0 = rng.below(w);
            const std::size_t ph = 2 + h / 32 + rng.below(std::max<std::size_t>(1, h / 3));
            const std::size_t pw = 2 + w / 32 + rng.below(std::max<std::size_t>(1, w / 3));
            paint_rect(cv, y0, x0, y0 + ph, x0 + pw, random_color(rng, channels, 0.1, 0.5));
        }
        const std::vector<double> white(channels, 1.0);
        for (int i = 0; i < 3; ++i) {
            const std::size_t y0 = rng.below(std::max<std::size_t>(1, h - 3)), x0 = rng.below(std::max<std::size_t>(1, w - 3));
            paint_rect(cv, y0, x0, y0 + 3, x0 + 3, white);
        }
    } else {
        ramp_background(cv, rng, 0.15, 0.85);
        // a grating across the frame
        const double fy = rng.uniform(-0.5, 0.5), fx = rng.uniform(-0.5, 0.5), amp = rng.uniform(0.05, 0.2);
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const double s = amp * std::sin(fy * static_cast<double>(y) + fx * static_cast<double>(x));
                for (std::size_t ch = 0; ch < channels; ++ch) cv.at(ch, y, x) += s;
            }
        const std::size_t shapes = 4 + rng.below(6);
        for (std::size_t i = 0; i < shapes; ++i) {
            const auto col = random_color(rng, channels, 0.05, 0.88);
            if (rng.below(2) == 0) {
                const std::size_t y0 = rng.below(h), x0 = rng.below(w);
                paint_rect(cv, y0, x0, y0 + 2 + rng.below(h / 3), x0 + 2 + rng.below(w / 3), col);
            } else {
                paint_ellipse(cv, rng.uniform(0, hd), rng.uniform(0, wd), rng.uniform(2, hd / 5), rng.uniform(2, wd / 5),
                              col, rng.uniform(0.5, 1.0));
            }
        }
        // occasional small highlight
        if (rng.below(3) == 0) {
            paint_ellipse(cv, rng.uniform(4, hd - 4), rng.uniform(4, wd - 4), 1.5, 1.5, random_color(rng, channels, 0.95, 1.0),
                          1.0);
        }
    }
    for (double& v : cv.v) v = std::clamp(v, 0.0, 1.0);
    return Tensor(Shape{channels, h, w}, std::move(cv.v));
}

Tensor test_card(std::size_t channels, std::size_t h, std::size_t w) {
    Tensor card(Shape{channels, h, w});
    auto v = card.mutable_values();
    const std::size_t cell = std::max<std::size_t>(4, std::min(h, w) / 8);
    for (std::size_t ch = 0; ch < channels; ++ch)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                double s = ((y / cell + x / cell) % 2 == 0) ? 0.3 : 0.45;
                // 2x2 saturated spot at the center of every other cell
                const std::size_t cy = y % (2 * cell), cx = x % (2 * cell);
                if (cy >= cell - 1 && cy <= cell && cx >= cell - 1 && cx <= cell) s = 1.0;
                v[(ch * h + y) * w + x] = s;
            }
    return card;
}

namespace {

std::string pair_id(std::size_t i) {
    std::ostringstream out;
    out << "pair_" << std::setw(5) << std::setfill('0') << i;
    return out.str();
}

std::vector<Pair> generate(const DatasetOptions& opt, const std::function<Tensor(std::size_t, Rng&)>& clean_of) {
    opt.distribution.validate();
    if (opt.channels == 0 || opt.height == 0 || opt.width == 0) throw ConfigError("dataset extents must be positive");
    std::vector<Pair> pairs(opt.count);
    // per-item seeds make every pair independent of the partition
    parallel_for(opt.count, 1, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const std::uint64_t item = derive_seed(opt.seed, i);
            Rng spec_rng(derive_seed(item, 1));
            Rng scene_rng(derive_seed(item, 0));
            Pair& p = pairs[i];
            p.id = pair_id(i);
            p.seed = item;
            p.clean = clean_of(i, scene_rng);
            p.spec = opt.distribution.sample(spec_rng);
            p.degraded = degrade_image(p.clean, p.spec, derive_seed(item, 2));
        }
    });
    return pairs;
}

} // namespace

std::vector<Pair> make_dataset(const DatasetOptions& opt) {
    return generate(opt, [&](std::size_t, Rng& rng) {
        const SceneKind kind = rng.uniform() < opt.lights_fraction ? SceneKind::Lights : SceneKind::Texture;
        return procedural_scene(kind, opt.channels, opt.height, opt.width, rng.next_u64());
    });
}

std::vector<Pair> make_dataset(const DatasetOptions& opt, const std::vector<Tensor>& sources) {
    if (sources.empty()) throw ConfigError("make_dataset: no clean source images");
    for (const auto& s : sources) {
        if (s.rank() != 3 || s.channels() != opt.channels || s.height() < opt.height || s.width() < opt.width) {
            throw ShapeError("make_dataset: source " + shape_string(s.shape()) + " cannot supply " +
                             std::to_string(opt.channels) + " x " + std::to_string(opt.height) + " x " +
                             std::to_string(opt.width) + " crops");
        }
    }
    return generate(opt, [&](std::size_t i, Rng& rng) {
        const Tensor& src = sources[i % sources.size()];
        const std::size_t top = rng.below(src.height() - opt.height + 1);
        const std::size_t left = rng.below(src.width() - opt.width + 1);
        const bool flip = rng.below(2) == 1;
        Tensor out(Shape{opt.channels, opt.height, opt.width});
        auto ov = out.mutable_values();
        const auto sv = src.values();
        for (std::size_t ch = 0; ch < opt.channels; ++ch)
            for (std::size_t y = 0; y < opt.height; ++y)
                for (std::size_t x = 0; x < opt.width; ++x) {
                    const std::size_t sx = left + (flip ? opt.width - 1 - x : x);
                    ov[(ch * opt.height + y) * opt.width + x] = sv[(ch * src.height() + top + y) * src.width() + sx];
                }
        return out;
    });
}

std::string manifest_text(const std::vector<Pair>& pairs) {
    Ini ini;
    ini.set("dataset", "count", std::to_string(pairs.size()));
    for (const auto& p : pairs) {
        const std::string sec = p.id;
        ini.set(sec, "clean", p.id + "_clean.sftn");
        ini.set(sec, "degraded", p.id + "_degraded.sftn");
        ini.set(sec, "seed", std::to_string(p.seed));
        ini.set(sec, "aperture", p.spec.aperture);
        ini.set(sec, "aperture_size", std::to_string(p.spec.aperture_size));
        ini.set(sec, "psf_size", std::to_string(p.spec.psf.dim(0)));
        ini.set(sec, "noise_sigma", fmt(p.spec.noise_sigma));
        ini.set(sec, "blur_sigma", fmt(p.spec.blur_sigma));
        ini.set(sec, "transmittance", fmt(p.spec.transmittance));
        ini.set(sec, "highlight_threshold", fmt(p.spec.highlight_threshold));
        ini.set(sec, "highlight_gain", fmt(p.spec.highlight_gain));
    }
    return ini.to_string();
}

void write_dataset(const std::filesystem::path& dir, const std::vector<Pair>& pairs) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    for (const auto& p : pairs) {
        save_tensor(dir / (p.id + "_clean.sftn"), p.clean);
        save_tensor(dir / (p.id + "_degraded.sftn"), p.degraded);
    }
    write_file_atomic(dir / "manifest.ini", manifest_text(pairs));
}

std::vector<Pair> read_dataset(const std::filesystem::path& dir) {
    const Ini ini = Ini::load((dir / "manifest.ini").string());
    const auto count = ini.get_int("dataset", "count", -1);
    if (count < 0) throw ConfigError(dir.string() + "/manifest.ini: missing [dataset] count");
    std::vector<Pair> pairs;
    for (const auto& [name, section] : ini.sections()) {
        if (name == "dataset" || name.empty()) continue;
        Pair p;
        p.id = name;
        p.clean = load_tensor(dir / ini.get(name, "clean"));
        p.degraded = load_tensor(dir / ini.get(name, "degraded"));
        if (p.clean.shape() != p.degraded.shape()) throw ShapeError(name + ": clean and degraded shapes differ");
        p.seed = static_cast<std::uint64_t>(std::stoull(ini.get_or(name, "seed", "0")));
        DegradationSpec& s = p.spec;
        s.aperture = ini.get_or(name, "aperture", "delta");
        s.aperture_size = static_cast<std::size_t>(ini.get_int(name, "aperture_size", 0));
        if (s.aperture != "delta") {
            s.psf = aperture_to_psf(parse_aperture(s.aperture, s.aperture_size),
                                    static_cast<std::size_t>(ini.get_int(name, "psf_size", 1)));
        }
        s.noise_sigma = ini.get_double(name, "noise_sigma", 0.0);
        s.blur_sigma = ini.get_double(name, "blur_sigma", 0.0);
        s.transmittance = ini.get_double(name, "transmittance", 1.0);
        s.highlight_threshold = ini.get_double(name, "highlight_threshold", 0.9);
        s.highlight_gain = ini.get_double(name, "highlight_gain", 1.0);
        pairs.push_back(std::move(p));
    }
    if (pairs.size() != static_cast<std::size_t>(count)) {
        throw ConfigError(dir.string() + "/manifest.ini: count " + std::to_string(count) + " but " +
                          std::to_string(pairs.size()) + " pairs listed");
    }
    return pairs;
}

} // namespace sfim::degrade
