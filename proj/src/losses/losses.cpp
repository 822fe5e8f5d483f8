#include "sfim/losses/losses.hpp"

#include <cmath>
#include <iomanip>
#include <memory>
#include <numbers>
#include <sstream>

#include "sfim/core/fft.hpp"
#include "sfim/core/ops.hpp"
#include "sfim/core/tape.hpp"

namespace sfim::losses {

namespace {

using NodePtr = std::shared_ptr<sfim::detail::TensorNode>;

void require_same(const char* op, const Tensor& r, const Tensor& g) {
    if (r.shape() != g.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(r.shape()) + " vs " +
                         shape_string(g.shape()));
    }
    if (r.rank() != 3) throw ShapeError(std::string(op) + ": expected C x H x W, got " + shape_string(r.shape()));
}

Tensor finish(const char* op, double value) {
    if (!std::isfinite(value)) throw NumericError(std::string(op) + ": non-finite value");
    return Tensor::scalar(value);
}

double* sink(const NodePtr& n) { return n->requires_grad ? n->grad_buffer().data() : nullptr; }

double sign(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

} // namespace

Tensor charbonnier(const Tensor& r, const Tensor& g, bool per_pixel, double eps) {
    require_same("charbonnier", r, g);
    const auto rv = r.values();
    const auto gv = g.values();
    const std::size_t n = rv.size();
    double value;
    if (per_pixel) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += std::sqrt((rv[i] - gv[i]) * (rv[i] - gv[i]) + eps * eps);
        value = acc / static_cast<double>(n);
    } else {
        double sq = 0.0;
        for (std::size_t i = 0; i < n; ++i) sq += (rv[i] - gv[i]) * (rv[i] - gv[i]);
        value = std::sqrt(sq + eps * eps);
    }
    Tensor out = finish("charbonnier", value);
    if (needs_grad({&r, &g})) {
        NodePtr rn = r.handle(), gn = g.handle(), on = out.handle();
        active_tape()->record("charbonnier", {&r, &g}, out, [rn, gn, on, per_pixel, eps, value, n] {
            const double up = on->grad[0];
            double* gr = sink(rn);
            double* gg = sink(gn);
            for (std::size_t i = 0; i < n; ++i) {
                const double d = rn->value[i] - gn->value[i];
                const double dd = per_pixel ? d / std::sqrt(d * d + eps * eps) / static_cast<double>(n) : d / value;
                if (gr) gr[i] += up * dd;
                if (gg) gg[i] -= up * dd;
            }
        });
    }
    return out;
}

namespace {

constexpr std::size_t kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

// Separable window: valid correlation with ky along rows then kx along
// columns; the adjoint scatters back.
struct Window {
    std::vector<double> ky, kx;
    std::size_t h = 0, w = 0;  // input extents
    std::size_t oh() const { return h - ky.size() + 1; }
    std::size_t ow() const { return w - kx.size() + 1; }

    std::vector<double> apply(const double* x) const {
        std::vector<double> tmp(oh() * w, 0.0), out(oh() * ow(), 0.0);
        for (std::size_t y = 0; y < oh(); ++y)
            for (std::size_t i = 0; i < ky.size(); ++i) {
                const double k = ky[i];
                const double* row = x + (y + i) * w;
                double* dst = tmp.data() + y * w;
                for (std::size_t c = 0; c < w; ++c) dst[c] += k * row[c];
            }
        for (std::size_t y = 0; y < oh(); ++y)
            for (std::size_t c = 0; c < ow(); ++c) {
                double acc = 0.0;
                for (std::size_t j = 0; j < kx.size(); ++j) acc += kx[j] * tmp[y * w + c + j];
                out[y * ow() + c] = acc;
            }
        return out;
    }

    std::vector<double> adjoint(const std::vector<double>& g) const {
        std::vector<double> tmp(oh() * w, 0.0), out(h * w, 0.0);
        for (std::size_t y = 0; y < oh(); ++y)
            for (std::size_t c = 0; c < ow(); ++c) {
                const double v = g[y * ow() + c];
                for (std::size_t j = 0; j < kx.size(); ++j) tmp[y * w + c + j] += kx[j] * v;
            }
        for (std::size_t y = 0; y < oh(); ++y)
            for (std::size_t i = 0; i < ky.size(); ++i) {
                const double k = ky[i];
                double* dst = out.data() + (y + i) * w;
                const double* src = tmp.data() + y * w;
                for (std::size_t c = 0; c < w; ++c) dst[c] += k * src[c];
            }
        return out;
    }
};

Window make_window(std::size_t h, std::size_t w) {
    Window win;
    win.h = h;
    win.w = w;
    if (h < kWindow || w < kWindow) {
        win.ky.assign(h, 1.0 / static_cast<double>(h));
        win.kx.assign(w, 1.0 / static_cast<double>(w));
        return win;
    }
    std::vector<double> k(kWindow);
    double s = 0.0;
    for (std::size_t i = 0; i < kWindow; ++i) {
        const double d = static_cast<double>(i) - static_cast<double>(kWindow / 2);
        k[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
        s += k[i];
    }
    for (double& v : k) v /= s;
    win.ky = k;
    win.kx = k;
    return win;
}

} // namespace

Tensor ssim(const Tensor& r, const Tensor& g) {
    require_same("ssim", r, g);
    const std::size_t c = r.channels(), h = r.height(), w = r.width(), plane = h * w;
    auto win = std::make_shared<Window>(make_window(h, w));
    const std::size_t m = win->oh() * win->ow();
    // per channel, per window: saved factors for the backward pass
    struct Saved {
        std::vector<double> dmx, dmy, dxx, dyy, dxy;
    };
    auto saved = std::make_shared<std::vector<Saved>>(c);
    double total = 0.0;
    const bool grad = needs_grad({&r, &g});
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* x = r.values().data() + ch * plane;
        const double* y = g.values().data() + ch * plane;
        std::vector<double> xx(plane), yy(plane), xy(plane);
        for (std::size_t i = 0; i < plane; ++i) {
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        const auto mx = win->apply(x), my = win->apply(y);
        const auto exx = win->apply(xx.data()), eyy = win->apply(yy.data()), exy = win->apply(xy.data());
        Saved& sv = (*saved)[ch];
        if (grad) {
            sv.dmx.resize(m);
            sv.dmy.resize(m);
            sv.dxx.resize(m);
            sv.dyy.resize(m);
            sv.dxy.resize(m);
        }
        double acc = 0.0;
        for (std::size_t p = 0; p < m; ++p) {
            const double a1 = 2.0 * mx[p] * my[p] + kC1;
            const double a2 = 2.0 * (exy[p] - mx[p] * my[p]) + kC2;
            const double b1 = mx[p] * mx[p] + my[p] * my[p] + kC1;
            const double b2 = (exx[p] - mx[p] * mx[p]) + (eyy[p] - my[p] * my[p]) + kC2;
            const double s = a1 * a2 / (b1 * b2);
            acc += s;
            if (grad) {
                sv.dmx[p] = s * (2.0 * my[p] / a1 - 2.0 * my[p] / a2 - 2.0 * mx[p] / b1 + 2.0 * mx[p] / b2);
                sv.dmy[p] = s * (2.0 * mx[p] / a1 - 2.0 * mx[p] / a2 - 2.0 * my[p] / b1 + 2.0 * my[p] / b2);
                sv.dxx[p] = -s / b2;
                sv.dyy[p] = -s / b2;
                sv.dxy[p] = 2.0 * s / a2;
            }
        }
        total += acc / static_cast<double>(m);
    }
    Tensor out = finish("ssim", total / static_cast<double>(c));
    if (grad) {
        NodePtr rn = r.handle(), gn = g.handle(), on = out.handle();
        active_tape()->record("ssim", {&r, &g}, out, [rn, gn, on, win, saved, c, plane, m] {
            const double scale = on->grad[0] / static_cast<double>(c * m);
            double* gr = sink(rn);
            double* gg = sink(gn);
            auto scaled = [&](const std::vector<double>& v) {
                std::vector<double> out(v.size());
                for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * scale;
                return win->adjoint(out);
            };
            for (std::size_t ch = 0; ch < c; ++ch) {
                const Saved& sv = (*saved)[ch];
                const double* x = rn->value.data() + ch * plane;
                const double* y = gn->value.data() + ch * plane;
                const auto axy = scaled(sv.dxy);
                if (gr) {
                    const auto amx = scaled(sv.dmx), axx = scaled(sv.dxx);
                    for (std::size_t i = 0; i < plane; ++i) gr[ch * plane + i] += amx[i] + 2.0 * x[i] * axx[i] + y[i] * axy[i];
                }
                if (gg) {
                    const auto amy = scaled(sv.dmy), ayy = scaled(sv.dyy);
                    for (std::size_t i = 0; i < plane; ++i) gg[ch * plane + i] += amy[i] + 2.0 * y[i] * ayy[i] + x[i] * axy[i];
                }
            }
        });
    }
    return out;
}

Tensor ssim_loss(const Tensor& r, const Tensor& g) { return ops::add_scalar(ops::mul_scalar(ssim(r, g), -1.0), 1.0); }

double wrap_phase(double d) {
    const double two_pi = 2.0 * std::numbers::pi;
    return d - two_pi * std::ceil((d - std::numbers::pi) / two_pi);
}

namespace {

enum class Spectral { Amplitude, Phase, Complex };

// Value and bin-wise gradient coefficients (d/dRe, d/dIm) for each side.
Tensor spectral_term(const char* op, Spectral kind, const Tensor& r, const Tensor& g) {
    require_same(op, r, g);
    const std::size_t n = r.numel(), h = r.height(), w = r.width();
    const ComplexTensor fr = fft2(r), fg = fft2(g);
    const bool grad = needs_grad({&r, &g});
    auto coef = std::make_shared<std::vector<cplx>>(grad ? 2 * n : 0);  // [R side | G side]
    double value = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const cplx a = fr.at(i), b = fg.at(i);
        const double ma = std::abs(a), mb = std::abs(b);
        switch (kind) {
        case Spectral::Amplitude: {
            const double d = ma - mb;
            value += std::abs(d);
            if (grad) {
                const double s = sign(d);
                (*coef)[i] = ma > 0 ? s * a / ma : cplx{};
                (*coef)[n + i] = mb > 0 ? -s * b / mb : cplx{};
            }
            break;
        }
        case Spectral::Phase: {
            const double d = wrap_phase(std::arg(a) - std::arg(b));
            value += std::abs(d);
            if (grad) {
                const double s = sign(d);
                // d arg / d(Re, Im) = (-Im, Re) / |F|^2
                (*coef)[i] = ma > 0 ? s * cplx{-a.imag(), a.real()} / (ma * ma) : cplx{};
                (*coef)[n + i] = mb > 0 ? -s * cplx{-b.imag(), b.real()} / (mb * mb) : cplx{};
            }
            break;
        }
        case Spectral::Complex: {
            const cplx d = a - b;
            value += std::abs(d.real()) + std::abs(d.imag());
            if (grad) {
                (*coef)[i] = {sign(d.real()), sign(d.imag())};
                (*coef)[n + i] = -(*coef)[i];
            }
            break;
        }
        }
    }
    Tensor out = finish(op, value);
    if (grad) {
        NodePtr rn = r.handle(), gn = g.handle(), on = out.handle();
        active_tape()->record(op, {&r, &g}, out, [rn, gn, on, coef, n, h, w] {
            // x-gradient of sum_k gRe Re F_k + gIm Im F_k is Re(hw * IFFT(gRe + i gIm))
            const double up = on->grad[0] * static_cast<double>(h * w);
            const std::size_t plane = h * w;
            std::vector<cplx> buf(plane);
            for (int side = 0; side < 2; ++side) {
                double* dst = sink(side == 0 ? rn : gn);
                if (!dst) continue;
                for (std::size_t p = 0; p < n / plane; ++p) {
                    for (std::size_t i = 0; i < plane; ++i) buf[i] = (*coef)[side * n + p * plane + i];
                    fft2_inplace(buf, h, w, true);
                    for (std::size_t i = 0; i < plane; ++i) dst[p * plane + i] += up * buf[i].real();
                }
            }
        });
    }
    return out;
}

} // namespace

Tensor fft_amplitude_loss(const Tensor& r, const Tensor& g) {
    return spectral_term("fft_amplitude", Spectral::Amplitude, r, g);
}
Tensor fft_phase_loss(const Tensor& r, const Tensor& g) { return spectral_term("fft_phase", Spectral::Phase, r, g); }
Tensor ecfnet_fft_loss(const Tensor& r, const Tensor& g) {
    return spectral_term("fft_complex_l1", Spectral::Complex, r, g);
}

FftLoss fft_loss(const Tensor& r, const Tensor& g) { return {fft_amplitude_loss(r, g), fft_phase_loss(r, g)}; }

std::string to_string(FftVariant v) {
    switch (v) {
    case FftVariant::AmpPhase: return "amp_phase";
    case FftVariant::ComplexL1: return "complex_l1";
    case FftVariant::None: return "none";
    }
    return "?";
}

FftVariant parse_fft_variant(const std::string& s) {
    if (s == "amp_phase" || s == "AMP_PHASE") return FftVariant::AmpPhase;
    if (s == "complex_l1" || s == "COMPLEX_L1") return FftVariant::ComplexL1;
    if (s == "none" || s == "NONE") return FftVariant::None;
    throw ConfigError("unknown fft variant '" + s + "' (amp_phase, complex_l1, none)");
}

void LossWeights::validate() const {
    if (!(lambda1 >= 0 && lambda2 >= 0 && lambda3 >= 0)) throw ConfigError("loss weights must be >= 0");
}

std::string LossReport::to_line() const {
    std::ostringstream out;
    out << std::setprecision(10);
    for (std::size_t l = 0; l < levels.size(); ++l) {
        const auto& v = levels[l];
        if (l) out << " | ";
        out << "level=" << l + 1 << " char=" << v.charbonnier << " ssim=" << v.ssim << " amp=" << v.amplitude
            << " phase=" << v.phase << " cplx=" << v.complex_l1 << " total=" << v.total;
    }
    out << " | loss=" << total;
    return out.str();
}

LossReport total_loss(const std::vector<Tensor>& restored, const std::vector<Tensor>& targets,
                      const LossWeights& weights) {
    weights.validate();
    if (restored.size() != targets.size() || restored.empty()) {
        throw ShapeError("total_loss: " + std::to_string(restored.size()) + " outputs vs " +
                         std::to_string(targets.size()) + " targets");
    }
    LossReport report;
    Tensor total;
    for (std::size_t l = 0; l < restored.size(); ++l) {
        const Tensor& r = restored[l];
        const Tensor& g = targets[l];
        LevelLoss lv;
        Tensor level = charbonnier(r, g, weights.per_pixel_charbonnier);
        lv.charbonnier = level.item();
        const Tensor s = ssim_loss(r, g);
        lv.ssim = s.item();
        if (weights.lambda1 != 0) level = ops::add(level, ops::mul_scalar(s, weights.lambda1));
        if (weights.variant == FftVariant::AmpPhase) {
            const FftLoss f = fft_loss(r, g);
            lv.amplitude = f.amplitude.item();
            lv.phase = f.phase.item();
            if (weights.lambda2 != 0) level = ops::add(level, ops::mul_scalar(f.amplitude, weights.lambda2));
            if (weights.lambda3 != 0) level = ops::add(level, ops::mul_scalar(f.phase, weights.lambda3));
        } else if (weights.variant == FftVariant::ComplexL1) {
            const Tensor cpl = ecfnet_fft_loss(r, g);
            lv.complex_l1 = cpl.item();
            if (weights.lambda2 != 0) level = ops::add(level, ops::mul_scalar(cpl, weights.lambda2));
        }
        lv.total = level.item();
        report.levels.push_back(lv);
        total = total.defined() ? ops::add(total, level) : level;
    }
    report.total_tensor = total;
    report.total = total.item();
    return report;
}

} // namespace sfim::losses
