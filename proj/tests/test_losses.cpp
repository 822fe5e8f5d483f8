#include <doctest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "sfim/core/gradcheck.hpp"
#include "sfim/core/ops.hpp"
#include "sfim/core/tape.hpp"
#include "sfim/losses/losses.hpp"
#include "test_support.hpp"

using namespace sfim;
using namespace sfim::losses;
using test::random_tensor;

namespace {

std::vector<double> vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

// Mean SSIM over all 11x11 windows written as plain nested loops.
double ssim_oracle(const Tensor& r, const Tensor& g) {
    const std::size_t c = r.channels(), h = r.height(), w = r.width();
    double k[11], s = 0.0;
    for (int i = 0; i < 11; ++i) {
        k[i] = std::exp(-(i - 5) * (i - 5) / (2.0 * 1.5 * 1.5));
        s += k[i];
    }
    for (double& v : k) v /= s;
    double total = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (std::size_t y = 0; y + 11 <= h; ++y)
            for (std::size_t x = 0; x + 11 <= w; ++x) {
                double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
                for (int i = 0; i < 11; ++i)
                    for (int j = 0; j < 11; ++j) {
                        const std::size_t at = (ch * h + y + i) * w + x + j;
                        const double wt = k[i] * k[j], a = r.at(at), b = g.at(at);
                        mx += wt * a;
                        my += wt * b;
                        sxx += wt * a * a;
                        syy += wt * b * b;
                        sxy += wt * a * b;
                    }
                sxx -= mx * mx;
                syy -= my * my;
                sxy -= mx * my;
                acc += (2 * mx * my + 1e-4) * (2 * sxy + 9e-4) / ((mx * mx + my * my + 1e-4) * (sxx + syy + 9e-4));
            }
        total += acc / static_cast<double>((h - 10) * (w - 10));
    }
    return total / static_cast<double>(c);
}

} // namespace

TEST_CASE("charbonnier closed forms") {
    Tensor r = random_tensor({3, 8, 8}, 1, 0, 1);
    CHECK(charbonnier(r, r).item() == doctest::Approx(1e-3).epsilon(1e-15));
    Tensor g = r.clone();
    g.mutable_values()[17] += 1.0;
    CHECK(charbonnier(r, g).item() == doctest::Approx(std::sqrt(1.0 + 1e-6)).epsilon(1e-14));
    CHECK(charbonnier(r, r, true).item() == doctest::Approx(1e-3).epsilon(1e-15));
    CHECK_THROWS_AS(charbonnier(r, random_tensor({3, 8, 7}, 2)), ShapeError);
}

TEST_CASE("ssim closed forms and oracle") {
    Tensor a(Shape{3, 16, 16}, 0.5), b(Shape{3, 16, 16}, 0.25);
    const double expected = (2 * 0.5 * 0.25 + 1e-4) / (0.25 + 0.0625 + 1e-4);
    CHECK(std::abs(ssim(a, b).item() - expected) < 1e-6);
    CHECK(std::abs(ssim_loss(a, b).item() - (1 - expected)) < 1e-6);
    CHECK(std::abs(ssim_loss(a, b).item() - 0.1999) < 1e-4);

    Tensor r = random_tensor({2, 20, 17}, 3, 0, 1), g = random_tensor({2, 20, 17}, 4, 0, 1);
    CHECK(std::abs(ssim_loss(r, r).item()) < 1e-12);
    CHECK(ssim_loss(r, g).item() == doctest::Approx(ssim_loss(g, r).item()).epsilon(1e-14));
    CHECK(std::abs(ssim(r, g).item() - ssim_oracle(r, g)) < 1e-12);
    const double l = ssim_loss(r, g).item();
    CHECK(l >= 0.0);
    CHECK(l <= 2.0);

    // smaller than the window: one global window per channel
    Tensor sa(Shape{1, 6, 6}, 0.5), sb(Shape{1, 6, 6}, 0.25);
    CHECK(std::abs(ssim(sa, sb).item() - expected) < 1e-6);
}

TEST_CASE("fft terms: closed forms and direct-DFT oracle") {
    const double c = 0.2;
    Tensor g(Shape{1, 6, 6}, c), r(Shape{1, 6, 6}, 2 * c);
    auto f = fft_loss(r, g);
    CHECK(f.amplitude.item() == doctest::Approx(c * 36).epsilon(1e-12));
    CHECK(std::abs(f.phase.item()) < 1e-12);
    CHECK(ecfnet_fft_loss(r, g).item() == doctest::Approx(c * 36).epsilon(1e-12));

    Tensor x = random_tensor({3, 6, 6}, 5), y = random_tensor({3, 6, 6}, 6);
    auto same = fft_loss(x, x);
    CHECK(same.amplitude.item() == 0.0);
    CHECK(same.phase.item() == 0.0);
    CHECK(ecfnet_fft_loss(x, x).item() == 0.0);

    double amp, phase;
    oracle::fft_loss_terms(vec(x), vec(y), 3, 6, 6, amp, phase);
    auto fx = fft_loss(x, y);
    CHECK(std::abs(fx.amplitude.item() - amp) < 1e-8);
    CHECK(std::abs(fx.phase.item() - phase) < 1e-8);
    CHECK(std::abs(ecfnet_fft_loss(x, y).item() - oracle::complex_l1(vec(x), vec(y), 3, 6, 6)) < 1e-8);

    Tensor odd_x = random_tensor({2, 5, 7}, 7), odd_y = random_tensor({2, 5, 7}, 8);
    oracle::fft_loss_terms(vec(odd_x), vec(odd_y), 2, 5, 7, amp, phase);
    CHECK(std::abs(fft_amplitude_loss(odd_x, odd_y).item() - amp) < 1e-8);
    CHECK(std::abs(fft_phase_loss(odd_x, odd_y).item() - phase) < 1e-8);
}

TEST_CASE("phase wrapping") {
    const double pi = std::numbers::pi;
    CHECK(wrap_phase(pi) == doctest::Approx(pi));
    CHECK(wrap_phase(-pi) == doctest::Approx(pi));
    CHECK(wrap_phase(0.0) == 0.0);
    for (double d : {-3.0, -1.2, 0.1, 0.7, 2.9}) {
        for (int k : {-2, -1, 1, 3}) CHECK(wrap_phase(d + 2 * pi * k) == doctest::Approx(wrap_phase(d)).epsilon(1e-12));
        const double w = wrap_phase(d);
        CHECK(w > -pi);
        CHECK(w <= pi);
    }
}

TEST_CASE("total loss: floors, linearity in the weights, variants") {
    std::vector<Tensor> outs{random_tensor({3, 16, 16}, 9, 0, 1), random_tensor({3, 8, 8}, 10, 0, 1)};
    std::vector<Tensor> gts{random_tensor({3, 16, 16}, 11, 0, 1), random_tensor({3, 8, 8}, 12, 0, 1)};

    LossReport perfect = total_loss(outs, outs, {});
    CHECK(perfect.total == doctest::Approx(2e-3).epsilon(1e-12));

    LossWeights base;
    base.lambda1 = base.lambda2 = base.lambda3 = 0;
    const LossReport r0 = total_loss(outs, gts, base);
    for (const auto& lv : r0.levels) CHECK(lv.total == doctest::Approx(lv.charbonnier).epsilon(1e-14));

    LossWeights w{0.5, 2.0, 3.0};
    const LossReport r = total_loss(outs, gts, w);
    double sum = 0.0;
    for (const auto& lv : r.levels) {
        CHECK(lv.total == doctest::Approx(lv.charbonnier + 0.5 * lv.ssim + 2.0 * lv.amplitude + 3.0 * lv.phase).epsilon(1e-12));
        CHECK(lv.charbonnier >= 1e-3);
        CHECK(lv.amplitude >= 0);
        CHECK(lv.phase >= 0);
        sum += lv.total;
    }
    CHECK(r.total == doctest::Approx(sum).epsilon(1e-14));

    LossWeights cw{1.0, 1.5, 1.0, FftVariant::ComplexL1};
    const LossReport rc = total_loss(outs, gts, cw);
    for (const auto& lv : rc.levels)
        CHECK(lv.total == doctest::Approx(lv.charbonnier + lv.ssim + 1.5 * lv.complex_l1).epsilon(1e-12));

    LossWeights none{1.0, 1.0, 1.0, FftVariant::None};
    for (const auto& lv : total_loss(outs, gts, none).levels)
        CHECK(lv.total == doctest::Approx(lv.charbonnier + lv.ssim).epsilon(1e-12));

    CHECK(parse_fft_variant(to_string(FftVariant::ComplexL1)) == FftVariant::ComplexL1);
    CHECK_THROWS_AS(parse_fft_variant("bogus"), ConfigError);
    CHECK_THROWS_AS(total_loss(outs, {gts[0]}, {}), ShapeError);
    LossWeights neg;
    neg.lambda2 = -1;
    CHECK_THROWS_AS(total_loss(outs, gts, neg), ConfigError);
    CHECK(!r.to_line().empty());
}

TEST_CASE("loss gradients match finite differences") {
    Tensor r = random_tensor({2, 12, 13}, 13, 0, 1), g = random_tensor({2, 12, 13}, 14, 0, 1);
    GradCheckOptions opt{80, 1e-6, 5};
    // SSIM gradients are ~1e-7 per pixel here, so its step is larger to stay
    // clear of roundoff in the difference.
    auto run = [&](std::string name, const std::function<Tensor()>& f, double tol, double h = 1e-6) {
        auto rep = gradient_check(f, {{"r", r}, {"g", g}}, {opt.samples, h, opt.seed});
        INFO(name << " err=" << rep.max_rel_error() << " " << rep.failure);
        CHECK(rep.passed(tol));
    };
    run("charbonnier", [&] { return charbonnier(r, g); }, 1e-6);
    run("charbonnier per pixel", [&] { return charbonnier(r, g, true); }, 1e-6);
    run("ssim", [&] { return ssim_loss(r, g); }, 1e-5, 1e-4);
    run("amplitude", [&] { return fft_amplitude_loss(r, g); }, 1e-5);
    run("phase", [&] { return fft_phase_loss(r, g); }, 1e-5);
    run("complex", [&] { return ecfnet_fft_loss(r, g); }, 1e-5);
    Tensor small_r = random_tensor({1, 7, 6}, 15, 0, 1), small_g = random_tensor({1, 7, 6}, 16, 0, 1);
    auto rep = gradient_check([&] { return ssim_loss(small_r, small_g); }, {{"r", small_r}, {"g", small_g}}, {80, 1e-4, 5});
    CHECK(rep.passed(1e-5));
    run("total", [&] {
        return total_loss({r, ops::interpolate_bilinear(r, 6, 7)}, {g, ops::interpolate_bilinear(g, 6, 7)}, {})
            .total_tensor;
    }, 1e-5);
}
