#include "sfim/checks/suites.hpp"

#include <cmath>
#include <functional>
#include <iomanip>
#include <sstream>

#include "sfim/blocks/blocks.hpp"
#include "sfim/core/fft.hpp"
#include "sfim/core/gradcheck.hpp"
#include "sfim/core/ops.hpp"
#include "sfim/core/rng.hpp"
#include "sfim/degrade/degrade.hpp"
#include "sfim/losses/losses.hpp"
#include "sfim/model/model.hpp"

namespace sfim::checks {

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.mutable_values()) v = rng.uniform(lo, hi);
    return t;
}

CheckResult from_report(const std::string& name, const GradCheckReport& rep) {
    CheckResult r{name, rep.max_rel_error(), kGradTolerance, rep.passed(kGradTolerance), {}};
    if (!rep.failure.empty()) {
        r.detail = rep.failure;
        return r;
    }
    for (const auto& g : rep.groups) {
        if (g.max_rel_error == r.value) {
            std::ostringstream d;
            d << std::setprecision(6) << "worst group " << g.name << " analytic=" << g.analytic << " numeric=" << g.numeric;
            r.detail = d.str();
            break;
        }
    }
    return r;
}

CheckResult closed_form(const std::string& name, double error, double tol) {
    return CheckResult{name, error, tol, error < tol, {}};
}

// Parameters of one block (or a model) together with its inputs.
struct Bench {
    ParameterStore store;
    Rng rng;
    explicit Bench(std::uint64_t seed) : rng(seed) {}
    ParamScope scope() { return ParamScope(store, "", rng); }

    // moves norms and gates off their init values
    void jitter(double amount) {
        for (auto& e : store.entries()) {
            Tensor t = e.tensor;
            for (double& v : t.mutable_values()) v += rng.uniform(-amount, amount);
        }
    }

    GradCheckReport run(const std::function<Tensor()>& f, const std::vector<Tensor>& inputs, std::size_t samples,
                        std::uint64_t seed) {
        std::vector<std::pair<std::string, Tensor>> groups;
        for (std::size_t i = 0; i < inputs.size(); ++i) groups.emplace_back("input" + std::to_string(i), inputs[i]);
        for (const auto& e : store.entries()) groups.emplace_back(e.name, e.tensor);
        return gradient_check(f, groups, {samples, 1e-5, seed});
    }
};

void tensor_suite(SuiteReport& rep, std::uint64_t seed) {
    Rng rng(seed);
    const GradCheckOptions opt{60, 1e-5, seed};
    auto check = [&](const std::string& name, const std::function<Tensor()>& f,
                     std::vector<std::pair<std::string, Tensor>> groups) {
        rep.checks.push_back(from_report("op " + name, gradient_check(f, groups, opt)));
    };
    Tensor x = random_tensor({4, 6, 5}, rng), y = random_tensor({4, 6, 5}, rng), row = random_tensor({4, 1, 1}, rng);
    check("add", [&] { return ops::add(x, row); }, {{"x", x}, {"row", row}});
    check("sub", [&] { return ops::sub(x, y); }, {{"x", x}, {"y", y}});
    check("mul", [&] { return ops::mul(x, row); }, {{"x", x}, {"row", row}});
    check("scalar", [&] { return ops::mul_scalar(ops::add_scalar(x, 0.3), -1.7); }, {{"x", x}});
    check("sigmoid", [&] { return ops::sigmoid(x); }, {{"x", x}});
    check("gelu", [&] { return ops::gelu(x); }, {{"x", x}});
    check("geglu", [&] { return ops::geglu(x); }, {{"x", x}});
    check("mean", [&] { return ops::mean(ops::mul(x, x)); }, {{"x", x}});
    check("concat/slice", [&] { return ops::slice_channels(ops::concat_channels({x, ops::mul(y, y)}), 2, 4); },
          {{"x", x}, {"y", y}});
    Tensor gamma = random_tensor({4}, rng), beta = random_tensor({4}, rng);
    check("layer_norm", [&] { return ops::layer_norm_channels(x, gamma, beta); },
          {{"x", x}, {"gamma", gamma}, {"beta", beta}});
    check("interpolate", [&] { return ops::interpolate_bilinear(x, 11, 3); }, {{"x", x}});
    check("pools", [&] {
        return ops::concat_channels({ops::interpolate_bilinear(ops::global_avg_pool(x), 6, 5),
                                     ops::interpolate_bilinear(ops::global_max_pool(x), 6, 5), ops::spatial_mean(x),
                                     ops::spatial_max(x)});
    }, {{"x", x}});
    check("pad/crop", [&] { return ops::crop(ops::reflect_pad(x, 2, 3, 4, 1), 1, 2, 6, 5); }, {{"x", x}});
    check("unfold/fold", [&] { return ops::patch_fold(ops::mul(ops::patch_unfold(x, 4), ops::patch_unfold(y, 4)), 4, 6, 5, 4); },
          {{"x", x}, {"y", y}});
    Tensor q = random_tensor({3, 8, 8}, rng), k = random_tensor({3, 8, 8}, rng), wf = random_tensor({8, 8}, rng);
    check("freq_correlate", [&] { return ops::freq_correlate(q, k); }, {{"q", q}, {"k", k}});
    check("freq_filter", [&] { return ops::freq_filter(q, wf); }, {{"z", q}, {"W", wf}});
    Tensor dw = random_tensor({4, 2, 3, 3}, rng), db = random_tensor({8}, rng);
    check("depthwise_conv2d", [&] { return ops::depthwise_conv2d(x, dw, db, {1, 1}); }, {{"x", x}, {"w", dw}, {"b", db}});
    Tensor cw = random_tensor({3, 4, 3, 3}, rng), cb = random_tensor({3}, rng);
    check("conv2d", [&] { return ops::conv2d(x, cw, cb, {2, 1}); }, {{"x", x}, {"w", cw}, {"b", cb}});
    Tensor r = random_tensor({2, 6, 6}, rng, 0.0, 1.0), g = random_tensor({2, 6, 6}, rng, 0.0, 1.0);
    check("charbonnier", [&] { return losses::charbonnier(r, g); }, {{"r", r}});
    check("fft_amplitude", [&] { return losses::fft_amplitude_loss(r, g); }, {{"r", r}});
    check("fft_phase", [&] { return losses::fft_phase_loss(r, g); }, {{"r", r}});
}

void blocks_suite(SuiteReport& rep, std::uint64_t seed) {
    const std::size_t c = 4;
    Rng rng(seed);
    Tensor x = random_tensor({c, 12, 10}, rng);
    auto record = [&](const std::string& block, const GradCheckReport& g) {
        rep.checks.push_back(from_report("block " + block, g));
        rep.covered.insert(block);
    };
    {
        Bench b(seed + 1);
        blocks::Rdb m(b.scope(), c, 2);
        b.jitter(0.1);
        record("RDB", b.run([&] { return m.forward(x); }, {x}, 120, seed));
    }
    {
        Bench b(seed + 2);
        blocks::Sdb m(b.scope(), c, 2);
        record("SDB", b.run([&] { return m.forward(x); }, {x}, 200, seed));
    }
    {
        Bench b(seed + 3);
        blocks::Fsas m(b.scope(), c, 8);
        b.jitter(0.3);
        record("FSAS", b.run([&] { return m.forward(x); }, {x}, 120, seed));
    }
    {
        Bench b(seed + 4);
        blocks::Dffn m(b.scope(), c, 8);
        b.jitter(0.3);
        record("DFFN", b.run([&] { return m.forward(x); }, {x}, 120, seed));
    }
    {
        Bench b(seed + 5);
        blocks::Fdb m(b.scope(), c, 8, true);
        b.jitter(0.3);
        record("FDB", b.run([&] { return m.forward(x); }, {x}, 120, seed));
    }
    {
        Bench b(seed + 6);
        blocks::ChannelAttention m(b.scope(), 16, 8);
        Tensor z = random_tensor({16, 6, 5}, rng);
        record("CA", b.run([&] { return m.forward(z); }, {z}, 120, seed));
    }
    {
        Bench b(seed + 7);
        blocks::SpatialAttention m(b.scope(), 7);
        record("SA", b.run([&] { return m.forward(x); }, {x}, 120, seed));
    }
    Tensor y2 = random_tensor({6, 6, 5}, rng);
    {
        Bench b(seed + 8);
        blocks::Mib m(b.scope(), {c, 6}, 1);
        b.jitter(0.1);
        record("MIB", b.run([&] { return m.forward({x, y2}); }, {x, y2}, 120, seed));
    }
    {
        Bench b(seed + 9);
        // reduction 1 keeps four hidden units in its channel attention; with one
        // unit near zero every fc2 gradient drops under the difference noise
        blocks::Amib m(b.scope(), {c, 6}, 0, {}, 1);
        b.jitter(0.1);
        record("AMIB", b.run([&] { return m.forward({x, y2}); }, {x, y2}, 200, seed));
    }
    {
        Bench b(seed + 10);
        blocks::Sam m(b.scope(), c, 3);
        Tensor img = random_tensor({3, 12, 10}, rng, 0.0, 1.0);
        record("SAM", b.run([&] {
            auto o = m.forward(x, img);
            return ops::concat_channels({o.features, o.attention, o.image});
        }, {x, img}, 120, seed));
    }
    {
        Bench b(seed + 11);
        blocks::Fam m(b.scope(), 6, c);
        Tensor prev = random_tensor({6, 24, 20}, rng);
        record("FAM", b.run([&] { return m.forward(x, prev); }, {x, prev}, 120, seed));
    }
    std::string missing;
    for (const auto& name : required_blocks()) {
        if (!rep.covered.count(name)) missing += " " + name;
    }
    CheckResult cov{"block coverage", static_cast<double>(rep.covered.size()), 0.0, missing.empty(),
                    missing.empty() ? std::to_string(rep.covered.size()) + "/" + std::to_string(required_blocks().size()) + " block kinds"
                                    : "missing:" + missing};
    rep.checks.push_back(cov);
}

void model_suite(SuiteReport& rep, std::uint64_t seed) {
    const model::Model m(model::ModelConfig::desk(), seed);
    Rng rng(seed + 1);
    Tensor x = random_tensor({3, 32, 32}, rng, 0.0, 1.0);
    std::vector<std::pair<std::string, Tensor>> groups{{"input", x}};
    for (const auto& e : m.parameters().entries()) groups.emplace_back(e.name, e.tensor);
    const auto g = gradient_check([&] {
        auto out = m.forward(x);
        return ops::concat_channels({out.restored[0], ops::interpolate_bilinear(out.restored[1], 32, 32)});
    }, groups, {200, 1e-5, seed});
    rep.checks.push_back(from_report("model desk 32x32", g));
}

void invariants(SuiteReport& rep, std::uint64_t seed) {
    Rng rng(seed);
    const Tensor r = random_tensor({3, 16, 16}, rng, 0.0, 1.0);
    rep.checks.push_back(closed_form("charbonnier(R,R) = 1e-3",
                                     std::abs(losses::charbonnier(r, r).item() - losses::kCharbonnierEps), 1e-15));
    const auto f = losses::fft_loss(r, r);
    rep.checks.push_back(closed_form("fft_loss(R,R) = (0,0)", std::abs(f.amplitude.item()) + std::abs(f.phase.item()), 1e-12));
    rep.checks.push_back(closed_form("ssim(R,R) = 1", std::abs(losses::ssim(r, r).item() - 1.0), 1e-12));

    const Tensor x = random_tensor({2, 12, 10}, rng);
    const Tensor back = ifft2(fft2(x));
    rep.checks.push_back(closed_form("ifft2(fft2(x)) = x", max_abs_diff(back, x), 1e-12));
    const ComplexTensor fx = fft2(x);
    double space = 0.0, freq = 0.0;
    for (double v : x.values()) space += v * v;
    for (std::size_t i = 0; i < fx.numel(); ++i) freq += std::norm(fx.at(i));
    rep.checks.push_back(closed_form("Parseval", std::abs(space - freq / 120.0) / space, 1e-12));

    const Tensor psf = degrade::aperture_to_psf(degrade::display_aperture(64, 8, 4, 7), 31);
    double sum = 0.0;
    for (double v : psf.values()) sum += v;
    rep.checks.push_back(closed_form("PSF sums to 1", std::abs(sum - 1.0), 1e-12));

    const model::Model m(model::ModelConfig::desk(), seed);
    const std::string bytes = model::serialize_checkpoint(model::make_checkpoint(m));
    const bool same = model::serialize_checkpoint(model::parse_checkpoint(bytes)) == bytes;
    rep.checks.push_back(CheckResult{"checkpoint roundtrip bitwise", same ? 0.0 : 1.0, 0.5, same, {}});
}

} // namespace

bool SuiteReport::passed() const {
    for (const auto& c : checks) {
        if (!c.passed) return false;
    }
    return !checks.empty();
}

const CheckResult* SuiteReport::worst() const {
    const CheckResult* w = nullptr;
    double ratio = -1.0;
    for (const auto& c : checks) {
        const double q = c.tolerance > 0.0 ? c.value / c.tolerance : (c.passed ? 0.0 : 1e300);
        if (q > ratio) {
            ratio = q;
            w = &c;
        }
    }
    return w;
}

std::vector<std::string> SuiteReport::lines() const {
    std::vector<std::string> out;
    for (const auto& c : checks) {
        std::ostringstream line;
        line << (c.passed ? "ok   " : "FAIL ") << c.name << ": " << std::setprecision(3) << std::scientific << c.value;
        if (c.tolerance > 0.0) line << " < " << c.tolerance;
        if (!c.detail.empty()) line << " (" << c.detail << ")";
        out.push_back(line.str());
    }
    return out;
}

const std::vector<std::string>& required_blocks() {
    static const std::vector<std::string> names{"RDB", "SDB", "FSAS", "DFFN", "FDB", "CA", "SA", "MIB", "AMIB", "SAM", "FAM"};
    return names;
}

SuiteReport gradcheck_scope(const std::string& scope, std::uint64_t seed) {
    SuiteReport rep;
    rep.scope = scope;
    if (scope == "tensor") {
        tensor_suite(rep, seed);
    } else if (scope == "blocks") {
        blocks_suite(rep, seed);
    } else if (scope == "model") {
        model_suite(rep, seed);
    } else {
        throw ConfigError("gradcheck: unknown scope '" + scope + "' (tensor, blocks or model)");
    }
    return rep;
}

SuiteReport selftest(std::uint64_t seed) {
    SuiteReport rep;
    rep.scope = "selftest";
    invariants(rep, seed);
    tensor_suite(rep, seed);
    blocks_suite(rep, seed);
    return rep;
}

} // namespace sfim::checks
