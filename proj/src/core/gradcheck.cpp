#include "sfim/core/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "sfim/core/ops.hpp"
#include "sfim/core/rng.hpp"
#include "sfim/core/tape.hpp"

namespace sfim {

double GradCheckReport::max_rel_error() const {
    double worst = 0.0;
    for (const auto& g : groups) worst = std::max(worst, g.max_rel_error);
    return worst;
}

double relative_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    return std::abs(analytic - numeric) / denom;
}

GradCheckReport gradient_check(const std::function<Tensor()>& forward,
                               const std::vector<std::pair<std::string, Tensor>>& groups,
                               const GradCheckOptions& opt) {
    GradCheckReport report;
    try {
        for (const auto& [name, t] : groups) {
            Tensor p = t;
            p.set_requires_grad(true);
            p.zero_grad();
        }
        Tensor projection;
        {
            Tape tape;
            TapeScope scope(tape);
            Tensor y = forward();
            projection = Tensor(y.shape());
            Rng rng(derive_seed(opt.seed, 0x9c));
            for (double& w : projection.mutable_values()) w = rng.uniform(-1.0, 1.0);
            tape.backward(ops::weighted_sum(y, projection));
        }
        // Differences are taken per output element so untouched outputs cancel exactly.
        auto directional = [&](Tensor p, std::size_t j) {
            auto v = p.mutable_values();
            const double saved = v[j];
            // divide by the step actually represented, not the nominal 2h
            const double up = saved + opt.h, down = saved - opt.h;
            v[j] = up;
            const Tensor plus = forward();
            v[j] = down;
            const Tensor minus = forward();
            v[j] = saved;
            double acc = 0.0;
            auto pw = projection.values();
            auto a = plus.values();
            auto b = minus.values();
            for (std::size_t i = 0; i < a.size(); ++i) acc += pw[i] * (a[i] - b[i]);
            return acc / (up - down);
        };
        const std::size_t per_group =
            groups.empty() ? 0 : std::max<std::size_t>(1, (opt.samples + groups.size() - 1) / groups.size());
        Rng pick(derive_seed(opt.seed, 0x51));
        for (const auto& [name, t] : groups) {
            GradCheckGroup g;
            g.name = name;
            const std::size_t n = t.numel();
            std::vector<std::size_t> coords;
            if (n <= per_group) {
                for (std::size_t j = 0; j < n; ++j) coords.push_back(j);
            } else {
                for (std::size_t k = 0; k < per_group; ++k) coords.push_back(pick.below(n));
            }
            auto grad = t.grad();
            for (std::size_t j : coords) {
                const double a = grad[j];
                const double num = directional(t, j);
                const double e = relative_error(a, num);
                ++g.sampled;
                if (e >= g.max_rel_error) {
                    g.max_rel_error = e;
                    g.analytic = a;
                    g.numeric = num;
                }
            }
            report.groups.push_back(g);
        }
    } catch (const std::exception& e) {
        report.failure = e.what();
    }
    return report;
}

} // namespace sfim
