#include "sfim/core/optim.hpp"

#include <cmath>

namespace sfim {

void AdamWState::ensure(const std::vector<Tensor>& params) {
    if (m.empty()) {
        for (const auto& p : params) {
            m.emplace_back(p.numel(), 0.0);
            v.emplace_back(p.numel(), 0.0);
        }
    }
    if (m.size() != params.size()) throw ShapeError("adamw: state holds " + std::to_string(m.size()) +
                                                    " tensors, got " + std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (m[i].size() != params[i].numel() || v[i].size() != params[i].numel()) {
            throw ShapeError("adamw: state shape mismatch at tensor " + std::to_string(i));
        }
    }
}

void adamw_step(const std::vector<Tensor>& params, AdamWState& state, double lr, const AdamWConfig& cfg) {
    state.ensure(params);
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor p = params[i];
        auto pv = p.mutable_values();
        auto g = p.grad();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < pv.size(); ++j) {
            pv[j] -= lr * cfg.weight_decay * pv[j];
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            pv[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg.eps);
        }
    }
}

double clip_grad_norm(const std::vector<Tensor>& params, double max_norm) {
    double sq = 0.0;
    for (const auto& p : params) {
        for (double g : p.grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) throw NumericError("clip_grad_norm: non-finite gradient norm");
    if (norm > max_norm && norm > 0.0) {
        const double scale = max_norm / norm;
        for (auto p : params) {
            if (!p.has_grad()) continue;
            for (double& g : p.mutable_grad()) g *= scale;
        }
    }
    return norm;
}

} // namespace sfim
