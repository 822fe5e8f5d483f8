#include <cmath>
#include <numbers>
#include <vector>

#include "ops_common.hpp"

namespace sfim::ops {

using detail::NodePtr;

namespace {

// Flat source offsets of a and b for every output element.
struct Broadcast {
    Shape out_shape;
    std::vector<std::size_t> a_index;
    std::vector<std::size_t> b_index;
    bool trivial = false;
};

Broadcast make_broadcast(const char* op, const Tensor& a, const Tensor& b) {
    Broadcast bc;
    if (a.shape() == b.shape()) {
        bc.out_shape = a.shape();
        bc.trivial = true;
        return bc;
    }
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() != sb.size()) {
        throw ShapeError(std::string(op) + ": rank mismatch " + shape_string(sa) + " vs " + shape_string(sb));
    }
    const std::size_t rank = sa.size();
    bc.out_shape.resize(rank);
    for (std::size_t d = 0; d < rank; ++d) {
        if (sa[d] == sb[d] || sb[d] == 1) {
            bc.out_shape[d] = sa[d];
        } else if (sa[d] == 1) {
            bc.out_shape[d] = sb[d];
        } else {
            throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(sa) + " vs " + shape_string(sb));
        }
    }
    std::vector<std::size_t> stride_a(rank), stride_b(rank);
    std::size_t ra = 1, rb = 1;
    for (std::size_t d = rank; d-- > 0;) {
        stride_a[d] = sa[d] == 1 ? 0 : ra;
        stride_b[d] = sb[d] == 1 ? 0 : rb;
        ra *= sa[d];
        rb *= sb[d];
    }
    const std::size_t n = shape_numel(bc.out_shape);
    bc.a_index.resize(n);
    bc.b_index.resize(n);
    std::vector<std::size_t> idx(rank, 0);
    std::size_t ia = 0, ib = 0;
    for (std::size_t i = 0; i < n; ++i) {
        bc.a_index[i] = ia;
        bc.b_index[i] = ib;
        for (std::size_t d = rank; d-- > 0;) {
            ++idx[d];
            ia += stride_a[d];
            ib += stride_b[d];
            if (idx[d] < bc.out_shape[d]) break;
            ia -= stride_a[d] * idx[d];
            ib -= stride_b[d] * idx[d];
            idx[d] = 0;
        }
    }
    return bc;
}

enum class Binary { Add, Sub, Mul };

Tensor binary(const char* name, Binary kind, const Tensor& a, const Tensor& b) {
    auto bc = std::make_shared<Broadcast>(make_broadcast(name, a, b));
    Tensor out(bc->out_shape);
    auto av = a.values();
    auto bv = b.values();
    auto ov = out.mutable_values();
    const std::size_t n = ov.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double x = av[bc->trivial ? i : bc->a_index[i]];
        const double y = bv[bc->trivial ? i : bc->b_index[i]];
        ov[i] = kind == Binary::Add ? x + y : kind == Binary::Sub ? x - y : x * y;
    }
    detail::check_finite(name, out);
    if (needs_grad({&a, &b})) {
        NodePtr an = a.handle(), bn = b.handle(), on = out.handle();
        active_tape()->record(name, {&a, &b}, out, [an, bn, on, bc, kind] {
            const auto& g = on->grad;
            double* ga = detail::grad_sink(an);
            double* gb = detail::grad_sink(bn);
            for (std::size_t i = 0; i < g.size(); ++i) {
                const std::size_t ia = bc->trivial ? i : bc->a_index[i];
                const std::size_t ib = bc->trivial ? i : bc->b_index[i];
                switch (kind) {
                case Binary::Add:
                    if (ga) ga[ia] += g[i];
                    if (gb) gb[ib] += g[i];
                    break;
                case Binary::Sub:
                    if (ga) ga[ia] += g[i];
                    if (gb) gb[ib] -= g[i];
                    break;
                case Binary::Mul:
                    if (ga) ga[ia] += g[i] * bn->value[ib];
                    if (gb) gb[ib] += g[i] * an->value[ia];
                    break;
                }
            }
        });
    }
    return out;
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

double gelu_grad(double x) {
    const double u = kGeluC * (x + kGeluA * x * x * x);
    const double t = std::tanh(u);
    const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

// Pointwise op whose derivative is a function of (input, output).
template <class F, class D>
Tensor unary(const char* name, const Tensor& x, F f, D df) {
    Tensor out(x.shape());
    auto xv = x.values();
    auto ov = out.mutable_values();
    for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = f(xv[i]);
    detail::check_finite(name, out);
    if (needs_grad({&x})) {
        NodePtr xn = x.handle(), on = out.handle();
        active_tape()->record(name, {&x}, out, [xn, on, df] {
            double* gx = xn->grad_buffer().data();
            const auto& g = on->grad;
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xn->value[i], on->value[i]);
        });
    }
    return out;
}

} // namespace

double gelu_value(double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x))); }

Tensor add(const Tensor& a, const Tensor& b) { return binary("add", Binary::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary("sub", Binary::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary("mul", Binary::Mul, a, b); }

Tensor add_scalar(const Tensor& x, double s) {
    return unary("add_scalar", x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& x, double s) {
    return unary("mul_scalar", x, [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Tensor sigmoid(const Tensor& x) {
    return unary(
        "sigmoid", x,
        [](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
    return unary("relu", x, [](double v) { return v > 0 ? v : 0.0; }, [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
    return unary("gelu", x, gelu_value, [](double v, double) { return gelu_grad(v); });
}

Tensor geglu(const Tensor& x) {
    detail::require_rank("geglu", x, 3);
    if (x.dim(0) % 2 != 0) throw ShapeError("geglu: channel count must be even, got " + shape_string(x.shape()));
    const std::size_t half = x.dim(0) / 2;
    const std::size_t plane = x.dim(1) * x.dim(2);
    const std::size_t n = half * plane;
    Tensor out(Shape{half, x.dim(1), x.dim(2)});
    auto xv = x.values();
    auto ov = out.mutable_values();
    for (std::size_t i = 0; i < n; ++i) ov[i] = xv[i] * gelu_value(xv[n + i]);
    detail::check_finite("geglu", out);
    if (needs_grad({&x})) {
        NodePtr xn = x.handle(), on = out.handle();
        active_tape()->record("geglu", {&x}, out, [xn, on, n] {
            double* gx = xn->grad_buffer().data();
            const auto& g = on->grad;
            const auto& v = xn->value;
            for (std::size_t i = 0; i < n; ++i) {
                gx[i] += g[i] * gelu_value(v[n + i]);
                gx[n + i] += g[i] * v[i] * gelu_grad(v[n + i]);
            }
        });
    }
    return out;
}

Tensor sum(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    Tensor out = Tensor::scalar(acc);
    detail::check_finite("sum", out);
    if (needs_grad({&x})) {
        NodePtr xn = x.handle(), on = out.handle();
        active_tape()->record("sum", {&x}, out, [xn, on] {
            double* gx = xn->grad_buffer().data();
            const double g = on->grad[0];
            for (std::size_t i = 0; i < xn->value.size(); ++i) gx[i] += g;
        });
    }
    return out;
}

Tensor mean(const Tensor& x) { return mul_scalar(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor weighted_sum(const Tensor& x, const Tensor& w) {
    if (x.shape() != w.shape()) {
        throw ShapeError("weighted_sum: " + shape_string(x.shape()) + " vs " + shape_string(w.shape()));
    }
    double acc = 0.0;
    auto xv = x.values();
    auto wv = w.values();
    for (std::size_t i = 0; i < xv.size(); ++i) acc += xv[i] * wv[i];
    Tensor out = Tensor::scalar(acc);
    detail::check_finite("weighted_sum", out);
    if (needs_grad({&x})) {
        NodePtr xn = x.handle(), wn = w.handle(), on = out.handle();
        active_tape()->record("weighted_sum", {&x}, out, [xn, wn, on] {
            double* gx = xn->grad_buffer().data();
            const double g = on->grad[0];
            for (std::size_t i = 0; i < xn->value.size(); ++i) gx[i] += g * wn->value[i];
        });
    }
    return out;
}

} // namespace sfim::ops
