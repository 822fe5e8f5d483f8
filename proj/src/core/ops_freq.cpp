#include <algorithm>
#include <complex>
#include <vector>

#include "ops_common.hpp"
#include "sfim/core/fft.hpp"
#include "sfim/core/parallel.hpp"

namespace sfim::ops {

using detail::NodePtr;

namespace {

void load(std::vector<cplx>& buf, const double* src, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) buf[i] = {src[i], 0.0};
}

void accumulate_real(double* dst, const std::vector<cplx>& buf) {
    for (std::size_t i = 0; i < buf.size(); ++i) dst[i] += buf[i].real();
}

void require_patches(const char* op, const Tensor& t) {
    detail::require_rank(op, t, 3);
    if (t.numel() == 0) throw ShapeError(std::string(op) + ": empty input");
}

} // namespace

Tensor freq_correlate(const Tensor& q, const Tensor& k) {
    require_patches("freq_correlate", q);
    if (q.shape() != k.shape()) {
        throw ShapeError("freq_correlate: " + shape_string(q.shape()) + " vs " + shape_string(k.shape()));
    }
    const std::size_t n = q.dim(0), h = q.dim(1), w = q.dim(2), plane = h * w;
    Tensor out(q.shape());
    {
        const double* qv = q.values().data();
        const double* kv = k.values().data();
        double* ov = out.mutable_values().data();
        parallel_for(n, 16, [&](std::size_t begin, std::size_t end) {
            std::vector<cplx> fq(plane), fk(plane);
            for (std::size_t p = begin; p < end; ++p) {
                load(fq, qv + p * plane, plane);
                load(fk, kv + p * plane, plane);
                fft2_inplace(fq, h, w, false);
                fft2_inplace(fk, h, w, false);
                for (std::size_t i = 0; i < plane; ++i) fq[i] *= std::conj(fk[i]);
                fft2_inplace(fq, h, w, true);
                for (std::size_t i = 0; i < plane; ++i) ov[p * plane + i] = fq[i].real();
            }
        });
    }
    detail::check_finite("freq_correlate", out);
    if (needs_grad({&q, &k})) {
        NodePtr qn = q.handle(), kn = k.handle(), on = out.handle();
        active_tape()->record("freq_correlate", {&q, &k}, out, [qn, kn, on, n, h, w, plane] {
            double* gq = detail::grad_sink(qn);
            double* gk = detail::grad_sink(kn);
            parallel_for(n, 16, [&](std::size_t begin, std::size_t end) {
                std::vector<cplx> g(plane), fq(plane), fk(plane), t(plane);
                for (std::size_t p = begin; p < end; ++p) {
                    load(g, on->grad.data() + p * plane, plane);
                    fft2_inplace(g, h, w, false);
                    if (gq) {
                        // dq = Re(IFFT(G * Fk))
                        load(fk, kn->value.data() + p * plane, plane);
                        fft2_inplace(fk, h, w, false);
                        for (std::size_t i = 0; i < plane; ++i) t[i] = g[i] * fk[i];
                        fft2_inplace(t, h, w, true);
                        accumulate_real(gq + p * plane, t);
                    }
                    if (gk) {
                        // dk = Re(IFFT(Fq * conj(G)))
                        load(fq, qn->value.data() + p * plane, plane);
                        fft2_inplace(fq, h, w, false);
                        for (std::size_t i = 0; i < plane; ++i) t[i] = fq[i] * std::conj(g[i]);
                        fft2_inplace(t, h, w, true);
                        accumulate_real(gk + p * plane, t);
                    }
                }
            });
        });
    }
    return out;
}

Tensor freq_filter(const Tensor& z, const Tensor& weight) {
    require_patches("freq_filter", z);
    const std::size_t n = z.dim(0), h = z.dim(1), w = z.dim(2), plane = h * w;
    std::size_t groups = 1;
    if (weight.rank() == 2 && weight.dim(0) == h && weight.dim(1) == w) {
        groups = 1;
    } else if (weight.rank() == 3 && weight.dim(1) == h && weight.dim(2) == w && weight.dim(0) > 0 &&
               n % weight.dim(0) == 0) {
        groups = weight.dim(0);
    } else {
        throw ShapeError("freq_filter: weight " + shape_string(weight.shape()) + " does not fit patches " +
                         shape_string(z.shape()));
    }
    const std::size_t per_group = n / groups;
    Tensor out(z.shape());
    {
        const double* zv = z.values().data();
        const double* wv = weight.values().data();
        double* ov = out.mutable_values().data();
        parallel_for(n, 16, [&](std::size_t begin, std::size_t end) {
            std::vector<cplx> buf(plane);
            for (std::size_t p = begin; p < end; ++p) {
                const double* wp = wv + (p / per_group) * plane;
                load(buf, zv + p * plane, plane);
                fft2_inplace(buf, h, w, false);
                for (std::size_t i = 0; i < plane; ++i) buf[i] *= wp[i];
                fft2_inplace(buf, h, w, true);
                for (std::size_t i = 0; i < plane; ++i) ov[p * plane + i] = buf[i].real();
            }
        });
    }
    detail::check_finite("freq_filter", out);
    if (needs_grad({&z, &weight})) {
        NodePtr zn = z.handle(), wn = weight.handle(), on = out.handle();
        active_tape()->record("freq_filter", {&z, &weight}, out, [zn, wn, on, n, h, w, plane, groups, per_group] {
            double* gz = detail::grad_sink(zn);
            double* gw = detail::grad_sink(wn);
            const double inv = 1.0 / static_cast<double>(plane);
            // Weight grads are reduced per group, so partition over groups when
            // they are needed and over patches otherwise.
            auto run = [&](std::size_t p, std::vector<cplx>& g, std::vector<cplx>& x, double* gw_group) {
                const double* wp = wn->value.data() + (p / per_group) * plane;
                load(g, on->grad.data() + p * plane, plane);
                fft2_inplace(g, h, w, false);
                if (gw_group) {
                    // dW[k] = Re(X[k] conj(G[k])) / (h w)
                    load(x, zn->value.data() + p * plane, plane);
                    fft2_inplace(x, h, w, false);
                    for (std::size_t i = 0; i < plane; ++i) gw_group[i] += (x[i] * std::conj(g[i])).real() * inv;
                }
                if (gz) {
                    for (std::size_t i = 0; i < plane; ++i) g[i] *= wp[i];
                    fft2_inplace(g, h, w, true);
                    accumulate_real(gz + p * plane, g);
                }
            };
            if (gw) {
                if (groups == 1) {
                    // shared weight: per-worker partial sums, combined in a fixed order
                    const std::size_t chunks = std::min<std::size_t>(n, 64);
                    std::vector<std::vector<double>> acc(chunks, std::vector<double>(plane, 0.0));
                    parallel_for(chunks, 1, [&](std::size_t begin, std::size_t end) {
                        std::vector<cplx> g(plane), x(plane);
                        for (std::size_t c = begin; c < end; ++c) {
                            const std::size_t lo = c * n / chunks, hi = (c + 1) * n / chunks;
                            for (std::size_t p = lo; p < hi; ++p) run(p, g, x, acc[c].data());
                        }
                    });
                    for (const auto& a : acc) {
                        for (std::size_t i = 0; i < plane; ++i) gw[i] += a[i];
                    }
                } else {
                    parallel_for(groups, 1, [&](std::size_t begin, std::size_t end) {
                        std::vector<cplx> g(plane), x(plane);
                        for (std::size_t gi = begin; gi < end; ++gi) {
                            for (std::size_t p = gi * per_group; p < (gi + 1) * per_group; ++p) {
                                run(p, g, x, gw + gi * plane);
                            }
                        }
                    });
                }
            } else {
                parallel_for(n, 16, [&](std::size_t begin, std::size_t end) {
                    std::vector<cplx> g(plane), x(plane);
                    for (std::size_t p = begin; p < end; ++p) run(p, g, x, nullptr);
                });
            }
        });
    }
    return out;
}

} // namespace sfim::ops
