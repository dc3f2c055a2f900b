#include "octarec/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "octarec/parallel.hpp"

namespace octarec::nn {

namespace {

void check(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}

// Below this many multiply-accumulates a convolution runs single-threaded.
constexpr std::int64_t kParallelMacThreshold = 200'000;

} // namespace

template <typename T>
Tensor4<T> conv2d(const Tensor4<T>& x, const Tensor4<T>& k, std::span<const T> bias, int pad) {
    check(k.c == x.c, "conv2d: kernel channel count != input channels");
    check(static_cast<int>(bias.size()) == k.n, "conv2d: bias size != output channels");
    check(k.h % 2 == 1 && k.w % 2 == 1, "conv2d: kernel must be odd-sized");
    check(pad >= 0, "conv2d: negative padding");
    const int h = x.h, w = x.w, kh = k.h, kw = k.w, ci_n = x.c, co_n = k.n;
    Tensor4<T> y(x.n, co_n, h, w);

    const std::int64_t macs = static_cast<std::int64_t>(x.n) * co_n * ci_n * kh * kw * h * w;
    auto task = [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t t = b; t < e; ++t) {
            const int in = static_cast<int>(t / co_n);
            const int co = static_cast<int>(t % co_n);
            T* yp = y.plane(in, co);
            std::fill(yp, yp + static_cast<size_t>(h) * w, bias[co]);
            for (int ci = 0; ci < ci_n; ++ci) {
                const T* xp = x.plane(in, ci);
                const T* kp = k.plane(co, ci);
                for (int ky = 0; ky < kh; ++ky) {
                    const int dy = ky - pad;
                    const int oy_lo = std::max(0, -dy);
                    const int oy_hi = std::min(h, h - dy);
                    for (int kx = 0; kx < kw; ++kx) {
                        const T kv = kp[ky * kw + kx];
                        if (kv == T(0)) continue;
                        const int dx = kx - pad;
                        const int ox_lo = std::max(0, -dx);
                        const int ox_hi = std::min(w, w - dx);
                        for (int oy = oy_lo; oy < oy_hi; ++oy) {
                            T* yrow = yp + static_cast<size_t>(oy) * w;
                            const T* xrow = xp + static_cast<size_t>(oy + dy) * w;
                            for (int ox = ox_lo; ox < ox_hi; ++ox)
                                yrow[ox] += kv * xrow[ox + dx];
                        }
                    }
                }
            }
        }
    };
    if (macs < kParallelMacThreshold)
        task(0, static_cast<std::int64_t>(x.n) * co_n);
    else
        parallel_for(static_cast<std::int64_t>(x.n) * co_n, task);
    return y;
}

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor4<T>& x, const Tensor4<T>& k, const Tensor4<T>& gy,
                               int pad) {
    check(gy.n == x.n && gy.c == k.n && gy.h == x.h && gy.w == x.w,
          "conv2d_backward: gradient shape mismatch");
    const int h = x.h, w = x.w, kh = k.h, kw = k.w, ci_n = x.c, co_n = k.n;
    Conv2dGrads<T> g{x.zeros_like(), k.zeros_like(), std::vector<T>(co_n, T(0))};

    // bias + kernel gradients, one worker per output channel
    auto wtask = [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t co = b; co < e; ++co) {
            T gb = T(0);
            for (int in = 0; in < x.n; ++in) {
                const T* gp = gy.plane(in, static_cast<int>(co));
                for (size_t i = 0; i < static_cast<size_t>(h) * w; ++i) gb += gp[i];
                for (int ci = 0; ci < ci_n; ++ci) {
                    const T* xp = x.plane(in, ci);
                    T* gkp = g.gk.plane(static_cast<int>(co), ci);
                    for (int ky = 0; ky < kh; ++ky) {
                        const int dy = ky - pad;
                        const int oy_lo = std::max(0, -dy);
                        const int oy_hi = std::min(h, h - dy);
                        for (int kx = 0; kx < kw; ++kx) {
                            const int dx = kx - pad;
                            const int ox_lo = std::max(0, -dx);
                            const int ox_hi = std::min(w, w - dx);
                            T acc = T(0);
                            for (int oy = oy_lo; oy < oy_hi; ++oy) {
                                const T* grow = gp + static_cast<size_t>(oy) * w;
                                const T* xrow = xp + static_cast<size_t>(oy + dy) * w;
                                for (int ox = ox_lo; ox < ox_hi; ++ox)
                                    acc += grow[ox] * xrow[ox + dx];
                            }
                            gkp[ky * kw + kx] += acc;
                        }
                    }
                }
            }
            g.gbias[co] = gb;
        }
    };

    // input gradient, one worker per (batch, input-channel) plane
    auto xtask = [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t t = b; t < e; ++t) {
            const int in = static_cast<int>(t / ci_n);
            const int ci = static_cast<int>(t % ci_n);
            T* gxp = g.gx.plane(in, ci);
            for (int co = 0; co < co_n; ++co) {
                const T* gp = gy.plane(in, co);
                const T* kp = k.plane(co, ci);
                for (int ky = 0; ky < kh; ++ky) {
                    const int dy = ky - pad; // iy = oy + dy
                    const int iy_lo = std::max(0, dy);
                    const int iy_hi = std::min(h, h + dy);
                    for (int kx = 0; kx < kw; ++kx) {
                        const T kv = kp[ky * kw + kx];
                        if (kv == T(0)) continue;
                        const int dx = kx - pad;
                        const int ix_lo = std::max(0, dx);
                        const int ix_hi = std::min(w, w + dx);
                        for (int iy = iy_lo; iy < iy_hi; ++iy) {
                            T* gxrow = gxp + static_cast<size_t>(iy) * w;
                            const T* grow = gp + static_cast<size_t>(iy - dy) * w;
                            for (int ix = ix_lo; ix < ix_hi; ++ix)
                                gxrow[ix] += kv * grow[ix - dx];
                        }
                    }
                }
            }
        }
    };

    const std::int64_t macs = static_cast<std::int64_t>(x.n) * co_n * ci_n * kh * kw * h * w;
    if (macs < kParallelMacThreshold) {
        wtask(0, co_n);
        xtask(0, static_cast<std::int64_t>(x.n) * ci_n);
    } else {
        parallel_for(co_n, wtask);
        parallel_for(static_cast<std::int64_t>(x.n) * ci_n, xtask);
    }
    return g;
}

template <typename T>
Tensor4<T> relu(const Tensor4<T>& x) {
    Tensor4<T> y = x;
    for (auto& v : y.v) v = v > T(0) ? v : T(0);
    return y;
}

template <typename T>
Tensor4<T> relu_backward(const Tensor4<T>& x, const Tensor4<T>& gy) {
    check(x.same_shape(gy), "relu_backward: shape mismatch");
    Tensor4<T> gx = gy;
    for (size_t i = 0; i < gx.v.size(); ++i)
        if (x.v[i] <= T(0)) gx.v[i] = T(0);
    return gx;
}

template <typename T>
Tensor4<T> sigmoid(const Tensor4<T>& x) {
    Tensor4<T> y = x;
    for (auto& v : y.v) {
        if (v >= T(0)) {
            v = T(1) / (T(1) + std::exp(-v));
        } else {
            const T e = std::exp(v);
            v = e / (T(1) + e);
        }
    }
    return y;
}

template <typename T>
Tensor4<T> sigmoid_backward(const Tensor4<T>& y, const Tensor4<T>& gy) {
    check(y.same_shape(gy), "sigmoid_backward: shape mismatch");
    Tensor4<T> gx = gy;
    for (size_t i = 0; i < gx.v.size(); ++i) gx.v[i] *= y.v[i] * (T(1) - y.v[i]);
    return gx;
}

template <typename T>
MaxPool2Result<T> maxpool2(const Tensor4<T>& x) {
    check(x.h % 2 == 0 && x.w % 2 == 0, "maxpool2: odd spatial dimensions");
    MaxPool2Result<T> r{Tensor4<T>(x.n, x.c, x.h / 2, x.w / 2), {}};
    r.argmax.resize(r.y.size());
    size_t o = 0;
    for (int in = 0; in < x.n; ++in)
        for (int ic = 0; ic < x.c; ++ic) {
            const T* xp = x.plane(in, ic);
            for (int oy = 0; oy < x.h / 2; ++oy)
                for (int ox = 0; ox < x.w / 2; ++ox, ++o) {
                    const T* base = xp + static_cast<size_t>(2 * oy) * x.w + 2 * ox;
                    const T cand[4] = {base[0], base[1], base[x.w], base[x.w + 1]};
                    int best = 0;
                    for (int i = 1; i < 4; ++i)
                        if (cand[i] > cand[best]) best = i;
                    r.y.v[o] = cand[best];
                    r.argmax[o] = static_cast<std::uint8_t>(best);
                }
        }
    return r;
}

template <typename T>
Tensor4<T> maxpool2_backward(const MaxPool2Result<T>& fwd, const Tensor4<T>& gy) {
    const Tensor4<T>& y = fwd.y;
    check(y.same_shape(gy), "maxpool2_backward: shape mismatch");
    Tensor4<T> gx(y.n, y.c, y.h * 2, y.w * 2);
    size_t o = 0;
    for (int in = 0; in < y.n; ++in)
        for (int ic = 0; ic < y.c; ++ic) {
            T* gxp = gx.plane(in, ic);
            for (int oy = 0; oy < y.h; ++oy)
                for (int ox = 0; ox < y.w; ++ox, ++o) {
                    const int a = fwd.argmax[o];
                    const size_t idx = static_cast<size_t>(2 * oy + a / 2) * gx.w + 2 * ox + a % 2;
                    gxp[idx] += gy.v[o];
                }
        }
    return gx;
}

template <typename T>
Tensor4<T> avgpool2(const Tensor4<T>& x) {
    check(x.h % 2 == 0 && x.w % 2 == 0, "avgpool2: odd spatial dimensions");
    Tensor4<T> y(x.n, x.c, x.h / 2, x.w / 2);
    size_t o = 0;
    for (int in = 0; in < x.n; ++in)
        for (int ic = 0; ic < x.c; ++ic) {
            const T* xp = x.plane(in, ic);
            for (int oy = 0; oy < y.h; ++oy)
                for (int ox = 0; ox < y.w; ++ox, ++o) {
                    const T* base = xp + static_cast<size_t>(2 * oy) * x.w + 2 * ox;
                    y.v[o] = (base[0] + base[1] + base[x.w] + base[x.w + 1]) * T(0.25);
                }
        }
    return y;
}

template <typename T>
Tensor4<T> avgpool2_backward(int in_h, int in_w, const Tensor4<T>& gy) {
    check(in_h == gy.h * 2 && in_w == gy.w * 2, "avgpool2_backward: shape mismatch");
    Tensor4<T> gx(gy.n, gy.c, in_h, in_w);
    size_t o = 0;
    for (int in = 0; in < gy.n; ++in)
        for (int ic = 0; ic < gy.c; ++ic) {
            T* gxp = gx.plane(in, ic);
            for (int oy = 0; oy < gy.h; ++oy)
                for (int ox = 0; ox < gy.w; ++ox, ++o) {
                    const T q = gy.v[o] * T(0.25);
                    T* base = gxp + static_cast<size_t>(2 * oy) * in_w + 2 * ox;
                    base[0] += q;
                    base[1] += q;
                    base[in_w] += q;
                    base[in_w + 1] += q;
                }
        }
    return gx;
}

namespace {

// Half-pixel-center source taps for one output axis of a x2 upsample.
template <typename T>
struct UpTap {
    int i0, i1;
    T f; // weight of i1
};

template <typename T>
std::vector<UpTap<T>> upsample_taps(int out_size, int in_size) {
    std::vector<UpTap<T>> taps(out_size);
    for (int o = 0; o < out_size; ++o) {
        double src = (o + 0.5) / 2.0 - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(in_size - 1));
        int i0 = static_cast<int>(std::floor(src));
        if (i0 > in_size - 1) i0 = in_size - 1;
        const int i1 = std::min(i0 + 1, in_size - 1);
        taps[o] = {i0, i1, static_cast<T>(src - i0)};
    }
    return taps;
}

} // namespace

template <typename T>
Tensor4<T> upsample2_bilinear(const Tensor4<T>& x) {
    Tensor4<T> y(x.n, x.c, x.h * 2, x.w * 2);
    const auto ty = upsample_taps<T>(y.h, x.h);
    const auto tx = upsample_taps<T>(y.w, x.w);
    for (int in = 0; in < x.n; ++in)
        for (int ic = 0; ic < x.c; ++ic) {
            const T* xp = x.plane(in, ic);
            T* yp = y.plane(in, ic);
            for (int oy = 0; oy < y.h; ++oy) {
                const auto& a = ty[oy];
                const T* r0 = xp + static_cast<size_t>(a.i0) * x.w;
                const T* r1 = xp + static_cast<size_t>(a.i1) * x.w;
                T* yrow = yp + static_cast<size_t>(oy) * y.w;
                for (int ox = 0; ox < y.w; ++ox) {
                    const auto& b = tx[ox];
                    const T top = r0[b.i0] * (T(1) - b.f) + r0[b.i1] * b.f;
                    const T bot = r1[b.i0] * (T(1) - b.f) + r1[b.i1] * b.f;
                    yrow[ox] = top * (T(1) - a.f) + bot * a.f;
                }
            }
        }
    return y;
}

template <typename T>
Tensor4<T> upsample2_bilinear_backward(int in_h, int in_w, const Tensor4<T>& gy) {
    check(gy.h == in_h * 2 && gy.w == in_w * 2, "upsample2_backward: shape mismatch");
    Tensor4<T> gx(gy.n, gy.c, in_h, in_w);
    const auto ty = upsample_taps<T>(gy.h, in_h);
    const auto tx = upsample_taps<T>(gy.w, in_w);
    for (int in = 0; in < gy.n; ++in)
        for (int ic = 0; ic < gy.c; ++ic) {
            const T* gp = gy.plane(in, ic);
            T* gxp = gx.plane(in, ic);
            for (int oy = 0; oy < gy.h; ++oy) {
                const auto& a = ty[oy];
                T* r0 = gxp + static_cast<size_t>(a.i0) * in_w;
                T* r1 = gxp + static_cast<size_t>(a.i1) * in_w;
                const T* grow = gp + static_cast<size_t>(oy) * gy.w;
                for (int ox = 0; ox < gy.w; ++ox) {
                    const auto& b = tx[ox];
                    const T g = grow[ox];
                    r0[b.i0] += g * (T(1) - a.f) * (T(1) - b.f);
                    r0[b.i1] += g * (T(1) - a.f) * b.f;
                    r1[b.i0] += g * a.f * (T(1) - b.f);
                    r1[b.i1] += g * a.f * b.f;
                }
            }
        }
    return gx;
}

template <typename T>
Tensor4<T> batchnorm_train(const Tensor4<T>& x, BnParam<T>& p, BnCache<T>& cache, T eps,
                           bool update_running) {
    check(p.channels() == x.c, "batchnorm: channel mismatch");
    const size_t plane = static_cast<size_t>(x.h) * x.w;
    const T m = static_cast<T>(x.n * plane);
    cache.inv_std.assign(x.c, T(0));
    cache.xhat = x.zeros_like();
    Tensor4<T> y = x.zeros_like();
    for (int ic = 0; ic < x.c; ++ic) {
        T mean = T(0);
        for (int in = 0; in < x.n; ++in) {
            const T* xp = x.plane(in, ic);
            for (size_t i = 0; i < plane; ++i) mean += xp[i];
        }
        mean /= m;
        T var = T(0);
        for (int in = 0; in < x.n; ++in) {
            const T* xp = x.plane(in, ic);
            for (size_t i = 0; i < plane; ++i) {
                const T d = xp[i] - mean;
                var += d * d;
            }
        }
        var /= m;
        const T inv_std = T(1) / std::sqrt(var + eps);
        cache.inv_std[ic] = inv_std;
        for (int in = 0; in < x.n; ++in) {
            const T* xp = x.plane(in, ic);
            T* hp = cache.xhat.plane(in, ic);
            T* yp = y.plane(in, ic);
            for (size_t i = 0; i < plane; ++i) {
                hp[i] = (xp[i] - mean) * inv_std;
                yp[i] = p.gamma[ic] * hp[i] + p.beta[ic];
            }
        }
        if (update_running) {
            constexpr T momentum = T(0.1);
            p.running_mean[ic] = (T(1) - momentum) * p.running_mean[ic] + momentum * mean;
            p.running_var[ic] = (T(1) - momentum) * p.running_var[ic] + momentum * var;
        }
    }
    return y;
}

template <typename T>
Tensor4<T> batchnorm_infer(const Tensor4<T>& x, const BnParam<T>& p, T eps) {
    check(p.channels() == x.c, "batchnorm: channel mismatch");
    const size_t plane = static_cast<size_t>(x.h) * x.w;
    Tensor4<T> y = x.zeros_like();
    for (int ic = 0; ic < x.c; ++ic) {
        const T inv_std = T(1) / std::sqrt(p.running_var[ic] + eps);
        const T a = p.gamma[ic] * inv_std;
        const T b = p.beta[ic] - a * p.running_mean[ic];
        for (int in = 0; in < x.n; ++in) {
            const T* xp = x.plane(in, ic);
            T* yp = y.plane(in, ic);
            for (size_t i = 0; i < plane; ++i) yp[i] = a * xp[i] + b;
        }
    }
    return y;
}

template <typename T>
BnGrads<T> batchnorm_backward(const BnCache<T>& cache, const std::vector<T>& gamma,
                              const Tensor4<T>& gy) {
    const Tensor4<T>& xhat = cache.xhat;
    check(xhat.same_shape(gy), "batchnorm_backward: shape mismatch");
    const size_t plane = static_cast<size_t>(gy.h) * gy.w;
    const T m = static_cast<T>(gy.n * plane);
    BnGrads<T> g{gy.zeros_like(), std::vector<T>(gy.c, T(0)), std::vector<T>(gy.c, T(0))};
    for (int ic = 0; ic < gy.c; ++ic) {
        T sum_g = T(0), sum_gh = T(0);
        for (int in = 0; in < gy.n; ++in) {
            const T* gp = gy.plane(in, ic);
            const T* hp = xhat.plane(in, ic);
            for (size_t i = 0; i < plane; ++i) {
                sum_g += gp[i];
                sum_gh += gp[i] * hp[i];
            }
        }
        g.gbeta[ic] = sum_g;
        g.ggamma[ic] = sum_gh;
        const T scale = gamma[ic] * cache.inv_std[ic] / m;
        for (int in = 0; in < gy.n; ++in) {
            const T* gp = gy.plane(in, ic);
            const T* hp = xhat.plane(in, ic);
            T* gxp = g.gx.plane(in, ic);
            for (size_t i = 0; i < plane; ++i)
                gxp[i] = scale * (m * gp[i] - sum_g - hp[i] * sum_gh);
        }
    }
    return g;
}

template <typename T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b) {
    check(a.n == b.n && a.h == b.h && a.w == b.w, "concat_channels: spatial/batch mismatch");
    Tensor4<T> y(a.n, a.c + b.c, a.h, a.w);
    const size_t plane = static_cast<size_t>(a.h) * a.w;
    for (int in = 0; in < a.n; ++in) {
        for (int ic = 0; ic < a.c; ++ic)
            std::copy_n(a.plane(in, ic), plane, y.plane(in, ic));
        for (int ic = 0; ic < b.c; ++ic)
            std::copy_n(b.plane(in, ic), plane, y.plane(in, a.c + ic));
    }
    return y;
}

template <typename T>
void split_channels(const Tensor4<T>& g, int c_first, Tensor4<T>& ga, Tensor4<T>& gb) {
    ga = Tensor4<T>(g.n, c_first, g.h, g.w);
    gb = Tensor4<T>(g.n, g.c - c_first, g.h, g.w);
    const size_t plane = static_cast<size_t>(g.h) * g.w;
    for (int in = 0; in < g.n; ++in) {
        for (int ic = 0; ic < c_first; ++ic)
            std::copy_n(g.plane(in, ic), plane, ga.plane(in, ic));
        for (int ic = 0; ic < g.c - c_first; ++ic)
            std::copy_n(g.plane(in, c_first + ic), plane, gb.plane(in, ic));
    }
}

template <typename T>
Tensor4<T> mul_broadcast(const Tensor4<T>& x, const Tensor4<T>& a) {
    check(a.c == 1 && a.n == x.n && a.h == x.h && a.w == x.w, "mul_broadcast: shape mismatch");
    Tensor4<T> y = x;
    const size_t plane = static_cast<size_t>(x.h) * x.w;
    for (int in = 0; in < x.n; ++in) {
        const T* ap = a.plane(in, 0);
        for (int ic = 0; ic < x.c; ++ic) {
            T* yp = y.plane(in, ic);
            for (size_t i = 0; i < plane; ++i) yp[i] *= ap[i];
        }
    }
    return y;
}

template <typename T>
void mul_broadcast_backward(const Tensor4<T>& x, const Tensor4<T>& a, const Tensor4<T>& gy,
                            Tensor4<T>& gx, Tensor4<T>& ga) {
    gx = x.zeros_like();
    ga = a.zeros_like();
    const size_t plane = static_cast<size_t>(x.h) * x.w;
    for (int in = 0; in < x.n; ++in) {
        const T* ap = a.plane(in, 0);
        T* gap = ga.plane(in, 0);
        for (int ic = 0; ic < x.c; ++ic) {
            const T* xp = x.plane(in, ic);
            const T* gp = gy.plane(in, ic);
            T* gxp = gx.plane(in, ic);
            for (size_t i = 0; i < plane; ++i) {
                gxp[i] = gp[i] * ap[i];
                gap[i] += gp[i] * xp[i];
            }
        }
    }
}

#define OCTAREC_INSTANTIATE(T)                                                                  \
    template Tensor4<T> conv2d<T>(const Tensor4<T>&, const Tensor4<T>&, std::span<const T>,    \
                                  int);                                                         \
    template Conv2dGrads<T> conv2d_backward<T>(const Tensor4<T>&, const Tensor4<T>&,           \
                                               const Tensor4<T>&, int);                        \
    template Tensor4<T> relu<T>(const Tensor4<T>&);                                            \
    template Tensor4<T> relu_backward<T>(const Tensor4<T>&, const Tensor4<T>&);                \
    template Tensor4<T> sigmoid<T>(const Tensor4<T>&);                                         \
    template Tensor4<T> sigmoid_backward<T>(const Tensor4<T>&, const Tensor4<T>&);             \
    template MaxPool2Result<T> maxpool2<T>(const Tensor4<T>&);                                 \
    template Tensor4<T> maxpool2_backward<T>(const MaxPool2Result<T>&, const Tensor4<T>&);     \
    template Tensor4<T> avgpool2<T>(const Tensor4<T>&);                                        \
    template Tensor4<T> avgpool2_backward<T>(int, int, const Tensor4<T>&);                     \
    template Tensor4<T> upsample2_bilinear<T>(const Tensor4<T>&);                              \
    template Tensor4<T> upsample2_bilinear_backward<T>(int, int, const Tensor4<T>&);           \
    template Tensor4<T> batchnorm_train<T>(const Tensor4<T>&, BnParam<T>&, BnCache<T>&, T,     \
                                           bool);                                              \
    template Tensor4<T> batchnorm_infer<T>(const Tensor4<T>&, const BnParam<T>&, T);           \
    template BnGrads<T> batchnorm_backward<T>(const BnCache<T>&, const std::vector<T>&,        \
                                              const Tensor4<T>&);                              \
    template Tensor4<T> concat_channels<T>(const Tensor4<T>&, const Tensor4<T>&);              \
    template void split_channels<T>(const Tensor4<T>&, int, Tensor4<T>&, Tensor4<T>&);         \
    template Tensor4<T> mul_broadcast<T>(const Tensor4<T>&, const Tensor4<T>&);                \
    template void mul_broadcast_backward<T>(const Tensor4<T>&, const Tensor4<T>&,              \
                                            const Tensor4<T>&, Tensor4<T>&, Tensor4<T>&);

OCTAREC_INSTANTIATE(float)
OCTAREC_INSTANTIATE(double)
#undef OCTAREC_INSTANTIATE

} // namespace octarec::nn
