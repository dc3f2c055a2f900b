#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace octarec {

/// Dense (batch, channel, height, width) array, row-major with w fastest.
template <typename T>
struct Tensor4 {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> v;

    Tensor4() = default;
    Tensor4(int n_, int c_, int h_, int w_, T fill = T(0))
        : n(n_), c(c_), h(h_), w(w_), v(static_cast<size_t>(n_) * c_ * h_ * w_, fill) {}

    size_t size() const { return v.size(); }
    bool same_shape(const Tensor4& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }

    size_t index(int in, int ic, int iy, int ix) const {
        return ((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix;
    }
    T& at(int in, int ic, int iy, int ix) { return v[index(in, ic, iy, ix)]; }
    T at(int in, int ic, int iy, int ix) const { return v[index(in, ic, iy, ix)]; }

    T* plane(int in, int ic) { return v.data() + (static_cast<size_t>(in) * c + ic) * h * w; }
    const T* plane(int in, int ic) const {
        return v.data() + (static_cast<size_t>(in) * c + ic) * h * w;
    }

    void fill(T value) { std::fill(v.begin(), v.end(), value); }

    Tensor4 zeros_like() const { return Tensor4(n, c, h, w); }

    template <typename U>
    Tensor4<U> cast() const {
        Tensor4<U> out(n, c, h, w);
        for (size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
        return out;
    }
};

template <typename T>
void add_inplace(Tensor4<T>& dst, const Tensor4<T>& src) {
    for (size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += src.v[i];
}

template <typename T>
Tensor4<T> random_uniform(int n, int c, int h, int w, std::mt19937_64& rng, T lo = T(-1),
                          T hi = T(1)) {
    Tensor4<T> t(n, c, h, w);
    std::uniform_real_distribution<double> dist(static_cast<double>(lo), static_cast<double>(hi));
    for (auto& x : t.v) x = static_cast<T>(dist(rng));
    return t;
}

using Tensor4f = Tensor4<float>;
using Tensor4d = Tensor4<double>;

} // namespace octarec
