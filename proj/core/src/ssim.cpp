#include "octarec/ssim.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace octarec {

namespace {

template <typename T>
std::vector<T> gaussian_kernel(int window, double sigma) {
    std::vector<T> g(window);
    const double c = (window - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < window; ++i) {
        const double d = i - c;
        const double v = std::exp(-d * d / (2.0 * sigma * sigma));
        g[i] = static_cast<T>(v);
        sum += v;
    }
    for (auto& v : g) v = static_cast<T>(v / sum);
    return g;
}

// Separable valid-mode correlation: out is (h-k+1) x (w-k+1).
template <typename T>
void valid_conv(const T* in, int w, int h, const std::vector<T>& g, T* out) {
    const int k = static_cast<int>(g.size());
    const int ow = w - k + 1, oh = h - k + 1;
    std::vector<T> tmp(static_cast<size_t>(h) * ow);
    for (int y = 0; y < h; ++y)
        for (int ox = 0; ox < ow; ++ox) {
            T acc = T(0);
            const T* row = in + static_cast<size_t>(y) * w + ox;
            for (int j = 0; j < k; ++j) acc += g[j] * row[j];
            tmp[static_cast<size_t>(y) * ow + ox] = acc;
        }
    for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
            T acc = T(0);
            for (int i = 0; i < k; ++i) acc += g[i] * tmp[static_cast<size_t>(oy + i) * ow + ox];
            out[static_cast<size_t>(oy) * ow + ox] = acc;
        }
}

// Transpose of valid_conv: scatters a (h-k+1) x (w-k+1) field back onto the
// full image grid, accumulating into out.
template <typename T>
void scatter_conv(const T* field, int w, int h, const std::vector<T>& g, T* out) {
    const int k = static_cast<int>(g.size());
    const int ow = w - k + 1, oh = h - k + 1;
    std::vector<T> tmp(static_cast<size_t>(h) * ow, T(0));
    for (int oy = 0; oy < oh; ++oy)
        for (int i = 0; i < k; ++i) {
            T* trow = tmp.data() + static_cast<size_t>(oy + i) * ow;
            const T* frow = field + static_cast<size_t>(oy) * ow;
            const T gi = g[i];
            for (int ox = 0; ox < ow; ++ox) trow[ox] += gi * frow[ox];
        }
    for (int y = 0; y < h; ++y)
        for (int j = 0; j < k; ++j) {
            T* orow = out + static_cast<size_t>(y) * w + j;
            const T* trow = tmp.data() + static_cast<size_t>(y) * ow;
            const T gj = g[j];
            for (int ox = 0; ox < ow; ++ox) orow[ox] += gj * trow[ox];
        }
}

template <typename T>
struct SsimFields {
    int ow = 0, oh = 0;
    std::vector<T> mu_a, mu_b, s_aa, s_bb, s_ab;
};

template <typename T>
SsimFields<T> compute_fields(const T* a, const T* b, int w, int h, const SsimParams& p) {
    if (w < p.window || h < p.window)
        throw std::invalid_argument("ssim: image smaller than window");
    const auto g = gaussian_kernel<T>(p.window, p.sigma);
    SsimFields<T> f;
    f.ow = w - p.window + 1;
    f.oh = h - p.window + 1;
    const size_t no = static_cast<size_t>(f.ow) * f.oh;
    const size_t ni = static_cast<size_t>(w) * h;
    f.mu_a.resize(no);
    f.mu_b.resize(no);
    f.s_aa.resize(no);
    f.s_bb.resize(no);
    f.s_ab.resize(no);
    std::vector<T> prod(ni);
    valid_conv(a, w, h, g, f.mu_a.data());
    valid_conv(b, w, h, g, f.mu_b.data());
    for (size_t i = 0; i < ni; ++i) prod[i] = a[i] * a[i];
    valid_conv(prod.data(), w, h, g, f.s_aa.data());
    for (size_t i = 0; i < ni; ++i) prod[i] = b[i] * b[i];
    valid_conv(prod.data(), w, h, g, f.s_bb.data());
    for (size_t i = 0; i < ni; ++i) prod[i] = a[i] * b[i];
    valid_conv(prod.data(), w, h, g, f.s_ab.data());
    return f;
}

} // namespace

template <typename T>
T ssim_mean(const T* a, const T* b, int w, int h, const SsimParams& p) {
    const auto f = compute_fields(a, b, w, h, p);
    const T c1 = static_cast<T>(p.c1()), c2 = static_cast<T>(p.c2());
    T sum = T(0);
    const size_t no = f.mu_a.size();
    for (size_t i = 0; i < no; ++i) {
        const T ma = f.mu_a[i], mb = f.mu_b[i];
        const T a1 = T(2) * (ma * mb) + c1;
        const T a2 = T(2) * (f.s_ab[i] - ma * mb) + c2;
        const T b1 = ma * ma + mb * mb + c1;
        const T b2 = (f.s_aa[i] - ma * ma) + (f.s_bb[i] - mb * mb) + c2;
        sum += (a1 * a2) / (b1 * b2);
    }
    return sum / static_cast<T>(no);
}

template <typename T>
T ssim_mean_backward(const T* a, const T* b, int w, int h, const SsimParams& p, T gscale, T* ga) {
    const auto f = compute_fields(a, b, w, h, p);
    const auto g = gaussian_kernel<T>(p.window, p.sigma);
    const T c1 = static_cast<T>(p.c1()), c2 = static_cast<T>(p.c2());
    const size_t no = f.mu_a.size();
    const T gm = gscale / static_cast<T>(no); // upstream grad of each map entry

    std::vector<T> d_mu(no), d_saa(no), d_sab(no);
    T sum = T(0);
    for (size_t i = 0; i < no; ++i) {
        const T ma = f.mu_a[i], mb = f.mu_b[i];
        const T a1 = T(2) * (ma * mb) + c1;
        const T a2 = T(2) * (f.s_ab[i] - ma * mb) + c2;
        const T b1 = ma * ma + mb * mb + c1;
        const T b2 = (f.s_aa[i] - ma * ma) + (f.s_bb[i] - mb * mb) + c2;
        const T m = (a1 * a2) / (b1 * b2);
        sum += m;
        // partials w.r.t. the five windowed fields (mu_b, s_bb are constant)
        d_mu[i] = gm * ((T(2) * mb * a2 - T(2) * mb * a1) / (b1 * b2) -
                        m * (T(2) * ma / b1 - T(2) * ma / b2));
        d_saa[i] = gm * (-m / b2);
        d_sab[i] = gm * (T(2) * a1 / (b1 * b2));
    }

    const size_t ni = static_cast<size_t>(w) * h;
    std::vector<T> acc(ni, T(0));
    scatter_conv(d_mu.data(), w, h, g, acc.data());
    for (size_t i = 0; i < ni; ++i) ga[i] += acc[i];

    std::fill(acc.begin(), acc.end(), T(0));
    scatter_conv(d_saa.data(), w, h, g, acc.data());
    for (size_t i = 0; i < ni; ++i) ga[i] += T(2) * a[i] * acc[i];

    std::fill(acc.begin(), acc.end(), T(0));
    scatter_conv(d_sab.data(), w, h, g, acc.data());
    for (size_t i = 0; i < ni; ++i) ga[i] += b[i] * acc[i];

    return sum / static_cast<T>(no);
}

template float ssim_mean<float>(const float*, const float*, int, int, const SsimParams&);
template double ssim_mean<double>(const double*, const double*, int, int, const SsimParams&);
template float ssim_mean_backward<float>(const float*, const float*, int, int, const SsimParams&,
                                         float, float*);
template double ssim_mean_backward<double>(const double*, const double*, int, int,
                                           const SsimParams&, double, double*);

} // namespace octarec
