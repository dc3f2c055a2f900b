#pragma once

namespace octarec {

/// Reference SSIM constants: 11x11 Gaussian window, sigma 1.5, K1/K2 from the
/// original formulation, unit dynamic range.
struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;

    double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
    double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
};

/// Mean of the Gaussian-windowed SSIM map between two row-major fields of
/// size w x h. Windows are valid-mode (no padding); throws
/// std::invalid_argument if the image is smaller than the window.
template <typename T>
T ssim_mean(const T* a, const T* b, int w, int h, const SsimParams& p);

/// Accumulates gscale * d(mean SSIM)/da into ga (length w*h) and returns the
/// mean SSIM. b is treated as constant.
template <typename T>
T ssim_mean_backward(const T* a, const T* b, int w, int h, const SsimParams& p, T gscale, T* ga);

} // namespace octarec
