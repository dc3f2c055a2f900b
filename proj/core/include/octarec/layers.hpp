#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "octarec/tensor.hpp"

namespace octarec::nn {

/// Zero-padded spatial cross-correlation, stride 1. Kernel is (co, ci, kh, kw)
/// with odd kh, kw; output spatial size equals the input's when pad == kh/2.
template <typename T>
Tensor4<T> conv2d(const Tensor4<T>& x, const Tensor4<T>& k, std::span<const T> bias, int pad);

template <typename T>
struct Conv2dGrads {
    Tensor4<T> gx;
    Tensor4<T> gk;
    std::vector<T> gbias;
};

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor4<T>& x, const Tensor4<T>& k, const Tensor4<T>& gy,
                               int pad);

template <typename T>
Tensor4<T> relu(const Tensor4<T>& x);
template <typename T>
Tensor4<T> relu_backward(const Tensor4<T>& x, const Tensor4<T>& gy);

template <typename T>
Tensor4<T> sigmoid(const Tensor4<T>& x);
/// Takes the forward *output* y, not the input.
template <typename T>
Tensor4<T> sigmoid_backward(const Tensor4<T>& y, const Tensor4<T>& gy);

/// 2x2 max pooling, stride 2. Requires even h and w. argmax stores the
/// offset of the winning element within its window (0..3), first-in-scan
/// order on ties.
template <typename T>
struct MaxPool2Result {
    Tensor4<T> y;
    std::vector<std::uint8_t> argmax;
};
template <typename T>
MaxPool2Result<T> maxpool2(const Tensor4<T>& x);
template <typename T>
Tensor4<T> maxpool2_backward(const MaxPool2Result<T>& fwd, const Tensor4<T>& gy);

/// 2x2 average pooling, stride 2 (even h, w).
template <typename T>
Tensor4<T> avgpool2(const Tensor4<T>& x);
template <typename T>
Tensor4<T> avgpool2_backward(int in_h, int in_w, const Tensor4<T>& gy);

/// Bilinear x2 upsampling (half-pixel centers, clamped borders). Linear in
/// its input, so the backward pass is the exact transpose scatter.
template <typename T>
Tensor4<T> upsample2_bilinear(const Tensor4<T>& x);
template <typename T>
Tensor4<T> upsample2_bilinear_backward(int in_h, int in_w, const Tensor4<T>& gy);

/// Per-channel batch normalization over (batch, h, w).
template <typename T>
struct BnParam {
    std::vector<T> gamma, beta;
    std::vector<T> running_mean, running_var;

    explicit BnParam(int channels = 0)
        : gamma(channels, T(1)), beta(channels, T(0)),
          running_mean(channels, T(0)), running_var(channels, T(1)) {}
    int channels() const { return static_cast<int>(gamma.size()); }
};

template <typename T>
struct BnCache {
    std::vector<T> inv_std;
    Tensor4<T> xhat;
};

/// Training mode: batch statistics. Updates running stats in p when
/// update_running is set (momentum 0.1).
template <typename T>
Tensor4<T> batchnorm_train(const Tensor4<T>& x, BnParam<T>& p, BnCache<T>& cache, T eps,
                           bool update_running);
/// Inference mode: running statistics.
template <typename T>
Tensor4<T> batchnorm_infer(const Tensor4<T>& x, const BnParam<T>& p, T eps);

template <typename T>
struct BnGrads {
    Tensor4<T> gx;
    std::vector<T> ggamma, gbeta;
};
template <typename T>
BnGrads<T> batchnorm_backward(const BnCache<T>& cache, const std::vector<T>& gamma,
                              const Tensor4<T>& gy);

/// Channel concatenation [a | b]; shapes must agree on n, h, w.
template <typename T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b);
template <typename T>
void split_channels(const Tensor4<T>& g, int c_first, Tensor4<T>& ga, Tensor4<T>& gb);

/// Elementwise x * a with a broadcast from a single channel over all of x's.
template <typename T>
Tensor4<T> mul_broadcast(const Tensor4<T>& x, const Tensor4<T>& a);
template <typename T>
void mul_broadcast_backward(const Tensor4<T>& x, const Tensor4<T>& a, const Tensor4<T>& gy,
                            Tensor4<T>& gx, Tensor4<T>& ga);

} // namespace octarec::nn
