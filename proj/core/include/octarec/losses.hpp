#pragma once

#include "octarec/ssim.hpp"
#include "octarec/tensor.hpp"

namespace octarec {

/// Region weights of the depth-accuracy term: vessel pixels count more than
/// background.
struct LossWeights {
    double lambda_vessel = 0.8;
    double lambda_background = 0.2;
};

template <typename T>
struct LossBreakdown {
    T seg = T(0);
    T accuracy = T(0);
    T structure = T(0);
    T total = T(0); // always seg + accuracy + structure, same summation order
};

template <typename T>
struct LossGrads {
    Tensor4<T> d_pred_depth;
    Tensor4<T> d_pred_seg;
};

/// Mean squared error between predicted and ground-truth vessel maps.
/// If grad_pred is given, d(loss)/d(pred) is accumulated into it.
template <typename T>
T loss_seg(const Tensor4<T>& pred_seg, const Tensor4<T>& gt_seg, Tensor4<T>* grad_pred = nullptr);

/// Region-weighted depth MSE. Predicted regions are split by the *soft*
/// predicted mask (differentiable), ground-truth regions by the ground-truth
/// mask; both means run over all pixels.
template <typename T>
T loss_accuracy(const Tensor4<T>& pred_depth, const Tensor4<T>& gt_depth,
                const Tensor4<T>& pred_mask, const Tensor4<T>& gt_mask, const LossWeights& w,
                Tensor4<T>* grad_depth = nullptr, Tensor4<T>* grad_mask = nullptr);

/// 1 - mean SSIM between predicted and ground-truth depth maps, averaged over
/// the batch. Zero when the images match; decreasing it increases similarity.
template <typename T>
T loss_structure(const Tensor4<T>& pred_depth, const Tensor4<T>& gt_depth, const SsimParams& p,
                 Tensor4<T>* grad_depth = nullptr);

/// Sum of the three terms. When grads is non-null it receives
/// d(total)/d(pred_depth) and d(total)/d(pred_seg).
template <typename T>
LossBreakdown<T> loss_total(const Tensor4<T>& pred_depth, const Tensor4<T>& pred_seg,
                            const Tensor4<T>& gt_depth, const Tensor4<T>& gt_seg,
                            const LossWeights& w, const SsimParams& sp,
                            LossGrads<T>* grads = nullptr);

} // namespace octarec
