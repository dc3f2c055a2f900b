#include "octarec/losses.hpp"

#include <stdexcept>
#include <string>

namespace octarec {

namespace {

template <typename T>
void check_same(const Tensor4<T>& a, const Tensor4<T>& b, const char* what) {
    if (!a.same_shape(b)) throw std::invalid_argument(std::string("loss: shape mismatch in ") + what);
}

} // namespace

template <typename T>
T loss_seg(const Tensor4<T>& pred_seg, const Tensor4<T>& gt_seg, Tensor4<T>* grad_pred) {
    check_same(pred_seg, gt_seg, "loss_seg");
    const size_t n = pred_seg.size();
    T sum = T(0);
    for (size_t i = 0; i < n; ++i) {
        const T d = pred_seg.v[i] - gt_seg.v[i];
        sum += d * d;
    }
    const T loss = sum / static_cast<T>(n);
    if (grad_pred) {
        const T scale = T(2) / static_cast<T>(n);
        for (size_t i = 0; i < n; ++i)
            grad_pred->v[i] += scale * (pred_seg.v[i] - gt_seg.v[i]);
    }
    return loss;
}

template <typename T>
T loss_accuracy(const Tensor4<T>& pred_depth, const Tensor4<T>& gt_depth,
                const Tensor4<T>& pred_mask, const Tensor4<T>& gt_mask, const LossWeights& w,
                Tensor4<T>* grad_depth, Tensor4<T>* grad_mask) {
    check_same(pred_depth, gt_depth, "loss_accuracy depth");
    check_same(pred_depth, pred_mask, "loss_accuracy mask");
    check_same(pred_depth, gt_mask, "loss_accuracy gt mask");
    const size_t n = pred_depth.size();
    const T l1 = static_cast<T>(w.lambda_vessel);
    const T l2 = static_cast<T>(w.lambda_background);

    T sum_v = T(0), sum_b = T(0);
    for (size_t i = 0; i < n; ++i) {
        const T dv = pred_depth.v[i] * pred_mask.v[i] - gt_depth.v[i] * gt_mask.v[i];
        const T db = pred_depth.v[i] * (T(1) - pred_mask.v[i]) -
                     gt_depth.v[i] * (T(1) - gt_mask.v[i]);
        sum_v += dv * dv;
        sum_b += db * db;
    }
    const T mse_v = sum_v / static_cast<T>(n);
    const T mse_b = sum_b / static_cast<T>(n);
    const T loss = l1 * mse_v + l2 * mse_b;

    if (grad_depth || grad_mask) {
        const T scale = T(2) / static_cast<T>(n);
        for (size_t i = 0; i < n; ++i) {
            const T pd = pred_depth.v[i], pm = pred_mask.v[i];
            const T dv = pd * pm - gt_depth.v[i] * gt_mask.v[i];
            const T db = pd * (T(1) - pm) - gt_depth.v[i] * (T(1) - gt_mask.v[i]);
            if (grad_depth)
                grad_depth->v[i] += scale * (l1 * dv * pm + l2 * db * (T(1) - pm));
            if (grad_mask)
                grad_mask->v[i] += scale * (l1 * dv * pd - l2 * db * pd);
        }
    }
    return loss;
}

template <typename T>
T loss_structure(const Tensor4<T>& pred_depth, const Tensor4<T>& gt_depth, const SsimParams& p,
                 Tensor4<T>* grad_depth) {
    check_same(pred_depth, gt_depth, "loss_structure");
    if (pred_depth.c != 1) throw std::invalid_argument("loss_structure: expects single channel");
    const size_t plane = static_cast<size_t>(pred_depth.h) * pred_depth.w;
    T mean_sum = T(0);
    for (int in = 0; in < pred_depth.n; ++in) {
        if (grad_depth) {
            // d(1 - mean over batch)/da = -1/n * d(meanSSIM)/da
            const T gscale = T(-1) / static_cast<T>(pred_depth.n);
            mean_sum += ssim_mean_backward(pred_depth.plane(in, 0), gt_depth.plane(in, 0),
                                           pred_depth.w, pred_depth.h, p, gscale,
                                           grad_depth->v.data() + in * plane);
        } else {
            mean_sum += ssim_mean(pred_depth.plane(in, 0), gt_depth.plane(in, 0), pred_depth.w,
                                  pred_depth.h, p);
        }
    }
    return T(1) - mean_sum / static_cast<T>(pred_depth.n);
}

template <typename T>
LossBreakdown<T> loss_total(const Tensor4<T>& pred_depth, const Tensor4<T>& pred_seg,
                            const Tensor4<T>& gt_depth, const Tensor4<T>& gt_seg,
                            const LossWeights& w, const SsimParams& sp, LossGrads<T>* grads) {
    Tensor4<T>* gd = nullptr;
    Tensor4<T>* gs = nullptr;
    if (grads) {
        grads->d_pred_depth = pred_depth.zeros_like();
        grads->d_pred_seg = pred_seg.zeros_like();
        gd = &grads->d_pred_depth;
        gs = &grads->d_pred_seg;
    }
    LossBreakdown<T> out;
    out.seg = loss_seg(pred_seg, gt_seg, gs);
    out.accuracy = loss_accuracy(pred_depth, gt_depth, pred_seg, gt_seg, w, gd, gs);
    out.structure = loss_structure(pred_depth, gt_depth, sp, gd);
    out.total = out.seg + out.accuracy + out.structure;
    return out;
}

#define OCTAREC_INSTANTIATE(T)                                                                 \
    template T loss_seg<T>(const Tensor4<T>&, const Tensor4<T>&, Tensor4<T>*);                \
    template T loss_accuracy<T>(const Tensor4<T>&, const Tensor4<T>&, const Tensor4<T>&,      \
                                const Tensor4<T>&, const LossWeights&, Tensor4<T>*,           \
                                Tensor4<T>*);                                                 \
    template T loss_structure<T>(const Tensor4<T>&, const Tensor4<T>&, const SsimParams&,     \
                                 Tensor4<T>*);                                                \
    template LossBreakdown<T> loss_total<T>(const Tensor4<T>&, const Tensor4<T>&,             \
                                            const Tensor4<T>&, const Tensor4<T>&,             \
                                            const LossWeights&, const SsimParams&,            \
                                            LossGrads<T>*);

OCTAREC_INSTANTIATE(float)
OCTAREC_INSTANTIATE(double)
#undef OCTAREC_INSTANTIATE

} // namespace octarec
