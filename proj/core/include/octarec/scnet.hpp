#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "octarec/layers.hpp"
#include "octarec/losses.hpp"
#include "octarec/tensor.hpp"

namespace octarec {

/// Encoder/decoder geometry. levels = number of 2x downsamplings; the encoder
/// has levels+1 blocks and the structure branch one SCB per non-initial block.
struct ScNetTopology {
    int levels = 4;
    int base_width = 8;
    int in_channels = 1;

    int blocks() const { return levels + 1; }
    int channels(int block) const { return base_width << block; } // 0-based block index
    bool operator==(const ScNetTopology&) const = default;
};

template <typename T>
struct ConvBlockParams {
    Tensor4<T> k1;
    std::vector<T> b1;
    nn::BnParam<T> bn1;
    Tensor4<T> k2;
    std::vector<T> b2;
    nn::BnParam<T> bn2;
};

/// Structure Constraint Block: attention from concat(upsampled encoder
/// features, branch state) -> conv/bn/relu -> conv -> sigmoid, then an
/// element-wise product gates the upsampled encoder features.
template <typename T>
struct ScbParams {
    Tensor4<T> k1;
    std::vector<T> b1;
    nn::BnParam<T> bn1;
    Tensor4<T> k2; // mid channels -> single attention channel
    std::vector<T> b2;
};

template <typename T>
struct ScNetParams {
    ScNetTopology topo;
    std::vector<ConvBlockParams<T>> enc; // blocks()
    Tensor4<T> seed_k;                   // branch seed: one conv on encoder block 0 output
    std::vector<T> seed_b;
    nn::BnParam<T> seed_bn;
    std::vector<ScbParams<T>> scb;       // blocks()-1, scb[i-1] gates encoder block i
    std::vector<ConvBlockParams<T>> dec; // blocks()-1, dec[i-1] is decoder stage i
    Tensor4<T> head_depth_k;             // 1x1 conv on final decoder features
    std::vector<T> head_depth_b;
    Tensor4<T> head_seg_k;               // 3x3 conv on final branch state
    std::vector<T> head_seg_b;

    /// Throws std::invalid_argument if any stored shape disagrees with topo.
    void validate() const;
};

/// Fan-in-scaled normal kernels, zero biases, identity normalization.
template <typename T>
ScNetParams<T> init_params(const ScNetTopology& topo, std::uint64_t seed);

/// Same structure as the parameters, all values zero; used as a gradient
/// accumulator.
template <typename T>
ScNetParams<T> zero_like(const ScNetParams<T>& p);

/// Views of all learnable arrays (kernels, biases, bn scale/shift) in a fixed
/// order shared between parameters, gradients, optimizer state and the
/// checkpoint payload.
template <typename T>
std::vector<std::span<T>> learnable_views(ScNetParams<T>& p);
/// Learnable views plus batchnorm running statistics.
template <typename T>
std::vector<std::span<T>> state_views(ScNetParams<T>& p);

template <typename T>
size_t learnable_count(const ScNetParams<T>& p);

// ---- forward / backward -------------------------------------------------

template <typename T>
struct CbrTrace {
    Tensor4<T> x;        // conv input
    nn::BnCache<T> bn;
    Tensor4<T> pre_relu; // bn output
};

template <typename T>
struct ConvBlockTrace {
    CbrTrace<T> c1, c2;
};

template <typename T>
struct ScbTrace {
    Tensor4<T> up_e; // upsampled encoder features entering the product
    int e_h = 0, e_w = 0;
    int s_channels = 0;
    CbrTrace<T> attn1;
    Tensor4<T> h1r; // second conv input
    Tensor4<T> a;   // attention map (sigmoid output)
};

/// Everything backward needs; replaying forward from the same input
/// reproduces it exactly.
template <typename T>
struct ForwardTrace {
    std::vector<ConvBlockTrace<T>> enc;
    std::vector<nn::MaxPool2Result<T>> pool;          // between encoder blocks
    CbrTrace<T> seed;
    std::vector<std::pair<int, int>> seed_pool_dims;  // input dims of each seed avgpool
    std::vector<ScbTrace<T>> scb;                     // scb[i-1]
    std::vector<Tensor4<T>> filtered;                 // filtered[i-1], SCB outputs
    std::vector<ConvBlockTrace<T>> dec;               // dec[i-1]
    std::vector<std::pair<int, int>> dec_up_dims;     // input dims of each decoder upsample
    Tensor4<T> d_final;                               // depth head conv input
    Tensor4<T> head_seg_in;                           // seg head conv input (= final branch state)
    Tensor4<T> pred_depth, pred_seg;                  // head outputs after sigmoid
};

template <typename T>
struct ScNetOutput {
    Tensor4<T> pred_depth;
    Tensor4<T> pred_seg;
};

/// Single SCB step. s_prev must be spatially twice e_t (e_t is upsampled
/// before concatenation). Returns the attention map and the gated features.
template <typename T>
std::pair<Tensor4<T>, Tensor4<T>> scb_forward(const ScbParams<T>& p, const Tensor4<T>& e_t,
                                              const Tensor4<T>& s_prev);

/// Training-mode forward (batch statistics). Requires h, w divisible by
/// 2^levels. Fills trace; updates running stats only when update_running.
template <typename T>
ScNetOutput<T> forward_train(ScNetParams<T>& p, const Tensor4<T>& input, ForwardTrace<T>& trace,
                             bool update_running);

/// Inference-mode forward (running statistics), no trace.
template <typename T>
ScNetOutput<T> forward_infer(const ScNetParams<T>& p, const Tensor4<T>& input);

/// Exact reverse pass from head gradients to parameter gradients.
template <typename T>
ScNetParams<T> backward(const ScNetParams<T>& p, const ForwardTrace<T>& trace,
                        const Tensor4<T>& d_pred_depth, const Tensor4<T>& d_pred_seg);

// ---- optimizer ------------------------------------------------------------

template <typename T>
struct AdamState {
    std::vector<T> m, v;
    long step = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

template <typename T>
AdamState<T> make_adam_state(const ScNetParams<T>& p);

/// Bias-corrected first/second-moment update.
template <typename T>
void adam_step(ScNetParams<T>& params, const ScNetParams<T>& grads, AdamState<T>& st, T lr);

// ---- verification ---------------------------------------------------------

struct GradCheckReport {
    double max_rel_error = 0.0;
    size_t param_count = 0;
    size_t worst_index = 0;
};

/// Flattened d(L_total)/d(theta) over every learnable parameter via the
/// analytic backward pass.
std::vector<double> analytic_gradient(ScNetParams<double>& params, const Tensor4<double>& input,
                                      const Tensor4<double>& gt_depth,
                                      const Tensor4<double>& gt_seg, const LossWeights& lw,
                                      const SsimParams& sp);

/// The same gradient by central differences (step eps), parallel over
/// parameter ranges.
std::vector<double> numeric_gradient(const ScNetParams<double>& params,
                                     const Tensor4<double>& input,
                                     const Tensor4<double>& gt_depth,
                                     const Tensor4<double>& gt_seg, const LossWeights& lw,
                                     const SsimParams& sp, double eps);

/// Worst relative disagreement between the two gradient vectors.
GradCheckReport compare_gradients(const std::vector<double>& analytic,
                                  const std::vector<double>& numeric);

/// Central-difference check of d(L_total)/d(theta) over every learnable
/// parameter, double precision. tamper, when given, may corrupt the analytic
/// gradient vector before comparison (mutation testing).
GradCheckReport gradient_check(ScNetParams<double>& params, const Tensor4<double>& input,
                               const Tensor4<double>& gt_depth, const Tensor4<double>& gt_seg,
                               const LossWeights& lw, const SsimParams& sp, double eps,
                               const std::function<void(std::vector<double>&)>& tamper = {});

// ---- checkpoint -----------------------------------------------------------

/// Binary checkpoint: magic "SCN1", topology as three u32 fields, then the
/// state payload as little-endian float32 in state_views order. Byte-identical
/// for identical parameters.
void save_checkpoint(const ScNetParams<float>& p, const std::filesystem::path& path);
ScNetParams<float> load_checkpoint(const std::filesystem::path& path);

} // namespace octarec
