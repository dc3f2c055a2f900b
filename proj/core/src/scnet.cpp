#include "octarec/scnet.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "octarec/errors.hpp"
#include "octarec/parallel.hpp"

static_assert(std::endian::native == std::endian::little,
              "scnet checkpoints assume a little-endian host");

namespace octarec {

namespace {

constexpr double kBnEps = 1e-5;

template <typename T>
void check_shape(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}

// Channels of the branch state entering SCB i (1-based block index).
int scb_state_channels(const ScNetTopology& t, int i) {
    return i == t.blocks() - 1 ? t.channels(0) : t.channels(i + 1);
}

template <typename T>
ConvBlockParams<T> make_conv_block(int c_in, int c_out) {
    ConvBlockParams<T> b;
    b.k1 = Tensor4<T>(c_out, c_in, 3, 3);
    b.b1.assign(c_out, T(0));
    b.bn1 = nn::BnParam<T>(c_out);
    b.k2 = Tensor4<T>(c_out, c_out, 3, 3);
    b.b2.assign(c_out, T(0));
    b.bn2 = nn::BnParam<T>(c_out);
    return b;
}

template <typename T>
void fill_normal(Tensor4<T>& k, std::mt19937_64& rng) {
    // fan-in scaled (He) initialization
    const double fan_in = static_cast<double>(k.c) * k.h * k.w;
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (auto& v : k.v) v = static_cast<T>(dist(rng));
}

// ---- building-block forward/backward --------------------------------------

template <typename T>
Tensor4<T> cbr_forward(const Tensor4<T>& x, const Tensor4<T>& k, const std::vector<T>& b,
                       nn::BnParam<T>& bn, bool update_running, CbrTrace<T>& t) {
    const int pad = k.h / 2;
    t.x = x;
    Tensor4<T> y = nn::conv2d(x, k, std::span<const T>(b), pad);
    y = nn::batchnorm_train(y, bn, t.bn, static_cast<T>(kBnEps), update_running);
    t.pre_relu = y;
    return nn::relu(y);
}

template <typename T>
Tensor4<T> cbr_infer(const Tensor4<T>& x, const Tensor4<T>& k, const std::vector<T>& b,
                     const nn::BnParam<T>& bn) {
    const int pad = k.h / 2;
    Tensor4<T> y = nn::conv2d(x, k, std::span<const T>(b), pad);
    y = nn::batchnorm_infer(y, bn, static_cast<T>(kBnEps));
    return nn::relu(y);
}

template <typename T>
Tensor4<T> cbr_backward(const CbrTrace<T>& t, const Tensor4<T>& k, const std::vector<T>& gamma,
                        const Tensor4<T>& g_out, Tensor4<T>& gk, std::vector<T>& gb,
                        std::vector<T>& ggamma, std::vector<T>& gbeta) {
    const int pad = k.h / 2;
    Tensor4<T> g = nn::relu_backward(t.pre_relu, g_out);
    nn::BnGrads<T> bg = nn::batchnorm_backward(t.bn, gamma, g);
    for (size_t i = 0; i < ggamma.size(); ++i) {
        ggamma[i] += bg.ggamma[i];
        gbeta[i] += bg.gbeta[i];
    }
    nn::Conv2dGrads<T> cg = nn::conv2d_backward(t.x, k, bg.gx, pad);
    add_inplace(gk, cg.gk);
    for (size_t i = 0; i < gb.size(); ++i) gb[i] += cg.gbias[i];
    return std::move(cg.gx);
}

template <typename T>
Tensor4<T> conv_block_forward(const Tensor4<T>& x, ConvBlockParams<T>& p, bool update_running,
                              ConvBlockTrace<T>& t) {
    Tensor4<T> y = cbr_forward(x, p.k1, p.b1, p.bn1, update_running, t.c1);
    return cbr_forward(y, p.k2, p.b2, p.bn2, update_running, t.c2);
}

template <typename T>
Tensor4<T> conv_block_infer(const Tensor4<T>& x, const ConvBlockParams<T>& p) {
    return cbr_infer(cbr_infer(x, p.k1, p.b1, p.bn1), p.k2, p.b2, p.bn2);
}

template <typename T>
Tensor4<T> conv_block_backward(const ConvBlockTrace<T>& t, const ConvBlockParams<T>& p,
                               const Tensor4<T>& g_out, ConvBlockParams<T>& g) {
    Tensor4<T> gm = cbr_backward(t.c2, p.k2, p.bn2.gamma, g_out, g.k2, g.b2, g.bn2.gamma,
                                 g.bn2.beta);
    return cbr_backward(t.c1, p.k1, p.bn1.gamma, gm, g.k1, g.b1, g.bn1.gamma, g.bn1.beta);
}

template <typename T>
std::pair<Tensor4<T>, Tensor4<T>> scb_forward_traced(ScbParams<T>& p, const Tensor4<T>& e_t,
                                                     const Tensor4<T>& s_prev,
                                                     bool update_running, ScbTrace<T>& t) {
    Tensor4<T> up_e = nn::upsample2_bilinear(e_t);
    check_shape<T>(up_e.h == s_prev.h && up_e.w == s_prev.w && up_e.n == s_prev.n,
                   "scb: branch state spatial size != upsampled encoder features");
    t.e_h = e_t.h;
    t.e_w = e_t.w;
    t.s_channels = s_prev.c;
    Tensor4<T> cat = nn::concat_channels(up_e, s_prev);
    Tensor4<T> h1 = cbr_forward(cat, p.k1, p.b1, p.bn1, update_running, t.attn1);
    t.h1r = h1;
    Tensor4<T> alog = nn::conv2d(h1, p.k2, std::span<const T>(p.b2), p.k2.h / 2);
    Tensor4<T> a = nn::sigmoid(alog);
    Tensor4<T> filtered = nn::mul_broadcast(up_e, a);
    t.up_e = std::move(up_e);
    t.a = a;
    return {std::move(a), std::move(filtered)};
}

template <typename T>
std::pair<Tensor4<T>, Tensor4<T>> scb_infer(const ScbParams<T>& p, const Tensor4<T>& e_t,
                                            const Tensor4<T>& s_prev) {
    Tensor4<T> up_e = nn::upsample2_bilinear(e_t);
    check_shape<T>(up_e.h == s_prev.h && up_e.w == s_prev.w,
                   "scb: branch state spatial size != upsampled encoder features");
    Tensor4<T> cat = nn::concat_channels(up_e, s_prev);
    Tensor4<T> h1 = cbr_infer(cat, p.k1, p.b1, p.bn1);
    Tensor4<T> a = nn::sigmoid(nn::conv2d(h1, p.k2, std::span<const T>(p.b2), p.k2.h / 2));
    Tensor4<T> filtered = nn::mul_broadcast(up_e, a);
    return {std::move(a), std::move(filtered)};
}

// Returns (g_e_t, g_s_prev).
template <typename T>
std::pair<Tensor4<T>, Tensor4<T>> scb_backward(const ScbTrace<T>& t, const ScbParams<T>& p,
                                               const Tensor4<T>& g_filtered, ScbParams<T>& g) {
    Tensor4<T> g_up_e, g_a;
    nn::mul_broadcast_backward(t.up_e, t.a, g_filtered, g_up_e, g_a);
    Tensor4<T> g_alog = nn::sigmoid_backward(t.a, g_a);
    nn::Conv2dGrads<T> cg = nn::conv2d_backward(t.h1r, p.k2, g_alog, p.k2.h / 2);
    add_inplace(g.k2, cg.gk);
    for (size_t i = 0; i < g.b2.size(); ++i) g.b2[i] += cg.gbias[i];
    Tensor4<T> g_cat =
        cbr_backward(t.attn1, p.k1, p.bn1.gamma, cg.gx, g.k1, g.b1, g.bn1.gamma, g.bn1.beta);
    Tensor4<T> g_up_e2, g_s_prev;
    nn::split_channels(g_cat, t.up_e.c, g_up_e2, g_s_prev);
    add_inplace(g_up_e, g_up_e2);
    return {nn::upsample2_bilinear_backward(t.e_h, t.e_w, g_up_e), std::move(g_s_prev)};
}

} // namespace

// ---- parameters ------------------------------------------------------------

template <typename T>
void ScNetParams<T>::validate() const {
    const int B = topo.blocks();
    check_shape<T>(topo.levels >= 1 && topo.base_width >= 1 && topo.in_channels >= 1,
                   "scnet: bad topology");
    check_shape<T>(static_cast<int>(enc.size()) == B, "scnet: encoder block count");
    check_shape<T>(static_cast<int>(scb.size()) == B - 1,
                   "scnet: SCB count must be encoder blocks - 1");
    check_shape<T>(static_cast<int>(dec.size()) == B - 1, "scnet: decoder stage count");
    for (int i = 0; i < B; ++i) {
        const int cin = i == 0 ? topo.in_channels : topo.channels(i - 1);
        const int cout = topo.channels(i);
        check_shape<T>(enc[i].k1.n == cout && enc[i].k1.c == cin, "scnet: encoder k1 shape");
        check_shape<T>(enc[i].k2.n == cout && enc[i].k2.c == cout, "scnet: encoder k2 shape");
    }
    check_shape<T>(seed_k.n == topo.channels(0) && seed_k.c == topo.channels(0),
                   "scnet: seed conv shape");
    for (int i = 1; i < B; ++i) {
        const int cat = topo.channels(i) + scb_state_channels(topo, i);
        const ScbParams<T>& s = scb[i - 1];
        check_shape<T>(s.k1.n == topo.channels(i) && s.k1.c == cat, "scnet: scb k1 shape");
        check_shape<T>(s.k2.n == 1 && s.k2.c == topo.channels(i), "scnet: scb k2 shape");
        const ConvBlockParams<T>& d = dec[i - 1];
        check_shape<T>(d.k1.n == topo.channels(i - 1) && d.k1.c == 2 * topo.channels(i),
                       "scnet: decoder k1 shape");
    }
    check_shape<T>(head_depth_k.n == 1 && head_depth_k.c == topo.channels(0) &&
                       head_depth_k.h == 1,
                   "scnet: depth head shape");
    check_shape<T>(head_seg_k.n == 1 && head_seg_k.c == topo.channels(1), "scnet: seg head shape");
}

template <typename T>
ScNetParams<T> init_params(const ScNetTopology& topo, std::uint64_t seed) {
    check_shape<T>(topo.levels >= 1 && topo.base_width >= 1 && topo.in_channels >= 1,
                   "scnet: bad topology");
    std::mt19937_64 rng(seed);
    const int B = topo.blocks();
    ScNetParams<T> p;
    p.topo = topo;
    for (int i = 0; i < B; ++i) {
        const int cin = i == 0 ? topo.in_channels : topo.channels(i - 1);
        p.enc.push_back(make_conv_block<T>(cin, topo.channels(i)));
    }
    p.seed_k = Tensor4<T>(topo.channels(0), topo.channels(0), 3, 3);
    p.seed_b.assign(topo.channels(0), T(0));
    p.seed_bn = nn::BnParam<T>(topo.channels(0));
    for (int i = 1; i < B; ++i) {
        ScbParams<T> s;
        const int mid = topo.channels(i);
        s.k1 = Tensor4<T>(mid, mid + scb_state_channels(topo, i), 3, 3);
        s.b1.assign(mid, T(0));
        s.bn1 = nn::BnParam<T>(mid);
        s.k2 = Tensor4<T>(1, mid, 3, 3);
        s.b2.assign(1, T(0));
        p.scb.push_back(std::move(s));
        p.dec.push_back(make_conv_block<T>(2 * topo.channels(i), topo.channels(i - 1)));
    }
    p.head_depth_k = Tensor4<T>(1, topo.channels(0), 1, 1);
    p.head_depth_b.assign(1, T(0));
    p.head_seg_k = Tensor4<T>(1, topo.channels(1), 3, 3);
    p.head_seg_b.assign(1, T(0));

    for (auto& b : p.enc) {
        fill_normal(b.k1, rng);
        fill_normal(b.k2, rng);
    }
    fill_normal(p.seed_k, rng);
    for (auto& s : p.scb) {
        fill_normal(s.k1, rng);
        fill_normal(s.k2, rng);
    }
    for (auto& b : p.dec) {
        fill_normal(b.k1, rng);
        fill_normal(b.k2, rng);
    }
    fill_normal(p.head_depth_k, rng);
    fill_normal(p.head_seg_k, rng);
    return p;
}

template <typename T>
ScNetParams<T> zero_like(const ScNetParams<T>& p) {
    ScNetParams<T> z = p;
    auto views = state_views(z);
    for (auto v : views) std::fill(v.begin(), v.end(), T(0));
    return z;
}

namespace {

template <typename T, typename F>
void visit_conv_block(ConvBlockParams<T>& b, bool with_running, F&& f) {
    f(std::span<T>(b.k1.v));
    f(std::span<T>(b.b1));
    f(std::span<T>(b.bn1.gamma));
    f(std::span<T>(b.bn1.beta));
    if (with_running) {
        f(std::span<T>(b.bn1.running_mean));
        f(std::span<T>(b.bn1.running_var));
    }
    f(std::span<T>(b.k2.v));
    f(std::span<T>(b.b2));
    f(std::span<T>(b.bn2.gamma));
    f(std::span<T>(b.bn2.beta));
    if (with_running) {
        f(std::span<T>(b.bn2.running_mean));
        f(std::span<T>(b.bn2.running_var));
    }
}

template <typename T, typename F>
void visit_params(ScNetParams<T>& p, bool with_running, F&& f) {
    for (auto& b : p.enc) visit_conv_block(b, with_running, f);
    f(std::span<T>(p.seed_k.v));
    f(std::span<T>(p.seed_b));
    f(std::span<T>(p.seed_bn.gamma));
    f(std::span<T>(p.seed_bn.beta));
    if (with_running) {
        f(std::span<T>(p.seed_bn.running_mean));
        f(std::span<T>(p.seed_bn.running_var));
    }
    for (auto& s : p.scb) {
        f(std::span<T>(s.k1.v));
        f(std::span<T>(s.b1));
        f(std::span<T>(s.bn1.gamma));
        f(std::span<T>(s.bn1.beta));
        if (with_running) {
            f(std::span<T>(s.bn1.running_mean));
            f(std::span<T>(s.bn1.running_var));
        }
        f(std::span<T>(s.k2.v));
        f(std::span<T>(s.b2));
    }
    for (auto& b : p.dec) visit_conv_block(b, with_running, f);
    f(std::span<T>(p.head_depth_k.v));
    f(std::span<T>(p.head_depth_b));
    f(std::span<T>(p.head_seg_k.v));
    f(std::span<T>(p.head_seg_b));
}

} // namespace

template <typename T>
std::vector<std::span<T>> learnable_views(ScNetParams<T>& p) {
    std::vector<std::span<T>> out;
    visit_params(p, false, [&](std::span<T> s) { out.push_back(s); });
    return out;
}

template <typename T>
std::vector<std::span<T>> state_views(ScNetParams<T>& p) {
    std::vector<std::span<T>> out;
    visit_params(p, true, [&](std::span<T> s) { out.push_back(s); });
    return out;
}

template <typename T>
size_t learnable_count(const ScNetParams<T>& p) {
    size_t n = 0;
    visit_params(const_cast<ScNetParams<T>&>(p), false,
                 [&](std::span<T> s) { n += s.size(); });
    return n;
}

// ---- forward / backward ----------------------------------------------------

template <typename T>
std::pair<Tensor4<T>, Tensor4<T>> scb_forward(const ScbParams<T>& p, const Tensor4<T>& e_t,
                                              const Tensor4<T>& s_prev) {
    return scb_infer(p, e_t, s_prev);
}

template <typename T>
ScNetOutput<T> forward_train(ScNetParams<T>& p, const Tensor4<T>& input, ForwardTrace<T>& trace,
                             bool update_running) {
    p.validate();
    const int B = p.topo.blocks();
    check_shape<T>(input.c == p.topo.in_channels, "scnet: input channel mismatch");
    check_shape<T>(input.h % (1 << p.topo.levels) == 0 && input.w % (1 << p.topo.levels) == 0,
                   "scnet: input dimensions not divisible by 2^levels");

    trace = ForwardTrace<T>{};
    trace.enc.resize(B);
    trace.pool.resize(B - 1);
    trace.scb.resize(B - 1);
    trace.filtered.resize(B - 1);
    trace.dec.resize(B - 1);
    trace.dec_up_dims.resize(B - 1);

    std::vector<Tensor4<T>> e(B);
    for (int i = 0; i < B; ++i) {
        if (i == 0) {
            e[i] = conv_block_forward(input, p.enc[i], update_running, trace.enc[i]);
        } else {
            trace.pool[i - 1] = nn::maxpool2(e[i - 1]);
            e[i] = conv_block_forward(trace.pool[i - 1].y, p.enc[i], update_running,
                                      trace.enc[i]);
        }
    }

    Tensor4<T> s = cbr_forward(e[0], p.seed_k, p.seed_b, p.seed_bn, update_running, trace.seed);
    for (int j = 0; j < p.topo.levels - 1; ++j) {
        trace.seed_pool_dims.emplace_back(s.h, s.w);
        s = nn::avgpool2(s);
    }

    for (int i = B - 1; i >= 1; --i) {
        auto [a, filtered] =
            scb_forward_traced(p.scb[i - 1], e[i], s, update_running, trace.scb[i - 1]);
        trace.filtered[i - 1] = std::move(filtered);
        if (i > 1) s = nn::upsample2_bilinear(trace.filtered[i - 1]);
    }

    trace.head_seg_in = trace.filtered[0];
    Tensor4<T> seg_logits =
        nn::conv2d(trace.head_seg_in, p.head_seg_k, std::span<const T>(p.head_seg_b),
                   p.head_seg_k.h / 2);
    trace.pred_seg = nn::sigmoid(seg_logits);

    Tensor4<T> d = e[B - 1];
    for (int i = B - 1; i >= 1; --i) {
        trace.dec_up_dims[i - 1] = {d.h, d.w};
        Tensor4<T> u = nn::upsample2_bilinear(d);
        Tensor4<T> cat = nn::concat_channels(u, trace.filtered[i - 1]);
        d = conv_block_forward(cat, p.dec[i - 1], update_running, trace.dec[i - 1]);
    }
    trace.d_final = d;
    Tensor4<T> depth_logits =
        nn::conv2d(d, p.head_depth_k, std::span<const T>(p.head_depth_b), 0);
    trace.pred_depth = nn::sigmoid(depth_logits);

    return {trace.pred_depth, trace.pred_seg};
}

template <typename T>
ScNetOutput<T> forward_infer(const ScNetParams<T>& p, const Tensor4<T>& input) {
    p.validate();
    const int B = p.topo.blocks();
    check_shape<T>(input.c == p.topo.in_channels, "scnet: input channel mismatch");
    check_shape<T>(input.h % (1 << p.topo.levels) == 0 && input.w % (1 << p.topo.levels) == 0,
                   "scnet: input dimensions not divisible by 2^levels");

    std::vector<Tensor4<T>> e(B);
    for (int i = 0; i < B; ++i)
        e[i] = conv_block_infer(i == 0 ? input : nn::maxpool2(e[i - 1]).y, p.enc[i]);

    Tensor4<T> s = cbr_infer(e[0], p.seed_k, p.seed_b, p.seed_bn);
    for (int j = 0; j < p.topo.levels - 1; ++j) s = nn::avgpool2(s);

    std::vector<Tensor4<T>> filtered(B - 1);
    for (int i = B - 1; i >= 1; --i) {
        auto [a, f] = scb_infer(p.scb[i - 1], e[i], s);
        filtered[i - 1] = std::move(f);
        if (i > 1) s = nn::upsample2_bilinear(filtered[i - 1]);
    }

    Tensor4<T> seg_logits = nn::conv2d(filtered[0], p.head_seg_k,
                                       std::span<const T>(p.head_seg_b), p.head_seg_k.h / 2);
    ScNetOutput<T> out;
    out.pred_seg = nn::sigmoid(seg_logits);

    Tensor4<T> d = e[B - 1];
    for (int i = B - 1; i >= 1; --i) {
        Tensor4<T> cat = nn::concat_channels(nn::upsample2_bilinear(d), filtered[i - 1]);
        d = conv_block_infer(cat, p.dec[i - 1]);
    }
    out.pred_depth =
        nn::sigmoid(nn::conv2d(d, p.head_depth_k, std::span<const T>(p.head_depth_b), 0));
    return out;
}

template <typename T>
ScNetParams<T> backward(const ScNetParams<T>& p, const ForwardTrace<T>& trace,
                        const Tensor4<T>& d_pred_depth, const Tensor4<T>& d_pred_seg) {
    const int B = p.topo.blocks();
    ScNetParams<T> g = zero_like(p);

    std::vector<Tensor4<T>> g_e(B);
    for (int i = 0; i < B; ++i) g_e[i] = Tensor4<T>(); // filled lazily
    auto accum = [](Tensor4<T>& dst, Tensor4<T>&& src) {
        if (dst.size() == 0)
            dst = std::move(src);
        else
            add_inplace(dst, src);
    };

    // depth head
    Tensor4<T> g_depth_logits = nn::sigmoid_backward(trace.pred_depth, d_pred_depth);
    nn::Conv2dGrads<T> hd = nn::conv2d_backward(trace.d_final, p.head_depth_k, g_depth_logits, 0);
    add_inplace(g.head_depth_k, hd.gk);
    for (size_t i = 0; i < g.head_depth_b.size(); ++i) g.head_depth_b[i] += hd.gbias[i];

    // decoder, from the last stage back to the bottleneck
    std::vector<Tensor4<T>> g_filtered(B - 1);
    Tensor4<T> g_d = std::move(hd.gx);
    for (int i = 1; i <= B - 1; ++i) {
        Tensor4<T> g_cat = conv_block_backward(trace.dec[i - 1], p.dec[i - 1], g_d, g.dec[i - 1]);
        const int cu = g_cat.c - trace.filtered[i - 1].c;
        Tensor4<T> g_u, g_f;
        nn::split_channels(g_cat, cu, g_u, g_f);
        accum(g_filtered[i - 1], std::move(g_f));
        Tensor4<T> g_prev = nn::upsample2_bilinear_backward(trace.dec_up_dims[i - 1].first,
                                                            trace.dec_up_dims[i - 1].second, g_u);
        if (i == B - 1)
            accum(g_e[B - 1], std::move(g_prev));
        else
            g_d = std::move(g_prev);
    }

    // seg head feeds the final branch state (= filtered[0])
    Tensor4<T> g_seg_logits = nn::sigmoid_backward(trace.pred_seg, d_pred_seg);
    nn::Conv2dGrads<T> hs =
        nn::conv2d_backward(trace.head_seg_in, p.head_seg_k, g_seg_logits, p.head_seg_k.h / 2);
    add_inplace(g.head_seg_k, hs.gk);
    for (size_t i = 0; i < g.head_seg_b.size(); ++i) g.head_seg_b[i] += hs.gbias[i];
    accum(g_filtered[0], std::move(hs.gx));

    // structure branch, ascending: SCB i sends gradient into e[i] and into the
    // next filtered map through the inter-SCB upsample
    for (int i = 1; i <= B - 1; ++i) {
        auto [ge, gs] = scb_backward(trace.scb[i - 1], p.scb[i - 1], g_filtered[i - 1],
                                     g.scb[i - 1]);
        accum(g_e[i], std::move(ge));
        if (i < B - 1) {
            accum(g_filtered[i], nn::upsample2_bilinear_backward(trace.filtered[i].h,
                                                                 trace.filtered[i].w, gs));
        } else {
            // seed path: reverse the avgpool chain, then the seed conv
            Tensor4<T> gseed = std::move(gs);
            for (int j = static_cast<int>(trace.seed_pool_dims.size()) - 1; j >= 0; --j)
                gseed = nn::avgpool2_backward(trace.seed_pool_dims[j].first,
                                              trace.seed_pool_dims[j].second, gseed);
            accum(g_e[0], cbr_backward(trace.seed, p.seed_k, p.seed_bn.gamma, gseed, g.seed_k,
                                       g.seed_b, g.seed_bn.gamma, g.seed_bn.beta));
        }
    }

    // encoder, deepest block first
    for (int i = B - 1; i >= 0; --i) {
        Tensor4<T> gx = conv_block_backward(trace.enc[i], p.enc[i], g_e[i], g.enc[i]);
        if (i > 0) accum(g_e[i - 1], nn::maxpool2_backward(trace.pool[i - 1], gx));
    }
    return g;
}

// ---- optimizer ---------------------------------------------------------------

template <typename T>
AdamState<T> make_adam_state(const ScNetParams<T>& p) {
    AdamState<T> st;
    const size_t n = learnable_count(p);
    st.m.assign(n, T(0));
    st.v.assign(n, T(0));
    return st;
}

template <typename T>
void adam_step(ScNetParams<T>& params, const ScNetParams<T>& grads, AdamState<T>& st, T lr) {
    auto pv = learnable_views(params);
    auto gv = learnable_views(const_cast<ScNetParams<T>&>(grads));
    if (pv.size() != gv.size()) throw std::invalid_argument("adam_step: structure mismatch");
    st.step += 1;
    const T b1 = static_cast<T>(st.beta1), b2 = static_cast<T>(st.beta2);
    const T bc1 = T(1) - static_cast<T>(std::pow(st.beta1, st.step));
    const T bc2 = T(1) - static_cast<T>(std::pow(st.beta2, st.step));
    const T eps = static_cast<T>(st.eps);
    size_t off = 0;
    for (size_t k = 0; k < pv.size(); ++k) {
        if (pv[k].size() != gv[k].size()) throw std::invalid_argument("adam_step: size mismatch");
        for (size_t j = 0; j < pv[k].size(); ++j, ++off) {
            const T gr = gv[k][j];
            st.m[off] = b1 * st.m[off] + (T(1) - b1) * gr;
            st.v[off] = b2 * st.v[off] + (T(1) - b2) * gr * gr;
            const T mhat = st.m[off] / bc1;
            const T vhat = st.v[off] / bc2;
            pv[k][j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
    if (off != st.m.size()) throw std::invalid_argument("adam_step: state size mismatch");
}

// ---- gradient check ----------------------------------------------------------

std::vector<double> analytic_gradient(ScNetParams<double>& params, const Tensor4<double>& input,
                                      const Tensor4<double>& gt_depth,
                                      const Tensor4<double>& gt_seg, const LossWeights& lw,
                                      const SsimParams& sp) {
    ForwardTrace<double> trace;
    ScNetOutput<double> out = forward_train(params, input, trace, false);
    LossGrads<double> lg;
    loss_total(out.pred_depth, out.pred_seg, gt_depth, gt_seg, lw, sp, &lg);
    ScNetParams<double> grads = backward(params, trace, lg.d_pred_depth, lg.d_pred_seg);
    std::vector<double> flat;
    for (auto s : learnable_views(grads)) flat.insert(flat.end(), s.begin(), s.end());
    return flat;
}

std::vector<double> numeric_gradient(const ScNetParams<double>& params,
                                     const Tensor4<double>& input,
                                     const Tensor4<double>& gt_depth,
                                     const Tensor4<double>& gt_seg, const LossWeights& lw,
                                     const SsimParams& sp, double eps) {
    const size_t n = learnable_count(params);
    std::vector<double> numeric(n, 0.0);
    // each worker perturbs its own copy of the parameters
    parallel_for(static_cast<std::int64_t>(n), [&](std::int64_t b, std::int64_t e) {
        ScNetParams<double> local = params;
        auto views = learnable_views(local);
        auto eval_loss = [&]() {
            ForwardTrace<double> t;
            ScNetOutput<double> o = forward_train(local, input, t, false);
            return loss_total(o.pred_depth, o.pred_seg, gt_depth, gt_seg, lw, sp).total;
        };
        std::int64_t off = 0;
        for (auto s : views) {
            for (size_t j = 0; j < s.size(); ++j, ++off) {
                if (off < b || off >= e) continue;
                const double orig = s[j];
                s[j] = orig + eps;
                const double lp = eval_loss();
                s[j] = orig - eps;
                const double lm = eval_loss();
                s[j] = orig;
                numeric[off] = (lp - lm) / (2.0 * eps);
            }
        }
    });
    return numeric;
}

GradCheckReport compare_gradients(const std::vector<double>& analytic,
                                  const std::vector<double>& numeric) {
    if (analytic.size() != numeric.size())
        throw std::invalid_argument("compare_gradients: size mismatch");
    GradCheckReport rep;
    rep.param_count = analytic.size();
    for (size_t i = 0; i < analytic.size(); ++i) {
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-5});
        const double rel = std::abs(analytic[i] - numeric[i]) / denom;
        if (rel > rep.max_rel_error) {
            rep.max_rel_error = rel;
            rep.worst_index = i;
        }
    }
    return rep;
}

GradCheckReport gradient_check(ScNetParams<double>& params, const Tensor4<double>& input,
                               const Tensor4<double>& gt_depth, const Tensor4<double>& gt_seg,
                               const LossWeights& lw, const SsimParams& sp, double eps,
                               const std::function<void(std::vector<double>&)>& tamper) {
    std::vector<double> analytic = analytic_gradient(params, input, gt_depth, gt_seg, lw, sp);
    if (tamper) tamper(analytic);
    std::vector<double> numeric = numeric_gradient(params, input, gt_depth, gt_seg, lw, sp, eps);
    return compare_gradients(analytic, numeric);
}

// ---- checkpoint ----------------------------------------------------------------

void save_checkpoint(const ScNetParams<float>& p, const std::filesystem::path& path) {
    p.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write " + path.string());
    out.write("SCN1", 4);
    const std::uint32_t hdr[3] = {static_cast<std::uint32_t>(p.topo.levels),
                                  static_cast<std::uint32_t>(p.topo.base_width),
                                  static_cast<std::uint32_t>(p.topo.in_channels)};
    out.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
    auto views = state_views(const_cast<ScNetParams<float>&>(p));
    for (auto s : views)
        out.write(reinterpret_cast<const char*>(s.data()),
                  static_cast<std::streamsize>(s.size() * sizeof(float)));
    if (!out) throw io_error("short write: " + path.string());
}

ScNetParams<float> load_checkpoint(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path))
        throw missing_input_error("no such checkpoint: " + path.string());
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "SCN1", 4) != 0)
        throw format_error("not a checkpoint (expected magic SCN1): " + path.string());
    std::uint32_t hdr[3];
    in.read(reinterpret_cast<char*>(hdr), sizeof(hdr));
    if (!in) throw format_error("checkpoint header truncated");
    ScNetTopology topo{static_cast<int>(hdr[0]), static_cast<int>(hdr[1]),
                       static_cast<int>(hdr[2])};
    if (topo.levels < 1 || topo.levels > 16 || topo.base_width < 1 || topo.in_channels < 1)
        throw format_error("checkpoint header: implausible topology");
    ScNetParams<float> p = init_params<float>(topo, 0);
    for (auto s : state_views(p)) {
        in.read(reinterpret_cast<char*>(s.data()),
                static_cast<std::streamsize>(s.size() * sizeof(float)));
        if (static_cast<size_t>(in.gcount()) != s.size() * sizeof(float))
            throw io_error("checkpoint payload truncated");
    }
    if (in.get() != EOF) throw format_error("checkpoint payload has trailing bytes");
    return p;
}

// ---- instantiations --------------------------------------------------------------

#define OCTAREC_INSTANTIATE(T)                                                                    \
    template struct ScNetParams<T>;                                                              \
    template ScNetParams<T> init_params<T>(const ScNetTopology&, std::uint64_t);                 \
    template ScNetParams<T> zero_like<T>(const ScNetParams<T>&);                                 \
    template std::vector<std::span<T>> learnable_views<T>(ScNetParams<T>&);                      \
    template std::vector<std::span<T>> state_views<T>(ScNetParams<T>&);                          \
    template size_t learnable_count<T>(const ScNetParams<T>&);                                   \
    template std::pair<Tensor4<T>, Tensor4<T>> scb_forward<T>(const ScbParams<T>&,               \
                                                              const Tensor4<T>&,                 \
                                                              const Tensor4<T>&);                \
    template ScNetOutput<T> forward_train<T>(ScNetParams<T>&, const Tensor4<T>&,                 \
                                             ForwardTrace<T>&, bool);                            \
    template ScNetOutput<T> forward_infer<T>(const ScNetParams<T>&, const Tensor4<T>&);          \
    template ScNetParams<T> backward<T>(const ScNetParams<T>&, const ForwardTrace<T>&,           \
                                        const Tensor4<T>&, const Tensor4<T>&);                   \
    template AdamState<T> make_adam_state<T>(const ScNetParams<T>&);                             \
    template void adam_step<T>(ScNetParams<T>&, const ScNetParams<T>&, AdamState<T>&, T);

OCTAREC_INSTANTIATE(float)
OCTAREC_INSTANTIATE(double)
#undef OCTAREC_INSTANTIATE

} // namespace octarec
