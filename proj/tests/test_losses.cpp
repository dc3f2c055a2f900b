#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <functional>
#include <random>

#include "octarec/losses.hpp"

using namespace octarec;

namespace {

Tensor4d rand_field(int h, int w, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
    return random_uniform<double>(1, 1, h, w, rng, lo, hi);
}

double fd_loss(Tensor4d& x, const std::function<double()>& f, const Tensor4d& analytic,
               double eps = 1e-6) {
    double worst = 0.0;
    for (size_t i = 0; i < x.v.size(); ++i) {
        const double orig = x.v[i];
        x.v[i] = orig + eps;
        const double lp = f();
        x.v[i] = orig - eps;
        const double lm = f();
        x.v[i] = orig;
        const double num = (lp - lm) / (2.0 * eps);
        const double denom = std::max({std::abs(num), std::abs(analytic.v[i]), 1e-5});
        worst = std::max(worst, std::abs(num - analytic.v[i]) / denom);
    }
    return worst;
}

} // namespace

TEST_CASE("loss_seg basics") {
    Tensor4d a(1, 1, 10, 10, 0.0);
    Tensor4d b(1, 1, 10, 10, 1.0);
    CHECK(loss_seg(a, a) == 0.0);
    CHECK(loss_seg(a, b) == doctest::Approx(1.0));

    Tensor4d p(1, 1, 1, 2), g(1, 1, 1, 2);
    p.v = {0.5, 1.0};
    g.v = {0.0, 1.0};
    CHECK(loss_seg(p, g) == doctest::Approx(0.125));
}

TEST_CASE("loss_seg gradient matches finite differences") {
    std::mt19937_64 rng(21);
    Tensor4d p = rand_field(6, 7, rng);
    Tensor4d g = rand_field(6, 7, rng);
    Tensor4d grad = p.zeros_like();
    loss_seg(p, g, &grad);
    CHECK(fd_loss(p, [&]() { return loss_seg(p, g); }, grad) < 1e-6);
}

TEST_CASE("loss_accuracy: zero at truth and the 0.8/0.2 weighting") {
    std::mt19937_64 rng(22);
    Tensor4d depth = rand_field(8, 8, rng);
    Tensor4d mask = rand_field(8, 8, rng);
    CHECK(loss_accuracy(depth, depth, mask, mask, LossWeights{}) == 0.0);

    // 30 pixels; vessel region: 10 pixels (3 wrong by 1) => MSE 3/30 = 0.1;
    // background: 20 pixels (6 wrong by 1) => MSE 6/30 = 0.2.
    Tensor4d pd(1, 1, 5, 6, 0.0), gd(1, 1, 5, 6, 0.0), pm(1, 1, 5, 6, 0.0), gm(1, 1, 5, 6, 0.0);
    for (int i = 0; i < 10; ++i) {
        pm.v[i] = 1.0;
        gm.v[i] = 1.0;
    }
    for (int i = 0; i < 3; ++i) pd.v[i] = 1.0;       // vessel mismatches
    for (int i = 10; i < 16; ++i) pd.v[i] = 1.0;     // background mismatches
    const double l = loss_accuracy(pd, gd, pm, gm, LossWeights{0.8, 0.2});
    CHECK(l == 0.8 * (3.0 / 30.0) + 0.2 * (6.0 / 30.0));
    CHECK(l == doctest::Approx(0.12).epsilon(1e-12));
}

TEST_CASE("loss_accuracy with unit weights and a full mask reduces to plain MSE") {
    std::mt19937_64 rng(23);
    Tensor4d pd = rand_field(6, 6, rng);
    Tensor4d gd = rand_field(6, 6, rng);
    Tensor4d ones(1, 1, 6, 6, 1.0);
    const double l = loss_accuracy(pd, gd, ones, ones, LossWeights{1.0, 1.0});
    CHECK(l == doctest::Approx(loss_seg(pd, gd)));
}

TEST_CASE("loss_accuracy gradients (depth and mask) match finite differences") {
    std::mt19937_64 rng(24);
    Tensor4d pd = rand_field(7, 6, rng);
    Tensor4d gd = rand_field(7, 6, rng);
    Tensor4d pm = rand_field(7, 6, rng);
    Tensor4d gm = rand_field(7, 6, rng);
    Tensor4d g_depth = pd.zeros_like();
    Tensor4d g_mask = pm.zeros_like();
    loss_accuracy(pd, gd, pm, gm, LossWeights{}, &g_depth, &g_mask);
    auto f = [&]() { return loss_accuracy(pd, gd, pm, gm, LossWeights{}); };
    CHECK(fd_loss(pd, f, g_depth) < 1e-6);
    CHECK(fd_loss(pm, f, g_mask) < 1e-6);
}

TEST_CASE("loss_structure: exactly zero at truth") {
    std::mt19937_64 rng(25);
    Tensor4d a = rand_field(16, 16, rng);
    CHECK(loss_structure(a, a, SsimParams{}) == 0.0);
}

TEST_CASE("loss_structure: constant images hit the zero-variance closed form") {
    Tensor4d a(1, 1, 12, 12, 0.5);
    Tensor4d b(1, 1, 12, 12, 0.6);
    const double expect = 1.0 - 0.6001 / 0.6101;
    CHECK(loss_structure(a, b, SsimParams{}) == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("loss_structure grows with noise amplitude") {
    std::mt19937_64 rng(26);
    Tensor4d gt = rand_field(24, 24, rng, 0.3, 0.7);
    double prev = -1.0;
    for (double amp : {0.01, 0.05, 0.1}) {
        std::mt19937_64 nrng(99);
        std::uniform_real_distribution<double> nd(-amp, amp);
        Tensor4d noisy = gt;
        for (auto& v : noisy.v) v += nd(nrng);
        const double l = loss_structure(noisy, gt, SsimParams{});
        CHECK(l > prev);
        prev = l;
    }
}

TEST_CASE("loss_structure rejects images smaller than the window") {
    Tensor4d a(1, 1, 8, 8, 0.5);
    CHECK_THROWS_AS(loss_structure(a, a, SsimParams{}), std::invalid_argument);
}

TEST_CASE("loss_structure gradient matches finite differences") {
    std::mt19937_64 rng(27);
    Tensor4d p = rand_field(14, 14, rng);
    Tensor4d g = rand_field(14, 14, rng);
    Tensor4d grad = p.zeros_like();
    loss_structure(p, g, SsimParams{}, &grad);
    CHECK(fd_loss(p, [&]() { return loss_structure(p, g, SsimParams{}); }, grad, 1e-5) < 1e-5);
}

TEST_CASE("loss_total: additivity is exact, zero at truth, gradients verified") {
    std::mt19937_64 rng(28);
    Tensor4d pd = rand_field(16, 16, rng);
    Tensor4d ps = rand_field(16, 16, rng);
    Tensor4d gd = rand_field(16, 16, rng);
    Tensor4d gs = rand_field(16, 16, rng);
    LossWeights lw;
    SsimParams sp;

    LossGrads<double> grads;
    LossBreakdown<double> lb = loss_total(pd, ps, gd, gs, lw, sp, &grads);
    CHECK(lb.total == lb.seg + lb.accuracy + lb.structure); // bitwise identity
    CHECK(lb.seg >= 0.0);
    CHECK(lb.accuracy >= 0.0);
    CHECK(lb.structure >= 0.0);

    LossBreakdown<double> zero = loss_total(gd, gs, gd, gs, lw, sp);
    CHECK(zero.seg == 0.0);
    CHECK(zero.accuracy == 0.0);
    CHECK(zero.structure == 0.0);
    CHECK(zero.total == 0.0);

    auto f_total = [&]() { return loss_total(pd, ps, gd, gs, lw, sp).total; };
    CHECK(fd_loss(pd, f_total, grads.d_pred_depth, 1e-5) < 1e-4);
    CHECK(fd_loss(ps, f_total, grads.d_pred_seg, 1e-5) < 1e-4);

    // component gradients sum to the total gradient
    Tensor4d g_acc = pd.zeros_like();
    Tensor4d g_str = pd.zeros_like();
    loss_accuracy(pd, gd, ps, gs, lw, &g_acc, static_cast<Tensor4d*>(nullptr));
    loss_structure(pd, gd, sp, &g_str);
    for (size_t i = 0; i < pd.v.size(); ++i)
        CHECK(grads.d_pred_depth.v[i] ==
              doctest::Approx(g_acc.v[i] + g_str.v[i]).epsilon(1e-12));
}

TEST_CASE("components (0.1, 0.12, 0.02) sum to 0.24") {
    LossBreakdown<double> lb;
    lb.seg = 0.1;
    lb.accuracy = 0.12;
    lb.structure = 0.02;
    lb.total = lb.seg + lb.accuracy + lb.structure;
    CHECK(lb.total == doctest::Approx(0.24).epsilon(1e-15));
}
