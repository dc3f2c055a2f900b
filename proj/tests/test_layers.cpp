#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <functional>
#include <random>

#include "octarec/layers.hpp"

using namespace octarec;
using namespace octarec::nn;

namespace {

// Projection "loss": sum(y .* r) for a fixed random field r, so d(loss)/dy = r.
double proj(const Tensor4d& y, const Tensor4d& r) {
    double s = 0.0;
    for (size_t i = 0; i < y.v.size(); ++i) s += y.v[i] * r.v[i];
    return s;
}

// Worst relative error between analytic gradient entries and central
// differences of f over every entry of x.
double fd_check(std::vector<double>& x, const std::vector<double>& analytic,
                const std::function<double()>& f, double eps = 1e-5) {
    double worst = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + eps;
        const double lp = f();
        x[i] = orig - eps;
        const double lm = f();
        x[i] = orig;
        const double num = (lp - lm) / (2.0 * eps);
        const double denom = std::max({std::abs(num), std::abs(analytic[i]), 1e-5});
        worst = std::max(worst, std::abs(num - analytic[i]) / denom);
    }
    return worst;
}

Tensor4d rand_t(int n, int c, int h, int w, std::mt19937_64& rng) {
    return random_uniform<double>(n, c, h, w, rng);
}

} // namespace

TEST_CASE("conv2d: all-ones 3x3 input and kernel, padding 1") {
    Tensor4d x(1, 1, 3, 3, 1.0);
    Tensor4d k(1, 1, 3, 3, 1.0);
    std::vector<double> b{0.0};
    Tensor4d y = conv2d(x, k, std::span<const double>(b), 1);
    CHECK(y.at(0, 0, 1, 1) == doctest::Approx(9.0));
    CHECK(y.at(0, 0, 0, 0) == doctest::Approx(4.0));
    CHECK(y.at(0, 0, 0, 2) == doctest::Approx(4.0));
    CHECK(y.at(0, 0, 2, 0) == doctest::Approx(4.0));
    CHECK(y.at(0, 0, 0, 1) == doctest::Approx(6.0));
}

TEST_CASE("conv2d: identity kernel reproduces the input") {
    std::mt19937_64 rng(2);
    Tensor4d x = rand_t(2, 3, 5, 6, rng);
    Tensor4d k(3, 3, 3, 3, 0.0);
    for (int c = 0; c < 3; ++c) k.at(c, c, 1, 1) = 1.0;
    std::vector<double> b(3, 0.0);
    Tensor4d y = conv2d(x, k, std::span<const double>(b), 1);
    for (size_t i = 0; i < x.v.size(); ++i) CHECK(y.v[i] == doctest::Approx(x.v[i]));
}

TEST_CASE("conv2d rejects channel mismatches") {
    Tensor4d x(1, 2, 4, 4);
    Tensor4d k(1, 3, 3, 3);
    std::vector<double> b{0.0};
    CHECK_THROWS_AS(conv2d(x, k, std::span<const double>(b), 1), std::invalid_argument);
}

TEST_CASE("conv2d backward matches finite differences (linear => near machine eps)") {
    std::mt19937_64 rng(3);
    Tensor4d x = rand_t(2, 2, 6, 5, rng);
    Tensor4d k = rand_t(3, 2, 3, 3, rng);
    std::vector<double> b{0.1, -0.2, 0.3};
    Tensor4d r = rand_t(2, 3, 6, 5, rng);

    auto g = conv2d_backward(x, k, r, 1);
    auto f = [&]() { return proj(conv2d(x, k, std::span<const double>(b), 1), r); };

    CHECK(fd_check(x.v, g.gx.v, f) < 1e-8);
    CHECK(fd_check(k.v, g.gk.v, f) < 1e-8);
    CHECK(fd_check(b, g.gbias, f) < 1e-8);
}

TEST_CASE("relu and sigmoid basics") {
    Tensor4d x(1, 1, 1, 2);
    x.v = {-1.0, 2.0};
    Tensor4d y = relu(x);
    CHECK(y.v[0] == 0.0);
    CHECK(y.v[1] == 2.0);
    Tensor4d s = sigmoid(Tensor4d(1, 1, 1, 1, 0.0));
    CHECK(s.v[0] == doctest::Approx(0.5));
}

TEST_CASE("relu/sigmoid backward match finite differences") {
    std::mt19937_64 rng(4);
    Tensor4d x = rand_t(1, 2, 4, 4, rng);
    Tensor4d r = rand_t(1, 2, 4, 4, rng);

    Tensor4d gr = relu_backward(x, r);
    CHECK(fd_check(x.v, gr.v, [&]() { return proj(relu(x), r); }) < 1e-7);

    Tensor4d y = sigmoid(x);
    Tensor4d gs = sigmoid_backward(y, r);
    CHECK(fd_check(x.v, gs.v, [&]() { return proj(sigmoid(x), r); }) < 1e-7);
}

TEST_CASE("maxpool2 picks the block maximum and routes gradients to it") {
    Tensor4d x(1, 1, 2, 2);
    x.v = {1.0, 2.0, 3.0, 4.0};
    auto p = maxpool2(x);
    CHECK(p.y.v.size() == 1);
    CHECK(p.y.v[0] == 4.0);

    Tensor4d gy(1, 1, 1, 1, 2.5);
    Tensor4d gx = maxpool2_backward(p, gy);
    CHECK(gx.v == std::vector<double>{0.0, 0.0, 0.0, 2.5});
}

TEST_CASE("maxpool2 rejects odd dimensions") {
    Tensor4d x(1, 1, 3, 4);
    CHECK_THROWS_AS(maxpool2(x), std::invalid_argument);
}

TEST_CASE("maxpool2 backward matches finite differences") {
    std::mt19937_64 rng(5);
    Tensor4d x = rand_t(2, 2, 6, 4, rng);
    Tensor4d r = rand_t(2, 2, 3, 2, rng);
    auto p = maxpool2(x);
    Tensor4d gx = maxpool2_backward(p, r);
    CHECK(fd_check(x.v, gx.v, [&]() { return proj(maxpool2(x).y, r); }) < 1e-7);
}

TEST_CASE("avgpool2 backward matches finite differences") {
    std::mt19937_64 rng(6);
    Tensor4d x = rand_t(1, 3, 4, 6, rng);
    Tensor4d r = rand_t(1, 3, 2, 3, rng);
    Tensor4d gx = avgpool2_backward(x.h, x.w, r);
    CHECK(fd_check(x.v, gx.v, [&]() { return proj(avgpool2(x), r); }) < 1e-7);
}

TEST_CASE("upsample2 preserves constants; down-averaging restores them") {
    Tensor4d x(1, 1, 3, 3, 0.7);
    Tensor4d y = upsample2_bilinear(x);
    REQUIRE(y.h == 6);
    REQUIRE(y.w == 6);
    for (double v : y.v) CHECK(v == doctest::Approx(0.7));
    Tensor4d back = avgpool2(y);
    for (double v : back.v) CHECK(v == doctest::Approx(0.7));
}

TEST_CASE("upsample2 backward matches finite differences") {
    std::mt19937_64 rng(7);
    Tensor4d x = rand_t(2, 2, 3, 4, rng);
    Tensor4d r = rand_t(2, 2, 6, 8, rng);
    Tensor4d gx = upsample2_bilinear_backward(x.h, x.w, r);
    CHECK(fd_check(x.v, gx.v, [&]() { return proj(upsample2_bilinear(x), r); }) < 1e-7);
}

TEST_CASE("batchnorm train normalizes and its backward matches finite differences") {
    std::mt19937_64 rng(8);
    Tensor4d x = rand_t(2, 3, 4, 4, rng);
    BnParam<double> p(3);
    p.gamma = {1.2, 0.8, 1.0};
    p.beta = {0.1, -0.1, 0.0};
    Tensor4d r = rand_t(2, 3, 4, 4, rng);

    BnCache<double> cache;
    Tensor4d y = batchnorm_train(x, p, cache, 1e-5, false);

    // per-channel mean ~beta, variance ~gamma^2
    for (int c = 0; c < 3; ++c) {
        double mean = 0.0;
        for (int n = 0; n < 2; ++n) {
            const double* yp = y.plane(n, c);
            for (int i = 0; i < 16; ++i) mean += yp[i];
        }
        mean /= 32.0;
        CHECK(mean == doctest::Approx(p.beta[c]).epsilon(1e-6));
    }

    auto fwd = [&]() {
        BnCache<double> c2;
        return proj(batchnorm_train(x, p, c2, 1e-5, false), r);
    };
    auto g = batchnorm_backward(cache, p.gamma, r);
    CHECK(fd_check(x.v, g.gx.v, fwd) < 1e-7);
    CHECK(fd_check(p.gamma, g.ggamma, fwd) < 1e-7);
    CHECK(fd_check(p.beta, g.gbeta, fwd) < 1e-9);
}

TEST_CASE("batchnorm inference uses running statistics") {
    BnParam<double> p(1);
    p.running_mean = {2.0};
    p.running_var = {4.0};
    p.gamma = {3.0};
    p.beta = {1.0};
    Tensor4d x(1, 1, 1, 1, 4.0);
    Tensor4d y = batchnorm_infer(x, p, 0.0);
    CHECK(y.v[0] == doctest::Approx(1.0 + 3.0 * (4.0 - 2.0) / 2.0));
}

TEST_CASE("concat/split and broadcast multiply round-trip gradients") {
    std::mt19937_64 rng(9);
    Tensor4d a = rand_t(1, 2, 3, 3, rng);
    Tensor4d b = rand_t(1, 3, 3, 3, rng);
    Tensor4d cat = concat_channels(a, b);
    REQUIRE(cat.c == 5);
    Tensor4d ga, gb;
    split_channels(cat, 2, ga, gb);
    CHECK(ga.v == a.v);
    CHECK(gb.v == b.v);

    Tensor4d att = rand_t(1, 1, 3, 3, rng);
    Tensor4d r = rand_t(1, 2, 3, 3, rng);
    Tensor4d gx, gatt;
    mul_broadcast_backward(a, att, r, gx, gatt);
    CHECK(fd_check(a.v, gx.v, [&]() { return proj(mul_broadcast(a, att), r); }) < 1e-7);
    CHECK(fd_check(att.v, gatt.v, [&]() { return proj(mul_broadcast(a, att), r); }) < 1e-7);
}
