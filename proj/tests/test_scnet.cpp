#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <random>

#include "octarec/errors.hpp"
#include "octarec/scnet.hpp"
#include "test_util.hpp"

using namespace octarec;

namespace {

Tensor4d rand_input(int n, int h, int w, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    return random_uniform<double>(n, 1, h, w, rng, lo, hi);
}

} // namespace

TEST_CASE("forward shape contract and output range") {
    ScNetTopology topo{4, 4, 1};
    auto p = init_params<double>(topo, 1);
    Tensor4d x = rand_input(1, 64, 64, 2);
    ForwardTrace<double> tr;
    auto out = forward_train(p, x, tr, false);
    CHECK(out.pred_depth.n == 1);
    CHECK(out.pred_depth.c == 1);
    CHECK(out.pred_depth.h == 64);
    CHECK(out.pred_depth.w == 64);
    CHECK(out.pred_seg.h == 64);
    CHECK(out.pred_seg.w == 64);
    for (double v : out.pred_depth.v) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
    for (double v : out.pred_seg.v) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("indivisible input dimensions are rejected") {
    ScNetTopology topo{2, 2, 1};
    auto p = init_params<double>(topo, 3);
    Tensor4d x = rand_input(1, 18, 18, 4);
    ForwardTrace<double> tr;
    CHECK_THROWS_AS(forward_train(p, x, tr, false), std::invalid_argument);
}

TEST_CASE("forward is deterministic (bit-identical repeats)") {
    ScNetTopology topo{2, 4, 1};
    auto p = init_params<float>(topo, 5);
    std::mt19937_64 rng(6);
    Tensor4f x = random_uniform<float>(2, 1, 16, 16, rng);
    ForwardTrace<float> t1, t2;
    auto o1 = forward_train(p, x, t1, false);
    auto o2 = forward_train(p, x, t2, false);
    CHECK(o1.pred_depth.v == o2.pred_depth.v);
    CHECK(o1.pred_seg.v == o2.pred_seg.v);

    auto i1 = forward_infer(p, x);
    auto i2 = forward_infer(p, x);
    CHECK(i1.pred_depth.v == i2.pred_depth.v);
}

TEST_CASE("batch permutation permutes outputs") {
    ScNetTopology topo{2, 4, 1};
    auto p = init_params<double>(topo, 7);
    Tensor4d x = rand_input(2, 16, 16, 8);
    Tensor4d xswap(2, 1, 16, 16);
    const size_t plane = 16 * 16;
    std::copy_n(x.plane(1, 0), plane, xswap.plane(0, 0));
    std::copy_n(x.plane(0, 0), plane, xswap.plane(1, 0));

    ForwardTrace<double> t1, t2;
    auto o1 = forward_train(p, x, t1, false);
    auto o2 = forward_train(p, xswap, t2, false);
    for (size_t i = 0; i < plane; ++i) {
        CHECK(o1.pred_depth.plane(0, 0)[i] == doctest::Approx(o2.pred_depth.plane(1, 0)[i]).epsilon(1e-10));
        CHECK(o1.pred_depth.plane(1, 0)[i] == doctest::Approx(o2.pred_depth.plane(0, 0)[i]).epsilon(1e-10));
    }
}

TEST_CASE("scb attention range and multiplicative identities") {
    ScNetTopology topo{2, 4, 1};
    auto p = init_params<double>(topo, 9);
    std::mt19937_64 rng(10);
    // SCB 1 gates encoder block 1 (channels(1)=8) with state channels(2)=16
    Tensor4d e = random_uniform<double>(1, topo.channels(1), 8, 8, rng);
    Tensor4d s = random_uniform<double>(1, topo.channels(2), 16, 16, rng);
    auto [a, filtered] = scb_forward(p.scb[0], e, s);
    CHECK(a.c == 1);
    CHECK(a.h == 16);
    for (double v : a.v) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
    // |filtered| <= |upsampled e| since a in (0,1)
    Tensor4d up = nn::upsample2_bilinear(e);
    for (size_t i = 0; i < filtered.v.size(); ++i)
        CHECK(std::abs(filtered.v[i]) <= std::abs(up.v[i]) + 1e-12);

    // forcing the attention output: a == 1 keeps features, a == 0 clears them
    Tensor4d ones(1, 1, 16, 16, 1.0), zeros(1, 1, 16, 16, 0.0);
    Tensor4d keep = nn::mul_broadcast(up, ones);
    CHECK(keep.v == up.v);
    Tensor4d gone = nn::mul_broadcast(up, zeros);
    for (double v : gone.v) CHECK(v == 0.0);

    // spatial mismatch is a shape error
    Tensor4d bad = random_uniform<double>(1, topo.channels(2), 8, 8, rng);
    CHECK_THROWS_AS(scb_forward(p.scb[0], e, bad), std::invalid_argument);
}

TEST_CASE("backward replay from a stored trace is bit-identical") {
    ScNetTopology topo{2, 2, 1};
    auto p = init_params<double>(topo, 11);
    Tensor4d x = rand_input(1, 16, 16, 12);
    ForwardTrace<double> tr;
    auto out = forward_train(p, x, tr, false);
    Tensor4d gd = rand_input(1, 16, 16, 13, -1.0, 1.0);
    Tensor4d gs = rand_input(1, 16, 16, 14, -1.0, 1.0);
    auto g1 = backward(p, tr, gd, gs);
    auto g2 = backward(p, tr, gd, gs);
    auto v1 = learnable_views(g1);
    auto v2 = learnable_views(g2);
    REQUIRE(v1.size() == v2.size());
    for (size_t i = 0; i < v1.size(); ++i)
        CHECK(std::equal(v1[i].begin(), v1[i].end(), v2[i].begin()));

    // replaying forward reproduces the trace outputs exactly
    ForwardTrace<double> tr2;
    auto out2 = forward_train(p, x, tr2, false);
    CHECK(out.pred_depth.v == out2.pred_depth.v);
    CHECK(tr.d_final.v == tr2.d_final.v);
}

TEST_CASE("full-network gradient check: analytic backward vs central differences") {
    ScNetTopology topo{2, 2, 1};
    auto p = init_params<double>(topo, 15);
    Tensor4d x = rand_input(1, 16, 16, 16);
    Tensor4d gt_depth = rand_input(1, 16, 16, 17);
    Tensor4d gt_seg = rand_input(1, 16, 16, 18);
    auto rep = gradient_check(p, x, gt_depth, gt_seg, LossWeights{}, SsimParams{}, 1e-5);
    CAPTURE(rep.max_rel_error);
    CAPTURE(rep.worst_index);
    CHECK(rep.max_rel_error < 1e-4);
    CHECK(rep.param_count == learnable_count(p));
}

TEST_CASE("gradient check flags a corrupted backward pass") {
    ScNetTopology topo{2, 2, 1};
    auto p = init_params<double>(topo, 19);
    Tensor4d x = rand_input(1, 16, 16, 20);
    Tensor4d gt_depth = rand_input(1, 16, 16, 21);
    Tensor4d gt_seg = rand_input(1, 16, 16, 22);
    auto tamper = [](std::vector<double>& g) {
        size_t worst = 0;
        for (size_t i = 1; i < g.size(); ++i)
            if (std::abs(g[i]) > std::abs(g[worst])) worst = i;
        g[worst] = -g[worst]; // single sign flip
    };
    auto rep = gradient_check(p, x, gt_depth, gt_seg, LossWeights{}, SsimParams{}, 1e-5, tamper);
    CHECK(rep.max_rel_error > 1e-1);
}

TEST_CASE("adam: zero gradient is a fixed point; first step is ~lr*sign(g)") {
    ScNetTopology topo{1, 2, 1};
    auto p = init_params<float>(topo, 23);
    auto p_before = p;
    auto zeros = zero_like(p);
    auto st = make_adam_state(p);
    adam_step(p, zeros, st, 1e-3f);
    auto a = state_views(p);
    auto b = state_views(p_before);
    for (size_t i = 0; i < a.size(); ++i)
        CHECK(std::equal(a[i].begin(), a[i].end(), b[i].begin()));

    // one step from zeroed state: |delta| ~= lr * |g| / (|g| + eps) ~= lr
    auto g = zero_like(p);
    auto gv = learnable_views(g);
    gv[0][0] = 0.37f; // some gradient value
    auto st2 = make_adam_state(p);
    auto p2 = p;
    adam_step(p2, g, st2, 1e-3f);
    auto pv = learnable_views(p);
    auto pv2 = learnable_views(p2);
    CHECK(pv2[0][0] == doctest::Approx(pv[0][0] - 1e-3).epsilon(1e-4));
    CHECK(pv2[0][1] == pv[0][1]); // untouched weight

    // determinism: same gradients => same parameters
    auto p3 = p;
    auto st3 = make_adam_state(p);
    adam_step(p3, g, st3, 1e-3f);
    auto pv3 = learnable_views(p3);
    for (size_t i = 0; i < pv2.size(); ++i)
        CHECK(std::equal(pv2[i].begin(), pv2[i].end(), pv3[i].begin()));
}

TEST_CASE("checkpoint round-trip is bit-exact and deterministic") {
    testutil::TempDir td("ckpt");
    ScNetTopology topo{2, 3, 1};
    auto p = init_params<float>(topo, 31);
    // make running stats non-trivial
    std::mt19937_64 rng(32);
    Tensor4f x = random_uniform<float>(2, 1, 16, 16, rng, 0.0f, 1.0f);
    ForwardTrace<float> tr;
    forward_train(p, x, tr, true);

    save_checkpoint(p, td / "a.scn");
    save_checkpoint(p, td / "b.scn");
    CHECK(testutil::read_bytes(td / "a.scn") == testutil::read_bytes(td / "b.scn"));

    auto q = load_checkpoint(td / "a.scn");
    CHECK(q.topo == p.topo);
    auto vp = state_views(p);
    auto vq = state_views(q);
    REQUIRE(vp.size() == vq.size());
    for (size_t i = 0; i < vp.size(); ++i)
        CHECK(std::equal(vp[i].begin(), vp[i].end(), vq[i].begin()));
}

TEST_CASE("checkpoint loader rejects malformed files") {
    testutil::TempDir td("ckpt_bad");
    testutil::write_bytes(td / "bad.scn", "NOPE....");
    CHECK_THROWS_AS(load_checkpoint(td / "bad.scn"), format_error);
    testutil::write_bytes(td / "short.scn", std::string("SCN1") + std::string(12, '\x01'));
    CHECK_THROWS(load_checkpoint(td / "short.scn"));
    CHECK_THROWS_AS(load_checkpoint(td / "none.scn"), missing_input_error);
}
