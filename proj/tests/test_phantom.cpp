#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "octarec/errors.hpp"
#include "octarec/phantom.hpp"

using namespace octarec;
using namespace octarec::phantom;

namespace {

// straight horizontal branch across the canvas at a fixed depth
PhantomScene straight_scene(double z, double radius = 3.0, int canvas = 64) {
    PhantomScene s;
    s.seed = 1;
    s.canvas = canvas;
    s.mm_per_px = 3.0 / 512.0;
    s.mm_per_depth = 0.5;
    PhantomBranch b;
    b.generation = 0;
    for (int i = 0; i <= 40; ++i) {
        const double t = i / 40.0;
        b.points.push_back({8.0 + t * (canvas - 16.0), canvas / 2.0, z, radius});
    }
    s.branches.push_back(b);
    return s;
}

bool same_scene(const PhantomScene& a, const PhantomScene& b) {
    if (a.branches.size() != b.branches.size()) return false;
    for (size_t i = 0; i < a.branches.size(); ++i) {
        const auto& x = a.branches[i];
        const auto& y = b.branches[i];
        if (x.parent != y.parent || x.generation != y.generation ||
            x.points.size() != y.points.size())
            return false;
        for (size_t j = 0; j < x.points.size(); ++j) {
            if (x.points[j].x != y.points[j].x || x.points[j].y != y.points[j].y ||
                x.points[j].z != y.points[j].z || x.points[j].radius != y.points[j].radius)
                return false;
        }
    }
    return true;
}

} // namespace

TEST_CASE("generate_tree is deterministic for a fixed seed and config") {
    PhantomConfig cfg;
    cfg.canvas = 128;
    auto a = generate_tree(42, cfg);
    auto b = generate_tree(42, cfg);
    CHECK(same_scene(a, b));
    auto c = generate_tree(43, cfg);
    CHECK_FALSE(same_scene(a, c));
}

TEST_CASE("degenerate config produces exactly one branch") {
    PhantomConfig cfg;
    cfg.depth_levels = 1;
    cfg.branch_prob = 0.0;
    cfg.canvas = 64;
    auto s = generate_tree(5, cfg);
    CHECK(s.branches.size() == 1);
    CHECK(s.branches[0].points.size() >= 2);
}

TEST_CASE("bad configs are rejected") {
    PhantomConfig cfg;
    cfg.depth_levels = 0;
    CHECK_THROWS_AS(generate_tree(1, cfg), std::invalid_argument);
    cfg.depth_levels = 2;
    cfg.radius_root = 0.5;
    CHECK_THROWS_AS(generate_tree(1, cfg), std::invalid_argument);
    cfg.radius_root = 2.0;
    cfg.n_roots = 0;
    CHECK_THROWS_AS(generate_tree(1, cfg), empty_scene_error);
}

TEST_CASE("canvas scaling preserves branch topology") {
    PhantomConfig small;
    small.canvas = 128;
    PhantomConfig big = small;
    big.canvas = 256;
    auto a = generate_tree(42, small);
    auto b = generate_tree(42, big);
    REQUIRE(a.branches.size() == b.branches.size());
    for (size_t i = 0; i < a.branches.size(); ++i) {
        CHECK(a.branches[i].parent == b.branches[i].parent);
        CHECK(a.branches[i].generation == b.branches[i].generation);
        // same unit-space geometry, scaled
        CHECK(a.branches[i].points.front().x * 2.0 ==
              doctest::Approx(b.branches[i].points.front().x).epsilon(1e-12));
    }
}

TEST_CASE("rasterize: constant-depth branch paints constant depth") {
    auto sample = rasterize(straight_scene(0.5), 0.0);
    REQUIRE(sample.seg_gt.count() > 100);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x)
            if (sample.seg_gt.at(x, y)) CHECK(sample.depth_gt.image.at(x, y) == 0.5f);
}

TEST_CASE("rasterize: crossing branches keep the depth nearest the sensor") {
    PhantomScene s = straight_scene(0.7);
    PhantomBranch vertical;
    vertical.generation = 0;
    for (int i = 0; i <= 40; ++i) {
        const double t = i / 40.0;
        vertical.points.push_back({32.0, 8.0 + t * 48.0, 0.3, 3.0});
    }
    s.branches.push_back(vertical);
    auto sample = rasterize(s, 0.0);
    // the crossing region belongs to both branches and must read z = 0.3
    CHECK(sample.depth_gt.image.at(32, 32) == doctest::Approx(0.3));
    // away from the crossing the horizontal branch keeps its own depth
    CHECK(sample.depth_gt.image.at(10, 32) == doctest::Approx(0.7));
}

TEST_CASE("rasterize: zero noise reproduces the segmentation exactly") {
    auto sample = rasterize(straight_scene(0.4), 0.0);
    for (size_t i = 0; i < sample.angiogram.data.size(); ++i)
        CHECK(sample.angiogram.data[i] == (sample.seg_gt.bits[i] ? 1.0f : 0.0f));

    auto noisy = rasterize(straight_scene(0.4), 0.05);
    bool any_diff = false;
    for (size_t i = 0; i < noisy.angiogram.data.size(); ++i) {
        CHECK(noisy.angiogram.data[i] >= 0.0f);
        CHECK(noisy.angiogram.data[i] <= 1.0f);
        if (noisy.angiogram.data[i] != (noisy.seg_gt.bits[i] ? 1.0f : 0.0f)) any_diff = true;
    }
    CHECK(any_diff);
}

TEST_CASE("coverage consistency: seg_gt equals the depth validity mask") {
    PhantomConfig cfg;
    cfg.canvas = 96;
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        auto sample = rasterize(generate_tree(seed, cfg), 0.05);
        CHECK(sample.depth_gt.valid.bits == sample.seg_gt.bits);
        CHECK(sample.seg_gt.count() > 0);
    }
}

TEST_CASE("monotone occlusion: deepening a branch never lowers recorded depth") {
    PhantomConfig cfg;
    cfg.canvas = 96;
    auto scene = generate_tree(11, cfg);
    auto before = rasterize(scene, 0.0);

    PhantomScene deeper = scene;
    for (auto& p : deeper.branches[0].points) p.z = std::min(0.99, p.z + 0.2);
    auto after = rasterize(deeper, 0.0);

    for (size_t i = 0; i < before.depth_gt.image.data.size(); ++i) {
        if (!before.seg_gt.bits[i]) continue;
        CHECK(after.depth_gt.image.data[i] >= before.depth_gt.image.data[i] - 1e-6f);
    }
}

TEST_CASE("centerline ground truth carries every polyline vertex in mm") {
    auto scene = straight_scene(0.5);
    auto sample = rasterize(scene, 0.0);
    REQUIRE(sample.centerline_gt.size() == scene.branches[0].points.size());
    const auto& p0 = scene.branches[0].points[0];
    CHECK(sample.centerline_gt.points[0].x == doctest::Approx(p0.x * scene.mm_per_px));
    CHECK(sample.centerline_gt.points[0].z == doctest::Approx(p0.z * scene.mm_per_depth));
}
