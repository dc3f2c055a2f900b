#include "octarec/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

#include "octarec/errors.hpp"

namespace octarec::phantom {

namespace {

constexpr double kMargin = 0.045;   // unit-space border the tree never crosses
constexpr double kStep = 0.004;     // unit-space spacing of polyline vertices
constexpr double kRootLen = 0.48;   // unit-space trunk length
constexpr double kLenDecay = 0.62;  // branch length shrink per generation
constexpr double kForkAngle = 0.5;  // nominal half-angle at a bifurcation

struct Grower {
    const PhantomConfig& cfg;
    std::mt19937_64 rng;
    std::vector<PhantomBranch> branches;

    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(rng);
    }

    void grow(int parent, int gen, double x, double y, double dir, double radius) {
        const double len = kRootLen * std::pow(kLenDecay, gen);
        const int steps = std::max(2, static_cast<int>(std::ceil(len / kStep)));
        const double zb = std::clamp(cfg.z_base + gen * cfg.z_step, 0.02, 0.9);
        const double phase = uniform(0.0, 2.0 * std::numbers::pi);
        const double curve = uniform(-1.2, 1.2); // rad per unit length

        PhantomBranch br;
        br.parent = parent;
        br.generation = gen;
        br.points.reserve(steps + 1);
        double px = x, py = y, pd = dir;
        for (int i = 0; i <= steps; ++i) {
            const double t = static_cast<double>(i) / steps;
            const double z =
                std::clamp(zb + cfg.z_amplitude * std::sin(2.0 * std::numbers::pi * t + phase),
                           0.01, 0.99);
            br.points.push_back({px * cfg.canvas, py * cfg.canvas, z, radius});
            if (i == steps) break;
            pd += curve * (len / steps);
            double nx = px + std::cos(pd) * (len / steps);
            double ny = py + std::sin(pd) * (len / steps);
            if (nx < kMargin || nx > 1.0 - kMargin) {
                pd = std::numbers::pi - pd; // reflect off a vertical wall
                nx = px + std::cos(pd) * (len / steps);
            }
            if (ny < kMargin || ny > 1.0 - kMargin) {
                pd = -pd; // reflect off a horizontal wall
                ny = py + std::sin(pd) * (len / steps);
            }
            px = std::clamp(nx, kMargin, 1.0 - kMargin);
            py = std::clamp(ny, kMargin, 1.0 - kMargin);
        }
        const int self = static_cast<int>(branches.size());
        branches.push_back(std::move(br));

        if (gen + 1 >= cfg.depth_levels) return;
        // both children always consume the same number of draws so the
        // stream stays aligned whether or not a child spawns
        for (int side = 0; side < 2; ++side) {
            const double spawn = uniform(0.0, 1.0);
            const double fork = kForkAngle * (side == 0 ? 1.0 : -1.0) +
                                cfg.angle_jitter * uniform(-1.0, 1.0);
            if (spawn < cfg.branch_prob)
                grow(self, gen + 1, px, py, pd + fork, radius * cfg.radius_decay);
        }
    }
};

std::uint64_t noise_stream_seed(std::uint64_t seed) { return seed ^ 0x9e3779b97f4a7c15ull; }

} // namespace

void PhantomScene::validate() const {
    if (canvas < 16) throw std::invalid_argument("phantom: canvas too small");
    for (const auto& b : branches) {
        if (b.points.size() < 2)
            throw std::invalid_argument("phantom: branch with fewer than 2 points");
        for (const auto& p : b.points) {
            if (!(p.radius > 0.0)) throw std::invalid_argument("phantom: non-positive radius");
            if (p.z < 0.0 || p.z > 1.0) throw std::invalid_argument("phantom: z outside [0,1]");
            if (p.x < 0.0 || p.x >= canvas || p.y < 0.0 || p.y >= canvas)
                throw std::invalid_argument("phantom: point outside canvas");
        }
        if (b.parent >= 0) {
            const auto& root = b.points.front();
            bool touches = false;
            for (const auto& q : branches[b.parent].points) {
                if (std::abs(q.x - root.x) < 1e-9 && std::abs(q.y - root.y) < 1e-9) {
                    touches = true;
                    break;
                }
            }
            if (!touches) throw std::invalid_argument("phantom: child root not on its parent");
        }
    }
}

PhantomScene generate_tree(std::uint64_t seed, const PhantomConfig& cfg) {
    if (cfg.depth_levels < 1) throw std::invalid_argument("phantom: depth_levels must be >= 1");
    if (cfg.radius_root < 1.0) throw std::invalid_argument("phantom: radius_root must be >= 1 px");
    if (!(cfg.radius_decay > 0.0 && cfg.radius_decay < 1.0))
        throw std::invalid_argument("phantom: radius_decay must lie in (0,1)");
    if (cfg.canvas < 16) throw std::invalid_argument("phantom: canvas too small");

    Grower g{cfg, std::mt19937_64(seed), {}};
    for (int r = 0; r < cfg.n_roots; ++r) {
        // start on the left band, heading right with some spread
        const double y0 = g.uniform(0.2, 0.8);
        const double dir = g.uniform(-0.5, 0.5);
        g.grow(-1, 0, kMargin + 0.02, y0, dir, cfg.radius_root);
    }
    if (g.branches.empty()) throw empty_scene_error("phantom: configuration yields no branches");

    PhantomScene scene;
    scene.seed = seed;
    scene.canvas = cfg.canvas;
    scene.mm_per_px = cfg.mm_per_px;
    scene.mm_per_depth = cfg.mm_per_depth;
    scene.branches = std::move(g.branches);
    scene.validate();
    return scene;
}

PhantomSample rasterize(const PhantomScene& scene, double noise_level) {
    scene.validate();
    const int c = scene.canvas;
    PhantomSample out;
    out.seg_gt = BinaryMask(c, c);
    out.depth_gt = DepthMap(c, c);

    const size_t npx = static_cast<size_t>(c) * c;
    std::vector<double> bdist(npx), bz(npx);
    constexpr double inf = std::numeric_limits<double>::infinity();

    for (const auto& br : scene.branches) {
        std::fill(bdist.begin(), bdist.end(), inf);
        // stamp disks along the densely resampled centerline; each pixel
        // keeps the z of the xy-nearest stamp of this branch
        for (size_t s = 0; s + 1 < br.points.size(); ++s) {
            const auto& p0 = br.points[s];
            const auto& p1 = br.points[s + 1];
            const double seglen = std::hypot(p1.x - p0.x, p1.y - p0.y);
            const int sub = std::max(1, static_cast<int>(std::ceil(seglen / 0.3)));
            for (int i = 0; i <= sub; ++i) {
                const double t = static_cast<double>(i) / sub;
                const double x = p0.x + t * (p1.x - p0.x);
                const double y = p0.y + t * (p1.y - p0.y);
                const double z = p0.z + t * (p1.z - p0.z);
                const double r = p0.radius + t * (p1.radius - p0.radius);
                const int x_lo = std::max(0, static_cast<int>(std::ceil(x - r)));
                const int x_hi = std::min(c - 1, static_cast<int>(std::floor(x + r)));
                const int y_lo = std::max(0, static_cast<int>(std::ceil(y - r)));
                const int y_hi = std::min(c - 1, static_cast<int>(std::floor(y + r)));
                for (int yy = y_lo; yy <= y_hi; ++yy)
                    for (int xx = x_lo; xx <= x_hi; ++xx) {
                        const double d2 = (xx - x) * (xx - x) + (yy - y) * (yy - y);
                        if (d2 <= r * r) {
                            const size_t idx = static_cast<size_t>(yy) * c + xx;
                            if (d2 < bdist[idx]) {
                                bdist[idx] = d2;
                                bz[idx] = z;
                            }
                        }
                    }
            }
        }
        // merge: across branches a pixel takes the minimum z (nearest sensor)
        for (size_t i = 0; i < npx; ++i) {
            if (bdist[i] == inf) continue;
            if (!out.seg_gt.bits[i] || bz[i] < out.depth_gt.image.data[i])
                out.depth_gt.image.data[i] = static_cast<float>(bz[i]);
            out.seg_gt.bits[i] = 1;
        }
    }
    out.depth_gt.valid = out.seg_gt;

    out.angiogram = out.seg_gt.to_image();
    if (noise_level != 0.0) {
        std::mt19937_64 nrng(noise_stream_seed(scene.seed));
        std::normal_distribution<double> noise(0.0, noise_level);
        for (auto& v : out.angiogram.data)
            v = static_cast<float>(std::clamp(static_cast<double>(v) + noise(nrng), 0.0, 1.0));
    }

    for (const auto& br : scene.branches)
        for (const auto& p : br.points)
            out.centerline_gt.points.push_back(
                {p.x * scene.mm_per_px, p.y * scene.mm_per_px, p.z * scene.mm_per_depth});
    return out;
}

} // namespace octarec::phantom
