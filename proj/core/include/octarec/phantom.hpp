#pragma once

#include <cstdint>
#include <vector>

#include "octarec/geometry.hpp"
#include "octarec/image.hpp"

namespace octarec::phantom {

/// Knobs of the synthetic vessel-tree generator. Growth happens in a unit
/// square so the tree topology is independent of the canvas resolution.
struct PhantomConfig {
    int depth_levels = 4;       // bifurcation generations
    double branch_prob = 0.85;  // chance each child of a bifurcation exists
    double radius_root = 3.0;   // trunk radius in pixels
    double radius_decay = 0.72; // per-generation radius multiplier, in (0,1)
    double angle_jitter = 0.5;  // radians around the nominal branching angle
    int canvas = 512;           // square canvas edge in pixels

    int n_roots = 1;            // independent trees
    double z_base = 0.25;       // trunk depth
    double z_step = 0.16;       // added depth per generation (thick = shallow)
    double z_amplitude = 0.04;  // sinusoidal depth wobble along a branch
    double noise_sigma = 0.05;  // default angiogram noise level
    double mm_per_px = 3.0 / 512.0;
    double mm_per_depth = 0.5;  // mm spanned by the [0,1] depth range
};

struct PhantomPoint {
    double x = 0.0, y = 0.0; // pixels
    double z = 0.0;          // depth in [0,1], 0 = nearest to the sensor
    double radius = 0.0;     // pixels
};

struct PhantomBranch {
    int parent = -1; // index into PhantomScene::branches, -1 for roots
    int generation = 0;
    std::vector<PhantomPoint> points; // >= 2, root point lies on the parent
};

struct PhantomScene {
    std::uint64_t seed = 0;
    int canvas = 0;
    double mm_per_px = 0.0;
    double mm_per_depth = 0.0;
    std::vector<PhantomBranch> branches;

    void validate() const;
};

struct PhantomSample {
    Image2D angiogram;
    DepthMap depth_gt;
    BinaryMask seg_gt;
    PointCloud3 centerline_gt; // every branch polyline vertex, in mm
};

/// Deterministic for a fixed (seed, config). Scaling the canvas changes only
/// pixel coordinates, never the branch topology.
PhantomScene generate_tree(std::uint64_t seed, const PhantomConfig& cfg);

/// Renders the scene: seg_gt marks disk-covered pixels, depth takes the
/// minimum z (nearest to sensor) among covering branches, the angiogram is
/// the segmentation plus clipped zero-mean Gaussian noise.
PhantomSample rasterize(const PhantomScene& scene, double noise_level);

} // namespace octarec::phantom
