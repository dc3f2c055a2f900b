#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "octarec/geometry.hpp"
#include "octarec/image.hpp"
#include "octarec/vessel_graph.hpp"

namespace octarec::recon {

/// Physical scales and sweep settings. Depth z in [0,1] maps to z*sz mm.
struct ReconConfig {
    double sx = 3.0 / 512.0; // mm per pixel, x
    double sy = 3.0 / 512.0; // mm per pixel, y
    double sz = 0.5;         // mm per unit depth
    double resample_step_px = 1.5; // arc-length spacing of centerline samples
    int tube_sides = 8;
    bool cap_ends = true;
    int min_spur_len = 3; // dangling skeleton twigs shorter than this are dropped

    void validate() const;
};

/// Triangle mesh swept along centerlines; vertices in mm.
struct TubeMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<std::uint32_t, 3>> triangles;
    std::vector<double> radius; // per vertex, mm

    void validate() const;
};

struct LiftResult {
    std::vector<Polyline3> polylines; // one per graph segment, mm
    PointCloud3 cloud;                // all polyline vertices
    size_t filled_invalid = 0;        // centerline pixels read off invalid depth
};

struct Reconstruction {
    vg::VesselGraph graph;
    LiftResult lifted;
    PointCloud3 cloud;  // resampled centerline points, mm
    TubeMesh tubes;
    size_t filled_invalid = 0;
};

/// Maps every segment pixel chain (plus its attached node positions, so tubes
/// meet at junctions) to 3D: (x*sx, y*sy, depth*sz). Radii come from the
/// distance transform of the segmentation mask, scaled by sx. Centerline
/// pixels with invalid depth borrow the nearest valid value.
LiftResult lift_centerline(const vg::VesselGraph& graph, const std::vector<double>& radius_px,
                           const DepthMap& depth, const ReconConfig& cfg);

/// Arc-length resampling at spacing <= step (mm); endpoints preserved
/// exactly. Radii are interpolated along the arc.
Polyline3 resample_polyline(const Polyline3& line, double step);

/// Circular cross-sections swept with parallel-transport frames (no twist).
/// vertices = points*sides (+2 with caps); triangles = 2*sides*(points-1)
/// (+2*sides with caps). Duplicate consecutive points are collapsed first.
TubeMesh tube_mesh(const Polyline3& line, int sides, bool caps);

/// Appends src to dst, offsetting triangle indices.
void merge_mesh(TubeMesh& dst, const TubeMesh& src);

/// ASCII PLY 1.0. Mesh vertices carry a radius property; clouds are
/// vertex-only. Writers are byte-deterministic.
void export_ply_mesh(const TubeMesh& mesh, const std::filesystem::path& path);
void export_ply_cloud(const PointCloud3& cloud, const std::filesystem::path& path);
PointCloud3 load_ply_cloud(const std::filesystem::path& path);

/// Legacy VTK polydata text ("# vtk DataFile Version 3.0", POINTS + LINES).
void export_polydata(const std::vector<Polyline3>& lines, const std::filesystem::path& path);

/// skeletonize -> junctions -> segments -> relink -> lift -> resample -> tube.
Reconstruction reconstruct(const BinaryMask& seg, const DepthMap& depth, const ReconConfig& cfg);

} // namespace octarec::recon
