#pragma once

#include <string>
#include <vector>

#include "octarec/image.hpp"

namespace octarec::vg {

/// 1-pixel-wide 8-connected centerline; always a subset of the mask it was
/// thinned from and free of 2x2 foreground blocks.
struct Skeleton {
    BinaryMask mask;
};

struct PixelCoord {
    int x = 0;
    int y = 0;
    bool operator==(const PixelCoord&) const = default;
};

enum class NodeKind { junction, endpoint };

struct GraphNode {
    int id = 0;
    double x = 0.0, y = 0.0; // junction clusters use the cluster centroid
    NodeKind kind = NodeKind::endpoint;
    std::vector<PixelCoord> pixels; // skeleton pixels merged into this node
};

struct GraphSegment {
    int id = 0;
    int node_a = -1; // node attached at the chain front (-1 if orphaned)
    int node_b = -1; // node attached at the chain back
    std::vector<PixelCoord> pixels; // ordered, 8-connected, duplicate-free
};

struct VesselGraph {
    std::vector<GraphNode> nodes;
    std::vector<GraphSegment> segments;

    int degree(int node_id) const;
    size_t orphan_ends = 0; // segment ends that found no node within the radius
};

struct VesselGraphOptions {
    double relink_radius = 3.0; // junction pixel + removed neighborhood + 1
    int min_spur_len = 0;       // prune dangling segments shorter than this; 0 = keep all
};

/// Zhang-Suen two-subiteration thinning. Preserves 8-connected component
/// count; an empty mask yields an empty skeleton.
Skeleton skeletonize(const BinaryMask& mask);

/// Skeleton pixels where at least 3 distinct 8-connected branches meet
/// (crossing number). A '+' crossing yields exactly its center pixel.
std::vector<PixelCoord> find_junctions(const Skeleton& skel);

/// Removes each junction pixel plus its 8-neighborhood, then orders every
/// remaining 8-connected component from one end to the other (the end with
/// the smaller row-major index first).
std::vector<std::vector<PixelCoord>> decompose_segments(const Skeleton& skel,
                                                        const std::vector<PixelCoord>& junctions);

/// Attaches segment ends to the nearest node within the relink radius.
/// Junction pixels are clustered (8-connected) into single nodes; skeleton
/// end pixels become endpoint nodes; unmatched ends are recorded and get
/// fresh endpoint nodes.
VesselGraph relink(const std::vector<std::vector<PixelCoord>>& segments,
                   const std::vector<PixelCoord>& junctions, const Skeleton& skel,
                   const VesselGraphOptions& opt = {});

/// Convenience composition of the four steps above.
VesselGraph build_graph(const BinaryMask& mask, const VesselGraphOptions& opt = {});

/// Exact Euclidean distance transform of the mask (distance to the nearest
/// background pixel), evaluated everywhere.
std::vector<double> distance_transform(const BinaryMask& mask);

/// distance_transform sampled at skeleton pixels; zero elsewhere.
std::vector<double> estimate_radius(const BinaryMask& mask, const Skeleton& skel);

/// Graph dump: {"nodes":[{id,x,y,kind}], "segments":[{id,node_a,node_b,pixels}]}.
std::string graph_to_json(const VesselGraph& g);

/// Number of 8-connected foreground components.
int count_components8(const BinaryMask& mask);

} // namespace octarec::vg
