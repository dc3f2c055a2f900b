#pragma once

#include <cstddef>
#include <vector>

#include "octarec/geometry.hpp"

namespace octarec {

/// Exact nearest-neighbor index over 3D points: median-split axis-aligned
/// tree with full backtracking. Ties resolve to the smaller point index,
/// matching a first-win linear scan. Immutable after construction, safe for
/// concurrent queries.
class KdTree3 {
public:
    explicit KdTree3(const std::vector<Vec3>& points);

    struct Hit {
        size_t index = 0;
        double dist2 = 0.0;
    };

    /// Exact nearest neighbor; the point set must be non-empty.
    Hit nearest(const Vec3& q) const;

    size_t size() const { return pts_.size(); }

private:
    struct Node {
        int axis = -1;       // -1 marks a leaf
        double split = 0.0;
        int left = -1, right = -1;
        size_t begin = 0, end = 0; // leaf range into order_
    };

    int build(size_t begin, size_t end, int depth);
    void search(int node, const Vec3& q, Hit& best) const;

    std::vector<Vec3> pts_;
    std::vector<size_t> order_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

} // namespace octarec
