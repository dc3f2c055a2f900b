#include "octarec/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace octarec {

namespace {
constexpr size_t kLeafSize = 16;

inline double coord(const Vec3& p, int axis) {
    return axis == 0 ? p.x : axis == 1 ? p.y : p.z;
}
} // namespace

KdTree3::KdTree3(const std::vector<Vec3>& points) : pts_(points) {
    if (pts_.empty()) throw std::invalid_argument("KdTree3: empty point set");
    order_.resize(pts_.size());
    std::iota(order_.begin(), order_.end(), size_t{0});
    nodes_.reserve(2 * pts_.size() / kLeafSize + 8);
    root_ = build(0, pts_.size(), 0);
}

int KdTree3::build(size_t begin, size_t end, int depth) {
    Node node;
    if (end - begin <= kLeafSize) {
        node.begin = begin;
        node.end = end;
        nodes_.push_back(node);
        return static_cast<int>(nodes_.size() - 1);
    }
    const int axis = depth % 3;
    const size_t mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](size_t a, size_t b) {
                         const double ca = coord(pts_[a], axis), cb = coord(pts_[b], axis);
                         return ca < cb || (ca == cb && a < b);
                     });
    node.axis = axis;
    node.split = coord(pts_[order_[mid]], axis);
    const int self = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    const int left = build(begin, mid, depth + 1);
    const int right = build(mid, end, depth + 1);
    nodes_[self].left = left;
    nodes_[self].right = right;
    return self;
}

void KdTree3::search(int ni, const Vec3& q, Hit& best) const {
    const Node& node = nodes_[ni];
    if (node.axis < 0) {
        for (size_t i = node.begin; i < node.end; ++i) {
            const size_t idx = order_[i];
            const Vec3 d = pts_[idx] - q;
            const double d2 = d.dot(d);
            if (d2 < best.dist2 || (d2 == best.dist2 && idx < best.index)) {
                best.dist2 = d2;
                best.index = idx;
            }
        }
        return;
    }
    const double delta = coord(q, node.axis) - node.split;
    const int near = delta < 0.0 ? node.left : node.right;
    const int far = delta < 0.0 ? node.right : node.left;
    search(near, q, best);
    if (delta * delta <= best.dist2) search(far, q, best);
}

KdTree3::Hit KdTree3::nearest(const Vec3& q) const {
    Hit best{std::numeric_limits<size_t>::max(), std::numeric_limits<double>::infinity()};
    search(root_, q, best);
    return best;
}

} // namespace octarec
