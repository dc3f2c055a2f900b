#pragma once

#include <cmath>
#include <vector>

namespace octarec {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const {
        const double n = norm();
        return n > 0.0 ? Vec3{x / n, y / n, z / n} : Vec3{0.0, 0.0, 0.0};
    }
};

inline double distance(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

/// Centerline points in millimetres.
struct PointCloud3 {
    std::vector<Vec3> points;

    size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
};

/// Ordered 3D polyline (mm) with one radius per point (mm).
struct Polyline3 {
    std::vector<Vec3> points;
    std::vector<double> radii;
};

} // namespace octarec
