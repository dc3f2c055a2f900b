#include "octarec/recon3d.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "octarec/errors.hpp"

namespace octarec::recon {

namespace {

std::string fmt_mm(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

// Exact nearest-valid-pixel fill: per-column 1D nearest followed by a
// Felzenszwalb-Huttenlocher row pass that tracks the winning column.
Image2D nearest_valid_fill(const DepthMap& d) {
    const int w = d.width(), h = d.height();
    Image2D filled = d.image;
    if (d.valid.count() == 0 || d.valid.count() == static_cast<size_t>(w) * h) return filled;

    constexpr double inf = 1e18;
    // nearest valid row per column (exact in 1D)
    std::vector<int> ny(static_cast<size_t>(w) * h, -1);
    for (int x = 0; x < w; ++x) {
        int last = -1;
        for (int y = 0; y < h; ++y) {
            if (d.valid.at(x, y)) last = y;
            ny[static_cast<size_t>(y) * w + x] = last;
        }
        last = -1;
        for (int y = h - 1; y >= 0; --y) {
            if (d.valid.at(x, y)) last = y;
            auto& cur = ny[static_cast<size_t>(y) * w + x];
            if (last >= 0 &&
                (cur < 0 || std::abs(last - y) < std::abs(cur - y)))
                cur = last;
        }
    }
    // row pass over f(x) = (nearest valid in column x)^2, tracking sources
    std::vector<double> f(w), z(w + 1);
    std::vector<int> v(w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int src = ny[static_cast<size_t>(y) * w + x];
            f[x] = src < 0 ? inf : static_cast<double>(src - y) * (src - y);
        }
        int k = 0;
        v[0] = 0;
        z[0] = -std::numeric_limits<double>::infinity();
        z[1] = std::numeric_limits<double>::infinity();
        for (int q = 1; q < w; ++q) {
            double s;
            while (true) {
                s = ((f[q] + q * static_cast<double>(q)) -
                     (f[v[k]] + v[k] * static_cast<double>(v[k]))) /
                    (2.0 * q - 2.0 * v[k]);
                if (s <= z[k])
                    --k;
                else
                    break;
            }
            ++k;
            v[k] = q;
            z[k] = s;
            z[k + 1] = std::numeric_limits<double>::infinity();
        }
        k = 0;
        for (int q = 0; q < w; ++q) {
            while (z[k + 1] < q) ++k;
            if (!d.valid.at(q, y)) {
                const int sx_col = v[k];
                const int sy_row = ny[static_cast<size_t>(y) * w + sx_col];
                if (sy_row >= 0) filled.at(q, y) = d.image.at(sx_col, sy_row);
            }
        }
    }
    return filled;
}

Vec3 any_perpendicular(const Vec3& t) {
    const Vec3 ref = std::abs(t.z) < 0.9 ? Vec3{0.0, 0.0, 1.0} : Vec3{0.0, 1.0, 0.0};
    return t.cross(ref).normalized();
}

} // namespace

void ReconConfig::validate() const {
    if (!(sx > 0.0 && sy > 0.0 && sz > 0.0))
        throw std::invalid_argument("recon: scales must be positive");
    if (tube_sides < 3) throw std::invalid_argument("recon: tube needs at least 3 sides");
    if (!(resample_step_px > 0.0))
        throw std::invalid_argument("recon: resample step must be positive");
}

void TubeMesh::validate() const {
    for (const auto& t : triangles) {
        for (auto i : t)
            if (i >= vertices.size())
                throw std::invalid_argument("tube mesh: triangle index out of range");
        const Vec3 n = (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]);
        if (!(n.norm() > 0.0)) throw std::invalid_argument("tube mesh: degenerate triangle");
    }
    for (const auto& p : vertices)
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
            throw std::invalid_argument("tube mesh: non-finite vertex");
}

LiftResult lift_centerline(const vg::VesselGraph& graph, const std::vector<double>& radius_px,
                           const DepthMap& depth, const ReconConfig& cfg) {
    cfg.validate();
    const int w = depth.width();
    Image2D filled = nearest_valid_fill(depth);
    LiftResult out;

    auto lift_point = [&](double x, double y, double r_px) {
        const double z = bilinear_sample(filled, x, y);
        return std::make_pair(Vec3{x * cfg.sx, y * cfg.sy, z * cfg.sz}, r_px * cfg.sx);
    };

    for (const auto& seg : graph.segments) {
        if (seg.pixels.empty()) continue;
        Polyline3 line;
        auto push = [&](const Vec3& p, double r) {
            if (!line.points.empty() && distance(line.points.back(), p) < 1e-12) return;
            line.points.push_back(p);
            line.radii.push_back(r);
        };
        const double r_front = radius_px[static_cast<size_t>(seg.pixels.front().y) * w +
                                         seg.pixels.front().x];
        const double r_back =
            radius_px[static_cast<size_t>(seg.pixels.back().y) * w + seg.pixels.back().x];
        if (seg.node_a >= 0) {
            const auto& n = graph.nodes[seg.node_a];
            auto [p, r] = lift_point(n.x, n.y, r_front);
            push(p, r);
        }
        for (const auto& px : seg.pixels) {
            if (!depth.valid.at(px.x, px.y)) ++out.filled_invalid;
            auto [p, r] =
                lift_point(px.x, px.y, radius_px[static_cast<size_t>(px.y) * w + px.x]);
            push(p, r);
        }
        if (seg.node_b >= 0) {
            const auto& n = graph.nodes[seg.node_b];
            auto [p, r] = lift_point(n.x, n.y, r_back);
            push(p, r);
        }
        if (line.points.empty()) continue;
        for (const auto& p : line.points) out.cloud.points.push_back(p);
        out.polylines.push_back(std::move(line));
    }
    return out;
}

Polyline3 resample_polyline(const Polyline3& line, double step) {
    if (!(step > 0.0)) throw std::invalid_argument("resample: step must be positive");
    const size_t n = line.points.size();
    if (n < 2) return line;

    std::vector<double> arc(n, 0.0);
    for (size_t i = 1; i < n; ++i)
        arc[i] = arc[i - 1] + distance(line.points[i - 1], line.points[i]);
    const double total = arc.back();
    if (total <= 0.0) return {{line.points.front()}, {line.radii.front()}};

    const int pieces = std::max(1, static_cast<int>(std::ceil(total / step)));
    Polyline3 out;
    out.points.reserve(pieces + 1);
    size_t seg = 0;
    for (int i = 0; i <= pieces; ++i) {
        if (i == 0) {
            out.points.push_back(line.points.front());
            out.radii.push_back(line.radii.front());
            continue;
        }
        if (i == pieces) {
            out.points.push_back(line.points.back());
            out.radii.push_back(line.radii.back());
            continue;
        }
        const double target = total * i / pieces;
        while (seg + 2 < n && arc[seg + 1] < target) ++seg;
        const double span = arc[seg + 1] - arc[seg];
        const double t = span > 0.0 ? (target - arc[seg]) / span : 0.0;
        out.points.push_back(line.points[seg] + (line.points[seg + 1] - line.points[seg]) * t);
        out.radii.push_back(line.radii[seg] + (line.radii[seg + 1] - line.radii[seg]) * t);
    }
    return out;
}

TubeMesh tube_mesh(const Polyline3& line, int sides, bool caps) {
    if (sides < 3) throw std::invalid_argument("tube_mesh: need at least 3 sides");
    // collapse duplicate consecutive points
    Polyline3 clean;
    for (size_t i = 0; i < line.points.size(); ++i) {
        if (!clean.points.empty() && distance(clean.points.back(), line.points[i]) < 1e-12)
            continue;
        clean.points.push_back(line.points[i]);
        clean.radii.push_back(line.radii[i]);
    }
    const size_t n = clean.points.size();
    if (n < 2) throw std::invalid_argument("tube_mesh: fewer than 2 distinct points");
    for (double r : clean.radii)
        if (!(r > 0.0)) throw std::invalid_argument("tube_mesh: non-positive radius");

    // parallel-transport frames along the centerline
    std::vector<Vec3> tangents(n);
    for (size_t i = 0; i < n; ++i) {
        const Vec3 a = i == 0 ? clean.points[1] - clean.points[0]
                              : clean.points[i] - clean.points[i - 1];
        const Vec3 b = i + 1 == n ? clean.points[n - 1] - clean.points[n - 2]
                                  : clean.points[i + 1] - clean.points[i];
        tangents[i] = (a.normalized() + b.normalized()).normalized();
        if (tangents[i].norm() == 0.0) tangents[i] = a.normalized();
    }
    std::vector<Vec3> normals(n), binormals(n);
    normals[0] = any_perpendicular(tangents[0]);
    binormals[0] = tangents[0].cross(normals[0]).normalized();
    for (size_t i = 1; i < n; ++i) {
        const Vec3 axis = tangents[i - 1].cross(tangents[i]);
        const double sin_a = axis.norm();
        const double cos_a = std::clamp(tangents[i - 1].dot(tangents[i]), -1.0, 1.0);
        if (sin_a < 1e-12) {
            normals[i] = normals[i - 1]; // straight (or reversed) continuation
        } else {
            // Rodrigues rotation of the previous normal about the bend axis
            const Vec3 k = axis * (1.0 / sin_a);
            const Vec3 v = normals[i - 1];
            normals[i] = v * cos_a + k.cross(v) * sin_a + k * (k.dot(v) * (1.0 - cos_a));
        }
        normals[i] = (normals[i] - tangents[i] * normals[i].dot(tangents[i])).normalized();
        binormals[i] = tangents[i].cross(normals[i]).normalized();
    }

    TubeMesh mesh;
    mesh.vertices.reserve(n * sides + (caps ? 2 : 0));
    for (size_t i = 0; i < n; ++i) {
        for (int k = 0; k < sides; ++k) {
            const double th = 2.0 * std::numbers::pi * k / sides;
            mesh.vertices.push_back(clean.points[i] + normals[i] * (clean.radii[i] * std::cos(th)) +
                                    binormals[i] * (clean.radii[i] * std::sin(th)));
            mesh.radius.push_back(clean.radii[i]);
        }
    }
    auto ring = [&](size_t i, int k) { return static_cast<std::uint32_t>(i * sides + k % sides); };
    for (size_t i = 0; i + 1 < n; ++i) {
        for (int k = 0; k < sides; ++k) {
            mesh.triangles.push_back({ring(i, k), ring(i + 1, k), ring(i, k + 1)});
            mesh.triangles.push_back({ring(i, k + 1), ring(i + 1, k), ring(i + 1, k + 1)});
        }
    }
    if (caps) {
        const auto c0 = static_cast<std::uint32_t>(mesh.vertices.size());
        mesh.vertices.push_back(clean.points.front());
        mesh.radius.push_back(clean.radii.front());
        const auto c1 = static_cast<std::uint32_t>(mesh.vertices.size());
        mesh.vertices.push_back(clean.points.back());
        mesh.radius.push_back(clean.radii.back());
        for (int k = 0; k < sides; ++k) {
            mesh.triangles.push_back({c0, ring(0, k), ring(0, k + 1)});
            mesh.triangles.push_back({c1, ring(n - 1, k + 1), ring(n - 1, k)});
        }
    }
    return mesh;
}

void merge_mesh(TubeMesh& dst, const TubeMesh& src) {
    const auto off = static_cast<std::uint32_t>(dst.vertices.size());
    dst.vertices.insert(dst.vertices.end(), src.vertices.begin(), src.vertices.end());
    dst.radius.insert(dst.radius.end(), src.radius.begin(), src.radius.end());
    for (const auto& t : src.triangles)
        dst.triangles.push_back({t[0] + off, t[1] + off, t[2] + off});
}

void export_ply_mesh(const TubeMesh& mesh, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write " + path.string());
    out << "ply\nformat ascii 1.0\n";
    out << "element vertex " << mesh.vertices.size() << "\n";
    out << "property float x\nproperty float y\nproperty float z\nproperty float radius\n";
    out << "element face " << mesh.triangles.size() << "\n";
    out << "property list uchar int vertex_indices\nend_header\n";
    for (size_t i = 0; i < mesh.vertices.size(); ++i) {
        const auto& v = mesh.vertices[i];
        out << fmt_mm(v.x) << " " << fmt_mm(v.y) << " " << fmt_mm(v.z) << " "
            << fmt_mm(mesh.radius[i]) << "\n";
    }
    for (const auto& t : mesh.triangles)
        out << "3 " << t[0] << " " << t[1] << " " << t[2] << "\n";
    if (!out) throw io_error("short write: " + path.string());
}

void export_ply_cloud(const PointCloud3& cloud, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write " + path.string());
    out << "ply\nformat ascii 1.0\n";
    out << "element vertex " << cloud.points.size() << "\n";
    out << "property float x\nproperty float y\nproperty float z\nend_header\n";
    for (const auto& p : cloud.points)
        out << fmt_mm(p.x) << " " << fmt_mm(p.y) << " " << fmt_mm(p.z) << "\n";
    if (!out) throw io_error("short write: " + path.string());
}

PointCloud3 load_ply_cloud(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path))
        throw missing_input_error("no such file: " + path.string());
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    if (line != "ply") throw format_error("not a PLY file: " + path.string());
    size_t n_vertices = 0;
    bool ascii = false;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        if (tok == "format") {
            std::string kind;
            ls >> kind;
            ascii = kind == "ascii";
        } else if (tok == "element") {
            std::string what;
            ls >> what;
            if (what == "vertex") ls >> n_vertices;
        } else if (tok == "end_header") {
            break;
        }
    }
    if (!ascii) throw format_error("only ASCII PLY is supported: " + path.string());
    PointCloud3 cloud;
    cloud.points.reserve(n_vertices);
    for (size_t i = 0; i < n_vertices; ++i) {
        if (!std::getline(in, line)) throw io_error("PLY vertex list truncated");
        std::istringstream ls(line);
        Vec3 p;
        if (!(ls >> p.x >> p.y >> p.z)) throw format_error("bad PLY vertex line");
        cloud.points.push_back(p);
    }
    return cloud;
}

void export_polydata(const std::vector<Polyline3>& lines, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write " + path.string());
    size_t n_points = 0;
    for (const auto& l : lines) n_points += l.points.size();
    out << "# vtk DataFile Version 3.0\n";
    out << "vessel centerlines\nASCII\nDATASET POLYDATA\n";
    out << "POINTS " << n_points << " float\n";
    for (const auto& l : lines)
        for (const auto& p : l.points)
            out << fmt_mm(p.x) << " " << fmt_mm(p.y) << " " << fmt_mm(p.z) << "\n";
    size_t total = 0;
    for (const auto& l : lines) total += l.points.size() + 1;
    out << "LINES " << lines.size() << " " << total << "\n";
    size_t base = 0;
    for (const auto& l : lines) {
        out << l.points.size();
        for (size_t i = 0; i < l.points.size(); ++i) out << " " << base + i;
        out << "\n";
        base += l.points.size();
    }
    if (!out) throw io_error("short write: " + path.string());
}

Reconstruction reconstruct(const BinaryMask& seg, const DepthMap& depth, const ReconConfig& cfg) {
    cfg.validate();
    if (seg.width != depth.width() || seg.height != depth.height())
        throw std::invalid_argument("reconstruct: segmentation/depth dimension mismatch");

    Reconstruction rec;
    if (seg.count() == 0) return rec; // empty segmentation, empty outputs

    vg::Skeleton skel = vg::skeletonize(seg);
    const auto junctions = vg::find_junctions(skel);
    const auto segments = vg::decompose_segments(skel, junctions);
    vg::VesselGraphOptions opt;
    opt.min_spur_len = cfg.min_spur_len;
    rec.graph = vg::relink(segments, junctions, skel, opt);

    const std::vector<double> radius_px = vg::estimate_radius(seg, skel);
    rec.lifted = lift_centerline(rec.graph, radius_px, depth, cfg);
    rec.filled_invalid = rec.lifted.filled_invalid;

    const double step_mm = cfg.resample_step_px * cfg.sx;
    for (const auto& line : rec.lifted.polylines) {
        Polyline3 rl = resample_polyline(line, step_mm);
        for (const auto& p : rl.points) rec.cloud.points.push_back(p);
        if (rl.points.size() >= 2) {
            TubeMesh t = tube_mesh(rl, cfg.tube_sides, cfg.cap_ends);
            merge_mesh(rec.tubes, t);
        }
    }
    return rec;
}

} // namespace octarec::recon
