#include "octarec/vessel_graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>

#include <json.hpp>

namespace octarec::vg {

namespace {

inline bool fg(const BinaryMask& m, int x, int y) {
    return x >= 0 && y >= 0 && x < m.width && y < m.height && m.at(x, y) != 0;
}

constexpr int kDx8[8] = {0, 1, 1, 1, 0, -1, -1, -1};
constexpr int kDy8[8] = {-1, -1, 0, 1, 1, 1, 0, -1};

int neighbor_count(const BinaryMask& m, int x, int y) {
    int n = 0;
    for (int k = 0; k < 8; ++k) n += fg(m, x + kDx8[k], y + kDy8[k]) ? 1 : 0;
    return n;
}

// Number of distinct 8-connected branches leaving (x,y): 0->1 transitions
// around the circular neighbor sequence. A '+' crossing scores 4 at its
// center but only 2 on the adjacent arm pixels, so junctions stay single
// pixels instead of smearing into the arms.
int branch_count(const BinaryMask& m, int x, int y) {
    int prev = fg(m, x + kDx8[7], y + kDy8[7]) ? 1 : 0;
    int transitions = 0;
    for (int k = 0; k < 8; ++k) {
        const int cur = fg(m, x + kDx8[k], y + kDy8[k]) ? 1 : 0;
        if (prev == 0 && cur == 1) ++transitions;
        prev = cur;
    }
    return transitions;
}

// One Zhang-Suen subiteration; returns the number of deleted pixels.
int thinning_pass(BinaryMask& img, int iter) {
    std::vector<PixelCoord> kill;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            if (!img.at(x, y)) continue;
            const int p2 = fg(img, x, y - 1), p3 = fg(img, x + 1, y - 1);
            const int p4 = fg(img, x + 1, y), p5 = fg(img, x + 1, y + 1);
            const int p6 = fg(img, x, y + 1), p7 = fg(img, x - 1, y + 1);
            const int p8 = fg(img, x - 1, y), p9 = fg(img, x - 1, y - 1);
            const int b = p2 + p3 + p4 + p5 + p6 + p7 + p8 + p9;
            if (b < 2 || b > 6) continue;
            const int a = (p2 == 0 && p3 == 1) + (p3 == 0 && p4 == 1) + (p4 == 0 && p5 == 1) +
                          (p5 == 0 && p6 == 1) + (p6 == 0 && p7 == 1) + (p7 == 0 && p8 == 1) +
                          (p8 == 0 && p9 == 1) + (p9 == 0 && p2 == 1);
            if (a != 1) continue;
            const int m1 = iter == 0 ? p2 * p4 * p6 : p2 * p4 * p8;
            const int m2 = iter == 0 ? p4 * p6 * p8 : p2 * p6 * p8;
            if (m1 == 0 && m2 == 0) kill.push_back({x, y});
        }
    }
    for (const auto& p : kill) img.at(p.x, p.y) = 0;
    return static_cast<int>(kill.size());
}

// Felzenszwalb-Huttenlocher 1D squared distance transform.
void dt1d(std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
          std::vector<double>& z, int n) {
    int k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    for (int q = 1; q < n; ++q) {
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
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const double dq = q - static_cast<double>(v[k]);
        d[q] = dq * dq + f[v[k]];
    }
}

} // namespace

namespace {

// True iff the foreground of the punctured 3x3 neighborhood of (x,y) forms
// exactly one 8-connected component, so deleting (x,y) cannot split anything.
bool locally_deletable(const BinaryMask& m, int x, int y) {
    bool nb[8];
    int count = 0;
    for (int k = 0; k < 8; ++k) {
        nb[k] = fg(m, x + kDx8[k], y + kDy8[k]);
        count += nb[k] ? 1 : 0;
    }
    if (count == 0) return false;
    // tiny BFS over the 8 ring cells using their true 2D adjacency
    bool seen[8] = {};
    int stack[8], top = 0;
    for (int k = 0; k < 8; ++k)
        if (nb[k]) {
            stack[top++] = k;
            seen[k] = true;
            break;
        }
    int reached = 0;
    while (top > 0) {
        const int k = stack[--top];
        ++reached;
        for (int j = 0; j < 8; ++j) {
            if (!nb[j] || seen[j]) continue;
            const int dx = std::abs(kDx8[k] - kDx8[j]);
            const int dy = std::abs(kDy8[k] - kDy8[j]);
            if (dx <= 1 && dy <= 1) {
                seen[j] = true;
                stack[top++] = j;
            }
        }
    }
    return reached == count;
}

// Zhang-Suen can leave staircase 2x2 blocks; delete one safely removable
// pixel per block until none remain.
void remove_staircase_blocks(BinaryMask& m) {
    bool changed = true;
    while (changed) {
        changed = false;
        for (int y = 0; y + 1 < m.height; ++y)
            for (int x = 0; x + 1 < m.width; ++x) {
                if (!(m.at(x, y) && m.at(x + 1, y) && m.at(x, y + 1) && m.at(x + 1, y + 1)))
                    continue;
                const PixelCoord cand[4] = {{x, y}, {x + 1, y}, {x, y + 1}, {x + 1, y + 1}};
                for (const auto& p : cand) {
                    if (locally_deletable(m, p.x, p.y)) {
                        m.at(p.x, p.y) = 0;
                        changed = true;
                        break;
                    }
                }
            }
    }
}

} // namespace

Skeleton skeletonize(const BinaryMask& mask) {
    mask.validate();
    Skeleton s{mask};
    while (true) {
        const int removed = thinning_pass(s.mask, 0) + thinning_pass(s.mask, 1);
        if (removed == 0) break;
    }
    remove_staircase_blocks(s.mask);
    return s;
}

std::vector<PixelCoord> find_junctions(const Skeleton& skel) {
    std::vector<PixelCoord> out;
    const BinaryMask& m = skel.mask;
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x)
            if (m.at(x, y) && branch_count(m, x, y) >= 3) out.push_back({x, y});
    return out;
}

std::vector<std::vector<PixelCoord>> decompose_segments(
    const Skeleton& skel, const std::vector<PixelCoord>& junctions) {
    const BinaryMask& m = skel.mask;
    BinaryMask rem = m; // survivors after junction-neighborhood removal
    for (const auto& j : junctions)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int x = j.x + dx, y = j.y + dy;
                if (x >= 0 && y >= 0 && x < m.width && y < m.height) rem.at(x, y) = 0;
            }

    std::vector<std::vector<PixelCoord>> segments;
    BinaryMask seen(m.width, m.height);
    auto in_component = [&](int x, int y) { return fg(rem, x, y); };

    for (int y0 = 0; y0 < m.height; ++y0)
        for (int x0 = 0; x0 < m.width; ++x0) {
            if (!rem.at(x0, y0) || seen.at(x0, y0)) continue;
            // collect the component
            std::vector<PixelCoord> comp;
            std::queue<PixelCoord> q;
            q.push({x0, y0});
            seen.at(x0, y0) = 1;
            while (!q.empty()) {
                PixelCoord p = q.front();
                q.pop();
                comp.push_back(p);
                for (int k = 0; k < 8; ++k) {
                    const int nx = p.x + kDx8[k], ny = p.y + kDy8[k];
                    if (in_component(nx, ny) && !seen.at(nx, ny)) {
                        seen.at(nx, ny) = 1;
                        q.push({nx, ny});
                    }
                }
            }
            // choose the walk start: endpoint with the smallest row-major index
            auto rm = [&](const PixelCoord& p) {
                return static_cast<long>(p.y) * m.width + p.x;
            };
            auto comp_neighbors = [&](const PixelCoord& p) {
                std::vector<PixelCoord> nb;
                for (int k = 0; k < 8; ++k) {
                    const int nx = p.x + kDx8[k], ny = p.y + kDy8[k];
                    if (in_component(nx, ny)) nb.push_back({nx, ny});
                }
                return nb;
            };
            PixelCoord start = comp[0];
            long best = std::numeric_limits<long>::max();
            bool found_end = false;
            for (const auto& p : comp) {
                const bool is_end = comp_neighbors(p).size() <= 1;
                if (is_end && rm(p) < best) {
                    best = rm(p);
                    start = p;
                    found_end = true;
                }
            }
            if (!found_end) { // isolated cycle: start at the smallest pixel
                for (const auto& p : comp)
                    if (rm(p) < rm(start)) start = p;
            }
            // ordered walks; a leftover (dense corner) starts a fresh chain
            // so every component pixel lands in exactly one segment
            BinaryMask walked(m.width, m.height);
            size_t covered = 0;
            while (covered < comp.size()) {
                PixelCoord cur{-1, -1};
                long cur_rm = std::numeric_limits<long>::max();
                for (const auto& p : comp) {
                    if (walked.at(p.x, p.y)) continue;
                    const bool is_end = [&] {
                        int free_nb = 0;
                        for (const auto& nb : comp_neighbors(p))
                            if (!walked.at(nb.x, nb.y)) ++free_nb;
                        return free_nb <= 1;
                    }();
                    const long score = rm(p) + (is_end ? 0 : static_cast<long>(m.width) *
                                                                 m.height);
                    if (score < cur_rm) {
                        cur_rm = score;
                        cur = p;
                    }
                }
                std::vector<PixelCoord> chain;
                walked.at(cur.x, cur.y) = 1;
                chain.push_back(cur);
                ++covered;
                while (true) {
                    PixelCoord next{-1, -1};
                    long next_rm = std::numeric_limits<long>::max();
                    for (const auto& nb : comp_neighbors(cur)) {
                        if (!walked.at(nb.x, nb.y) && rm(nb) < next_rm) {
                            next = nb;
                            next_rm = rm(nb);
                        }
                    }
                    if (next.x < 0) break;
                    walked.at(next.x, next.y) = 1;
                    chain.push_back(next);
                    ++covered;
                    cur = next;
                }
                segments.push_back(std::move(chain));
            }
        }
    return segments;
}

int VesselGraph::degree(int node_id) const {
    int d = 0;
    for (const auto& s : segments) {
        if (s.node_a == node_id) ++d;
        if (s.node_b == node_id) ++d;
    }
    return d;
}

VesselGraph relink(const std::vector<std::vector<PixelCoord>>& segments,
                   const std::vector<PixelCoord>& junctions, const Skeleton& skel,
                   const VesselGraphOptions& opt) {
    const BinaryMask& m = skel.mask;
    VesselGraph g;

    // cluster 8-connected junction pixels into single nodes
    BinaryMask jmask(m.width, m.height);
    for (const auto& j : junctions) jmask.at(j.x, j.y) = 1;
    BinaryMask seen(m.width, m.height);
    for (const auto& j : junctions) {
        if (seen.at(j.x, j.y)) continue;
        GraphNode node;
        node.kind = NodeKind::junction;
        std::queue<PixelCoord> q;
        q.push(j);
        seen.at(j.x, j.y) = 1;
        while (!q.empty()) {
            PixelCoord p = q.front();
            q.pop();
            node.pixels.push_back(p);
            for (int k = 0; k < 8; ++k) {
                const int nx = p.x + kDx8[k], ny = p.y + kDy8[k];
                if (fg(jmask, nx, ny) && !seen.at(nx, ny)) {
                    seen.at(nx, ny) = 1;
                    q.push({nx, ny});
                }
            }
        }
        double sx = 0.0, sy = 0.0;
        for (const auto& p : node.pixels) {
            sx += p.x;
            sy += p.y;
        }
        node.x = sx / node.pixels.size();
        node.y = sy / node.pixels.size();
        node.id = static_cast<int>(g.nodes.size());
        g.nodes.push_back(std::move(node));
    }
    const int n_junctions = static_cast<int>(g.nodes.size());

    auto nearest_junction = [&](const PixelCoord& p) -> int {
        int best = -1;
        double best_d = opt.relink_radius + 1e-9;
        for (int n = 0; n < n_junctions; ++n)
            for (const auto& jp : g.nodes[n].pixels) {
                const double d = std::hypot(jp.x - p.x, jp.y - p.y);
                if (d < best_d || (best >= 0 && d == best_d && n < best)) {
                    best_d = d;
                    best = n;
                }
            }
        return best;
    };

    struct EndInfo {
        int junction = -1;
    };
    struct SegInfo {
        EndInfo front, back;
        bool keep = true;
    };
    std::vector<SegInfo> info(segments.size());
    for (size_t s = 0; s < segments.size(); ++s) {
        if (segments[s].empty()) {
            info[s].keep = false;
            continue;
        }
        info[s].front.junction = nearest_junction(segments[s].front());
        info[s].back.junction = nearest_junction(segments[s].back());
        if (opt.min_spur_len > 0 &&
            static_cast<int>(segments[s].size()) < opt.min_spur_len) {
            const int fj = info[s].front.junction;
            const int bj = info[s].back.junction;
            const bool touches_junction = fj >= 0 || bj >= 0;
            const bool connects_two = fj >= 0 && bj >= 0 && fj != bj;
            if (touches_junction && !connects_two) info[s].keep = false; // dangling twig
        }
    }

    // endpoint nodes live at skeleton end pixels (exactly one neighbor)
    auto endpoint_node = [&](const PixelCoord& p) -> int {
        for (size_t n = n_junctions; n < g.nodes.size(); ++n)
            if (g.nodes[n].pixels.front() == p) return static_cast<int>(n);
        return -1;
    };
    auto make_endpoint = [&](const PixelCoord& p) {
        GraphNode node;
        node.kind = NodeKind::endpoint;
        node.x = p.x;
        node.y = p.y;
        node.pixels = {p};
        node.id = static_cast<int>(g.nodes.size());
        g.nodes.push_back(node);
        return node.id;
    };

    for (size_t s = 0; s < segments.size(); ++s) {
        if (!info[s].keep) continue;
        GraphSegment seg;
        seg.id = static_cast<int>(g.segments.size());
        seg.pixels = segments[s];
        auto attach = [&](const PixelCoord& end, int junction) {
            // a skeleton end pixel is itself a node at distance 0, which beats
            // any junction inside the relink radius
            if (neighbor_count(m, end.x, end.y) <= 1) {
                const int existing = endpoint_node(end);
                return existing >= 0 ? existing : make_endpoint(end);
            }
            if (junction >= 0) return junction;
            ++g.orphan_ends; // nothing in range: fresh endpoint, warn
            const int existing = endpoint_node(end);
            return existing >= 0 ? existing : make_endpoint(end);
        };
        seg.node_a = attach(seg.pixels.front(), info[s].front.junction);
        seg.node_b = attach(seg.pixels.back(), info[s].back.junction);
        g.segments.push_back(std::move(seg));
    }
    return g;
}

VesselGraph build_graph(const BinaryMask& mask, const VesselGraphOptions& opt) {
    Skeleton skel = skeletonize(mask);
    const auto junctions = find_junctions(skel);
    const auto segments = decompose_segments(skel, junctions);
    return relink(segments, junctions, skel, opt);
}

std::vector<double> distance_transform(const BinaryMask& mask) {
    const int w = mask.width, h = mask.height;
    const double inf = 1e18;
    std::vector<double> grid(static_cast<size_t>(w) * h);
    for (size_t i = 0; i < grid.size(); ++i) grid[i] = mask.bits[i] ? inf : 0.0;

    const int n = std::max(w, h);
    std::vector<double> f(n), d(n), z(n + 1);
    std::vector<int> v(n);
    // columns
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) f[y] = grid[static_cast<size_t>(y) * w + x];
        dt1d(f, d, v, z, h);
        for (int y = 0; y < h; ++y) grid[static_cast<size_t>(y) * w + x] = d[y];
    }
    // rows
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) f[x] = grid[static_cast<size_t>(y) * w + x];
        dt1d(f, d, v, z, w);
        for (int x = 0; x < w; ++x) grid[static_cast<size_t>(y) * w + x] = d[x];
    }
    for (auto& g : grid) g = std::sqrt(g);
    return grid;
}

std::vector<double> estimate_radius(const BinaryMask& mask, const Skeleton& skel) {
    if (mask.width != skel.mask.width || mask.height != skel.mask.height)
        throw std::invalid_argument("estimate_radius: dimension mismatch");
    std::vector<double> dt = distance_transform(mask);
    std::vector<double> out(dt.size(), 0.0);
    for (size_t i = 0; i < dt.size(); ++i)
        if (skel.mask.bits[i]) out[i] = dt[i];
    return out;
}

std::string graph_to_json(const VesselGraph& g) {
    nlohmann::json j;
    j["nodes"] = nlohmann::json::array();
    for (const auto& n : g.nodes) {
        j["nodes"].push_back({{"id", n.id},
                              {"x", n.x},
                              {"y", n.y},
                              {"kind", n.kind == NodeKind::junction ? "junction" : "endpoint"}});
    }
    j["segments"] = nlohmann::json::array();
    for (const auto& s : g.segments) {
        nlohmann::json px = nlohmann::json::array();
        for (const auto& p : s.pixels) px.push_back({p.x, p.y});
        j["segments"].push_back(
            {{"id", s.id}, {"node_a", s.node_a}, {"node_b", s.node_b}, {"pixels", px}});
    }
    return j.dump(2);
}

int count_components8(const BinaryMask& mask) {
    BinaryMask seen(mask.width, mask.height);
    int count = 0;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) {
            if (!mask.at(x, y) || seen.at(x, y)) continue;
            ++count;
            std::queue<PixelCoord> q;
            q.push({x, y});
            seen.at(x, y) = 1;
            while (!q.empty()) {
                PixelCoord p = q.front();
                q.pop();
                for (int k = 0; k < 8; ++k) {
                    const int nx = p.x + kDx8[k], ny = p.y + kDy8[k];
                    if (fg(mask, nx, ny) && !seen.at(nx, ny)) {
                        seen.at(nx, ny) = 1;
                        q.push({nx, ny});
                    }
                }
            }
        }
    return count;
}

} // namespace octarec::vg
