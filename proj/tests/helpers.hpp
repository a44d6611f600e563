#ifndef BINOC_TEST_HELPERS_HPP
#define BINOC_TEST_HELPERS_HPP

#include <array>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "binoc/binoctree.hpp"
#include "binoc/contour4d.hpp"
#include "binoc/field.hpp"
#include "binoc/slicer.hpp"
#include "binoc/trajectory.hpp"

namespace binoc::test {

inline Quat look_at_quat(const Vec3& from, const Vec3& target) {
    Vec3 f = normalized(target - from);
    Vec3 up{0, 0, 1};
    if (std::abs(dot(f, up)) > 0.999) up = {0, 1, 0};
    Vec3 r = normalized(cross(f, up));
    Vec3 u = cross(r, f);
    double m00 = r.x, m01 = u.x, m02 = -f.x;
    double m10 = r.y, m11 = u.y, m12 = -f.y;
    double m20 = r.z, m21 = u.z, m22 = -f.z;
    double tr = m00 + m11 + m22;
    Quat q;
    if (tr > 0) {
        double s = std::sqrt(tr + 1.0) * 2;
        q = {0.25 * s, (m21 - m12) / s, (m02 - m20) / s, (m10 - m01) / s};
    } else if (m00 > m11 && m00 > m22) {
        double s = std::sqrt(1.0 + m00 - m11 - m22) * 2;
        q = {(m21 - m12) / s, 0.25 * s, (m01 + m10) / s, (m02 + m20) / s};
    } else if (m11 > m22) {
        double s = std::sqrt(1.0 + m11 - m00 - m22) * 2;
        q = {(m02 - m20) / s, (m01 + m10) / s, 0.25 * s, (m12 + m21) / s};
    } else {
        double s = std::sqrt(1.0 + m22 - m00 - m11) * 2;
        q = {(m10 - m01) / s, (m02 + m20) / s, (m12 + m21) / s, 0.25 * s};
    }
    double n = q.norm();
    return {q.w / n, q.x / n, q.y / n, q.z / n};
}

inline CameraSample cam_at(Vec3 pos, double t, Vec3 target, int w = 160, int h = 90,
                           double fov = 60.0) {
    CameraSample c;
    c.t = t;
    c.position = pos;
    c.orientation = look_at_quat(pos, target);
    c.fov_y_deg = fov;
    c.width = w;
    c.height = h;
    return c;
}

inline CameraPath static_path(Vec3 pos, Vec3 target, int frames, double fps = 24.0) {
    CameraPath p;
    for (int i = 0; i < frames; ++i) p.samples.push_back(cam_at(pos, i / fps, target));
    return p;
}

inline OccupancyFieldSpec sphere_spec(double r = 1.0, Vec3 c = {0, 0, 0}) {
    OccupancyFieldSpec s;
    s.kind = FieldKind::Sphere;
    s.center = c;
    s.radius = r;
    return s;
}

// Horizontal plane: inside below z = h.
inline OccupancyFieldSpec plane_spec(double h) {
    OccupancyFieldSpec s;
    s.kind = FieldKind::Terrain;
    s.amplitude = 0;
    s.base_height = h;
    return s;
}

inline OccupancyFieldSpec terrain_spec(uint64_t seed, double amplitude, double scale,
                                       double base, int octaves = 4) {
    OccupancyFieldSpec s;
    s.kind = FieldKind::Terrain;
    s.seed = seed;
    s.octaves = octaves;
    s.amplitude = amplitude;
    s.noise_scale = scale;
    s.base_height = base;
    return s;
}

inline std::vector<int32_t> straddling_leaves(const BinaryOctree& tree, CornerCache& cache) {
    std::vector<int32_t> out;
    tree.for_each_leaf([&](int32_t id, const SpacetimeNode&) {
        if (tree.straddles({id, CellRef::kNoSub}, cache)) out.push_back(id);
    });
    return out;
}

inline std::string obj_string(const Mesh3& m, bool tri = true) {
    std::ostringstream os;
    export_obj(m, os, tri);
    return os.str();
}

inline std::vector<std::array<Vec3, 3>> fan_triangles(const Mesh3& m) {
    std::vector<std::array<Vec3, 3>> out;
    for (const auto& pg : m.polygons)
        for (size_t i = 1; i + 1 < pg.cycle.size(); ++i) {
            std::array<Vec3, 3> t = {m.vertices[pg.cycle[0]], m.vertices[pg.cycle[i]],
                                     m.vertices[pg.cycle[i + 1]]};
            Vec3 n = cross(t[1] - t[0], t[2] - t[0]);
            if (norm(n) / 2 <= 1e-12) continue;
            out.push_back(t);
        }
    return out;
}

inline std::multiset<std::string> triangle_set(const std::vector<std::array<Vec3, 3>>& tris) {
    std::multiset<std::string> out;
    for (const auto& t : tris) {
        std::array<std::string, 3> reps;
        for (int i = 0; i < 3; ++i) {
            char buf[96];
            std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g", t[i].x, t[i].y, t[i].z);
            reps[i] = buf;
        }
        std::sort(reps.begin(), reps.end());
        out.insert(reps[0] + "|" + reps[1] + "|" + reps[2]);
    }
    return out;
}

inline double signed_volume(const Mesh3& m) {
    double vol = 0;
    for (const auto& t : fan_triangles(m)) vol += dot(t[0], cross(t[1], t[2])) / 6.0;
    return vol;
}

inline double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    Vec3 ab = b - a, ac = c - a, ap = p - a;
    double d1 = dot(ab, ap), d2 = dot(ac, ap);
    if (d1 <= 0 && d2 <= 0) return norm(ap);
    Vec3 bp = p - b;
    double d3 = dot(ab, bp), d4 = dot(ac, bp);
    if (d3 >= 0 && d4 <= d3) return norm(bp);
    double vc = d1 * d4 - d3 * d2;
    if (vc <= 0 && d1 >= 0 && d3 <= 0) return norm(ap - ab * (d1 / (d1 - d3)));
    Vec3 cp = p - c;
    double d5 = dot(ab, cp), d6 = dot(ac, cp);
    if (d6 >= 0 && d5 <= d6) return norm(cp);
    double vb = d5 * d2 - d1 * d6;
    if (vb <= 0 && d2 >= 0 && d6 <= 0) return norm(ap - ac * (d2 / (d2 - d6)));
    double va = d3 * d6 - d5 * d4;
    if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
        double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return norm(p - (b + (c - b) * w));
    }
    Vec3 n = normalized(cross(ab, ac));
    return std::abs(dot(ap, n));
}

// Independent 3D dual contouring of the spatial octree (valid for trees
// without temporal splits): one polygon per minimal bipolar spatial edge.
inline Mesh3 ref_dc3_mesh(const BinaryOctree& tree, CornerCache& cache, const Field& field,
                          int iters) {
    Mesh3 out;
    std::map<int32_t, uint32_t> vid;
    std::map<int32_t, Vec3> pos;
    auto vertex = [&](int32_t leaf) {
        auto it = pos.find(leaf);
        if (it != pos.end()) return it->second;
        Vec3 p = bisect_cube_vertex(tree, cache, field, leaf, iters);
        pos.emplace(leaf, p);
        return p;
    };
    auto vertex_id = [&](int32_t leaf) {
        auto it = vid.find(leaf);
        if (it != vid.end()) return it->second;
        uint32_t id = uint32_t(out.vertices.size());
        out.vertices.push_back(vertex(leaf));
        out.vertex_keys.emplace_back(uint32_t(leaf), 0u);
        vid.emplace(leaf, id);
        return id;
    };
    int64_t n = int64_t(1) << tree.config().max_depth;
    DyadicTime tau{0, 0};
    for (int axis = 0; axis < 3; ++axis) {
        int u = (axis + 1) % 3, v = (axis + 2) % 3;
        static constexpr int kOct[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
        for (int64_t lu = 1; lu < n; ++lu)
            for (int64_t lv = 1; lv < n; ++lv) {
                std::vector<std::array<int32_t, 4>> cells;
                cells.resize(size_t(n));
                for (int64_t a = 0; a < n; ++a)
                    for (int o = 0; o < 4; ++o) {
                        int64_t c[3];
                        c[axis] = a;
                        c[u] = lu - 1 + kOct[o][0];
                        c[v] = lv - 1 + kOct[o][1];
                        cells[size_t(a)][o] = tree.locate(c[0], c[1], c[2], tau, true);
                    }
                int64_t a = 0;
                while (a < n) {
                    int64_t b = a + 1;
                    while (b < n && cells[size_t(b)] == cells[size_t(a)]) ++b;
                    const auto& cs = cells[size_t(a)];
                    bool u_change = cs[0] != cs[1] || cs[3] != cs[2];
                    bool v_change = cs[0] != cs[3] || cs[1] != cs[2];
                    if (u_change && v_change) {
                        int64_t arr[3];
                        arr[axis] = a;
                        arr[u] = lu;
                        arr[v] = lv;
                        LatticeCoord lo{arr[0], arr[1], arr[2]};
                        LatticeCoord hi = lo;
                        if (axis == 0) hi.ix += b - a;
                        if (axis == 1) hi.iy += b - a;
                        if (axis == 2) hi.iz += b - a;
                        uint8_t bit_lo = cache.get_or_eval(lo);
                        if (bit_lo != cache.get_or_eval(hi)) {
                            std::vector<int32_t> ring;
                            for (int o = 0; o < 4; ++o) {
                                int oo = bit_lo != 0 ? (3 - o) & 3 : o;
                                if (ring.empty() ||
                                    (ring.back() != cs[oo] && cs[oo] != ring.front()))
                                    ring.push_back(cs[oo]);
                            }
                            if (ring.size() >= 3) {
                                Polygon pg;
                                for (int32_t leaf : ring) pg.cycle.push_back(vertex_id(leaf));
                                out.polygons.push_back(std::move(pg));
                            }
                        }
                    }
                    a = b;
                }
            }
    }
    canonicalize_mesh3(out);
    return out;
}

// Brute-force reference for the streamed search: materializes the whole
// leaf complex and enumerates every transition of every lattice line.
inline std::set<std::string> brute_force_polyhedra(const BinaryOctree& tree, CornerCache& cache) {
    std::set<std::string> out;
    int64_t n = int64_t(1) << tree.config().max_depth;

    std::set<std::pair<uint32_t, uint64_t>> tick_set;
    tree.for_each_leaf([&](int32_t, const SpacetimeNode& nd) {
        DyadicTime a = DyadicTime::start_of(nd.window).normalized();
        DyadicTime b = DyadicTime::end_of(nd.window).normalized();
        tick_set.insert({a.level, a.index});
        tick_set.insert({b.level, b.index});
    });
    std::vector<DyadicTime> ticks;
    for (auto [l, i] : tick_set) ticks.push_back({l, i});
    std::sort(ticks.begin(), ticks.end(),
              [](const DyadicTime& a, const DyadicTime& b) { return a < b; });

    for (const DyadicTime& tau : ticks) {
        bool is_start = tau == DyadicTime{0, 0};
        bool is_end = tau == DyadicTime{0, 1};
        for (int axis = 0; axis < 3; ++axis) {
            int u = (axis + 1) % 3, v = (axis + 2) % 3;
            for (int64_t lu = 1; lu < n; ++lu) {
                for (int64_t lv = 1; lv < n; ++lv) {
                    struct Tuple {
                        int32_t cells[8];
                        bool operator==(const Tuple& o) const {
                            for (int i = 0; i < 8; ++i)
                                if (cells[i] != o.cells[i]) return false;
                            return true;
                        }
                    };
                    std::vector<Tuple> tuples;
                    tuples.resize(size_t(n));
                    for (int64_t a = 0; a < n; ++a) {
                        Tuple& t = tuples[size_t(a)];
                        int k = 0;
                        static constexpr int kOct[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
                        for (int o = 0; o < 4; ++o)
                            for (int side = 0; side < 2; ++side) {
                                int64_t c[3];
                                c[axis] = a;
                                c[u] = lu - 1 + kOct[o][0];
                                c[v] = lv - 1 + kOct[o][1];
                                t.cells[k++] = tree.locate(c[0], c[1], c[2], tau, side == 1);
                            }
                    }
                    int64_t a = 0;
                    while (a < n) {
                        int64_t b = a + 1;
                        while (b < n && tuples[size_t(b)] == tuples[size_t(a)]) ++b;
                        const Tuple& t = tuples[size_t(a)];
                        bool changed = is_start || is_end;
                        for (int o = 0; o < 4 && !changed; ++o)
                            changed = t.cells[o * 2] != t.cells[o * 2 + 1];
                        auto differs = [&](int oa, int ob) {
                            return t.cells[oa * 2] != t.cells[ob * 2] ||
                                   t.cells[oa * 2 + 1] != t.cells[ob * 2 + 1];
                        };
                        bool edge_line = (differs(0, 1) || differs(3, 2)) &&
                                         (differs(0, 3) || differs(1, 2));
                        if (changed && edge_line) {
                            LatticeCoord base;
                            int64_t arr[3];
                            arr[axis] = a;
                            arr[u] = lu;
                            arr[v] = lv;
                            base = {arr[0], arr[1], arr[2]};
                            LatticeCoord end = base;
                            if (axis == 0) end.ix += b - a;
                            if (axis == 1) end.iy += b - a;
                            if (axis == 2) end.iz += b - a;
                            if (cache.get_or_eval(base) != cache.get_or_eval(end)) {
                                std::set<std::pair<int32_t, int>> verts;
                                for (int o = 0; o < 4; ++o) {
                                    int32_t lb = t.cells[o * 2], la = t.cells[o * 2 + 1];
                                    verts.insert({lb, is_start ? 1 : 0});
                                    verts.insert({la, is_end ? 2 : 0});
                                }
                                std::ostringstream os;
                                os << axis << "|" << base.ix << "," << base.iy << "," << base.iz
                                   << "|" << (b - a) << "|" << tau.level << "/" << tau.index;
                                for (auto [leaf, which] : verts) os << "|" << leaf << ":" << which;
                                out.insert(os.str());
                            }
                        }
                        a = b;
                    }
                }
            }
        }
    }
    return out;
}

inline std::set<std::string> mesh_polyhedra_descriptors(const Mesh4D& mesh) {
    std::set<std::string> out;
    for (const auto& p : mesh.polyhedra) {
        std::set<std::pair<int32_t, int>> verts;
        for (uint32_t v : p.verts)
            verts.insert({mesh.vertices[v].leaf, int(mesh.vertices[v].which)});
        std::ostringstream os;
        DyadicTime tau = p.tau_key.normalized();
        os << int(p.axis) << "|" << p.base.ix << "," << p.base.iy << "," << p.base.iz << "|"
           << p.length << "|" << tau.level << "/" << tau.index;
        for (auto [leaf, which] : verts) os << "|" << leaf << ":" << which;
        out.insert(os.str());
    }
    BINOC_CHECK(out.size() == mesh.polyhedra.size(), "duplicate polyhedra descriptors");
    return out;
}

}  // namespace binoc::test

#endif
