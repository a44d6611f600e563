#ifndef BINOC_SLICER_HPP
#define BINOC_SLICER_HPP

#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "binoc/common.hpp"
#include "binoc/contour4d.hpp"

namespace binoc {

struct Polygon {
    std::vector<uint32_t> cycle;
    uint64_t source = 0;  // index of the source polyhedron
};

struct Mesh3 {
    std::vector<Vec3> vertices;
    // welding identity: the 4D mesh edge each vertex was interpolated on
    std::vector<std::pair<uint32_t, uint32_t>> vertex_keys;
    std::vector<Polygon> polygons;
};

namespace slicer_detail {

struct Crossing {
    std::pair<uint32_t, uint32_t> key;  // 4D edge, smaller index first
    bool up;                            // walk leaves the t <= t1 side here
};

// Interpolated position on a 4D edge; endpoints ordered by index so every
// polyhedron computes bit-identical coordinates for a shared edge.
inline Vec3 edge_point(const Mesh4D& mesh, std::pair<uint32_t, uint32_t> key, double t1) {
    const Vertex4Rec& a = mesh.vertices[key.first];
    const Vertex4Rec& b = mesh.vertices[key.second];
    double s = (t1 - a.t) / (b.t - a.t);
    return a.p + s * (b.p - a.p);
}

template <typename Sink>
void slice_one(const Mesh4D& mesh, const DualPolyhedron& poly, uint64_t source, double t1,
               bool closed_end, Sink&& sink) {
    auto below = [&](uint32_t v) {
        double t = mesh.vertices[v].t;
        return closed_end ? t < t1 : t <= t1;
    };

    // chords: exit crossing -> next (entry) crossing, per face
    std::map<std::pair<uint32_t, uint32_t>, std::pair<uint32_t, uint32_t>> next;
    for (const auto& face : poly.faces) {
        std::vector<Crossing> xs;
        size_t n = face.size();
        for (size_t i = 0; i < n; ++i) {
            uint32_t a = face[i], b = face[(i + 1) % n];
            bool ba = below(a), bb = below(b);
            if (ba == bb) continue;
            auto key = a < b ? std::make_pair(a, b) : std::make_pair(b, a);
            xs.push_back({key, ba});
        }
        if (xs.empty()) continue;
        if (xs.size() % 2 != 0)
            throw InternalError("slice: face with an odd number of intersections");
        for (size_t i = 0; i < xs.size(); ++i) {
            if (!xs[i].up) continue;
            const Crossing& to = xs[(i + 1) % xs.size()];
            BINOC_CHECK(!to.up, "slice: crossings do not alternate along the face cycle");
            auto [it, inserted] = next.emplace(xs[i].key, to.key);
            BINOC_CHECK(inserted || it->second == to.key, "slice: conflicting chords");
        }
    }

    // stitch chords into closed loops
    std::set<std::pair<uint32_t, uint32_t>> unvisited;
    for (const auto& [from, to] : next) unvisited.insert(from);
    while (!unvisited.empty()) {
        auto start = *unvisited.begin();
        std::vector<std::pair<uint32_t, uint32_t>> loop;
        auto cur = start;
        do {
            loop.push_back(cur);
            unvisited.erase(cur);
            auto it = next.find(cur);
            BINOC_CHECK(it != next.end(), "slice: open chord chain");
            cur = it->second;
        } while (!(cur == start));
        sink(loop, source);
    }
}

}  // namespace slicer_detail

// Slices one polyhedron at t1; returns the polygons as position cycles.
// Matches the slicing used by slice_mesh, with local vertex storage.
inline std::vector<std::vector<Vec3>> slice_polyhedron(const Mesh4D& mesh,
                                                       const DualPolyhedron& poly, double t1) {
    std::vector<std::vector<Vec3>> out;
    bool closed_end = t1 == mesh.window_t1;
    slicer_detail::slice_one(mesh, poly, 0, t1, closed_end,
                             [&](const auto& loop, uint64_t) {
                                 std::set<std::pair<uint32_t, uint32_t>> distinct(loop.begin(),
                                                                                  loop.end());
                                 if (distinct.size() < 3) return;
                                 std::vector<Vec3> cyc;
                                 for (const auto& key : loop)
                                     cyc.push_back(slicer_detail::edge_point(mesh, key, t1));
                                 out.push_back(std::move(cyc));
                             });
    return out;
}

// Canonical form: each cycle rotated so its position sequence is
// lexicographically smallest, polygons sorted by position sequence,
// vertices renumbered in first-use order. Slices of a static mesh become
// byte-identical regardless of which polyhedra covered the frame.
inline void canonicalize_mesh3(Mesh3& mesh) {
    auto pos_less = [](const Vec3& a, const Vec3& b) {
        if (a.x != b.x) return a.x < b.x;
        if (a.y != b.y) return a.y < b.y;
        return a.z < b.z;
    };
    auto rotate_canonical = [&](Polygon& pg) {
        size_t n = pg.cycle.size();
        size_t best = 0;
        for (size_t s = 1; s < n; ++s) {
            for (size_t k = 0; k < n; ++k) {
                const Vec3& a = mesh.vertices[pg.cycle[(s + k) % n]];
                const Vec3& b = mesh.vertices[pg.cycle[(best + k) % n]];
                if (pos_less(a, b)) {
                    best = s;
                    break;
                }
                if (pos_less(b, a)) break;
            }
        }
        std::rotate(pg.cycle.begin(), pg.cycle.begin() + std::ptrdiff_t(best), pg.cycle.end());
    };
    for (auto& pg : mesh.polygons) rotate_canonical(pg);
    std::stable_sort(mesh.polygons.begin(), mesh.polygons.end(),
                     [&](const Polygon& a, const Polygon& b) {
                         size_t n = std::min(a.cycle.size(), b.cycle.size());
                         for (size_t k = 0; k < n; ++k) {
                             const Vec3& va = mesh.vertices[a.cycle[k]];
                             const Vec3& vb = mesh.vertices[b.cycle[k]];
                             if (pos_less(va, vb)) return true;
                             if (pos_less(vb, va)) return false;
                         }
                         return a.cycle.size() < b.cycle.size();
                     });
    std::vector<uint32_t> remap(mesh.vertices.size(), UINT32_MAX);
    std::vector<Vec3> verts;
    std::vector<std::pair<uint32_t, uint32_t>> keys;
    for (auto& pg : mesh.polygons)
        for (auto& v : pg.cycle) {
            if (remap[v] == UINT32_MAX) {
                remap[v] = uint32_t(verts.size());
                verts.push_back(mesh.vertices[v]);
                keys.push_back(mesh.vertex_keys[v]);
            }
            v = remap[v];
        }
    mesh.vertices = std::move(verts);
    mesh.vertex_keys = std::move(keys);
}

// Slices the whole 4D mesh at t1. Interpolated vertices are merged by the
// exact identity of the 4D edge they lie on. A slice exactly at a window
// boundary picks the later window's geometry; the root window end, which
// has no later window, closes from below instead.
inline Mesh3 slice_mesh(const Mesh4D& mesh, double t1) {
    if (t1 < mesh.window_t0 || t1 > mesh.window_t1)
        throw InputError(detail::concat("slice time ", t1, " outside the root window [",
                                        mesh.window_t0, ", ", mesh.window_t1, "]"));
    bool closed_end = t1 == mesh.window_t1;
    Mesh3 out;
    std::map<std::pair<uint32_t, uint32_t>, uint32_t> weld;
    auto vertex_id = [&](std::pair<uint32_t, uint32_t> key) {
        auto it = weld.find(key);
        if (it != weld.end()) return it->second;
        uint32_t id = uint32_t(out.vertices.size());
        out.vertices.push_back(slicer_detail::edge_point(mesh, key, t1));
        out.vertex_keys.push_back(key);
        weld.emplace(key, id);
        return id;
    };
    for (size_t pi = 0; pi < mesh.polyhedra.size(); ++pi) {
        const DualPolyhedron& poly = mesh.polyhedra[pi];
        auto [lo, hi] = mesh.polyhedron_span(poly);
        bool in_span = closed_end ? (lo < t1 && t1 <= hi) : (lo <= t1 && t1 < hi);
        if (!in_span) continue;
        slicer_detail::slice_one(mesh, poly, pi, t1, closed_end,
                                 [&](const auto& loop, uint64_t source) {
                                     std::set<std::pair<uint32_t, uint32_t>> distinct(loop.begin(),
                                                                                      loop.end());
                                     if (distinct.size() < 3) return;
                                     Polygon pg;
                                     pg.source = source;
                                     for (const auto& key : loop) pg.cycle.push_back(vertex_id(key));
                                     out.polygons.push_back(std::move(pg));
                                 });
    }
    canonicalize_mesh3(out);
    return out;
}

// Undirected polygon edges appearing an odd number of times.
inline size_t count_boundary_edges(const Mesh3& mesh) {
    std::map<std::pair<uint32_t, uint32_t>, int> mult;
    for (const auto& pg : mesh.polygons) {
        size_t n = pg.cycle.size();
        for (size_t i = 0; i < n; ++i) {
            uint32_t a = pg.cycle[i], b = pg.cycle[(i + 1) % n];
            if (a == b) continue;
            ++mult[a < b ? std::make_pair(a, b) : std::make_pair(b, a)];
        }
    }
    size_t odd = 0;
    for (const auto& [e, m] : mult)
        if (m % 2) ++odd;
    return odd;
}

// ---------------------------------------------------------------------------
// Anti-popping extrusion. Constant-t faces on the temporal boundary of their
// polyhedron's span mark structures that would otherwise appear in a single
// frame: each such face becomes a pyramid whose apex sits half the smallest
// adjacent window beyond the face, so slices grow the structure from a point.
// Faces at the root window boundary are left alone (nothing is sliced past
// them), as are faces where the surface simply continues into an adjacent
// polyhedron on the other time side.

inline Mesh4D extrude_time_faces(const Mesh4D& input) {
    Mesh4D mesh = input;
    struct Entry {
        size_t poly;
        size_t face;
        bool before_side;
    };
    std::map<std::vector<uint32_t>, std::vector<Entry>> caps;
    for (size_t pi = 0; pi < mesh.polyhedra.size(); ++pi) {
        const DualPolyhedron& p = mesh.polyhedra[pi];
        auto [lo, hi] = mesh.polyhedron_span(p);
        if (lo == hi) continue;
        for (size_t fi = 0; fi < p.faces.size(); ++fi) {
            const auto& f = p.faces[fi];
            double t = mesh.vertices[f[0]].t;
            bool constant = true;
            for (uint32_t v : f) constant &= mesh.vertices[v].t == t;
            if (!constant) continue;
            if (t == mesh.window_t0 || t == mesh.window_t1) continue;  // root boundary
            bool at_lo = t == lo, at_hi = t == hi;
            if (at_lo == at_hi) continue;  // interior or degenerate
            std::vector<uint32_t> key(f.begin(), f.end());
            std::sort(key.begin(), key.end());
            key.erase(std::unique(key.begin(), key.end()), key.end());
            caps[key].push_back({pi, fi, at_lo});
        }
    }

    std::map<GroupId, uint64_t> next_local;
    for (const auto& v : mesh.vertices)
        next_local[v.group] = std::max(next_local[v.group], v.local + 1);

    std::map<size_t, std::set<size_t>> drop_faces;
    std::map<size_t, std::vector<std::vector<uint32_t>>> new_faces;
    std::map<size_t, std::vector<uint32_t>> new_verts;

    for (const auto& [key, entries] : caps) {
        bool all_before = true, all_after = true;
        for (const auto& e : entries) {
            all_before &= e.before_side;
            all_after &= !e.before_side;
        }
        if (!all_before && !all_after) continue;  // the surface continues across

        Vec3 centroid{0, 0, 0};
        double w = std::numeric_limits<double>::infinity();
        for (uint32_t v : key) {
            centroid += mesh.vertices[v].p;
            if (mesh.vertices[v].owner_window > 0) w = std::min(w, mesh.vertices[v].owner_window);
        }
        centroid = centroid / double(key.size());
        double t_face = mesh.vertices[key[0]].t;
        if (!std::isfinite(w)) {
            auto [lo, hi] = mesh.polyhedron_span(mesh.polyhedra[entries[0].poly]);
            w = hi - lo;  // loaded without window data: span as a stand-in
        }
        double apex_t = all_before ? t_face - w / 2 : t_face + w / 2;

        Vertex4Rec apex;
        apex.p = centroid;
        apex.t = apex_t;
        apex.owner_window = w;
        apex.group = mesh.polyhedra[entries[0].poly].group;
        apex.local = next_local[apex.group]++;
        uint32_t apex_id = uint32_t(mesh.vertices.size());
        mesh.vertices.push_back(apex);

        for (const auto& e : entries) {
            const auto& cycle = mesh.polyhedra[e.poly].faces[e.face];
            drop_faces[e.poly].insert(e.face);
            size_t n = cycle.size();
            for (size_t i = 0; i < n; ++i)
                new_faces[e.poly].push_back({cycle[i], cycle[(i + 1) % n], apex_id});
            new_verts[e.poly].push_back(apex_id);
        }
    }

    for (auto& [pi, drops] : drop_faces) {
        DualPolyhedron& p = mesh.polyhedra[pi];
        std::vector<std::vector<uint32_t>> faces;
        for (size_t fi = 0; fi < p.faces.size(); ++fi)
            if (!drops.count(fi)) faces.push_back(std::move(p.faces[fi]));
        for (auto& f : new_faces[pi]) faces.push_back(std::move(f));
        p.faces = std::move(faces);
        for (uint32_t v : new_verts[pi]) p.verts.push_back(v);
    }
    return mesh;
}

// ---------------------------------------------------------------------------
// OBJ export/import. Deterministic byte-for-byte: fixed %.17g formatting and
// construction order. Triangulation is a fan from each polygon's first
// vertex; fan triangles of area <= 1e-12 are skipped.

inline void export_obj(const Mesh3& mesh, std::ostream& os, bool triangulate = true) {
    char buf[160];
    for (const Vec3& v : mesh.vertices) {
        std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g\n", v.x, v.y, v.z);
        os << buf;
    }
    for (const Polygon& pg : mesh.polygons) {
        if (pg.cycle.size() < 3) continue;
        if (!triangulate) {
            os << 'f';
            for (uint32_t v : pg.cycle) os << ' ' << (v + 1);
            os << '\n';
            continue;
        }
        for (size_t i = 1; i + 1 < pg.cycle.size(); ++i) {
            uint32_t a = pg.cycle[0], b = pg.cycle[i], c = pg.cycle[i + 1];
            Vec3 n = cross(mesh.vertices[b] - mesh.vertices[a], mesh.vertices[c] - mesh.vertices[a]);
            if (norm(n) / 2 <= 1e-12) continue;
            std::snprintf(buf, sizeof(buf), "f %u %u %u\n", a + 1, b + 1, c + 1);
            os << buf;
        }
    }
}

inline void export_obj(const Mesh3& mesh, const std::string& path, bool triangulate = true) {
    std::ofstream os(path, std::ios::binary);  // binary keeps line endings fixed
    if (!os) throw InputError(detail::concat("cannot write ", path));
    export_obj(mesh, os, triangulate);
}

inline Mesh3 load_obj(std::istream& is, const std::string& name) {
    Mesh3 mesh;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.rfind("v ", 0) == 0) {
            Vec3 v;
            if (std::sscanf(line.c_str(), "v %lf %lf %lf", &v.x, &v.y, &v.z) != 3)
                throw InputError(detail::concat(name, ":", lineno, ": malformed vertex"));
            mesh.vertices.push_back(v);
            mesh.vertex_keys.emplace_back(uint32_t(mesh.vertices.size() - 1), 0u);
        } else if (line.rfind("f ", 0) == 0) {
            Polygon pg;
            std::istringstream ls(line.substr(2));
            std::string tok;
            while (ls >> tok) {
                long idx = std::strtol(tok.c_str(), nullptr, 10);
                if (idx <= 0 || size_t(idx) > mesh.vertices.size())
                    throw InputError(detail::concat(name, ":", lineno, ": face index out of range"));
                pg.cycle.push_back(uint32_t(idx - 1));
            }
            if (pg.cycle.size() >= 3) mesh.polygons.push_back(std::move(pg));
        }
    }
    return mesh;
}

inline Mesh3 load_obj(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw InputError(detail::concat("cannot open ", path));
    return load_obj(is, path);
}

inline std::string frame_filename(int frame) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%06d.obj", frame);
    return buf;
}

}  // namespace binoc

#endif
