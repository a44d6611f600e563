#ifndef BINOC_CONTOUR4D_HPP
#define BINOC_CONTOUR4D_HPP

#include <array>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "binoc/binoctree.hpp"
#include "binoc/common.hpp"
#include "binoc/field.hpp"
#include "binoc/groups.hpp"

namespace binoc {

// ---------------------------------------------------------------------------
// 4D mesh data model.
//
// One vertex per surface-intersecting leaf at its window midpoint, plus
// copies clamped to the root window boundary for leaves touching it (so the
// mesh spans the full window). Each bipolar lattice edge contributes one
// polyhedron per change of its incident cells: a hexahedron connecting the
// dual vertices of the cells just before the change to those just after.
// Slices morph linearly between the two configurations.

enum class VertexWhich : uint8_t { Mid, StartCap, EndCap };

struct Vertex4Rec {
    Vec3 p;
    double t = 0;
    int32_t leaf = -1;            // -1 once loaded from a file
    VertexWhich which = VertexWhich::Mid;
    double owner_window = 0;      // owner leaf window length, seconds
    GroupId group;
    uint64_t local = 0;
};

struct DualPolyhedron {
    std::vector<uint32_t> verts;               // distinct flat vertex indices
    std::vector<std::vector<uint32_t>> faces;  // oriented cycles, flat indices
    GroupId group;
    // source transition, for diagnostics and tests
    uint8_t axis = 0;
    LatticeCoord base;
    int64_t length = 0;
    double tau = 0;
    DyadicTime tau_key;
};

struct Mesh4D {
    uint32_t temporal_depth = 0;
    double window_t0 = 0, window_t1 = 0;
    std::vector<Vertex4Rec> vertices;
    std::vector<DualPolyhedron> polyhedra;

    std::pair<double, double> polyhedron_span(const DualPolyhedron& p) const {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (uint32_t v : p.verts) {
            lo = std::min(lo, vertices[v].t);
            hi = std::max(hi, vertices[v].t);
        }
        return {lo, hi};
    }
};

// ---------------------------------------------------------------------------
// Bipolar edge records. A record states that the lattice segment
// (axis, base, length) is an edge of the leaf complex throughout the slab
// [t0, t1], with differing occupancy bits at its endpoints. Type 1 records
// lie on a hypercube edge of some leaf; type 2 records are produced by
// propagation where neighbors subdivide a record's slab in time.

struct BipolarEdge {
    uint8_t axis = 0;
    LatticeCoord base;
    int64_t length = 0;
    DyadicTime t0, t1;
    uint8_t polarity = 0;  // occupancy bit at the base-corner end
    enum Kind : uint8_t { Type1, Type2 } kind = Type1;
    GroupId owner_group;

    LatticeCoord other_end() const {
        LatticeCoord c = base;
        if (axis == 0) c.ix += length;
        if (axis == 1) c.iy += length;
        if (axis == 2) c.iz += length;
        return c;
    }
};

// Canonical leaf ordering used for record ownership.
inline std::tuple<uint32_t, uint64_t, uint8_t, uint32_t, uint32_t, uint32_t> leaf_order_key(
    const BinaryOctree& tree, int32_t id) {
    const SpacetimeNode& n = tree.node(id);
    GroupId g = GroupId::from_window(n.window);
    return {g.length, g.bits, n.depth, n.ix, n.iy, n.iz};
}

// Bipolar edges on the hypercube edges of the given leaves, deduplicated:
// one canonical record per (segment, window), owned by the smallest leaf.
inline std::vector<BipolarEdge> find_type1_edges(const BinaryOctree& tree, CornerCache& cache,
                                                 const std::vector<int32_t>& leaves) {
    struct Key {
        uint8_t axis;
        LatticeCoord base;
        int64_t length;
        DyadicInterval window;
        bool operator<(const Key& o) const {
            if (axis != o.axis) return axis < o.axis;
            if (!(base == o.base)) return base < o.base;
            if (length != o.length) return length < o.length;
            if (window.level != o.window.level) return window.level < o.window.level;
            return window.index < o.window.index;
        }
    };
    std::map<Key, int32_t> owner;  // key -> owning leaf
    for (int32_t id : leaves) {
        const SpacetimeNode& n = tree.node(id);
        auto box = tree.lattice_box({id, CellRef::kNoSub});
        std::array<LatticeCoord, 8> corners;
        std::array<uint8_t, 8> bits;
        for (int k = 0; k < 8; ++k)
            corners[k] = {box.lo[0] + ((k & 1) ? box.size : 0), box.lo[1] + ((k & 2) ? box.size : 0),
                          box.lo[2] + ((k & 4) ? box.size : 0)};
        cache.get_or_eval(corners, bits);
        for (int axis = 0; axis < 3; ++axis) {
            int b0 = 1 << axis;
            for (int k = 0; k < 8; ++k) {
                if (k & b0) continue;  // k is the low end of the edge
                if (bits[k] == bits[k | b0]) continue;
                Key key{uint8_t(axis), corners[k], box.size, n.window};
                auto it = owner.find(key);
                if (it == owner.end() || leaf_order_key(tree, id) < leaf_order_key(tree, it->second))
                    owner.insert_or_assign(key, id);
            }
        }
    }
    std::vector<BipolarEdge> out;
    out.reserve(owner.size());
    for (const auto& [key, id] : owner) {
        BipolarEdge e;
        e.axis = key.axis;
        e.base = key.base;
        e.length = key.length;
        e.t0 = DyadicTime::start_of(key.window).normalized();
        e.t1 = DyadicTime::end_of(key.window).normalized();
        e.polarity = cache.get_or_eval(key.base);
        e.kind = BipolarEdge::Type1;
        e.owner_group = GroupId::from_window(tree.node(id).window);
        out.push_back(e);
    }
    return out;
}

// Offset copies of a bipolar edge at each incident window boundary strictly
// inside its slab: neighbors that subdivide the record's time range
// contribute one type-2 record per boundary not already covered. Repeated
// application adds nothing new.
inline std::vector<BipolarEdge> propagate_type2(const BinaryOctree& tree, const BipolarEdge& rec) {
    std::vector<BipolarEdge> out;
    int axis = rec.axis;
    int u = (axis + 1) % 3, v = (axis + 2) % 3;
    int64_t base_arr[3] = {rec.base.ix, rec.base.iy, rec.base.iz};
    int64_t sample[3] = {base_arr[0], base_arr[1], base_arr[2]};
    sample[axis] += rec.length / 2;
    static constexpr int kOct[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};

    DyadicTime tau = rec.t0;
    for (;;) {
        std::optional<DyadicTime> next;
        for (int o = 0; o < 4; ++o) {
            int64_t c[3];
            c[axis] = sample[axis];
            c[u] = base_arr[u] - 1 + kOct[o][0];
            c[v] = base_arr[v] - 1 + kOct[o][1];
            int32_t leaf = tree.locate(c[0], c[1], c[2], tau, true);
            if (leaf < 0) return out;  // spatial root boundary
            DyadicTime end = DyadicTime::end_of(tree.node(leaf).window).normalized();
            if (!next || end < *next) next = end;
        }
        if (!next || !(*next < rec.t1)) break;
        BipolarEdge e = rec;
        e.t0 = *next;
        e.kind = BipolarEdge::Type2;
        out.push_back(e);
        tau = *next;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Vertex placement: bisection along each bipolar cube edge localizes the 0-1
// crossing; the vertex is the mean of the crossings, clamped to the cube,
// at the window midpoint in time.

inline Vec3 bisect_cube_vertex(const BinaryOctree& tree, CornerCache& cache, const Field& field,
                               int32_t leaf, int iterations, bool* straddling_out = nullptr) {
    auto box = tree.lattice_box({leaf, CellRef::kNoSub});
    LatticeFrame frame = tree.lattice_frame();
    std::array<LatticeCoord, 8> corners;
    std::array<uint8_t, 8> bits;
    for (int k = 0; k < 8; ++k)
        corners[k] = {box.lo[0] + ((k & 1) ? box.size : 0), box.lo[1] + ((k & 2) ? box.size : 0),
                      box.lo[2] + ((k & 4) ? box.size : 0)};
    cache.get_or_eval(corners, bits);

    struct Segment {
        Vec3 lo, hi;  // f(lo) has bit_lo; invariant kept while bisecting
        uint8_t bit_lo;
    };
    std::vector<Segment> segs;
    for (int axis = 0; axis < 3; ++axis) {
        int b0 = 1 << axis;
        for (int k = 0; k < 8; ++k) {
            if (k & b0) continue;
            if (bits[k] == bits[k | b0]) continue;
            segs.push_back({frame.to_world(corners[k]), frame.to_world(corners[k | b0]), bits[k]});
        }
    }
    if (straddling_out) *straddling_out = !segs.empty();
    NodeGeometry g = tree.geometry(tree.node(leaf));
    if (segs.empty()) return g.center;

    std::vector<Vec3> mids(segs.size());
    std::vector<uint8_t> mid_bits(segs.size());
    for (int it = 0; it < iterations; ++it) {
        for (size_t i = 0; i < segs.size(); ++i) mids[i] = (segs[i].lo + segs[i].hi) * 0.5;
        eval_batch(field, mids, mid_bits);
        for (size_t i = 0; i < segs.size(); ++i) {
            if (mid_bits[i] == segs[i].bit_lo)
                segs[i].lo = mids[i];
            else
                segs[i].hi = mids[i];
        }
    }
    Vec3 sum{0, 0, 0};
    for (const auto& s : segs) sum += (s.lo + s.hi) * 0.5;
    Vec3 v = sum / double(segs.size());
    double half = g.size / 2;
    v.x = std::clamp(v.x, g.center.x - half, g.center.x + half);
    v.y = std::clamp(v.y, g.center.y - half, g.center.y + half);
    v.z = std::clamp(v.z, g.center.z - half, g.center.z + half);
    return v;
}

// Vertex placement for a surface-intersecting node.
inline Vec4 place_vertex(const BinaryOctree& tree, CornerCache& cache, const Field& field,
                         int32_t leaf, int iterations) {
    bool straddling = false;
    Vec3 p = bisect_cube_vertex(tree, cache, field, leaf, iterations, &straddling);
    if (!straddling) throw InternalError("place_vertex: node is not surface-intersecting");
    return {p.x, p.y, p.z, tree.window_mid_seconds(tree.node(leaf).window)};
}

// ---------------------------------------------------------------------------
// Streamed dual polyhedron search.

struct Contour4DStats {
    uint64_t group_loads = 0;
    uint32_t peak_resident = 0;
    uint64_t type1_records = 0;
    uint64_t type2_records = 0;
    uint64_t transitions = 0;
    uint64_t polyhedra = 0;
    uint64_t vertices = 0;
    uint32_t temporal_depth = 0;
};

class DualContourExtractor {
public:
    DualContourExtractor(const BinaryOctree& tree, CornerCache& cache, const Field& field,
                         int bisection_iters)
        : tree_(tree), cache_(cache), field_(field), iters_(bisection_iters) {}

    // `seed_leaves`: leaves allowed to seed type-1 records (the surface set);
    // empty means every leaf may seed.
    Mesh4D run(const std::vector<int32_t>& seed_leaves, Contour4DStats* stats_out = nullptr) {
        index_groups(seed_leaves);
        Mesh4D mesh;
        mesh.temporal_depth = depth_;
        mesh.window_t0 = tree_.window_t0();
        mesh.window_t1 = tree_.window_t1();

        for (const GroupId& s : all_groups_lex(depth_)) {
            resident_.clear();
            load_group(s);
            seed_from_group(s);
            for (const GroupId& r : predecessor_subset(s, depth_)) load_group(r);
            stats_.peak_resident = std::max<uint32_t>(stats_.peak_resident,
                                                      uint32_t(resident_.size()));
            // resolve to a fixpoint: resolution can add finer or later candidates
            bool progress = true;
            while (progress) {
                progress = false;
                for (auto it = pending_.begin(); it != pending_.end();) {
                    TransitionKey key = it->first;
                    Outcome out = try_resolve(key);
                    if (out == Outcome::Deferred) {
                        ++it;
                    } else {
                        progress = true;
                        it = pending_.erase(it);
                        done_.insert(key);
                    }
                }
            }
        }
        if (!pending_.empty()) {
            const TransitionKey& k = pending_.begin()->first;
            throw InternalError(detail::concat(
                "unresolved bipolar edge after traversal: axis=", int(k.axis), " base=(", k.base.ix,
                ",", k.base.iy, ",", k.base.iz, ") len=", k.length, " tau=", k.tau.index, "/2^",
                k.tau.level));
        }

        finalize(mesh);
        if (stats_out) {
            stats_.temporal_depth = depth_;
            stats_.vertices = mesh.vertices.size();
            stats_.polyhedra = mesh.polyhedra.size();
            *stats_out = stats_;
        }
        return mesh;
    }

private:
    struct TransitionKey {
        DyadicTime tau;  // normalized
        uint8_t axis;
        LatticeCoord base;
        int64_t length;
        bool operator<(const TransitionKey& o) const {
            if (!(tau == o.tau)) return tau < o.tau;
            if (axis != o.axis) return axis < o.axis;
            if (!(base == o.base)) return base < o.base;
            return length < o.length;
        }
    };
    struct Slot {
        int32_t leaf = -1;
        bool phantom = false;  // vertex copy clamped to the root window end
    };
    enum class Outcome { Deferred, Resolved };

    struct PendingInfo {
        BipolarEdge::Kind kind;
    };

    void index_groups(const std::vector<int32_t>& seed_leaves) {
        depth_ = 0;
        leaf_group_.assign(tree_.nodes().size(), GroupId::root());
        tree_.for_each_leaf([&](int32_t id, const SpacetimeNode& n) {
            GroupId g = GroupId::from_window(n.window);
            leaf_group_[id] = g;
            depth_ = std::max(depth_, g.length);
            chunks_[g].push_back(id);
        });
        if (seed_leaves.empty()) {
            for (auto& [g, leaves] : chunks_) seeds_by_group_[g] = leaves;
        } else {
            for (int32_t id : seed_leaves)
                seeds_by_group_[leaf_group_[id]].push_back(id);
            for (auto& [g, v] : seeds_by_group_) std::sort(v.begin(), v.end());
        }
    }

    void load_group(const GroupId& g) {
        if (resident_.insert(g).second) ++stats_.group_loads;
    }
    bool is_resident(int32_t leaf) const { return resident_.count(leaf_group_[leaf]) > 0; }

    void seed_from_group(const GroupId& g) {
        auto it = seeds_by_group_.find(g);
        if (it == seeds_by_group_.end()) return;
        auto records = find_type1_edges(tree_, cache_, it->second);
        stats_.type1_records += records.size();
        for (const auto& r : records) {
            add_candidate({r.t0, r.axis, r.base, r.length});
            add_candidate({r.t1, r.axis, r.base, r.length});
        }
    }

    void add_candidate(TransitionKey key) {
        key.tau = key.tau.normalized();
        if (done_.count(key) || pending_.count(key)) return;
        pending_.emplace(key, PendingInfo{BipolarEdge::Type1});
    }

    Outcome try_resolve(const TransitionKey& key) {
        bool is_start = key.tau == DyadicTime{0, 0};
        bool is_end = key.tau == DyadicTime{0, 1};

        // octant walk around the edge axis, counter-clockwise in (u, v)
        int axis = key.axis;
        int u = (axis + 1) % 3, v = (axis + 2) % 3;
        int64_t sample[3] = {key.base.ix, key.base.iy, key.base.iz};
        sample[axis] += key.length / 2;
        static constexpr int kOct[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};

        Slot slots[4][2];
        int64_t base_arr[3] = {key.base.ix, key.base.iy, key.base.iz};
        // the 1-cell this candidate belongs to is the intersection of the
        // incident cells' extents along the axis
        int64_t cell_lo = std::numeric_limits<int64_t>::min();
        int64_t cell_hi = std::numeric_limits<int64_t>::max();
        for (int o = 0; o < 4; ++o) {
            int64_t c[3];
            c[axis] = sample[axis];
            c[u] = base_arr[u] - 1 + kOct[o][0];
            c[v] = base_arr[v] - 1 + kOct[o][1];
            for (int side = 0; side < 2; ++side) {
                bool after = side == 1;
                int32_t leaf = tree_.locate(c[0], c[1], c[2], key.tau, after);
                if (leaf < 0) return mark_boundary(key);  // on the spatial root boundary
                if (!is_resident(leaf)) return Outcome::Deferred;
                slots[o][side].leaf = leaf;
                auto box = tree_.lattice_box({leaf, CellRef::kNoSub});
                int64_t b = base_arr[axis];
                if (box.lo[axis] > b || box.lo[axis] + box.size < b + key.length) {
                    // a finer incident cell: split the segment and retry
                    return split_candidate(key);
                }
                cell_lo = std::max(cell_lo, box.lo[axis]);
                cell_hi = std::min(cell_hi, box.lo[axis] + box.size);
            }
        }
        if (cell_lo != base_arr[axis] || cell_hi != base_arr[axis] + key.length) {
            // re-key to the canonical maximal segment so propagation chains
            // from different sub-segments merge into a single transition
            TransitionKey canon = key;
            canon.length = cell_hi - cell_lo;
            if (axis == 0) canon.base.ix = cell_lo;
            if (axis == 1) canon.base.iy = cell_lo;
            if (axis == 2) canon.base.iz = cell_lo;
            add_candidate(canon);
            return Outcome::Resolved;
        }
        if (is_start)
            for (int o = 0; o < 4; ++o) slots[o][0] = {slots[o][1].leaf, true};
        if (is_end)
            for (int o = 0; o < 4; ++o) slots[o][1] = {slots[o][0].leaf, true};

        // The segment must be a 1-cell of the overlaid before/after
        // arrangements: cells change across both orthogonal axes. Lines in
        // the interior of a shared face have degenerate duals and are left
        // to the transitions of the face's genuine edges.
        auto differs = [&](int oa, int ob) {
            return slots[oa][0].leaf != slots[ob][0].leaf || slots[oa][1].leaf != slots[ob][1].leaf;
        };
        bool u_change = differs(0, 1) || differs(3, 2);
        bool v_change = differs(0, 3) || differs(1, 2);
        if (!u_change || !v_change) return Outcome::Resolved;

        bool changed = is_start || is_end;
        for (int o = 0; o < 4 && !changed; ++o) changed = slots[o][0].leaf != slots[o][1].leaf;
        if (!changed)
            throw InternalError("transition candidate without a cell change");

        ++stats_.transitions;

        // bipolar test at the segment endpoints
        LatticeCoord a = key.base, b = key.base;
        if (axis == 0) b.ix += key.length;
        if (axis == 1) b.iy += key.length;
        if (axis == 2) b.iz += key.length;
        uint8_t bit_a = cache_.get_or_eval(a), bit_b = cache_.get_or_eval(b);
        if (bit_a != bit_b) emit_polyhedron(key, slots, bit_a);

        if (!is_end && bit_a != bit_b) propagate(key, slots);
        return Outcome::Resolved;
    }

    Outcome mark_boundary(const TransitionKey&) { return Outcome::Resolved; }

    Outcome split_candidate(const TransitionKey& key) {
        BINOC_CHECK(key.length > 1, "cannot split a unit lattice segment");
        TransitionKey a = key, b = key;
        a.length = key.length / 2;
        b.length = key.length / 2;
        if (key.axis == 0) b.base.ix += a.length;
        if (key.axis == 1) b.base.iy += a.length;
        if (key.axis == 2) b.base.iz += a.length;
        // mark children type 2 only if they came from propagation; ownership
        // bookkeeping is cosmetic, the candidates are what matter
        add_candidate(a);
        add_candidate(b);
        return Outcome::Resolved;
    }

    void propagate(const TransitionKey& key, Slot slots[4][2]) {
        // next change of this segment's incident cells: the earliest end of
        // the after-side windows
        std::optional<DyadicTime> next;
        for (int o = 0; o < 4; ++o) {
            const SpacetimeNode& n = tree_.node(slots[o][1].leaf);
            DyadicTime end = DyadicTime::end_of(n.window).normalized();
            if (!next || end < *next) next = end;
        }
        BINOC_CHECK(next && key.tau < *next, "propagation does not advance");
        TransitionKey nk = key;
        nk.tau = next->normalized();
        if (!done_.count(nk) && !pending_.count(nk)) {
            pending_.emplace(nk, PendingInfo{BipolarEdge::Type2});
            if (!(nk.tau == DyadicTime{0, 1})) ++stats_.type2_records;
        }
    }

    uint32_t vertex_for(int32_t leaf, VertexWhich which) {
        auto key = std::make_pair(leaf, which);
        auto it = vertex_ids_.find(key);
        if (it != vertex_ids_.end()) return it->second;
        const SpacetimeNode& n = tree_.node(leaf);
        Vertex4Rec rec;
        rec.p = cube_vertex_position(leaf);
        rec.leaf = leaf;
        rec.which = which;
        rec.owner_window = tree_.window_length_seconds(n.window);
        rec.group = leaf_group_[leaf];
        switch (which) {
            case VertexWhich::Mid: rec.t = tree_.window_mid_seconds(n.window); break;
            case VertexWhich::StartCap: rec.t = tree_.window_begin_seconds(n.window); break;
            case VertexWhich::EndCap: rec.t = tree_.window_end_seconds(n.window); break;
        }
        uint32_t id = uint32_t(staging_.size());
        staging_.push_back(rec);
        vertex_ids_.emplace(key, id);
        return id;
    }

    Vec3 cube_vertex_position(int32_t leaf) {
        auto it = positions_.find(leaf);
        if (it != positions_.end()) return it->second;
        Vec3 p = bisect_cube_vertex(tree_, cache_, field_, leaf, iters_);
        positions_.emplace(leaf, p);
        return p;
    }

    void emit_polyhedron(const TransitionKey& key, Slot slots[4][2], uint8_t bit_base) {
        // orientation: wind the cross-section so polygons face the outside
        // (occupancy 0) end of the edge
        bool flip = bit_base != 0;

        uint32_t corner[4][2];
        for (int o = 0; o < 4; ++o)
            for (int s = 0; s < 2; ++s) {
                VertexWhich which = VertexWhich::Mid;
                if (slots[o][s].phantom)
                    which = s == 0 ? VertexWhich::StartCap : VertexWhich::EndCap;
                corner[o][s] = vertex_for(slots[o][s].leaf, which);
            }

        auto oct = [&](int o) { return flip ? (3 - o) & 3 : o; };

        DualPolyhedron poly;
        poly.axis = key.axis;
        poly.base = key.base;
        poly.length = key.length;
        poly.tau = tree_.time_seconds(key.tau);
        poly.tau_key = key.tau;

        auto add_face = [&](std::initializer_list<uint32_t> cyc) {
            std::vector<uint32_t> cycle;
            for (uint32_t vid : cyc)
                if (cycle.empty() || cycle.back() != vid) cycle.push_back(vid);
            while (cycle.size() > 1 && cycle.front() == cycle.back()) cycle.pop_back();
            std::set<uint32_t> distinct(cycle.begin(), cycle.end());
            if (distinct.size() < 3) return;
            poly.faces.push_back(std::move(cycle));
        };

        // before cap (reversed), after cap (forward), four laterals
        add_face({corner[oct(3)][0], corner[oct(2)][0], corner[oct(1)][0], corner[oct(0)][0]});
        add_face({corner[oct(0)][1], corner[oct(1)][1], corner[oct(2)][1], corner[oct(3)][1]});
        for (int o = 0; o < 4; ++o) {
            int p = (o + 1) & 3;
            add_face({corner[oct(o)][0], corner[oct(p)][0], corner[oct(p)][1], corner[oct(o)][1]});
        }
        if (poly.faces.size() < 2) return;  // fully degenerate

        std::set<uint32_t> distinct;
        for (const auto& f : poly.faces) distinct.insert(f.begin(), f.end());
        poly.verts.assign(distinct.begin(), distinct.end());
        BINOC_CHECK(poly.verts.size() >= 2 && poly.verts.size() <= 8,
                    "polyhedron vertex count out of range");

        // owner: the lexicographically smallest group among its vertices
        GroupId owner = staging_[poly.verts[0]].group;
        for (uint32_t v : poly.verts)
            if (staging_[v].group < owner) owner = staging_[v].group;
        poly.group = owner;
        staged_polys_.push_back(std::move(poly));
    }

    void finalize(Mesh4D& mesh) {
        // order vertices by (group, discovery) and polyhedra by (group,
        // discovery); assign per-group local indices
        std::vector<uint32_t> vertex_order(staging_.size());
        for (uint32_t i = 0; i < staging_.size(); ++i) vertex_order[i] = i;
        std::stable_sort(vertex_order.begin(), vertex_order.end(), [&](uint32_t a, uint32_t b) {
            return staging_[a].group < staging_[b].group;
        });
        std::vector<uint32_t> remap(staging_.size());
        mesh.vertices.reserve(staging_.size());
        std::map<GroupId, uint64_t> next_local;
        for (uint32_t idx : vertex_order) {
            Vertex4Rec rec = staging_[idx];
            rec.local = next_local[rec.group]++;
            remap[idx] = uint32_t(mesh.vertices.size());
            mesh.vertices.push_back(rec);
        }
        std::stable_sort(staged_polys_.begin(), staged_polys_.end(),
                         [](const DualPolyhedron& a, const DualPolyhedron& b) {
                             return a.group < b.group;
                         });
        mesh.polyhedra = std::move(staged_polys_);
        for (auto& p : mesh.polyhedra) {
            for (auto& v : p.verts) v = remap[v];
            std::sort(p.verts.begin(), p.verts.end());
            for (auto& f : p.faces)
                for (auto& v : f) v = remap[v];
        }
    }

    const BinaryOctree& tree_;
    CornerCache& cache_;
    const Field& field_;
    int iters_;

    uint32_t depth_ = 0;
    std::vector<GroupId> leaf_group_;
    std::map<GroupId, std::vector<int32_t>> chunks_;
    std::map<GroupId, std::vector<int32_t>> seeds_by_group_;
    std::set<GroupId> resident_;

    std::map<TransitionKey, PendingInfo> pending_;
    std::set<TransitionKey> done_;

    std::map<std::pair<int32_t, VertexWhich>, uint32_t> vertex_ids_;
    std::unordered_map<int32_t, Vec3> positions_;
    std::vector<Vertex4Rec> staging_;
    std::vector<DualPolyhedron> staged_polys_;

    Contour4DStats stats_;
};

// Convenience wrapper.
inline Mesh4D dual_polyhedron_search(const BinaryOctree& tree, CornerCache& cache,
                                     const Field& field, const std::vector<int32_t>& seed_leaves,
                                     int bisection_iters, Contour4DStats* stats = nullptr) {
    DualContourExtractor ex(tree, cache, field, bisection_iters);
    return ex.run(seed_leaves, stats);
}

// ---------------------------------------------------------------------------
// Binary serialization. Little-endian; header magic BIN4, version, temporal
// depth, root window; then per-group records in lexicographic order. Global
// vertex ids are (lex rank of group << 40) | local index. A trailing 0xFF
// section carries per-vertex owner window lengths (used by the extrusion
// pass when a mesh is reloaded); readers of the base format may stop at it.

namespace mesh4d_io {

inline void write_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
inline void write_u64(std::ostream& os, uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
inline void write_f64(std::ostream& os, double v) { os.write(reinterpret_cast<const char*>(&v), 8); }
inline void write_u8(std::ostream& os, uint8_t v) { os.write(reinterpret_cast<const char*>(&v), 1); }

inline uint32_t read_u32(std::istream& is) {
    uint32_t v;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
inline uint64_t read_u64(std::istream& is) {
    uint64_t v;
    is.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
inline double read_f64(std::istream& is) {
    double v;
    is.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
inline uint8_t read_u8(std::istream& is) {
    char c;
    is.get(c);
    return uint8_t(c);
}

}  // namespace mesh4d_io

inline void save_mesh4d(const Mesh4D& mesh, std::ostream& os) {
    using namespace mesh4d_io;
    os.write("BIN4", 4);
    write_u32(os, 1);
    write_u32(os, mesh.temporal_depth);
    write_f64(os, mesh.window_t0);
    write_f64(os, mesh.window_t1);

    auto global_id = [&](uint32_t flat) {
        const Vertex4Rec& v = mesh.vertices[flat];
        return (group_lex_rank(v.group, mesh.temporal_depth) << 40) | v.local;
    };

    // group -> [vertex range), polyhedron range (both contiguous by construction)
    std::map<GroupId, std::pair<std::vector<uint32_t>, std::vector<uint32_t>>> by_group;
    for (uint32_t i = 0; i < mesh.vertices.size(); ++i)
        by_group[mesh.vertices[i].group].first.push_back(i);
    for (uint32_t i = 0; i < mesh.polyhedra.size(); ++i)
        by_group[mesh.polyhedra[i].group].second.push_back(i);

    for (const auto& [g, content] : by_group) {
        std::string s = g.str();
        write_u8(os, uint8_t(s.size()));
        os.write(s.data(), std::streamsize(s.size()));
        write_u64(os, content.first.size());
        for (uint32_t vi : content.first) {
            const Vertex4Rec& v = mesh.vertices[vi];
            write_f64(os, v.p.x);
            write_f64(os, v.p.y);
            write_f64(os, v.p.z);
            write_f64(os, v.t);
        }
        write_u64(os, content.second.size());
        for (uint32_t pi : content.second) {
            const DualPolyhedron& p = mesh.polyhedra[pi];
            write_u8(os, uint8_t(p.verts.size()));
            for (uint32_t v : p.verts) write_u64(os, global_id(v));
            write_u8(os, uint8_t(p.faces.size()));
            for (const auto& f : p.faces) {
                write_u8(os, uint8_t(f.size()));
                for (uint32_t v : f) write_u64(os, global_id(v));
            }
        }
    }

    // trailer: owner window lengths, file vertex order
    write_u8(os, 0xFF);
    os.write("WIN4", 4);
    write_u64(os, mesh.vertices.size());
    std::vector<uint32_t> order;
    for (const auto& [g, content] : by_group)
        for (uint32_t vi : content.first) order.push_back(vi);
    for (uint32_t vi : order) write_f64(os, mesh.vertices[vi].owner_window);
}

inline void save_mesh4d(const Mesh4D& mesh, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InputError(detail::concat("cannot write mesh file ", path));
    save_mesh4d(mesh, os);
}

inline Mesh4D load_mesh4d(std::istream& is, const std::string& name) {
    using namespace mesh4d_io;
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != "BIN4")
        throw InputError(detail::concat(name, ": not a 4D mesh file (bad magic)"));
    uint32_t version = read_u32(is);
    if (version != 1) throw InputError(detail::concat(name, ": unsupported version ", version));
    Mesh4D mesh;
    mesh.temporal_depth = read_u32(is);
    mesh.window_t0 = read_f64(is);
    mesh.window_t1 = read_f64(is);

    std::map<uint64_t, uint32_t> id_map;  // global id -> flat index
    struct RawPoly {
        std::vector<uint64_t> verts;
        std::vector<std::vector<uint64_t>> faces;
        GroupId group;
    };
    std::vector<RawPoly> raw;
    std::vector<uint32_t> file_order;

    for (;;) {
        int c = is.peek();
        if (c == EOF || c == 0xFF) break;
        uint8_t len = read_u8(is);
        std::string s(len, '0');
        is.read(s.data(), len);
        GroupId g = GroupId::from_string(s);
        uint64_t rank = group_lex_rank(g, mesh.temporal_depth);
        uint64_t nv = read_u64(is);
        for (uint64_t i = 0; i < nv; ++i) {
            Vertex4Rec v;
            v.p.x = read_f64(is);
            v.p.y = read_f64(is);
            v.p.z = read_f64(is);
            v.t = read_f64(is);
            v.group = g;
            v.local = i;
            uint32_t flat = uint32_t(mesh.vertices.size());
            id_map[(rank << 40) | i] = flat;
            file_order.push_back(flat);
            mesh.vertices.push_back(v);
        }
        uint64_t np = read_u64(is);
        for (uint64_t i = 0; i < np; ++i) {
            RawPoly p;
            p.group = g;
            uint8_t pv = read_u8(is);
            p.verts.resize(pv);
            for (auto& v : p.verts) v = read_u64(is);
            uint8_t nf = read_u8(is);
            p.faces.resize(nf);
            for (auto& f : p.faces) {
                uint8_t fl = read_u8(is);
                f.resize(fl);
                for (auto& v : f) v = read_u64(is);
            }
            raw.push_back(std::move(p));
        }
        if (!is) throw InputError(detail::concat(name, ": truncated mesh file"));
    }
    if (is.peek() == 0xFF) {
        read_u8(is);
        char tag[4];
        is.read(tag, 4);
        if (is && std::string(tag, 4) == "WIN4") {
            uint64_t n = read_u64(is);
            if (n == mesh.vertices.size())
                for (uint64_t i = 0; i < n; ++i) mesh.vertices[file_order[i]].owner_window = read_f64(is);
        }
    }

    for (auto& p : raw) {
        DualPolyhedron out;
        out.group = p.group;
        for (uint64_t v : p.verts) {
            auto it = id_map.find(v);
            if (it == id_map.end()) throw InputError(detail::concat(name, ": dangling vertex id"));
            out.verts.push_back(it->second);
        }
        for (auto& f : p.faces) {
            std::vector<uint32_t> cycle;
            for (uint64_t v : f) {
                auto it = id_map.find(v);
                if (it == id_map.end())
                    throw InputError(detail::concat(name, ": dangling face vertex id"));
                cycle.push_back(it->second);
            }
            out.faces.push_back(std::move(cycle));
        }
        mesh.polyhedra.push_back(std::move(out));
    }
    return mesh;
}

inline Mesh4D load_mesh4d(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InputError(detail::concat("cannot open mesh file ", path));
    return load_mesh4d(is, path);
}

}  // namespace binoc

#endif
