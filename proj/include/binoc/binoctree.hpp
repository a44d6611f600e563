#ifndef BINOC_BINOCTREE_HPP
#define BINOC_BINOCTREE_HPP

#include <bit>
#include <cstdio>
#include <deque>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <tuple>
#include <unordered_set>
#include <vector>

#include "binoc/common.hpp"
#include "binoc/field.hpp"
#include "binoc/groups.hpp"
#include "binoc/trajectory.hpp"
#include "binoc/vec.hpp"

namespace binoc {

enum class FloodSeedStrategy { CameraColumns, Exhaustive };

struct ExtractionConfig {
    double delta_t = 1.0;        // transition control parameter, seconds
    double d_hat1_px = 30.0;     // coarse diameter threshold, pixels
    double d_hat2_px = 3.0;      // fine diameter threshold, pixels
    uint64_t size_cap = 10'000'000;
    double contraction = 0.25;
    int max_depth = 10;          // spatial depth limit
    int max_temporal_depth = 24;

    // Root placement. root_size == 0 derives the cube from the camera path.
    Vec3 root_origin{0, 0, 0};
    double root_size = 0;
    double view_distance = 0;    // 0 = 2x max camera height above base surface

    // Root window. If unset (t0 >= t1), spans all path timestamps.
    double window_t0 = 0;
    double window_t1 = 0;

    bool visibility_filter = false;
    FloodSeedStrategy flood_seed_strategy = FloodSeedStrategy::CameraColumns;
    int flood_random_rays = 64;
    uint64_t seed = 0;

    int bisection_iters = 20;
    bool disable_temporal_splits = false;  // baseline mode

    void validate() const {
        if (!(delta_t > 0)) throw ConfigError("config: delta_t must be > 0");
        if (!(d_hat2_px > 0) || !(d_hat2_px < d_hat1_px))
            throw ConfigError("config: need 0 < d_hat2 < d_hat1");
        if (size_cap < 1) throw ConfigError("config: size_cap must be >= 1");
        if (!(contraction > 0 && contraction <= 1))
            throw ConfigError("config: contraction must be in (0, 1]");
        if (max_depth < 1 || max_depth > 20) throw ConfigError("config: max_depth out of range");
        if (bisection_iters < 0) throw ConfigError("config: bisection_iters must be >= 0");
    }
};

// ---------------------------------------------------------------------------
// Nodes. The spatial cube is (depth, ix, iy, iz): the root cube subdivided
// `depth` times; the window is a dyadic sub-interval of the root window.

enum class SplitKind : uint8_t { Leaf, Temporal, Spatial };

struct SpacetimeNode {
    uint8_t depth = 0;
    uint32_t ix = 0, iy = 0, iz = 0;
    DyadicInterval window;
    SplitKind kind = SplitKind::Leaf;
    int32_t first_child = -1;  // temporal: 2 children, spatial: 8 children
    int32_t parent = -1;
    uint32_t virtual_v = 0;    // V of the implied V^3 x 1 grid; 0 = unflagged
    bool surface = false;
    bool visible = true;
};

struct TreeStats {
    uint64_t nodes = 0;
    uint64_t temporal_splits = 0;
    uint64_t spatial_splits = 0;
    uint64_t virtual_flags = 0;
    uint64_t virtual_flags_refine = 0;
    uint64_t virtual_instantiated = 0;
    uint64_t saturated_leaves = 0;  // wanted a spatial split at max_depth
    bool cap_hit_coarse = false;
    bool cap_hit_refine = false;
};

// Handle for a leaf cell or one implied sub-cell of a virtual-grid leaf.
struct CellRef {
    int32_t node = -1;
    uint32_t sub = kNoSub;  // packed (vx | vy<<10 | vz<<20) when virtual
    static constexpr uint32_t kNoSub = 0xFFFFFFFFu;

    bool is_virtual() const { return sub != kNoSub; }
    bool operator==(const CellRef& o) const { return node == o.node && sub == o.sub; }
    bool operator<(const CellRef& o) const {
        return node != o.node ? node < o.node : sub < o.sub;
    }
};

struct CellRefHash {
    size_t operator()(const CellRef& c) const {
        return std::hash<uint64_t>()((uint64_t(uint32_t(c.node)) << 32) | c.sub);
    }
};

// ---------------------------------------------------------------------------

class BinaryOctree {
public:
    BinaryOctree(ExtractionConfig cfg, CameraPath path) : cfg_(cfg), path_(std::move(path)) {
        cfg_.validate();
        path_.validate();
        derive_window();
        derive_root_cube();
        SpacetimeNode root;
        root.window = DyadicInterval{};
        nodes_.push_back(root);
        stats_.nodes = 1;
    }

    const ExtractionConfig& config() const { return cfg_; }
    const CameraPath& path() const { return path_; }
    const std::vector<SpacetimeNode>& nodes() const { return nodes_; }
    const SpacetimeNode& node(int32_t id) const { return nodes_[id]; }
    TreeStats& stats() { return stats_; }
    const TreeStats& stats() const { return stats_; }

    double window_t0() const { return window_t0_; }
    double window_duration() const { return window_dur_; }
    double window_t1() const { return window_t0_ + window_dur_; }

    LatticeFrame lattice_frame() const {
        return {root_origin_, root_size_ / double(int64_t(1) << cfg_.max_depth), cfg_.max_depth};
    }
    Vec3 root_origin() const { return root_origin_; }
    double root_size() const { return root_size_; }

    double window_begin_seconds(const DyadicInterval& w) const {
        return window_t0_ + window_dur_ * double(w.index) / double(uint64_t(1) << w.level);
    }
    double window_end_seconds(const DyadicInterval& w) const {
        return window_t0_ + window_dur_ * double(w.index + 1) / double(uint64_t(1) << w.level);
    }
    double window_mid_seconds(const DyadicInterval& w) const {
        return window_t0_ + window_dur_ * (2.0 * double(w.index) + 1.0) /
                                double(uint64_t(2) << w.level);
    }
    double window_length_seconds(const DyadicInterval& w) const {
        return window_dur_ / double(uint64_t(1) << w.level);
    }
    double time_seconds(const DyadicTime& t) const {
        return window_t0_ + window_dur_ * double(t.index) / double(uint64_t(1) << t.level);
    }

    NodeGeometry geometry(const SpacetimeNode& n) const {
        double size = root_size_ / double(uint64_t(1) << n.depth);
        Vec3 c{root_origin_.x + (n.ix + 0.5) * size, root_origin_.y + (n.iy + 0.5) * size,
               root_origin_.z + (n.iz + 0.5) * size};
        return {c, size};
    }

    NodeGeometry cell_geometry(const CellRef& c) const {
        const SpacetimeNode& n = nodes_[c.node];
        if (!c.is_virtual()) return geometry(n);
        uint32_t v = n.virtual_v;
        double size = root_size_ / double(uint64_t(1) << n.depth) / double(v);
        uint32_t vx = c.sub & 1023, vy = (c.sub >> 10) & 1023, vz = (c.sub >> 20) & 1023;
        double base = root_size_ / double(uint64_t(1) << n.depth);
        Vec3 lo{root_origin_.x + n.ix * base, root_origin_.y + n.iy * base,
                root_origin_.z + n.iz * base};
        return {{lo.x + (vx + 0.5) * size, lo.y + (vy + 0.5) * size, lo.z + (vz + 0.5) * size},
                size};
    }

    // Lattice span (finest units at max_depth) of a cell's cube.
    struct LatticeBox {
        int64_t lo[3];
        int64_t size;  // cube side in finest units
    };
    LatticeBox lattice_box(const CellRef& c) const {
        const SpacetimeNode& n = nodes_[c.node];
        int64_t shift = cfg_.max_depth - n.depth;
        LatticeBox b;
        b.size = int64_t(1) << shift;
        b.lo[0] = int64_t(n.ix) << shift;
        b.lo[1] = int64_t(n.iy) << shift;
        b.lo[2] = int64_t(n.iz) << shift;
        if (c.is_virtual()) {
            uint32_t v = n.virtual_v;
            int64_t sub_size = b.size / v;
            BINOC_CHECK(sub_size >= 1, "virtual grid finer than lattice");
            uint32_t vx = c.sub & 1023, vy = (c.sub >> 10) & 1023, vz = (c.sub >> 20) & 1023;
            b.lo[0] += vx * sub_size;
            b.lo[1] += vy * sub_size;
            b.lo[2] += vz * sub_size;
            b.size = sub_size;
        }
        return b;
    }

    // --- Projected-diameter priority -------------------------------------

    // Max over in-window cameras of contracted diameter divided by that
    // camera's pixel threshold: > 1 means the node needs further splitting.
    double excess(const SpacetimeNode& n, double threshold_px) const {
        NodeGeometry g = geometry(n);
        double t0 = window_begin_seconds(n.window), t1 = window_end_seconds(n.window);
        double best = 0;
        for (const auto& cam : path_.samples) {
            if (cam.t < t0 || cam.t > t1) continue;
            double d = contracted_diameter(g, cam, cfg_.contraction);
            double thr = pixel_threshold_to_ratio(threshold_px, cam);
            best = std::max(best, thr > 0 ? d / thr : std::numeric_limits<double>::infinity());
        }
        return best;
    }

    // True when the in-window diameter sequence has a sub-threshold run
    // spanning at least delta_t and both child windows would stay >= delta_t.
    bool temporal_split_test(const SpacetimeNode& n) const {
        if (cfg_.disable_temporal_splits) return false;
        if (int(n.window.level) >= cfg_.max_temporal_depth) return false;
        double t0 = window_begin_seconds(n.window), t1 = window_end_seconds(n.window);
        if (window_length_seconds(n.window) / 2.0 < cfg_.delta_t) return false;

        NodeGeometry g = geometry(n);
        std::vector<std::pair<double, double>> seq;  // (t, diameter)
        double maxd = 0;
        for (const auto& cam : path_.samples) {
            if (cam.t < t0 || cam.t > t1) continue;
            double d = contracted_diameter(g, cam, cfg_.contraction);
            seq.emplace_back(cam.t, d);
            maxd = std::max(maxd, d);
        }
        if (seq.empty()) return false;
        double threshold = maxd / 2.0;
        double run_start = 0;
        bool in_run = false;
        for (const auto& [t, d] : seq) {
            if (d < threshold) {
                if (!in_run) {
                    in_run = true;
                    run_start = t;
                }
                if (t - run_start >= cfg_.delta_t) return true;
            } else {
                in_run = false;
            }
        }
        return false;
    }

    // --- Splitting ---------------------------------------------------------

    int32_t split_temporal(int32_t id) {
        SpacetimeNode n = nodes_[id];
        BINOC_CHECK(n.kind == SplitKind::Leaf, "temporal split of a non-leaf");
        int32_t base = static_cast<int32_t>(nodes_.size());
        for (int b = 0; b < 2; ++b) {
            SpacetimeNode c = n;
            c.window = b == 0 ? n.window.left() : n.window.right();
            c.kind = SplitKind::Leaf;
            c.first_child = -1;
            c.parent = id;
            c.virtual_v = 0;
            c.surface = false;
            nodes_.push_back(c);
        }
        nodes_[id].kind = SplitKind::Temporal;
        nodes_[id].first_child = base;
        stats_.nodes += 2;
        ++stats_.temporal_splits;
        return base;
    }

    int32_t split_spatial(int32_t id) {
        SpacetimeNode n = nodes_[id];
        BINOC_CHECK(n.kind == SplitKind::Leaf, "spatial split of a non-leaf");
        BINOC_CHECK(n.depth < cfg_.max_depth, "spatial split beyond max_depth");
        int32_t base = static_cast<int32_t>(nodes_.size());
        for (int b = 0; b < 8; ++b) {
            SpacetimeNode c = n;
            c.depth = n.depth + 1;
            c.ix = n.ix * 2 + (b & 1);
            c.iy = n.iy * 2 + ((b >> 1) & 1);
            c.iz = n.iz * 2 + ((b >> 2) & 1);
            c.kind = SplitKind::Leaf;
            c.first_child = -1;
            c.parent = id;
            c.virtual_v = 0;
            c.surface = false;
            nodes_.push_back(c);
        }
        nodes_[id].kind = SplitKind::Spatial;
        nodes_[id].first_child = base;
        stats_.nodes += 8;
        ++stats_.spatial_splits;
        return base;
    }

    // --- Alternating temporal/spatial splits (coarse-to-fine driver) -------

    struct QueueEntry {
        double priority;
        DyadicTime wstart;
        uint8_t depth;
        uint32_t ix, iy, iz;
        int32_t id;

        // max-heap by priority; ties pop the lexicographically smallest
        // (window start, depth, ix, iy, iz) first.
        bool operator<(const QueueEntry& o) const {
            if (priority != o.priority) return priority < o.priority;
            auto key = [](const QueueEntry& e) {
                return std::make_tuple(e.depth, e.ix, e.iy, e.iz);
            };
            if (!(wstart == o.wstart)) return o.wstart < wstart;
            return key(o) < key(*this);
        }
    };

    QueueEntry make_entry(int32_t id, double threshold_px) const {
        const SpacetimeNode& n = nodes_[id];
        return {excess(n, threshold_px), DyadicTime::start_of(n.window).normalized(), n.depth,
                n.ix, n.iy, n.iz, id};
    }

    // Splits `root_id`'s subtree until the top-of-queue diameter falls below
    // the threshold or the global node count reaches the cap. Returns true
    // if the cap stopped refinement while unsatisfied nodes remained.
    bool build_from(int32_t root_id, double threshold_px) {
        std::priority_queue<QueueEntry> queue;
        queue.push(make_entry(root_id, threshold_px));
        bool cap_hit = false;
        while (!queue.empty()) {
            QueueEntry top = queue.top();
            if (top.priority <= 1.0) break;
            if (stats_.nodes >= cfg_.size_cap) {
                cap_hit = true;
                break;
            }
            queue.pop();
            if (temporal_split_test(nodes_[top.id])) {
                int32_t base = split_temporal(top.id);
                for (int b = 0; b < 2; ++b) queue.push(make_entry(base + b, threshold_px));
            } else if (nodes_[top.id].depth < cfg_.max_depth) {
                int32_t base = split_spatial(top.id);
                for (int b = 0; b < 8; ++b) queue.push(make_entry(base + b, threshold_px));
            } else {
                ++stats_.saturated_leaves;  // cannot split further
            }
        }
        return cap_hit;
    }

    void build_coarse() {
        stats_.cap_hit_coarse = build_from(0, cfg_.d_hat1_px);
        if (stats_.cap_hit_coarse) flag_virtual_grid(cfg_.d_hat1_px, /*refine=*/false);
    }

    // Flags every unsatisfied leaf as a virtual V^3 x 1 grid, V the smallest
    // power of two with diameter < V * threshold.
    void flag_virtual_grid(double threshold_px, bool refine) {
        for (size_t i = 0; i < nodes_.size(); ++i) {
            SpacetimeNode& n = nodes_[i];
            if (n.kind != SplitKind::Leaf || n.virtual_v != 0) continue;
            double e = excess(n, threshold_px);
            if (e <= 1.0) continue;
            uint64_t v = 1;
            while (double(v) <= e && v < 1024) v <<= 1;
            // The implied sub-cells must stay on the corner lattice.
            while (v > 1 && int(n.depth) + std::countr_zero(v) > cfg_.max_depth) v >>= 1;
            if (v <= 1) continue;
            n.virtual_v = static_cast<uint32_t>(v);
            if (refine)
                ++stats_.virtual_flags_refine;
            else
                ++stats_.virtual_flags;
        }
    }

    // --- Queries -------------------------------------------------------------

    template <typename Fn>
    void for_each_leaf(Fn&& fn) const {
        for (size_t i = 0; i < nodes_.size(); ++i)
            if (nodes_[i].kind == SplitKind::Leaf) fn(static_cast<int32_t>(i), nodes_[i]);
    }

    // Leaf containing the finest-lattice cell (cx,cy,cz) at dyadic time tau
    // biased to the given side. Returns -1 outside the root cube.
    int32_t locate(int64_t cx, int64_t cy, int64_t cz, const DyadicTime& tau, bool after) const {
        int64_t n = int64_t(1) << cfg_.max_depth;
        if (cx < 0 || cy < 0 || cz < 0 || cx >= n || cy >= n || cz >= n) return -1;
        int32_t cur = 0;
        for (;;) {
            const SpacetimeNode& nd = nodes_[cur];
            if (nd.kind == SplitKind::Leaf) return cur;
            if (nd.kind == SplitKind::Temporal) {
                DyadicTime mid = DyadicTime::end_of(nd.window.left());
                bool right = (mid < tau) || (mid == tau && after);
                cur = nd.first_child + (right ? 1 : 0);
            } else {
                int shift = cfg_.max_depth - nd.depth - 1;
                int bx = (cx >> shift) & 1, by = (cy >> shift) & 1, bz = (cz >> shift) & 1;
                cur = nd.first_child + (bx | (by << 1) | (bz << 2));
            }
        }
    }

    // All leaves intersecting lattice box [lo, hi) x window around `t`.
    void collect_leaves(const int64_t lo[3], const int64_t hi[3], const DyadicTime& t0,
                        const DyadicTime& t1, std::vector<int32_t>& out) const {
        collect_rec(0, lo, hi, t0, t1, out);
    }

    // --- Surface detection ---------------------------------------------------

    LatticeCoord cell_corner(const CellRef& c, int corner) const {
        LatticeBox b = lattice_box(c);
        return {b.lo[0] + ((corner & 1) ? b.size : 0), b.lo[1] + ((corner & 2) ? b.size : 0),
                b.lo[2] + ((corner & 4) ? b.size : 0)};
    }

    // The 16 hypercube corners reduce to the 8 spatial corners for a static
    // field; straddling means the 8 bits are not all equal.
    bool straddles(const CellRef& c, CornerCache& cache) const {
        std::array<LatticeCoord, 8> corners;
        std::array<uint8_t, 8> bits;
        for (int k = 0; k < 8; ++k) corners[k] = cell_corner(c, k);
        cache.get_or_eval(corners, bits);
        for (int k = 1; k < 8; ++k)
            if (bits[k] != bits[0]) return true;
        return false;
    }

    std::vector<CellRef> default_flood_seeds(CornerCache& cache) const {
        std::vector<CellRef> seeds;
        if (cfg_.flood_seed_strategy == FloodSeedStrategy::Exhaustive) {
            for_each_leaf([&](int32_t id, const SpacetimeNode& n) {
                if (n.virtual_v == 0) {
                    seeds.push_back({id, CellRef::kNoSub});
                } else {
                    uint32_t v = n.virtual_v;
                    for (uint32_t z = 0; z < v; ++z)
                        for (uint32_t y = 0; y < v; ++y)
                            for (uint32_t x = 0; x < v; ++x)
                                seeds.push_back({id, x | (y << 10) | (z << 20)});
                }
            });
            return seeds;
        }
        // Per camera: the vertical column of cells through the camera
        // position, plus random rays through the frustum.
        LatticeFrame frame = lattice_frame();
        int64_t n = int64_t(1) << cfg_.max_depth;
        SplitMix64 rng(cfg_.seed ^ 0x5eedf100dull);
        auto cell_at = [&](const Vec3& p, const DyadicTime& tau) -> std::optional<CellRef> {
            int64_t cx = int64_t(std::floor((p.x - frame.origin.x) / frame.cell_size));
            int64_t cy = int64_t(std::floor((p.y - frame.origin.y) / frame.cell_size));
            int64_t cz = int64_t(std::floor((p.z - frame.origin.z) / frame.cell_size));
            if (cx < 0 || cy < 0 || cz < 0 || cx >= n || cy >= n || cz >= n) return std::nullopt;
            int32_t leaf = locate(cx, cy, cz, tau, true);
            if (leaf < 0) return std::nullopt;
            return cell_from_leaf(leaf, cx, cy, cz);
        };
        for (const auto& cam : path_.samples) {
            double rel = (cam.t - window_t0_) / window_dur_;
            rel = std::clamp(rel, 0.0, 1.0);
            uint32_t level = 20;
            DyadicTime tau{level, uint64_t(rel * double(uint64_t(1) << level))};
            // vertical column
            for (int64_t cz = 0; cz < n; ++cz) {
                Vec3 p = cam.position;
                p.z = frame.origin.z + (double(cz) + 0.5) * frame.cell_size;
                if (auto c = cell_at(p, tau)) {
                    if (seeds.empty() || !(seeds.back() == *c)) seeds.push_back(*c);
                }
            }
            // random rays through the frustum, stepped until they exit
            for (int r = 0; r < cfg_.flood_random_rays; ++r) {
                double u = (double(rng.next() >> 11) / 9007199254740992.0) * 2.0 - 1.0;
                double v = (double(rng.next() >> 11) / 9007199254740992.0) * 2.0 - 1.0;
                double tv = std::tan(cam.fov_y_rad() / 2.0);
                Vec3 dir = normalized(cam.forward() + cam.up() * (v * tv) +
                                      cam.right() * (u * tv * cam.aspect()));
                double step = frame.cell_size * (double(uint64_t(1) << cfg_.max_depth) / 256.0);
                step = std::max(step, frame.cell_size);
                for (double s = 0; s < root_size_ * 2.0; s += step)
                    if (auto c = cell_at(cam.position + dir * s, tau)) seeds.push_back(*c);
            }
        }
        std::sort(seeds.begin(), seeds.end());
        seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());
        return seeds;
    }

    CellRef cell_from_leaf(int32_t leaf, int64_t cx, int64_t cy, int64_t cz) const {
        const SpacetimeNode& nd = nodes_[leaf];
        if (nd.virtual_v == 0) return {leaf, CellRef::kNoSub};
        LatticeBox b = lattice_box({leaf, CellRef::kNoSub});
        int64_t sub_size = b.size / nd.virtual_v;
        uint32_t vx = uint32_t((cx - b.lo[0]) / sub_size);
        uint32_t vy = uint32_t((cy - b.lo[1]) / sub_size);
        uint32_t vz = uint32_t((cz - b.lo[2]) / sub_size);
        return {leaf, vx | (vy << 10) | (vz << 20)};
    }

    // Flood fill from seeds across spatial and temporal face neighbors.
    // Returns the set of straddling cells; every face-neighbor of a returned
    // cell has been tested.
    std::set<CellRef> flood_fill_surface(CornerCache& cache,
                                         const std::vector<CellRef>& seeds) const {
        BINOC_CHECK(!seeds.empty(), "flood fill needs seeds");
        std::set<CellRef> surface;
        std::unordered_set<CellRef, CellRefHash> tested;
        std::deque<CellRef> frontier;
        auto visit = [&](const CellRef& c) {
            if (!tested.insert(c).second) return;
            if (straddles(c, cache)) {
                surface.insert(c);
                frontier.push_back(c);
            }
        };
        for (const auto& s : seeds) visit(s);
        std::vector<CellRef> nbrs;
        while (!frontier.empty()) {
            CellRef c = frontier.front();
            frontier.pop_front();
            nbrs.clear();
            face_neighbors(c, nbrs);
            for (const auto& nb : nbrs) visit(nb);
        }
        return surface;
    }

    // All cells sharing a face with `c`: 6 spatial directions plus the two
    // temporal sides of the window.
    void face_neighbors(const CellRef& c, std::vector<CellRef>& out) const {
        LatticeBox b = lattice_box(c);
        const DyadicInterval w = nodes_[c.node].window;
        DyadicTime t0 = DyadicTime::start_of(w), t1 = DyadicTime::end_of(w);
        int64_t n = int64_t(1) << cfg_.max_depth;
        for (int axis = 0; axis < 3; ++axis) {
            for (int dir = -1; dir <= 1; dir += 2) {
                int64_t lo[3] = {b.lo[0], b.lo[1], b.lo[2]};
                int64_t hi[3] = {b.lo[0] + b.size, b.lo[1] + b.size, b.lo[2] + b.size};
                if (dir < 0) {
                    lo[axis] = b.lo[axis] - 1;
                    hi[axis] = b.lo[axis];
                } else {
                    lo[axis] = b.lo[axis] + b.size;
                    hi[axis] = b.lo[axis] + b.size + 1;
                }
                if (lo[axis] < 0 || hi[axis] > n) continue;
                collect_cells(lo, hi, t0, t1, out);
            }
        }
        // temporal neighbors: same cube, adjacent windows
        int64_t lo[3] = {b.lo[0], b.lo[1], b.lo[2]};
        int64_t hi[3] = {b.lo[0] + b.size, b.lo[1] + b.size, b.lo[2] + b.size};
        if (!(t0 == DyadicTime{0, 0})) collect_cells_at_time(lo, hi, t0, /*after=*/false, out);
        if (!(t1 == DyadicTime{0, 1})) collect_cells_at_time(lo, hi, t1, /*after=*/true, out);
    }

    // --- Refinement ----------------------------------------------------------

    // Materializes a virtual sub-cell as a real leaf (splitting ancestors as
    // needed); returns the new leaf id.
    int32_t instantiate(const CellRef& c) {
        if (!c.is_virtual()) return c.node;
        LatticeBox b = lattice_box(c);  // the flag stays on the node for sibling sub-cell math
        int32_t cur = c.node;
        int target_depth = cfg_.max_depth - std::countr_zero(uint64_t(b.size));
        while (nodes_[cur].depth < target_depth) {
            if (nodes_[cur].kind == SplitKind::Leaf) split_spatial(cur);
            BINOC_CHECK(nodes_[cur].kind == SplitKind::Spatial, "virtual node split temporally");
            int shift = cfg_.max_depth - nodes_[cur].depth - 1;
            int bx = int((b.lo[0] >> shift) & 1), by = int((b.lo[1] >> shift) & 1),
                bz = int((b.lo[2] >> shift) & 1);
            cur = nodes_[cur].first_child + (bx | (by << 1) | (bz << 2));
        }
        ++stats_.virtual_instantiated;
        return cur;
    }

    // Reapplies the split driver to each surface cell with the fine
    // threshold, then re-tests the new leaves. Returns the refined set.
    std::set<CellRef> refine_surface_nodes(const std::set<CellRef>& surface, CornerCache& cache) {
        std::vector<int32_t> roots;
        roots.reserve(surface.size());
        for (const CellRef& c : surface) roots.push_back(instantiate(c));
        bool cap = false;
        for (int32_t id : roots) cap |= build_from(id, cfg_.d_hat2_px);
        stats_.cap_hit_refine = cap;
        if (cap) flag_virtual_grid(cfg_.d_hat2_px, /*refine=*/true);
        std::set<CellRef> refined;
        for (int32_t id : roots) {
            collect_leaf_cells_under(id, [&](const CellRef& c) {
                if (straddles(c, cache)) refined.insert(c);
            });
        }
        for (const CellRef& c : refined)
            if (!c.is_virtual()) nodes_[c.node].surface = true;
        return refined;
    }

    template <typename Fn>
    void collect_leaf_cells_under(int32_t id, Fn&& fn) const {
        const SpacetimeNode& n = nodes_[id];
        if (n.kind == SplitKind::Leaf) {
            if (n.virtual_v == 0) {
                fn(CellRef{id, CellRef::kNoSub});
            } else {
                uint32_t v = n.virtual_v;
                for (uint32_t z = 0; z < v; ++z)
                    for (uint32_t y = 0; y < v; ++y)
                        for (uint32_t x = 0; x < v; ++x)
                            fn(CellRef{id, x | (y << 10) | (z << 20)});
            }
            return;
        }
        int nc = n.kind == SplitKind::Temporal ? 2 : 8;
        for (int i = 0; i < nc; ++i) collect_leaf_cells_under(n.first_child + i, fn);
    }

    // --- Visibility filter -----------------------------------------------------

    struct DepthBuffer {
        int width = 0, height = 0;
        std::vector<double> depth;  // +inf background
    };

    // Keeps a cell iff some in-window camera sees at least one footprint
    // pixel whose buffer depth reaches past (node nearest depth - diagonal).
    std::set<CellRef> visibility_filter(const std::set<CellRef>& surface,
                                        const std::vector<DepthBuffer>& buffers) const {
        if (!cfg_.visibility_filter) return surface;
        BINOC_CHECK(buffers.size() == path_.samples.size(), "one depth buffer per camera");
        std::set<CellRef> kept;
        for (const CellRef& c : surface) {
            NodeGeometry g = cell_geometry(c);
            const DyadicInterval w = nodes_[c.node].window;
            double t0 = window_begin_seconds(w), t1 = window_end_seconds(w);
            double radius = g.bounding_radius();
            double diag = g.size * std::sqrt(3.0);
            bool vis = false;
            for (size_t i = 0; i < path_.samples.size() && !vis; ++i) {
                const CameraSample& cam = path_.samples[i];
                if (cam.t < t0 || cam.t > t1) continue;
                Vec3 view = Mat3::from_quat(cam.orientation).transposed() * (g.center - cam.position);
                double depth = -view.z;
                if (depth + radius <= 0) continue;
                double f = cam.focal_px();
                double zproj = std::max(depth, 1e-9);
                double px = cam.width / 2.0 + f * view.x / zproj;
                double py = cam.height / 2.0 - f * view.y / zproj;
                double pr = f * radius / zproj + 1.0;
                int x0 = std::max(0, int(std::floor(px - pr)));
                int x1 = std::min(cam.width - 1, int(std::ceil(px + pr)));
                int y0 = std::max(0, int(std::floor(py - pr)));
                int y1 = std::min(cam.height - 1, int(std::ceil(py + pr)));
                const DepthBuffer& buf = buffers[i];
                BINOC_CHECK(buf.width == cam.width && buf.height == cam.height,
                            "depth buffer size mismatch");
                double near_depth = std::max(0.0, depth - radius) - diag;
                for (int y = y0; y <= y1 && !vis; ++y)
                    for (int x = x0; x <= x1; ++x)
                        if (buf.depth[size_t(y) * buf.width + x] >= near_depth) {
                            vis = true;
                            break;
                        }
            }
            if (vis) kept.insert(c);
        }
        return kept;
    }

    // --- Debug dump: one node per line, preorder -------------------------------

    void dump(std::ostream& os) const {
        dump_rec(0, os);
    }

private:
    void dump_rec(int32_t id, std::ostream& os) const {
        const SpacetimeNode& n = nodes_[id];
        char buf[256];
        const char* kind = n.kind == SplitKind::Leaf       ? "leaf"
                           : n.kind == SplitKind::Temporal ? "temporal"
                                                           : "spatial";
        std::snprintf(buf, sizeof(buf), "%d %u %u %u %.17g %.17g %s", n.depth, n.ix, n.iy, n.iz,
                      window_begin_seconds(n.window), window_end_seconds(n.window), kind);
        os << buf;
        if (n.kind == SplitKind::Leaf && n.virtual_v) os << " V=" << n.virtual_v;
        if (n.surface) os << " S";
        if (!n.visible) os << " vis=0";
        os << "\n";
        if (n.kind != SplitKind::Leaf) {
            int nc = n.kind == SplitKind::Temporal ? 2 : 8;
            for (int i = 0; i < nc; ++i) dump_rec(n.first_child + i, os);
        }
    }

    void derive_window() {
        if (cfg_.window_t0 < cfg_.window_t1) {
            window_t0_ = cfg_.window_t0;
            window_dur_ = cfg_.window_t1 - cfg_.window_t0;
        } else {
            window_t0_ = path_.t_begin();
            double dur = path_.t_end() - path_.t_begin();
            window_dur_ = dur > 0 ? dur : 1.0;
        }
        if (path_.t_begin() < window_t0_ || path_.t_end() > window_t0_ + window_dur_)
            throw ConfigError("config: root window must cover all path timestamps");
    }

    void derive_root_cube() {
        if (cfg_.root_size > 0) {
            root_origin_ = cfg_.root_origin;
            root_size_ = cfg_.root_size;
            return;
        }
        Vec3 lo = path_.samples.front().position, hi = lo;
        double max_height = 0;
        for (const auto& s : path_.samples) {
            for (int a = 0; a < 3; ++a) {
                lo[a] = std::min(lo[a], s.position[a]);
                hi[a] = std::max(hi[a], s.position[a]);
            }
            max_height = std::max(max_height, s.position.z);
        }
        double view = cfg_.view_distance > 0 ? cfg_.view_distance : 2.0 * std::max(max_height, 1.0);
        Vec3 center = (lo + hi) * 0.5;
        double size = 0;
        for (int a = 0; a < 3; ++a) size = std::max(size, hi[a] - lo[a]);
        size += 2.0 * view;
        root_origin_ = center - Vec3{size / 2, size / 2, size / 2};
        root_size_ = size;
    }

    void collect_rec(int32_t id, const int64_t lo[3], const int64_t hi[3], const DyadicTime& t0,
                     const DyadicTime& t1, std::vector<int32_t>& out) const {
        const SpacetimeNode& n = nodes_[id];
        LatticeBox b = lattice_box({id, CellRef::kNoSub});
        for (int a = 0; a < 3; ++a)
            if (b.lo[a] >= hi[a] || b.lo[a] + b.size <= lo[a]) return;
        DyadicTime w0 = DyadicTime::start_of(n.window), w1 = DyadicTime::end_of(n.window);
        if (!(w0 < t1) || !(t0 < w1)) return;
        if (n.kind == SplitKind::Leaf) {
            out.push_back(id);
            return;
        }
        int nc = n.kind == SplitKind::Temporal ? 2 : 8;
        for (int i = 0; i < nc; ++i) collect_rec(n.first_child + i, lo, hi, t0, t1, out);
    }

    void collect_cells(const int64_t lo[3], const int64_t hi[3], const DyadicTime& t0,
                       const DyadicTime& t1, std::vector<CellRef>& out) const {
        std::vector<int32_t> leaves;
        collect_leaves(lo, hi, t0, t1, leaves);
        for (int32_t id : leaves) append_overlapping_cells(id, lo, hi, out);
    }

    void collect_cells_at_time(const int64_t lo[3], const int64_t hi[3], const DyadicTime& tau,
                               bool after, std::vector<CellRef>& out) const {
        std::vector<int32_t> leaves;
        collect_at_time_rec(0, lo, hi, tau, after, leaves);
        for (int32_t id : leaves) append_overlapping_cells(id, lo, hi, out);
    }

    void collect_at_time_rec(int32_t id, const int64_t lo[3], const int64_t hi[3],
                             const DyadicTime& tau, bool after,
                             std::vector<int32_t>& out) const {
        const SpacetimeNode& n = nodes_[id];
        LatticeBox b = lattice_box({id, CellRef::kNoSub});
        for (int a = 0; a < 3; ++a)
            if (b.lo[a] >= hi[a] || b.lo[a] + b.size <= lo[a]) return;
        DyadicTime w0 = DyadicTime::start_of(n.window), w1 = DyadicTime::end_of(n.window);
        // want window containing tau on the requested side
        bool contains = after ? (w0 <= tau && tau < w1) : (w0 < tau && tau <= w1);
        if (!contains) return;
        if (n.kind == SplitKind::Leaf) {
            out.push_back(id);
            return;
        }
        int nc = n.kind == SplitKind::Temporal ? 2 : 8;
        for (int i = 0; i < nc; ++i) collect_at_time_rec(n.first_child + i, lo, hi, tau, after, out);
    }

    void append_overlapping_cells(int32_t id, const int64_t lo[3], const int64_t hi[3],
                                  std::vector<CellRef>& out) const {
        const SpacetimeNode& n = nodes_[id];
        if (n.virtual_v == 0) {
            out.push_back({id, CellRef::kNoSub});
            return;
        }
        LatticeBox b = lattice_box({id, CellRef::kNoSub});
        uint32_t v = n.virtual_v;
        int64_t ss = b.size / v;
        int64_t r0[3], r1[3];
        for (int a = 0; a < 3; ++a) {
            r0[a] = std::max<int64_t>(0, (std::max(lo[a], b.lo[a]) - b.lo[a]) / ss);
            r1[a] = std::min<int64_t>(v - 1, (std::min(hi[a], b.lo[a] + b.size) - 1 - b.lo[a]) / ss);
        }
        for (int64_t z = r0[2]; z <= r1[2]; ++z)
            for (int64_t y = r0[1]; y <= r1[1]; ++y)
                for (int64_t x = r0[0]; x <= r1[0]; ++x)
                    out.push_back({id, uint32_t(x) | (uint32_t(y) << 10) | (uint32_t(z) << 20)});
    }

    ExtractionConfig cfg_;
    CameraPath path_;
    std::vector<SpacetimeNode> nodes_;
    TreeStats stats_;
    Vec3 root_origin_;
    double root_size_ = 1;
    double window_t0_ = 0;
    double window_dur_ = 1;
};

}  // namespace binoc

#endif
