#ifndef BINOC_PIPELINE_HPP
#define BINOC_PIPELINE_HPP

#include <memory>
#include <string>
#include <vector>

#include "binoc/binoctree.hpp"
#include "binoc/consistency.hpp"
#include "binoc/contour4d.hpp"
#include "binoc/field.hpp"
#include "binoc/slicer.hpp"
#include "binoc/trajectory.hpp"

namespace binoc {

struct ExtractResult {
    Mesh4D mesh;
    TreeStats tree_stats;
    Contour4DStats contour_stats;
    uint64_t field_evaluations = 0;
    size_t surface_cells = 0;
    size_t visible_cells = 0;
};

// Full extraction: coarse tree, flood fill, optional visibility filter,
// refinement, streamed dual polyhedron search. `tree_dump` receives the
// debug text dump of the final tree when non-null.
inline ExtractResult run_extract(const FieldHandle& field, const CameraPath& path,
                                 const ExtractionConfig& config,
                                 std::ostream* tree_dump = nullptr) {
    ExtractResult result;
    BinaryOctree tree(config, path);
    CornerCache cache(field, tree.lattice_frame());

    tree.build_coarse();
    log_info("extract: coarse tree has ", tree.nodes().size(), " nodes");

    auto seeds = tree.default_flood_seeds(cache);
    std::set<CellRef> surface;
    if (!seeds.empty()) surface = tree.flood_fill_surface(cache, seeds);
    log_info("extract: ", surface.size(), " surface cells");

    if (config.visibility_filter && !surface.empty()) {
        // depth buffers from a conservative coarse proxy: the coarse tree's
        // own dual-contour mesh rendered at each camera
        std::vector<int32_t> coarse_leaves;
        for (const CellRef& c : surface)
            if (!c.is_virtual()) coarse_leaves.push_back(c.node);
        std::sort(coarse_leaves.begin(), coarse_leaves.end());
        coarse_leaves.erase(std::unique(coarse_leaves.begin(), coarse_leaves.end()),
                            coarse_leaves.end());
        Mesh4D proxy = dual_polyhedron_search(tree, cache, *field, coarse_leaves, 4);
        std::vector<BinaryOctree::DepthBuffer> buffers;
        buffers.reserve(path.size());
        for (const auto& cam : path.samples) {
            Mesh3 slice = slice_mesh(proxy, cam.t);
            FrameBuffers fb = rasterize(slice, cam);
            BinaryOctree::DepthBuffer db;
            db.width = fb.width;
            db.height = fb.height;
            db.depth = std::move(fb.depth);
            buffers.push_back(std::move(db));
        }
        surface = tree.visibility_filter(surface, buffers);
        log_info("extract: ", surface.size(), " cells after visibility filter");
    }
    result.visible_cells = surface.size();

    auto refined = tree.refine_surface_nodes(surface, cache);
    result.surface_cells = refined.size();
    log_info("extract: ", refined.size(), " refined surface leaves, ", tree.nodes().size(),
             " nodes");

    std::vector<int32_t> seed_leaves;
    seed_leaves.reserve(refined.size());
    for (const CellRef& c : refined)
        if (!c.is_virtual()) seed_leaves.push_back(c.node);

    result.mesh = dual_polyhedron_search(tree, cache, *field, seed_leaves, config.bisection_iters,
                                         &result.contour_stats);
    result.tree_stats = tree.stats();
    result.field_evaluations = cache.evaluations();
    if (tree_dump) tree.dump(*tree_dump);
    return result;
}

// One sliced mesh per camera timestamp.
inline std::vector<Mesh3> slice_frames(const Mesh4D& mesh, const CameraPath& path,
                                       unsigned threads = 1) {
    std::vector<Mesh3> frames(path.size());
    parallel_for(path.size(), threads, [&](size_t lo, size_t hi) {
        for (size_t i = lo; i < hi; ++i) frames[i] = slice_mesh(mesh, path.samples[i].t);
    });
    return frames;
}

inline void write_stats(std::ostream& os, const ExtractResult& r) {
    os << "nodes: " << r.tree_stats.nodes << "\n";
    os << "temporal_splits: " << r.tree_stats.temporal_splits << "\n";
    os << "spatial_splits: " << r.tree_stats.spatial_splits << "\n";
    os << "saturated_leaves: " << r.tree_stats.saturated_leaves << "\n";
    os << "virtual_flags: " << r.tree_stats.virtual_flags << "\n";
    os << "virtual_flags_refine: " << r.tree_stats.virtual_flags_refine << "\n";
    os << "virtual_instantiated: " << r.tree_stats.virtual_instantiated << "\n";
    os << "cap_hit_coarse: " << (r.tree_stats.cap_hit_coarse ? 1 : 0) << "\n";
    os << "cap_hit_refine: " << (r.tree_stats.cap_hit_refine ? 1 : 0) << "\n";
    os << "surface_cells: " << r.surface_cells << "\n";
    os << "visible_cells: " << r.visible_cells << "\n";
    os << "field_evaluations: " << r.field_evaluations << "\n";
    os << "temporal_depth: " << r.contour_stats.temporal_depth << "\n";
    os << "group_loads: " << r.contour_stats.group_loads << "\n";
    os << "peak_resident_groups: " << r.contour_stats.peak_resident << "\n";
    os << "type1_records: " << r.contour_stats.type1_records << "\n";
    os << "type2_records: " << r.contour_stats.type2_records << "\n";
    os << "transitions: " << r.contour_stats.transitions << "\n";
    os << "vertices4d: " << r.contour_stats.vertices << "\n";
    os << "polyhedra: " << r.contour_stats.polyhedra << "\n";
}

}  // namespace binoc

#endif
