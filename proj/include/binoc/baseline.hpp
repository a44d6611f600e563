#ifndef BINOC_BASELINE_HPP
#define BINOC_BASELINE_HPP

#include <vector>

#include "binoc/pipeline.hpp"

namespace binoc {

// Fixed-length subsequence plan: one static mesh per block of N frames,
// reused for every frame in the block.
struct BaselinePlan {
    size_t block_frames = 24;
    struct Block {
        size_t first_frame;
        size_t frame_count;
    };
    std::vector<Block> blocks;

    static BaselinePlan make(size_t total_frames, size_t n) {
        if (n < 1) throw ConfigError("baseline: block length must be >= 1");
        BaselinePlan plan;
        plan.block_frames = n;
        for (size_t f = 0; f < total_frames; f += n)
            plan.blocks.push_back({f, std::min(n, total_frames - f)});
        return plan;
    }
};

struct BaselineResult {
    BaselinePlan plan;
    std::vector<Mesh3> frames;           // one per frame; block-constant
    std::vector<Mesh4D> block_meshes;    // one per block
    std::vector<ExtractResult> block_stats;
};

// The baseline is a configuration of the primary pipeline: per block, the
// tree is built over the block's window with temporal splits disabled, so
// the block's 4D mesh is a stack of prisms and every frame shares one slice.
inline BaselineResult extract_baseline(const FieldHandle& field, const CameraPath& path,
                                       size_t block_frames, ExtractionConfig config) {
    BaselineResult result;
    result.plan = BaselinePlan::make(path.size(), block_frames);
    result.frames.resize(path.size());
    config.disable_temporal_splits = true;

    // keep one spatial root across blocks so comparisons see the same lattice
    if (config.root_size <= 0) {
        BinaryOctree probe(config, path);
        config.root_origin = probe.root_origin();
        config.root_size = probe.root_size();
    }

    for (const auto& block : result.plan.blocks) {
        CameraPath sub;
        sub.samples.assign(path.samples.begin() + std::ptrdiff_t(block.first_frame),
                           path.samples.begin() + std::ptrdiff_t(block.first_frame + block.frame_count));
        ExtractionConfig bc = config;
        bc.window_t0 = sub.t_begin();
        bc.window_t1 = sub.t_end() > sub.t_begin() ? sub.t_end() : sub.t_begin() + 1.0;
        ExtractResult ex = run_extract(field, sub, bc);
        BINOC_CHECK(ex.contour_stats.temporal_depth == 0, "baseline produced temporal splits");
        Mesh3 slice = slice_mesh(ex.mesh, sub.t_begin());
        for (size_t k = 0; k < block.frame_count; ++k)
            result.frames[block.first_frame + k] = slice;
        result.block_meshes.push_back(std::move(ex.mesh));
        ex.mesh = Mesh4D{};
        result.block_stats.push_back(std::move(ex));
    }
    return result;
}

}  // namespace binoc

#endif
