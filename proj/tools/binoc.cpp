// Command-line front end: path generation, extraction, slicing, baselines,
// consistency metrics, and parameter comparisons.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "binoc/baseline.hpp"
#include "binoc/consistency.hpp"
#include "binoc/pipeline.hpp"

namespace fs = std::filesystem;
using namespace binoc;

namespace {

struct GlobalOpts {
    std::string config;
    std::string out;
    unsigned threads = default_thread_count();
    uint64_t seed = 0;
};

CameraPath generate_path(const std::string& kind, double duration, double fps, uint64_t seed,
                         int width, int height, double fov, double radius, double height_z) {
    if (!(duration > 0)) throw ConfigError("genpath: duration must be > 0");
    if (!(fps >= 1)) throw ConfigError("genpath: fps must be >= 1");
    int frames = int(std::lround(duration * fps));
    if (frames < 1) frames = 1;
    SplitMix64 rng(seed);
    double phase = double(rng.next() % 1024) / 1024.0 * 2 * kPi;

    auto look = [&](Vec3 pos, Vec3 target, double t) {
        CameraSample c;
        c.t = t;
        c.position = pos;
        Vec3 f = normalized(target - pos);
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
        c.orientation = {q.w / n, q.x / n, q.y / n, q.z / n};
        c.fov_y_deg = fov;
        c.width = width;
        c.height = height;
        return c;
    };

    CameraPath path;
    for (int i = 0; i < frames; ++i) {
        double t = i / fps;
        double u = frames > 1 ? double(i) / (frames - 1) : 0.0;
        if (kind == "static") {
            path.samples.push_back(look({radius, 0, height_z}, {0, 0, 0}, t));
        } else if (kind == "orbit") {
            double a = phase + 2 * kPi * u;
            path.samples.push_back(
                look({radius * std::cos(a), radius * std::sin(a), height_z}, {0, 0, 0}, t));
        } else if (kind == "flythrough") {
            // descend from high and far toward the surface, then skim low
            double a = phase + 1.5 * kPi * u;
            double r = radius * (1.0 - 0.75 * u);
            double z = height_z * (1.0 - u) + 0.12 * height_z;
            Vec3 pos{r * std::cos(a), r * std::sin(a), z};
            double af = a + 0.5;
            Vec3 target{0.25 * r * std::cos(af), 0.25 * r * std::sin(af), 0.0};
            path.samples.push_back(look(pos, target, t));
        } else {
            throw ConfigError(detail::concat("genpath: unknown kind ", kind));
        }
    }
    path.validate();
    return path;
}

ExtractionConfig config_from_cli(double delta_t, double d1, double d2, uint64_t cap,
                                 double contraction, int max_depth, double root_size,
                                 std::vector<double> root_origin, int bisect, bool visibility,
                                 const std::string& seeds, uint64_t seed) {
    ExtractionConfig cfg;
    cfg.delta_t = delta_t;
    cfg.d_hat1_px = d1;
    cfg.d_hat2_px = d2;
    cfg.size_cap = cap;
    cfg.contraction = contraction;
    cfg.max_depth = max_depth;
    cfg.bisection_iters = bisect;
    cfg.visibility_filter = visibility;
    cfg.seed = seed;
    if (root_size > 0) {
        cfg.root_size = root_size;
        if (root_origin.size() == 3) cfg.root_origin = {root_origin[0], root_origin[1], root_origin[2]};
    }
    if (seeds == "columns")
        cfg.flood_seed_strategy = FloodSeedStrategy::CameraColumns;
    else if (seeds == "exhaustive")
        cfg.flood_seed_strategy = FloodSeedStrategy::Exhaustive;
    else
        throw ConfigError(detail::concat("unknown seed strategy ", seeds));
    cfg.validate();
    return cfg;
}

void write_frames(const std::vector<Mesh3>& frames, const CameraPath& path, const fs::path& dir) {
    fs::create_directories(dir);
    std::ofstream manifest(dir / "manifest.txt");
    for (size_t i = 0; i < frames.size(); ++i) {
        std::string name = frame_filename(int(i));
        export_obj(frames[i], (dir / name).string(), true);
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.17g", path.samples[i].t);
        manifest << name << " " << buf << "\n";
    }
}

std::vector<Mesh3> read_frames(const fs::path& dir, size_t expected) {
    std::vector<Mesh3> frames;
    for (size_t i = 0; i < expected; ++i) {
        fs::path p = dir / frame_filename(int(i));
        if (!fs::exists(p)) throw InputError(detail::concat("missing frame file ", p.string()));
        frames.push_back(load_obj(p.string()));
    }
    return frames;
}

struct Variant {
    std::string label;
    std::vector<Mesh3> frames;
    uint64_t total_vertices4d = 0;
    double mean_frame_vertices = 0;
    ConsistencyReport report;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"temporally smooth mesh extraction from occupancy fields"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand

    GlobalOpts g;
    app.add_option("--config", g.config, "scene config file (key = value lines)");
    app.add_option("--out", g.out, "output file or directory");
    app.add_option("--threads", g.threads, "worker threads for per-frame stages");
    app.add_option("--seed", g.seed, "seed for the pipeline's random choices");

    // genpath ----------------------------------------------------------------
    auto* genpath = app.add_subcommand("genpath", "generate a deterministic camera path CSV");
    std::string gp_kind = "orbit";
    double gp_duration = 20.0, gp_fps = 24.0, gp_fov = 60.0, gp_radius = 60.0, gp_height = 25.0;
    int gp_width = 960, gp_height_px = 540;
    genpath->add_option("--kind", gp_kind, "static | orbit | flythrough");
    genpath->add_option("--duration", gp_duration, "seconds");
    genpath->add_option("--fps", gp_fps, "frames per second");
    genpath->add_option("--width", gp_width, "image width in pixels");
    genpath->add_option("--height", gp_height_px, "image height in pixels");
    genpath->add_option("--fov", gp_fov, "vertical field of view, degrees");
    genpath->add_option("--radius", gp_radius, "path radius / distance");
    genpath->add_option("--camera-height", gp_height, "camera height");

    // extract ----------------------------------------------------------------
    auto* extract = app.add_subcommand("extract", "build the spacetime tree and the 4D mesh");
    std::string ex_scene, ex_path, ex_stats;
    double ex_dt = 1.0, ex_d1 = 30.0, ex_d2 = 3.0, ex_contraction = 0.25, ex_root_size = 0;
    std::vector<double> ex_root_origin;
    uint64_t ex_cap = 10000000;
    int ex_depth = 10, ex_bisect = 20;
    bool ex_vis = false;
    std::string ex_seeds = "columns";
    extract->add_option("--scene", ex_scene, "scene config (overrides --config)");
    extract->add_option("--path", ex_path, "camera path CSV")->required();
    extract->add_option("--stats", ex_stats, "write key: value stats to this file");
    extract->add_option("--delta-t", ex_dt, "transition control parameter, seconds");
    extract->add_option("--d1", ex_d1, "coarse diameter threshold, pixels");
    extract->add_option("--d2", ex_d2, "fine diameter threshold, pixels");
    extract->add_option("--cap", ex_cap, "node count cap");
    extract->add_option("--contraction", ex_contraction, "out-of-frustum contraction factor");
    extract->add_option("--max-depth", ex_depth, "spatial depth limit");
    extract->add_option("--root-size", ex_root_size, "root cube size (0 = derive)");
    extract->add_option("--root-origin", ex_root_origin, "root cube origin (3 values)")
        ->expected(3);
    extract->add_option("--bisect", ex_bisect, "bisection iterations for vertex placement");
    extract->add_flag("--visibility", ex_vis, "enable the depth-buffer visibility filter");
    extract->add_option("--seed-strategy", ex_seeds, "columns | exhaustive");
    std::string ex_dump;
    extract->add_option("--dump-tree", ex_dump, "write the tree debug dump to this file");

    // slice ------------------------------------------------------------------
    auto* slice = app.add_subcommand("slice", "slice a 4D mesh into per-frame OBJ files");
    std::string sl_mesh, sl_path;
    bool sl_extrude = false;
    slice->add_option("--mesh", sl_mesh, "4D mesh file from extract")->required();
    slice->add_option("--path", sl_path, "camera path CSV")->required();
    slice->add_flag("--extrude-time-faces", sl_extrude, "anti-popping pyramidal extrusion");

    // baseline ---------------------------------------------------------------
    auto* baseline = app.add_subcommand("baseline", "per-subsequence static meshes");
    std::string bl_scene, bl_path;
    size_t bl_block = 24;
    double bl_d1 = 30.0, bl_d2 = 3.0, bl_contraction = 0.25, bl_root_size = 0;
    std::vector<double> bl_root_origin;
    uint64_t bl_cap = 10000000;
    int bl_depth = 10, bl_bisect = 20;
    std::string bl_seeds = "columns";
    baseline->add_option("--scene", bl_scene, "scene config (overrides --config)");
    baseline->add_option("--path", bl_path, "camera path CSV")->required();
    baseline->add_option("--block-frames", bl_block, "frames per subsequence");
    baseline->add_option("--d1", bl_d1, "coarse diameter threshold, pixels");
    baseline->add_option("--d2", bl_d2, "fine diameter threshold, pixels");
    baseline->add_option("--cap", bl_cap, "node count cap");
    baseline->add_option("--contraction", bl_contraction, "out-of-frustum contraction factor");
    baseline->add_option("--max-depth", bl_depth, "spatial depth limit");
    baseline->add_option("--root-size", bl_root_size, "root cube size (0 = derive)");
    baseline->add_option("--root-origin", bl_root_origin, "root cube origin (3 values)")
        ->expected(3);
    baseline->add_option("--bisect", bl_bisect, "bisection iterations");
    baseline->add_option("--seed-strategy", bl_seeds, "columns | exhaustive");

    // metrics ----------------------------------------------------------------
    auto* metrics = app.add_subcommand("metrics", "consistency series for sliced frames");
    std::string mt_frames, mt_path, mt_svg, mt_label = "frames", mt_dump;
    metrics->add_option("--frames", mt_frames, "directory of frame_*.obj files")->required();
    metrics->add_option("--path", mt_path, "camera path CSV")->required();
    metrics->add_option("--svg", mt_svg, "also write an SVG plot");
    metrics->add_option("--label", mt_label, "series label");
    metrics->add_option("--dump-buffers", mt_dump,
                        "directory for normal / heatmap PNG dumps");

    // compare ----------------------------------------------------------------
    auto* compare = app.add_subcommand("compare", "run variants and compare consistency");
    std::string cp_scene, cp_path;
    std::vector<std::string> cp_methods;
    std::vector<double> cp_dts = {1.0};
    double cp_d1 = 30.0, cp_d2 = 3.0, cp_contraction = 0.25, cp_root_size = 0;
    uint64_t cp_cap = 10000000;
    int cp_depth = 10, cp_bisect = 20;
    std::string cp_seeds = "columns";
    compare->add_option("--scene", cp_scene, "scene config (overrides --config)");
    compare->add_option("--path", cp_path, "camera path CSV")->required();
    compare->add_option("--methods", cp_methods,
                        "ours | ours-extruded | baseline-<N> (comma separated)")
        ->delimiter(',')
        ->required();
    compare->add_option("--delta-t", cp_dts, "delta_t values for `ours` variants")->delimiter(',');
    compare->add_option("--d1", cp_d1, "coarse diameter threshold, pixels");
    compare->add_option("--d2", cp_d2, "fine diameter threshold, pixels");
    compare->add_option("--cap", cp_cap, "node count cap");
    compare->add_option("--contraction", cp_contraction, "contraction factor");
    compare->add_option("--max-depth", cp_depth, "spatial depth limit");
    compare->add_option("--root-size", cp_root_size, "root cube size (0 = derive)");
    std::vector<double> cp_root_origin;
    compare->add_option("--root-origin", cp_root_origin, "root cube origin (3 values)")
        ->expected(3);
    compare->add_option("--bisect", cp_bisect, "bisection iterations");
    compare->add_option("--seed-strategy", cp_seeds, "columns | exhaustive");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*genpath) {
            if (g.out.empty()) throw ConfigError("genpath: --out is required");
            CameraPath path = generate_path(gp_kind, gp_duration, gp_fps, g.seed, gp_width,
                                            gp_height_px, gp_fov, gp_radius, gp_height);
            save_path(path, g.out);
            std::cout << "wrote " << g.out << " (" << path.size() << " frames)\n";
        } else if (*extract) {
            std::string scene = !ex_scene.empty() ? ex_scene : g.config;
            if (scene.empty()) throw ConfigError("extract: need --scene or --config");
            if (g.out.empty()) throw ConfigError("extract: --out is required");
            auto field = make_field(load_scene_config(scene));
            CameraPath path = load_path(ex_path);
            ExtractionConfig cfg = config_from_cli(ex_dt, ex_d1, ex_d2, ex_cap, ex_contraction,
                                                   ex_depth, ex_root_size, ex_root_origin,
                                                   ex_bisect, ex_vis, ex_seeds, g.seed);
            std::ofstream dump;
            if (!ex_dump.empty()) {
                dump.open(ex_dump);
                if (!dump) throw InputError(detail::concat("cannot write ", ex_dump));
            }
            ExtractResult result = run_extract(field, path, cfg, dump.is_open() ? &dump : nullptr);
            save_mesh4d(result.mesh, g.out);
            if (!ex_stats.empty()) {
                std::ofstream st(ex_stats);
                if (!st) throw InputError(detail::concat("cannot write ", ex_stats));
                write_stats(st, result);
            }
            write_stats(std::cout, result);
        } else if (*slice) {
            if (g.out.empty()) throw ConfigError("slice: --out is required");
            Mesh4D mesh = load_mesh4d(sl_mesh);
            if (sl_extrude) mesh = extrude_time_faces(mesh);
            CameraPath path = load_path(sl_path);
            auto frames = slice_frames(mesh, path, g.threads);
            write_frames(frames, path, g.out);
            std::cout << "wrote " << frames.size() << " frames to " << g.out << "\n";
        } else if (*baseline) {
            std::string scene = !bl_scene.empty() ? bl_scene : g.config;
            if (scene.empty()) throw ConfigError("baseline: need --scene or --config");
            if (g.out.empty()) throw ConfigError("baseline: --out is required");
            auto field = make_field(load_scene_config(scene));
            CameraPath path = load_path(bl_path);
            ExtractionConfig cfg = config_from_cli(1.0, bl_d1, bl_d2, bl_cap, bl_contraction,
                                                   bl_depth, bl_root_size, bl_root_origin,
                                                   bl_bisect, false, bl_seeds, g.seed);
            BaselineResult result = extract_baseline(field, path, bl_block, cfg);
            fs::path dir = fs::path(g.out) / detail::concat("baseline_", bl_block);
            write_frames(result.frames, path, dir);
            std::cout << "wrote " << result.frames.size() << " frames in "
                      << result.plan.blocks.size() << " blocks to " << dir.string() << "\n";
        } else if (*metrics) {
            if (g.out.empty()) throw ConfigError("metrics: --out is required");
            CameraPath path = load_path(mt_path);
            auto frames = read_frames(mt_frames, path.size());
            ConsistencyReport rep = consistency_series(frames, path, g.threads, mt_label);
            std::ofstream csv(g.out);
            if (!csv) throw InputError(detail::concat("cannot write ", g.out));
            write_consistency_csv(rep, csv, {{"frames", mt_frames}});
            if (!mt_svg.empty()) {
                std::ofstream svg(mt_svg);
                if (!svg) throw InputError(detail::concat("cannot write ", mt_svg));
                write_series_svg({rep}, svg, SeriesMetric::Ssim);
            }
            if (!mt_dump.empty()) {
                fs::create_directories(mt_dump);
                dump_debug_buffers(frames, path, mt_dump, g.threads);
            }
            std::cout << "wrote " << g.out << "\n";
        } else if (*compare) {
            std::string scene = !cp_scene.empty() ? cp_scene : g.config;
            if (scene.empty()) throw ConfigError("compare: need --scene or --config");
            if (g.out.empty()) throw ConfigError("compare: --out is required");
            auto field = make_field(load_scene_config(scene));
            CameraPath path = load_path(cp_path);

            struct Job {
                std::string label;
                std::string method;
                double delta_t;
                size_t block = 0;
            };
            std::vector<Job> jobs;
            for (const std::string& m : cp_methods) {
                if (m == "ours" || m == "ours-extruded") {
                    for (double dt : cp_dts) {
                        char buf[64];
                        std::snprintf(buf, sizeof(buf), "%s-dt%g", m.c_str(), dt);
                        jobs.push_back({buf, m, dt, 0});
                    }
                } else if (m.rfind("baseline-", 0) == 0) {
                    size_t n = std::strtoul(m.c_str() + 9, nullptr, 10);
                    if (n < 1) throw ConfigError(detail::concat("compare: bad method ", m));
                    jobs.push_back({m, "baseline", 1.0, n});
                } else {
                    throw ConfigError(detail::concat("compare: unknown method ", m));
                }
            }
            if (jobs.size() < 2)
                throw ConfigError("compare: need at least two method/parameter variants");

            fs::create_directories(g.out);
            std::vector<Variant> variants;
            for (const Job& job : jobs) {
                try {
                    ExtractionConfig cfg = config_from_cli(job.delta_t, cp_d1, cp_d2, cp_cap,
                                                           cp_contraction, cp_depth, cp_root_size,
                                                           cp_root_origin, cp_bisect, false,
                                                           cp_seeds, g.seed);
                    Variant v;
                    v.label = job.label;
                    if (job.method == "baseline") {
                        BaselineResult base = extract_baseline(field, path, job.block, cfg);
                        v.frames = std::move(base.frames);
                        for (const auto& m : base.block_meshes) v.total_vertices4d += m.vertices.size();
                    } else {
                        ExtractResult ex = run_extract(field, path, cfg);
                        Mesh4D mesh = std::move(ex.mesh);
                        if (job.method == "ours-extruded") mesh = extrude_time_faces(mesh);
                        v.total_vertices4d = mesh.vertices.size();
                        v.frames = slice_frames(mesh, path, g.threads);
                    }
                    double sum = 0;
                    for (const auto& f : v.frames) sum += double(f.vertices.size());
                    v.mean_frame_vertices = v.frames.empty() ? 0 : sum / double(v.frames.size());
                    v.report = consistency_series(v.frames, path, g.threads, v.label);
                    variants.push_back(std::move(v));
                } catch (const std::exception& e) {
                    log_warn("compare: variant ", job.label, " failed: ", e.what());
                }
            }
            if (variants.empty()) throw InputError("compare: every variant failed");

            std::ofstream csv(fs::path(g.out) / "compare.csv");
            csv << "frame,t";
            for (const auto& v : variants)
                csv << ",ssim_" << v.label << ",severity_" << v.label << ",vertices_" << v.label;
            csv << "\n";
            char buf[128];
            for (size_t i = 0; i < path.size(); ++i) {
                std::snprintf(buf, sizeof(buf), "%zu,%.17g", i, path.samples[i].t);
                csv << buf;
                for (const auto& v : variants) {
                    auto cell = [&](double val) {
                        if (std::isnan(val)) return std::string();
                        std::snprintf(buf, sizeof(buf), "%.12g", val);
                        return std::string(buf);
                    };
                    csv << "," << cell(v.report.frames[i].ssim) << ","
                        << cell(v.report.frames[i].severity) << "," << v.frames[i].vertices.size();
                }
                csv << "\n";
            }

            std::ofstream summary(fs::path(g.out) / "summary.txt");
            for (const auto& v : variants) {
                summary << v.label << ".total_vertices4d: " << v.total_vertices4d << "\n";
                summary << v.label << ".mean_frame_vertices: " << v.mean_frame_vertices << "\n";
                summary << v.label << ".max_severity: " << v.report.max_severity() << "\n";
            }

            std::vector<ConsistencyReport> reports;
            for (const auto& v : variants) reports.push_back(v.report);
            std::ofstream svg(fs::path(g.out) / "compare.svg");
            write_series_svg(reports, svg, SeriesMetric::Ssim);
            std::cout << "compared " << variants.size() << " variants into " << g.out << "\n";
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
