#ifndef BINOC_CONSISTENCY_HPP
#define BINOC_CONSISTENCY_HPP

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "binoc/common.hpp"
#include "binoc/slicer.hpp"
#include "binoc/trajectory.hpp"

namespace binoc {

struct FrameBuffers {
    int width = 0, height = 0;
    std::vector<double> depth;      // view depth along -z; +inf background
    std::vector<Vec3> normal;       // unit face normal where covered
    std::vector<uint8_t> coverage;

    size_t index(int x, int y) const { return size_t(y) * width + x; }
};

// ---------------------------------------------------------------------------
// Software rasterizer: perspective projection, z-buffered triangle fill with
// a consistent fill-rule on shared edges, per-pixel nearest face normal.

namespace raster_detail {

// Boundary pixels belong to exactly one of the two triangles sharing an
// edge: include when the directed edge points down, or right when level.
inline bool edge_owns_boundary(double dx, double dy) { return dy > 0 || (dy == 0 && dx > 0); }

}  // namespace raster_detail

inline FrameBuffers rasterize(const Mesh3& mesh, const CameraSample& cam) {
    FrameBuffers fb;
    fb.width = cam.width;
    fb.height = cam.height;
    size_t total = size_t(cam.width) * cam.height;
    fb.depth.assign(total, std::numeric_limits<double>::infinity());
    fb.normal.assign(total, Vec3{0, 0, 0});
    fb.coverage.assign(total, 0);

    Mat3 world_to_cam = Mat3::from_quat(cam.orientation).transposed();
    double f = cam.focal_px();
    double cx = cam.width / 2.0, cy = cam.height / 2.0;
    const double near = 1e-6;

    auto project = [&](const Vec3& view) {
        double depth = -view.z;
        return Vec3{cx + f * view.x / depth, cy - f * view.y / depth, depth};
    };

    auto fill = [&](const Vec3 s[3], const Vec3& n) {
        Vec3 a = s[0], b = s[1], c = s[2];
        double area = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
        if (area == 0) return;
        if (area < 0) {
            std::swap(b, c);
            area = -area;
        }
        int x0 = std::max(0, int(std::floor(std::min({a.x, b.x, c.x}) - 0.5)));
        int x1 = std::min(cam.width - 1, int(std::ceil(std::max({a.x, b.x, c.x}))));
        int y0 = std::max(0, int(std::floor(std::min({a.y, b.y, c.y}) - 0.5)));
        int y1 = std::min(cam.height - 1, int(std::ceil(std::max({a.y, b.y, c.y}))));
        double iza = 1.0 / a.z, izb = 1.0 / b.z, izc = 1.0 / c.z;
        for (int y = y0; y <= y1; ++y) {
            double py = y + 0.5;
            for (int x = x0; x <= x1; ++x) {
                double px = x + 0.5;
                double e0 = (c.x - b.x) * (py - b.y) - (c.y - b.y) * (px - b.x);
                double e1 = (a.x - c.x) * (py - c.y) - (a.y - c.y) * (px - c.x);
                double e2 = (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x);
                bool in0 = e0 > 0 || (e0 == 0 && raster_detail::edge_owns_boundary(c.x - b.x, c.y - b.y));
                bool in1 = e1 > 0 || (e1 == 0 && raster_detail::edge_owns_boundary(a.x - c.x, a.y - c.y));
                bool in2 = e2 > 0 || (e2 == 0 && raster_detail::edge_owns_boundary(b.x - a.x, b.y - a.y));
                if (!in0 || !in1 || !in2) continue;
                double l0 = e0 / area, l1 = e1 / area, l2 = e2 / area;
                double invz = l0 * iza + l1 * izb + l2 * izc;
                if (invz <= 0) continue;
                double depth = 1.0 / invz;
                size_t idx = fb.index(x, y);
                if (depth < fb.depth[idx]) {
                    fb.depth[idx] = depth;
                    fb.normal[idx] = n;
                    fb.coverage[idx] = 1;
                }
            }
        }
    };

    for (const Polygon& pg : mesh.polygons) {
        for (size_t i = 1; i + 1 < pg.cycle.size(); ++i) {
            Vec3 w0 = mesh.vertices[pg.cycle[0]];
            Vec3 w1 = mesh.vertices[pg.cycle[i]];
            Vec3 w2 = mesh.vertices[pg.cycle[i + 1]];
            Vec3 n = cross(w1 - w0, w2 - w0);
            double len = norm(n);
            if (len <= 0) continue;
            n = n / len;
            Vec3 v[3] = {world_to_cam * (w0 - cam.position), world_to_cam * (w1 - cam.position),
                         world_to_cam * (w2 - cam.position)};
            // clip against the near plane (depth >= near)
            Vec3 poly[4];
            int count = 0;
            for (int k = 0; k < 3; ++k) {
                const Vec3& cur = v[k];
                const Vec3& nxt = v[(k + 1) % 3];
                bool cin = -cur.z >= near, nin = -nxt.z >= near;
                if (cin) poly[count++] = cur;
                if (cin != nin) {
                    // solve cur.z + t*(nxt.z - cur.z) = -near
                    double t = (-near - cur.z) / (nxt.z - cur.z);
                    poly[count++] = cur + t * (nxt - cur);
                }
            }
            if (count < 3) continue;
            for (int k = 1; k + 1 < count; ++k) {
                Vec3 s[3] = {project(poly[0]), project(poly[k]), project(poly[k + 1])};
                fill(s, n);
            }
        }
    }
    return fb;
}

// ---------------------------------------------------------------------------
// Ground-truth optical flow for a static scene: unproject via the depth
// buffer, reproject into the next camera.

struct FlowField {
    int width = 0, height = 0;
    std::vector<double> fx, fy;
    std::vector<uint8_t> valid;
};

inline FlowField ground_truth_flow(const FrameBuffers& buffers, const CameraSample& cam_i,
                                   const CameraSample& cam_j) {
    FlowField flow;
    flow.width = buffers.width;
    flow.height = buffers.height;
    size_t total = size_t(flow.width) * flow.height;
    flow.fx.assign(total, 0);
    flow.fy.assign(total, 0);
    flow.valid.assign(total, 0);

    Mat3 cam_to_world = Mat3::from_quat(cam_i.orientation);
    Mat3 world_to_j = Mat3::from_quat(cam_j.orientation).transposed();
    double fi = cam_i.focal_px(), fj = cam_j.focal_px();
    double cxi = cam_i.width / 2.0, cyi = cam_i.height / 2.0;
    double cxj = cam_j.width / 2.0, cyj = cam_j.height / 2.0;

    for (int y = 0; y < flow.height; ++y)
        for (int x = 0; x < flow.width; ++x) {
            size_t idx = buffers.index(x, y);
            if (!buffers.coverage[idx]) continue;
            double depth = buffers.depth[idx];
            double px = x + 0.5, py = y + 0.5;
            Vec3 view{(px - cxi) / fi * depth, -(py - cyi) / fi * depth, -depth};
            Vec3 world = cam_i.position + cam_to_world * view;
            Vec3 vj = world_to_j * (world - cam_j.position);
            double dj = -vj.z;
            if (dj <= 0) continue;
            double qx = cxj + fj * vj.x / dj;
            double qy = cyj - fj * vj.y / dj;
            flow.fx[idx] = qx - px;
            flow.fy[idx] = qy - py;
            flow.valid[idx] = 1;
        }
    return flow;
}

// Backward warping with bilinear sampling: out(p) = src(p + F(p)). Pixels
// whose source taps are out of bounds or uncovered are marked invalid.
struct WarpedNormals {
    int width = 0, height = 0;
    std::vector<Vec3> normal;
    std::vector<uint8_t> valid;
};

inline WarpedNormals warp_normals(const FrameBuffers& src, const FlowField& flow) {
    BINOC_CHECK(src.width == flow.width && src.height == flow.height, "warp: size mismatch");
    WarpedNormals out;
    out.width = flow.width;
    out.height = flow.height;
    size_t total = size_t(out.width) * out.height;
    out.normal.assign(total, Vec3{0, 0, 0});
    out.valid.assign(total, 0);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) {
            size_t idx = size_t(y) * flow.width + x;
            if (!flow.valid[idx]) continue;
            double sx = x + 0.5 + flow.fx[idx];
            double sy = y + 0.5 + flow.fy[idx];
            double gx = sx - 0.5, gy = sy - 0.5;
            int x0 = int(std::floor(gx)), y0 = int(std::floor(gy));
            double ax = gx - x0, ay = gy - y0;
            if (x0 < 0 || y0 < 0 || x0 + 1 >= src.width || y0 + 1 >= src.height) continue;
            size_t i00 = src.index(x0, y0), i10 = src.index(x0 + 1, y0);
            size_t i01 = src.index(x0, y0 + 1), i11 = src.index(x0 + 1, y0 + 1);
            if (!src.coverage[i00] || !src.coverage[i10] || !src.coverage[i01] ||
                !src.coverage[i11])
                continue;
            Vec3 n = src.normal[i00] * ((1 - ax) * (1 - ay)) + src.normal[i10] * (ax * (1 - ay)) +
                     src.normal[i01] * ((1 - ax) * ay) + src.normal[i11] * (ax * ay);
            double len = norm(n);
            if (len <= 0) continue;
            out.normal[idx] = n / len;
            out.valid[idx] = 1;
        }
    return out;
}

// ---------------------------------------------------------------------------
// SSIM over normal buffers encoded as 3-channel values in [0,1] via
// (n+1)/2: 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
// dynamic range 1. Window weights renormalize over the masked pixels.

namespace ssim_detail {

inline const std::array<double, 121>& gaussian11() {
    static const std::array<double, 121> g = [] {
        std::array<double, 121> w{};
        double sum = 0;
        for (int y = -5; y <= 5; ++y)
            for (int x = -5; x <= 5; ++x) {
                double v = std::exp(-(x * x + y * y) / (2.0 * 1.5 * 1.5));
                w[(y + 5) * 11 + (x + 5)] = v;
                sum += v;
            }
        for (auto& v : w) v /= sum;
        return w;
    }();
    return g;
}

inline double encode(double component) { return (component + 1.0) / 2.0; }

}  // namespace ssim_detail

// SSIM between two per-pixel vector images over a mask. Throws on an empty
// mask. Returns the mean SSIM over masked pixels and channels.
inline double ssim_score(const std::vector<Vec3>& img_a, const std::vector<Vec3>& img_b,
                         const std::vector<uint8_t>& mask, int width, int height) {
    BINOC_CHECK(img_a.size() == img_b.size() && img_a.size() == mask.size() &&
                    img_a.size() == size_t(width) * height,
                "ssim: image size mismatch");
    bool any = false;
    for (uint8_t m : mask) any |= m != 0;
    if (!any) throw InputError("ssim: empty mask");

    const auto& g = ssim_detail::gaussian11();
    constexpr double kC1 = 0.01 * 0.01, kC2 = 0.03 * 0.03;

    double total = 0;
    size_t count = 0;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            size_t idx = size_t(y) * width + x;
            if (!mask[idx]) continue;
            double wsum = 0;
            double ma[3] = {0, 0, 0}, mb[3] = {0, 0, 0};
            double aa[3] = {0, 0, 0}, bb[3] = {0, 0, 0}, ab[3] = {0, 0, 0};
            for (int dy = -5; dy <= 5; ++dy) {
                int yy = y + dy;
                if (yy < 0 || yy >= height) continue;
                for (int dx = -5; dx <= 5; ++dx) {
                    int xx = x + dx;
                    if (xx < 0 || xx >= width) continue;
                    size_t j = size_t(yy) * width + xx;
                    if (!mask[j]) continue;
                    double w = g[(dy + 5) * 11 + (dx + 5)];
                    wsum += w;
                    for (int ch = 0; ch < 3; ++ch) {
                        double va = ssim_detail::encode(img_a[j][ch]);
                        double vb = ssim_detail::encode(img_b[j][ch]);
                        ma[ch] += w * va;
                        mb[ch] += w * vb;
                        aa[ch] += w * va * va;
                        bb[ch] += w * vb * vb;
                        ab[ch] += w * va * vb;
                    }
                }
            }
            if (wsum <= 0) continue;
            double s = 0;
            for (int ch = 0; ch < 3; ++ch) {
                double mua = ma[ch] / wsum, mub = mb[ch] / wsum;
                double va = aa[ch] / wsum - mua * mua;
                double vb = bb[ch] / wsum - mub * mub;
                double cov = ab[ch] / wsum - mua * mub;
                s += ((2 * mua * mub + kC1) * (2 * cov + kC2)) /
                     ((mua * mua + mub * mub + kC1) * (va + vb + kC2));
            }
            total += s / 3.0;
            ++count;
        }
    BINOC_CHECK(count > 0, "ssim: no scored pixels");
    return total / double(count);
}

// Mean angular difference (degrees) between unit normals over the overlap.
inline double normal_difference(const std::vector<Vec3>& normals_a,
                                const std::vector<Vec3>& normals_b,
                                const std::vector<uint8_t>& mask) {
    double sum = 0;
    size_t count = 0;
    for (size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        double d = std::clamp(dot(normals_a[i], normals_b[i]), -1.0, 1.0);
        sum += rad_to_deg(std::acos(d));
        ++count;
    }
    if (count == 0) throw InputError("normal_difference: empty overlap");
    return sum / double(count);
}

// ---------------------------------------------------------------------------
// Per-frame consistency series.

struct FrameScore {
    double t = 0;
    double ssim = std::numeric_limits<double>::quiet_NaN();
    double normal_diff_deg = std::numeric_limits<double>::quiet_NaN();
    double severity = std::numeric_limits<double>::quiet_NaN();
    bool scored = false;
};

struct ConsistencyReport {
    std::string label;
    std::vector<FrameScore> frames;

    double max_severity() const {
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& f : frames)
            if (!std::isnan(f.severity)) best = std::max(best, f.severity);
        return best;
    }

    double median_severity() const {
        std::vector<double> v;
        for (const auto& f : frames)
            if (!std::isnan(f.severity)) v.push_back(f.severity);
        if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
        std::sort(v.begin(), v.end());
        return v[v.size() / 2];
    }
};

// S_i compares frame i with frame i+1 warped back through the exact flow.
// Scoring failures (empty masks) leave gaps rather than aborting.
inline ConsistencyReport consistency_series(const std::vector<Mesh3>& frames,
                                            const CameraPath& path, unsigned threads = 1,
                                            const std::string& label = "") {
    BINOC_CHECK(frames.size() == path.size(), "one mesh per frame required");
    size_t n = frames.size();
    ConsistencyReport report;
    report.label = label;
    report.frames.resize(n);
    for (size_t i = 0; i < n; ++i) report.frames[i].t = path.samples[i].t;
    if (n < 2) return report;

    std::vector<FrameBuffers> buffers(n);
    parallel_for(n, threads, [&](size_t lo, size_t hi) {
        for (size_t i = lo; i < hi; ++i) buffers[i] = rasterize(frames[i], path.samples[i]);
    });

    parallel_for(n - 1, threads, [&](size_t lo, size_t hi) {
        for (size_t i = lo; i < hi; ++i) {
            const FrameBuffers& bi = buffers[i];
            const FrameBuffers& bj = buffers[i + 1];
            FlowField flow = ground_truth_flow(bi, path.samples[i], path.samples[i + 1]);
            WarpedNormals warped = warp_normals(bj, flow);
            std::vector<uint8_t> mask(bi.coverage.size(), 0);
            for (size_t k = 0; k < mask.size(); ++k)
                mask[k] = bi.coverage[k] && warped.valid[k];
            try {
                report.frames[i].ssim = ssim_score(bi.normal, warped.normal, mask, bi.width, bi.height);
                report.frames[i].normal_diff_deg = normal_difference(bi.normal, warped.normal, mask);
                report.frames[i].scored = true;
            } catch (const InputError&) {
                // gap: nothing visible in both frames
            }
        }
    });

    for (size_t i = 1; i + 2 < n; ++i) {
        const FrameScore& prev = report.frames[i - 1];
        const FrameScore& cur = report.frames[i];
        const FrameScore& next = report.frames[i + 1];
        if (prev.scored && cur.scored && next.scored)
            report.frames[i].severity = prev.ssim + next.ssim - 2 * cur.ssim;
    }
    return report;
}

// ---------------------------------------------------------------------------
// CSV and SVG emission.

inline void write_consistency_csv(const ConsistencyReport& report, std::ostream& os,
                                  const std::vector<std::pair<std::string, std::string>>& meta = {}) {
    os << "# method: " << report.label << "\n";
    os << "# ssim_window: 11\n# ssim_sigma: 1.5\n# ssim_k1: 0.01\n# ssim_k2: 0.03\n";
    for (const auto& [k, v] : meta) os << "# " << k << ": " << v << "\n";
    os << "frame,t,ssim,normal_diff_deg,valley_severity\n";
    char buf[256];
    for (size_t i = 0; i < report.frames.size(); ++i) {
        const FrameScore& f = report.frames[i];
        os << i << ",";
        std::snprintf(buf, sizeof(buf), "%.17g", f.t);
        os << buf << ",";
        auto field = [&](double v) {
            if (std::isnan(v)) return std::string();
            std::snprintf(buf, sizeof(buf), "%.12g", v);
            return std::string(buf);
        };
        os << field(f.ssim) << "," << field(f.normal_diff_deg) << "," << field(f.severity) << "\n";
    }
}

enum class SeriesMetric { Ssim, NormalDiff, Severity };

inline void write_series_svg(const std::vector<ConsistencyReport>& reports, std::ostream& os,
                             SeriesMetric metric = SeriesMetric::Ssim) {
    const int w = 960, h = 400, ml = 60, mr = 20, mt = 30, mb = 40;
    auto value = [&](const FrameScore& f) {
        switch (metric) {
            case SeriesMetric::Ssim: return f.ssim;
            case SeriesMetric::NormalDiff: return f.normal_diff_deg;
            default: return f.severity;
        }
    };
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    double tmin = lo, tmax = -lo;
    for (const auto& r : reports)
        for (const auto& f : r.frames) {
            double v = value(f);
            if (!std::isnan(v)) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
                tmin = std::min(tmin, f.t);
                tmax = std::max(tmax, f.t);
            }
        }
    if (!(hi > lo)) {
        hi = lo + 1;
    }
    if (!(tmax > tmin)) {
        tmin = 0;
        tmax = 1;
    }
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                   "#ff7f0e", "#8c564b", "#17becf"};
    const char* names[] = {"SSIM", "normal difference (deg)", "valley severity"};
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
       << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    auto sx = [&](double t) { return ml + (t - tmin) / (tmax - tmin) * (w - ml - mr); };
    auto sy = [&](double v) { return h - mb - (v - lo) / (hi - lo) * (h - mt - mb); };
    // axes
    os << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\""
       << h - mb << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb
       << "\" stroke=\"black\"/>\n";
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%d\" y=\"%d\" font-size=\"12\">t = %.3g</text>\n", ml, h - mb + 16,
                  tmin);
    os << buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%d\" y=\"%d\" font-size=\"12\" text-anchor=\"end\">%.3g</text>\n",
                  w - mr, h - mb + 16, tmax);
    os << buf;
    std::snprintf(buf, sizeof(buf), "<text x=\"%d\" y=\"%d\" font-size=\"12\">%.4g</text>\n", 4,
                  h - mb, lo);
    os << buf;
    std::snprintf(buf, sizeof(buf), "<text x=\"%d\" y=\"%d\" font-size=\"12\">%.4g</text>\n", 4,
                  mt + 10, hi);
    os << buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%d\" y=\"%d\" font-size=\"14\">%s per frame</text>\n", ml, mt - 10,
                  names[int(metric)]);
    os << buf;
    for (size_t r = 0; r < reports.size(); ++r) {
        const char* color = colors[r % 7];
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (const auto& f : reports[r].frames) {
            double v = value(f);
            if (std::isnan(v)) continue;
            std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", sx(f.t), sy(v));
            os << buf;
        }
        os << "\"/>\n";
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%d\" y=\"%d\" font-size=\"12\" fill=\"%s\">%s</text>\n",
                      w - mr - 180, int(mt + 16 * (r + 1)), color,
                      reports[r].label.empty() ? "series" : reports[r].label.c_str());
        os << buf;
    }
    os << "</svg>\n";
}

// Optional lossless dumps of the evaluation buffers: per-frame encoded
// normal images and per-pair normal-difference heatmaps (brighter is worse).
inline void dump_debug_buffers(const std::vector<Mesh3>& frames, const CameraPath& path,
                               const std::string& dir, unsigned threads = 1);

// Spearman rank correlation between two series (used by the evaluation
// cross-checks); pairs with NaN in either series are dropped.
inline double spearman_correlation(const std::vector<double>& a, const std::vector<double>& b) {
    BINOC_CHECK(a.size() == b.size(), "spearman: size mismatch");
    std::vector<std::pair<double, double>> pairs;
    for (size_t i = 0; i < a.size(); ++i)
        if (!std::isnan(a[i]) && !std::isnan(b[i])) pairs.emplace_back(a[i], b[i]);
    size_t n = pairs.size();
    if (n < 3) return std::numeric_limits<double>::quiet_NaN();
    auto ranks = [&](auto getter) {
        std::vector<size_t> order(n);
        for (size_t i = 0; i < n; ++i) order[i] = i;
        std::sort(order.begin(), order.end(),
                  [&](size_t x, size_t y) { return getter(pairs[x]) < getter(pairs[y]); });
        std::vector<double> rank(n);
        size_t i = 0;
        while (i < n) {
            size_t j = i;
            while (j + 1 < n && getter(pairs[order[j + 1]]) == getter(pairs[order[i]])) ++j;
            double r = (double(i) + double(j)) / 2.0 + 1.0;
            for (size_t k = i; k <= j; ++k) rank[order[k]] = r;
            i = j + 1;
        }
        return rank;
    };
    auto ra = ranks([](const auto& p) { return p.first; });
    auto rb = ranks([](const auto& p) { return p.second; });
    double ma = 0, mb = 0;
    for (size_t i = 0; i < n; ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= double(n);
    mb /= double(n);
    double cov = 0, va = 0, vb = 0;
    for (size_t i = 0; i < n; ++i) {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (va <= 0 || vb <= 0) return std::numeric_limits<double>::quiet_NaN();
    return cov / std::sqrt(va * vb);
}

}  // namespace binoc

#include "binoc/png.hpp"

namespace binoc {

inline void dump_debug_buffers(const std::vector<Mesh3>& frames, const CameraPath& path,
                               const std::string& dir, unsigned threads) {
    BINOC_CHECK(frames.size() == path.size(), "one mesh per frame required");
    size_t n = frames.size();
    std::vector<FrameBuffers> buffers(n);
    parallel_for(n, threads, [&](size_t lo, size_t hi) {
        for (size_t i = lo; i < hi; ++i) buffers[i] = rasterize(frames[i], path.samples[i]);
    });
    char name[64];
    for (size_t i = 0; i < n; ++i) {
        const FrameBuffers& fb = buffers[i];
        std::vector<uint8_t> rgb(size_t(fb.width) * fb.height * 3, 0);
        for (size_t k = 0; k < fb.coverage.size(); ++k) {
            if (!fb.coverage[k]) continue;
            for (int ch = 0; ch < 3; ++ch)
                rgb[k * 3 + ch] = uint8_t(std::clamp((fb.normal[k][ch] + 1) / 2, 0.0, 1.0) * 255);
        }
        std::snprintf(name, sizeof(name), "/normal_%06zu.png", i);
        write_png_rgb(dir + name, fb.width, fb.height, rgb);
        if (i + 1 >= n) continue;
        FlowField flow = ground_truth_flow(fb, path.samples[i], path.samples[i + 1]);
        WarpedNormals warped = warp_normals(buffers[i + 1], flow);
        std::vector<uint8_t> heat(size_t(fb.width) * fb.height * 3, 0);
        for (size_t k = 0; k < fb.coverage.size(); ++k) {
            if (!fb.coverage[k] || !warped.valid[k]) continue;
            double d = std::clamp(dot(fb.normal[k], warped.normal[k]), -1.0, 1.0);
            double deg = rad_to_deg(std::acos(d));
            uint8_t v = uint8_t(std::clamp(deg / 90.0, 0.0, 1.0) * 255);
            heat[k * 3 + 0] = v;
            heat[k * 3 + 1] = v;
            heat[k * 3 + 2] = v;
        }
        std::snprintf(name, sizeof(name), "/ndiff_%06zu.png", i);
        write_png_rgb(dir + name, fb.width, fb.height, heat);
    }
}

}  // namespace binoc

#endif
