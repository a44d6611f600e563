#ifndef BINOC_TRAJECTORY_HPP
#define BINOC_TRAJECTORY_HPP

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "binoc/common.hpp"
#include "binoc/vec.hpp"

namespace binoc {

// Camera convention: right-handed, camera space looks down -Z with +X right
// and +Y up; `orientation` maps camera space to world space.
struct CameraSample {
    double t = 0;
    Vec3 position;
    Quat orientation;
    double fov_y_deg = 60.0;
    int width = 960;
    int height = 540;

    void validate(int index = -1) const {
        auto fail = [&](const char* what) {
            throw InputError(detail::concat("camera sample ", index, ": ", what));
        };
        if (std::abs(orientation.norm() - 1.0) > 1e-9) fail("quaternion not unit length");
        if (!(fov_y_deg > 0 && fov_y_deg < 180)) fail("fov_y out of (0, 180)");
        if (width < 1 || height < 1) fail("non-positive image size");
        if (!std::isfinite(t)) fail("non-finite timestamp");
    }

    double fov_y_rad() const { return deg_to_rad(fov_y_deg); }
    // Focal length in pixels for the vertical axis.
    double focal_px() const { return (height / 2.0) / std::tan(fov_y_rad() / 2.0); }
    double aspect() const { return static_cast<double>(width) / height; }

    Vec3 forward() const { return orientation.rotate({0, 0, -1}); }
    Vec3 right() const { return orientation.rotate({1, 0, 0}); }
    Vec3 up() const { return orientation.rotate({0, 1, 0}); }
};

struct CameraPath {
    std::vector<CameraSample> samples;

    void validate() const {
        if (samples.empty()) throw InputError("camera path is empty");
        for (size_t i = 0; i < samples.size(); ++i) samples[i].validate(static_cast<int>(i));
        for (size_t i = 1; i < samples.size(); ++i)
            if (!(samples[i - 1].t < samples[i].t))
                throw InputError(detail::concat("camera path: timestamps not strictly increasing at row ",
                                                i + 1));
    }

    double t_begin() const { return samples.front().t; }
    double t_end() const { return samples.back().t; }
    size_t size() const { return samples.size(); }
};

// ---------------------------------------------------------------------------
// CSV format: header `t,px,py,pz,qw,qx,qy,qz,fov_y_deg,width,height`.

inline CameraPath load_path(std::istream& in, const std::string& name) {
    CameraPath path;
    std::string line;
    if (!std::getline(in, line)) throw InputError(detail::concat(name, ": empty file"));
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        for (auto& c : line)
            if (c == ',') c = ' ';
        std::istringstream ls(line);
        CameraSample s;
        if (!(ls >> s.t >> s.position.x >> s.position.y >> s.position.z >> s.orientation.w >>
              s.orientation.x >> s.orientation.y >> s.orientation.z >> s.fov_y_deg >> s.width >>
              s.height))
            throw InputError(detail::concat(name, ":", lineno, ": malformed camera row"));
        path.samples.push_back(s);
    }
    path.validate();
    return path;
}

inline CameraPath load_path(const std::string& file) {
    std::ifstream in(file);
    if (!in) throw InputError(detail::concat("cannot open camera path ", file));
    return load_path(in, file);
}

inline void save_path(const CameraPath& path, std::ostream& out) {
    out << "t,px,py,pz,qw,qx,qy,qz,fov_y_deg,width,height\n";
    char buf[512];
    for (const auto& s : path.samples) {
        std::snprintf(buf, sizeof(buf),
                      "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%d\n", s.t,
                      s.position.x, s.position.y, s.position.z, s.orientation.w, s.orientation.x,
                      s.orientation.y, s.orientation.z, s.fov_y_deg, s.width, s.height);
        out << buf;
    }
}

inline void save_path(const CameraPath& path, const std::string& file) {
    std::ofstream out(file);
    if (!out) throw InputError(detail::concat("cannot write camera path ", file));
    save_path(path, out);
}

// ---------------------------------------------------------------------------
// Projected node diameter: node size over distance to the cube center.
// The value is a ratio (~ angular size in radians); a pixel threshold D
// converts to this unit as D * fov_y_rad / height per camera.

struct NodeGeometry {
    Vec3 center;
    double size = 1.0;  // cube side length

    double bounding_radius() const { return size * std::sqrt(3.0) / 2.0; }
};

inline double pixel_threshold_to_ratio(double pixels, const CameraSample& cam) {
    return pixels * cam.fov_y_rad() / cam.height;
}

inline double projected_diameter(const NodeGeometry& node, const CameraSample& cam) {
    double dist = norm(cam.position - node.center);
    if (dist == 0.0) return std::numeric_limits<double>::infinity();
    return node.size / dist;
}

// Conservative sphere-vs-frustum test. The far plane is at infinity, so the
// frustum is bounded by the near plane (at the camera) and four side planes.
inline bool frustum_intersects_sphere(const CameraSample& cam, const Vec3& center, double radius) {
    Vec3 d = center - cam.position;
    Vec3 f = cam.forward(), r = cam.right(), u = cam.up();

    double tan_half_v = std::tan(cam.fov_y_rad() / 2.0);
    double tan_half_h = tan_half_v * cam.aspect();

    // Near plane: in front of the camera.
    if (dot(d, f) < -radius) return false;

    // Side planes with inward normals.
    auto outside = [&](const Vec3& n) { return dot(d, n) < -radius; };
    double inv_v = 1.0 / std::sqrt(1.0 + tan_half_v * tan_half_v);
    double inv_h = 1.0 / std::sqrt(1.0 + tan_half_h * tan_half_h);
    if (outside((f * tan_half_v - u) * inv_v)) return false;  // top
    if (outside((f * tan_half_v + u) * inv_v)) return false;  // bottom
    if (outside((f * tan_half_h - r) * inv_h)) return false;  // right
    if (outside((f * tan_half_h + r) * inv_h)) return false;  // left
    return true;
}

// Out-of-frustum contraction of the per-camera diameter.
inline double contracted_diameter(const NodeGeometry& node, const CameraSample& cam,
                                  double contraction) {
    double d = projected_diameter(node, cam);
    if (frustum_intersects_sphere(cam, node.center, node.bounding_radius())) return d;
    return d * contraction;
}

// Maximum contracted diameter over samples with window_t0 <= t <= window_t1.
// No sample in the window means the node is invisible to its cameras: 0.
inline double max_diameter(const NodeGeometry& node, const CameraPath& path, double window_t0,
                           double window_t1, double contraction = 1.0) {
    double best = 0.0;
    for (const auto& cam : path.samples) {
        if (cam.t < window_t0 || cam.t > window_t1) continue;
        best = std::max(best, contracted_diameter(node, cam, contraction));
    }
    return best;
}

}  // namespace binoc

#endif
