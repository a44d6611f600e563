#ifndef BINOC_FIELD_HPP
#define BINOC_FIELD_HPP

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "binoc/common.hpp"
#include "binoc/vec.hpp"

namespace binoc {

// ---------------------------------------------------------------------------
// Seedable gradient noise (Perlin, improved-noise variant).
//
// The permutation table is derived from the seed with a Fisher-Yates shuffle
// driven by the SplitMix64 generator, so any implementation of this scheme
// reproduces the same field bit-for-bit:
//   state = seed; next() = mix(state += 0x9E3779B97F4A7C15)
//   mix(z): z ^= z >> 30; z *= 0xBF58476D1CE4E5B9; z ^= z >> 27;
//           z *= 0x94D049BB133111EB; z ^= z >> 31; return z
//   perm = [0..255]; for i in 255..1: swap(perm[i], perm[next() % (i+1)])
// Gradients are the 12 edge directions of a cube, selected by hash & 15 with
// the standard duplicated last four entries.

struct SplitMix64 {
    uint64_t state;
    explicit SplitMix64(uint64_t seed) : state(seed) {}
    uint64_t next() {
        uint64_t z = (state += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }
};

class PerlinNoise {
public:
    explicit PerlinNoise(uint64_t seed) {
        for (int i = 0; i < 256; ++i) perm_[i] = static_cast<uint8_t>(i);
        SplitMix64 rng(seed);
        for (int i = 255; i > 0; --i) {
            uint64_t j = rng.next() % static_cast<uint64_t>(i + 1);
            std::swap(perm_[i], perm_[j]);
        }
        for (int i = 0; i < 256; ++i) perm_[256 + i] = perm_[i];
    }

    // Signed noise in roughly [-1, 1].
    double sample(double x, double y, double z) const {
        int xi = fast_floor(x), yi = fast_floor(y), zi = fast_floor(z);
        double xf = x - xi, yf = y - yi, zf = z - zi;
        int X = xi & 255, Y = yi & 255, Z = zi & 255;

        double u = fade(xf), v = fade(yf), w = fade(zf);

        int a = perm_[X] + Y, aa = perm_[a] + Z, ab = perm_[a + 1] + Z;
        int b = perm_[X + 1] + Y, ba = perm_[b] + Z, bb = perm_[b + 1] + Z;

        double x1 = lerp(grad(perm_[aa], xf, yf, zf), grad(perm_[ba], xf - 1, yf, zf), u);
        double x2 = lerp(grad(perm_[ab], xf, yf - 1, zf), grad(perm_[bb], xf - 1, yf - 1, zf), u);
        double y1 = lerp(x1, x2, v);
        x1 = lerp(grad(perm_[aa + 1], xf, yf, zf - 1), grad(perm_[ba + 1], xf - 1, yf, zf - 1), u);
        x2 = lerp(grad(perm_[ab + 1], xf, yf - 1, zf - 1), grad(perm_[bb + 1], xf - 1, yf - 1, zf - 1), u);
        double y2 = lerp(x1, x2, v);
        return lerp(y1, y2, w);
    }

    // Multi-octave fractal sum; amplitude of octave k is gain^k.
    double fbm(double x, double y, double z, int octaves, double lacunarity, double gain) const {
        double sum = 0, amp = 1, freq = 1;
        for (int i = 0; i < octaves; ++i) {
            sum += amp * sample(x * freq, y * freq, z * freq);
            amp *= gain;
            freq *= lacunarity;
        }
        return sum;
    }

private:
    static int fast_floor(double v) {
        int i = static_cast<int>(v);
        return v < i ? i - 1 : i;
    }
    static double fade(double t) { return t * t * t * (t * (t * 6 - 15) + 10); }
    static double lerp(double a, double b, double t) { return a + t * (b - a); }
    static double grad(int hash, double x, double y, double z) {
        switch (hash & 15) {
            case 0: return x + y;
            case 1: return -x + y;
            case 2: return x - y;
            case 3: return -x - y;
            case 4: return x + z;
            case 5: return -x + z;
            case 6: return x - z;
            case 7: return -x - z;
            case 8: return y + z;
            case 9: return -y + z;
            case 10: return y - z;
            case 11: return -y - z;
            case 12: return y + x;
            case 13: return -y + z;
            case 14: return y - x;
            case 15: return -y - z;
        }
        return 0;
    }

    std::array<uint8_t, 512> perm_{};
};

// ---------------------------------------------------------------------------
// Occupancy field specs.

enum class FieldKind { Sphere, Blobs, Terrain };

struct Ellipsoid {
    Vec3 center;
    Vec3 radii{1, 1, 1};
};

struct OccupancyFieldSpec {
    FieldKind kind = FieldKind::Sphere;
    uint64_t seed = 0;

    // sphere
    Vec3 center{0, 0, 0};
    double radius = 1.0;

    // blobs
    std::vector<Ellipsoid> ellipsoids;

    // shared noise parameters (blobs perturbation, terrain fbm)
    int octaves = 4;
    double lacunarity = 2.0;
    double gain = 0.5;
    double amplitude = 0.0;
    double noise_scale = 1.0;

    // terrain
    double base_height = 0.0;

    void validate() const {
        if (kind == FieldKind::Sphere && !(radius > 0))
            throw ConfigError("field: sphere radius must be > 0");
        if (kind == FieldKind::Blobs) {
            if (ellipsoids.empty()) throw ConfigError("field: blobs need at least one ellipsoid");
            for (const auto& e : ellipsoids)
                if (!(e.radii.x > 0 && e.radii.y > 0 && e.radii.z > 0))
                    throw ConfigError("field: blob radii must be > 0");
        }
        if (octaves < 1) throw ConfigError("field: octaves must be >= 1");
        if (amplitude < 0) throw ConfigError("field: amplitude must be >= 0");
        if (!(noise_scale > 0)) throw ConfigError("field: noise_scale must be > 0");
    }
};

// ---------------------------------------------------------------------------
// Field evaluator. Pure: the occupancy bit depends only on (spec, point).
// Inside means the defining scalar is strictly negative; ties land outside.

class Field {
public:
    explicit Field(const OccupancyFieldSpec& spec) : spec_(spec), noise_(spec.seed) {
        spec_.validate();
    }

    const OccupancyFieldSpec& spec() const { return spec_; }

    uint8_t eval(const Vec3& p) const { return scalar(p) < 0.0 ? 1 : 0; }

    double scalar(const Vec3& p) const {
        switch (spec_.kind) {
            case FieldKind::Sphere: {
                Vec3 d = p - spec_.center;
                return norm2(d) - spec_.radius * spec_.radius;
            }
            case FieldKind::Blobs: {
                double best = std::numeric_limits<double>::infinity();
                for (const auto& e : spec_.ellipsoids) {
                    Vec3 d = p - e.center;
                    double q = (d.x / e.radii.x) * (d.x / e.radii.x) +
                               (d.y / e.radii.y) * (d.y / e.radii.y) +
                               (d.z / e.radii.z) * (d.z / e.radii.z) - 1.0;
                    best = std::min(best, q);
                }
                if (spec_.amplitude > 0) {
                    double s = spec_.noise_scale;
                    best -= spec_.amplitude *
                            noise_.fbm(p.x * s, p.y * s, p.z * s, spec_.octaves,
                                       spec_.lacunarity, spec_.gain);
                }
                return best;
            }
            case FieldKind::Terrain: {
                double s = spec_.noise_scale;
                double h = spec_.base_height;
                if (spec_.amplitude > 0)
                    h += spec_.amplitude * noise_.fbm(p.x * s, p.y * s, 0.0, spec_.octaves,
                                                      spec_.lacunarity, spec_.gain);
                return p.z - h;
            }
        }
        return 1.0;
    }

private:
    OccupancyFieldSpec spec_;
    PerlinNoise noise_;
};

using FieldHandle = std::shared_ptr<const Field>;

inline FieldHandle make_field(const OccupancyFieldSpec& spec) {
    return std::make_shared<const Field>(spec);
}

inline void eval_batch(const Field& field, std::span<const Vec3> points, std::span<uint8_t> out) {
    BINOC_CHECK(points.size() == out.size(), "eval_batch size mismatch");
    for (size_t i = 0; i < points.size(); ++i) {
        const Vec3& p = points[i];
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
            throw InputError(detail::concat("eval_batch: non-finite coordinate at index ", i));
        out[i] = field.eval(p);
    }
}

inline std::vector<uint8_t> eval_batch(const Field& field, std::span<const Vec3> points) {
    std::vector<uint8_t> out(points.size());
    eval_batch(field, points, out);
    return out;
}

// ---------------------------------------------------------------------------
// Exact corner identification. Lattice coordinates are in units of the
// finest cell at max_depth; conversion to world coordinates is the single
// expression below and is used everywhere a corner becomes a point.

struct LatticeCoord {
    int64_t ix = 0, iy = 0, iz = 0;

    bool operator==(const LatticeCoord& o) const {
        return ix == o.ix && iy == o.iy && iz == o.iz;
    }
    bool operator<(const LatticeCoord& o) const {
        if (ix != o.ix) return ix < o.ix;
        if (iy != o.iy) return iy < o.iy;
        return iz < o.iz;
    }
};

struct LatticeCoordHash {
    size_t operator()(const LatticeCoord& c) const {
        uint64_t h = 0xcbf29ce484222325ull;
        auto mix = [&h](uint64_t v) {
            h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
        };
        mix(static_cast<uint64_t>(c.ix));
        mix(static_cast<uint64_t>(c.iy));
        mix(static_cast<uint64_t>(c.iz));
        return static_cast<size_t>(h);
    }
};

// Maps lattice corners to world points for a given root placement.
struct LatticeFrame {
    Vec3 origin;
    double cell_size = 1.0;  // root_size / 2^max_depth
    int max_depth = 0;

    Vec3 to_world(const LatticeCoord& c) const {
        return {origin.x + static_cast<double>(c.ix) * cell_size,
                origin.y + static_cast<double>(c.iy) * cell_size,
                origin.z + static_cast<double>(c.iz) * cell_size};
    }
};

// Corner cache: each distinct lattice corner is evaluated at most once.
// Safe for concurrent get-or-eval; misses are batch-evaluated per call.
class CornerCache {
public:
    CornerCache(FieldHandle field, const LatticeFrame& frame)
        : field_(std::move(field)), frame_(frame) {}

    const LatticeFrame& frame() const { return frame_; }
    const Field& field() const { return *field_; }

    void get_or_eval(std::span<const LatticeCoord> coords, std::span<uint8_t> out) {
        BINOC_CHECK(coords.size() == out.size(), "corner cache size mismatch");
        std::vector<size_t> missing;
        {
            std::lock_guard<std::mutex> lock(mu_);
            for (size_t i = 0; i < coords.size(); ++i) {
                auto it = bits_.find(coords[i]);
                if (it != bits_.end())
                    out[i] = it->second;
                else
                    missing.push_back(i);
            }
        }
        if (missing.empty()) return;
        std::vector<Vec3> pts;
        pts.reserve(missing.size());
        for (size_t i : missing) pts.push_back(frame_.to_world(coords[i]));
        std::vector<uint8_t> bits = eval_batch(*field_, pts);
        {
            std::lock_guard<std::mutex> lock(mu_);
            for (size_t k = 0; k < missing.size(); ++k) {
                auto [it, inserted] = bits_.emplace(coords[missing[k]], bits[k]);
                out[missing[k]] = it->second;
                if (inserted) ++evaluations_;
            }
        }
    }

    uint8_t get_or_eval(const LatticeCoord& c) {
        uint8_t bit;
        get_or_eval(std::span<const LatticeCoord>(&c, 1), std::span<uint8_t>(&bit, 1));
        return bit;
    }

    uint64_t evaluations() const {
        std::lock_guard<std::mutex> lock(mu_);
        return evaluations_;
    }
    size_t size() const {
        std::lock_guard<std::mutex> lock(mu_);
        return bits_.size();
    }

private:
    FieldHandle field_;
    LatticeFrame frame_;
    mutable std::mutex mu_;
    std::unordered_map<LatticeCoord, uint8_t, LatticeCoordHash> bits_;
    uint64_t evaluations_ = 0;
};

// ---------------------------------------------------------------------------
// Scene config: one `key = value` per line, `#` comments, unknown keys error.
//
//   kind = terrain | sphere | blobs
//   seed = 7
//   octaves = 5
//   lacunarity = 2.0
//   gain = 0.5
//   amplitude = 40.0
//   noise_scale = 0.01
//   base_height = 0.0
//   center = 0 0 0            (sphere)
//   radius = 1.0              (sphere)
//   ellipsoid = cx cy cz rx ry rz   (blobs; repeatable)

inline OccupancyFieldSpec parse_scene_config(std::istream& in, const std::string& name) {
    OccupancyFieldSpec spec;
    bool kind_set = false;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto trim = [](std::string s) {
            size_t a = s.find_first_not_of(" \t\r");
            if (a == std::string::npos) return std::string();
            size_t b = s.find_last_not_of(" \t\r");
            return s.substr(a, b - a + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(detail::concat(name, ":", lineno, ": expected `key = value`"));
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        std::istringstream vs(value);
        auto want = [&](auto& dst) {
            if (!(vs >> dst))
                throw ConfigError(detail::concat(name, ":", lineno, ": bad value for ", key));
        };
        if (key == "kind") {
            if (value == "sphere") spec.kind = FieldKind::Sphere;
            else if (value == "blobs") spec.kind = FieldKind::Blobs;
            else if (value == "terrain") spec.kind = FieldKind::Terrain;
            else throw ConfigError(detail::concat(name, ":", lineno, ": unknown kind ", value));
            kind_set = true;
        } else if (key == "seed") want(spec.seed);
        else if (key == "octaves") want(spec.octaves);
        else if (key == "lacunarity") want(spec.lacunarity);
        else if (key == "gain") want(spec.gain);
        else if (key == "amplitude") want(spec.amplitude);
        else if (key == "noise_scale") want(spec.noise_scale);
        else if (key == "base_height") want(spec.base_height);
        else if (key == "radius") want(spec.radius);
        else if (key == "center") { want(spec.center.x); want(spec.center.y); want(spec.center.z); }
        else if (key == "ellipsoid") {
            Ellipsoid e;
            want(e.center.x); want(e.center.y); want(e.center.z);
            want(e.radii.x); want(e.radii.y); want(e.radii.z);
            spec.ellipsoids.push_back(e);
        } else {
            throw ConfigError(detail::concat(name, ":", lineno, ": unknown key `", key, "`"));
        }
    }
    if (!kind_set) throw ConfigError(detail::concat(name, ": missing `kind`"));
    spec.validate();
    return spec;
}

inline OccupancyFieldSpec load_scene_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(detail::concat("cannot open scene config ", path));
    return parse_scene_config(in, path);
}

}  // namespace binoc

#endif
