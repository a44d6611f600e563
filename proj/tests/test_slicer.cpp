#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <set>
#include <sstream>

#include "binoc/slicer.hpp"
#include "helpers.hpp"

using namespace binoc;
using namespace binoc::test;

namespace {

ExtractionConfig toy_config(int max_depth = 4) {
    ExtractionConfig cfg;
    cfg.delta_t = 1.0;
    cfg.d_hat1_px = 30.0;
    cfg.d_hat2_px = 6.0;
    cfg.size_cap = 500000;
    cfg.contraction = 1.0;
    cfg.max_depth = max_depth;
    cfg.root_origin = {-4, -4, -4};
    cfg.root_size = 8;
    cfg.flood_seed_strategy = FloodSeedStrategy::Exhaustive;
    cfg.bisection_iters = 12;
    return cfg;
}

// Hand-built prism: square P at t=0 morphing to square Q at t=1.
Mesh4D make_prism(const std::array<Vec3, 4>& P, const std::array<Vec3, 4>& Q, double wt0 = 0,
                  double wt1 = 1) {
    Mesh4D m;
    m.temporal_depth = 0;
    m.window_t0 = wt0;
    m.window_t1 = wt1;
    for (int i = 0; i < 4; ++i) m.vertices.push_back({P[i], 0.0, -1, VertexWhich::Mid, 1.0, {}, 0});
    for (int i = 0; i < 4; ++i) m.vertices.push_back({Q[i], 1.0, -1, VertexWhich::Mid, 1.0, {}, 0});
    DualPolyhedron p;
    p.verts = {0, 1, 2, 3, 4, 5, 6, 7};
    p.faces = {{3, 2, 1, 0}, {4, 5, 6, 7}, {0, 1, 5, 4}, {1, 2, 6, 5}, {2, 3, 7, 6}, {3, 0, 4, 7}};
    m.polyhedra.push_back(p);
    return m;
}

}  // namespace

TEST_CASE("slice_polyhedron on a prism") {
    std::array<Vec3, 4> P = {Vec3{0, 0, 0}, Vec3{1, 0, 0}, Vec3{1, 1, 0}, Vec3{0, 1, 0}};
    std::array<Vec3, 4> Q = {Vec3{0, 0, 1}, Vec3{1, 0, 1}, Vec3{1, 1, 1}, Vec3{0, 1, 1}};
    Mesh4D m = make_prism(P, Q);

    auto polys = slice_polyhedron(m, m.polyhedra[0], 0.5);
    REQUIRE(polys.size() == 1);
    REQUIRE(polys[0].size() == 4);
    std::set<std::string> got;
    for (const Vec3& p : polys[0]) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%g,%g,%g", p.x, p.y, p.z);
        got.insert(buf);
    }
    std::set<std::string> expect = {"0,0,0.5", "1,0,0.5", "1,1,0.5", "0,1,0.5"};
    CHECK(got == expect);

    // the half-open rule includes the lower endpoint exactly
    auto at0 = slice_polyhedron(m, m.polyhedra[0], 0.0);
    REQUIRE(at0.size() == 1);
    std::set<std::string> got0;
    for (const Vec3& p : at0[0]) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%g,%g,%g", p.x, p.y, p.z);
        got0.insert(buf);
    }
    CHECK(got0 == std::set<std::string>{"0,0,0", "1,0,0", "1,1,0", "0,1,0"});

    // a polyhedron entirely before the slice time produces nothing
    Mesh4D wide = make_prism(P, Q, 0, 3);
    CHECK(slice_polyhedron(wide, wide.polyhedra[0], 2.0).empty());
}

TEST_CASE("slice at the root window end closes from below") {
    std::array<Vec3, 4> P = {Vec3{0, 0, 0}, Vec3{1, 0, 0}, Vec3{1, 1, 0}, Vec3{0, 1, 0}};
    std::array<Vec3, 4> Q = {Vec3{0, 0, 1}, Vec3{1, 0, 1}, Vec3{1, 1, 1}, Vec3{0, 1, 1}};
    Mesh4D m = make_prism(P, Q);
    Mesh3 slice = slice_mesh(m, 1.0);
    REQUIRE(slice.polygons.size() == 1);
    for (const Vec3& p : slice.vertices) CHECK(p.z == 1.0);
}

TEST_CASE("slice_mesh rejects out-of-window times") {
    std::array<Vec3, 4> P = {Vec3{0, 0, 0}, Vec3{1, 0, 0}, Vec3{1, 1, 0}, Vec3{0, 1, 0}};
    Mesh4D m = make_prism(P, P);
    CHECK_THROWS_AS(slice_mesh(m, -0.5), InputError);
    CHECK_THROWS_AS(slice_mesh(m, 1.5), InputError);
}

TEST_CASE("d=0 slices equal the 3D dual-contour mesh exactly") {
    ExtractionConfig cfg = toy_config(5);
    cfg.d_hat2_px = 4.0;
    BinaryOctree tree(cfg, static_path({6, 0.3, 0.4}, {0, 0, 0}, 5));
    tree.build_coarse();
    auto field = make_field(sphere_spec(2.0));
    CornerCache cache(field, tree.lattice_frame());
    auto surf = tree.flood_fill_surface(cache, tree.default_flood_seeds(cache));
    tree.refine_surface_nodes(surf, cache);
    auto leaves = straddling_leaves(tree, cache);
    REQUIRE(!leaves.empty());
    Mesh4D mesh = dual_polyhedron_search(tree, cache, *field, leaves, 12);

    Mesh3 s1 = slice_mesh(mesh, tree.window_t0() + 0.01);
    Mesh3 s2 = slice_mesh(mesh, tree.window_t1() - 0.01);
    CHECK(obj_string(s1) == obj_string(s2));

    Mesh3 ref = ref_dc3_mesh(tree, cache, *field, 12);
    REQUIRE(!ref.polygons.empty());
    CHECK(triangle_set(fan_triangles(s1)) == triangle_set(fan_triangles(ref)));

    // closed surface away from the root boundary
    CHECK(count_boundary_edges(s1) == 0);

    // outward orientation: positive enclosed volume for the sphere
    CHECK(signed_volume(s1) > 0);
    CHECK(signed_volume(s1) == Catch::Approx(4.0 / 3 * kPi * 8).epsilon(0.15));
}

TEST_CASE("static mesh slices are byte-identical across the window") {
    ExtractionConfig cfg = toy_config(3);
    BinaryOctree tree(cfg, static_path({5.5, 0.2, 0.3}, {0, 0, 0}, 9));
    tree.build_coarse();
    auto field = make_field(sphere_spec(2.0));
    CornerCache cache(field, tree.lattice_frame());
    Mesh4D mesh = dual_polyhedron_search(tree, cache, *field, straddling_leaves(tree, cache), 10);
    std::string first;
    for (int i = 0; i <= 8; ++i) {
        double t = tree.window_t0() + (tree.window_t1() - tree.window_t0()) * i / 8.0;
        std::string cur = obj_string(slice_mesh(mesh, t));
        if (i == 0) first = cur;
        CHECK(cur == first);
    }
}

TEST_CASE("slice continuity: successive slices are collinear within a span") {
    // temporally split toy: left column refined in space over the full
    // window, right column split in time
    ExtractionConfig cfg = toy_config(3);
    CameraPath path = static_path({0, 10, 0}, {0, 0, 0}, 9, 2.0);
    BinaryOctree tree(cfg, path);
    tree.split_spatial(0);
    for (int i = 0; i < 8; ++i) {
        int32_t c = tree.node(0).first_child + i;
        if (tree.node(c).ix == 0)
            tree.split_spatial(c);
        else
            tree.split_temporal(c);
    }
    auto field = make_field(plane_spec(0.3));
    CornerCache cache(field, tree.lattice_frame());
    Mesh4D mesh = dual_polyhedron_search(tree, cache, *field, straddling_leaves(tree, cache), 10);

    double t0 = tree.window_t0(), t1 = tree.window_t1();
    double dt = (t1 - t0) / 64.0;
    int checked = 0;
    for (int i = 1; i + 1 < 32; ++i) {
        double ta = t0 + i * dt, tb = ta + dt, tc = tb + dt;
        Mesh3 a = slice_mesh(mesh, ta), b = slice_mesh(mesh, tb), c = slice_mesh(mesh, tc);
        if (a.vertex_keys != b.vertex_keys || b.vertex_keys != c.vertex_keys) continue;
        ++checked;
        for (size_t k = 0; k < a.vertices.size(); ++k) {
            Vec3 d1 = b.vertices[k] - a.vertices[k];
            Vec3 d2 = c.vertices[k] - b.vertices[k];
            CHECK(norm(d1 - d2) < 1e-9);
        }
    }
    CHECK(checked > 0);
}

TEST_CASE("extrusion is the identity when no interior constant-t faces exist") {
    ExtractionConfig cfg = toy_config(3);
    BinaryOctree tree(cfg, static_path({5.5, 0.2, 0.3}, {0, 0, 0}, 5));
    tree.build_coarse();
    auto field = make_field(sphere_spec(2.0));
    CornerCache cache(field, tree.lattice_frame());
    Mesh4D mesh = dual_polyhedron_search(tree, cache, *field, straddling_leaves(tree, cache), 10);
    Mesh4D ext = extrude_time_faces(mesh);
    CHECK(ext.vertices.size() == mesh.vertices.size());
    size_t faces_before = 0, faces_after = 0;
    for (const auto& p : mesh.polyhedra) faces_before += p.faces.size();
    for (const auto& p : ext.polyhedra) faces_after += p.faces.size();
    CHECK(faces_before == faces_after);
}

TEST_CASE("extrusion turns a constant-t cap into a growing pyramid") {
    // prism spanning [1, 2] whose lower cap is constant-t (all corners at
    // t=1) inside a root window [0, 4]
    std::array<Vec3, 4> P = {Vec3{0, 0, 0}, Vec3{2, 0, 0}, Vec3{2, 2, 0}, Vec3{0, 2, 0}};
    Mesh4D m;
    m.temporal_depth = 2;
    m.window_t0 = 0;
    m.window_t1 = 4;
    for (int i = 0; i < 4; ++i) m.vertices.push_back({P[i], 1.0, -1, VertexWhich::Mid, 2.0, {}, 0});
    for (int i = 0; i < 4; ++i) m.vertices.push_back({P[i], 2.0, -1, VertexWhich::Mid, 2.0, {}, 0});
    DualPolyhedron p;
    p.verts = {0, 1, 2, 3, 4, 5, 6, 7};
    p.faces = {{3, 2, 1, 0}, {4, 5, 6, 7}, {0, 1, 5, 4}, {1, 2, 6, 5}, {2, 3, 7, 6}, {3, 0, 4, 7}};
    m.polyhedra.push_back(p);

    Mesh4D ext = extrude_time_faces(m);
    REQUIRE(ext.vertices.size() == 10);  // both caps are interior constant-t
    const Vertex4Rec& apex_lo = ext.vertices[8];
    const Vertex4Rec& apex_hi = ext.vertices[9];
    double lo_t = std::min(apex_lo.t, apex_hi.t), hi_t = std::max(apex_lo.t, apex_hi.t);
    CHECK(lo_t == 0.0);  // t_face - owner_window/2 = 1 - 1
    CHECK(hi_t == 3.0);  // t_face + owner_window/2 = 2 + 1
    CHECK(apex_lo.p.x == 1.0);
    CHECK(apex_lo.p.y == 1.0);

    // before the original span nothing existed; now a small quad grows
    Mesh3 before = slice_mesh(m, 0.5);
    CHECK(before.polygons.empty());
    Mesh3 growing = slice_mesh(ext, 0.5);
    REQUIRE(growing.polygons.size() == 1);
    double area = 0;
    for (const auto& t : fan_triangles(growing)) area += norm(cross(t[1] - t[0], t[2] - t[0])) / 2;
    CHECK(area > 0);
    CHECK(area < 4.0);  // smaller than the full 2x2 cap
    // at the face time the cross-section reaches the full cap
    Mesh3 full = slice_mesh(ext, 1.0);
    double area_full = 0;
    for (const auto& t : fan_triangles(full)) area_full += norm(cross(t[1] - t[0], t[2] - t[0])) / 2;
    CHECK(area_full == Catch::Approx(4.0));
}

TEST_CASE("extrusion reduces the area of newly appearing structures") {
    // a small sphere invisible to the coarse lattice: fine cells appear
    // when the camera approaches, so their polygons would otherwise pop in
    ExtractionConfig cfg = toy_config(5);
    cfg.delta_t = 0.5;
    cfg.d_hat1_px = 10.0;
    cfg.d_hat2_px = 6.0;
    auto field = make_field(sphere_spec(0.45, {0.9, 0.7, 0.6}));
    CameraPath path;
    int frames = 48;
    for (int i = 0; i < frames; ++i) {
        double t = i / 12.0;
        double u = double(i) / (frames - 1);
        double d = 24.0 - 21.5 * u;  // approach steadily
        path.samples.push_back(cam_at({0.9 + d * 0.7, 0.7 + d * 0.7, 0.6 + d * 0.2}, t,
                                      {0.9, 0.7, 0.6}));
    }
    ExtractionConfig run_cfg = cfg;
    run_cfg.flood_seed_strategy = FloodSeedStrategy::Exhaustive;
    BinaryOctree tree(run_cfg, path);
    tree.build_coarse();
    CornerCache cache(field, tree.lattice_frame());
    auto surf = tree.flood_fill_surface(cache, tree.default_flood_seeds(cache));
    REQUIRE(!surf.empty());
    tree.refine_surface_nodes(surf, cache);
    Mesh4D plain = dual_polyhedron_search(tree, cache, *field, straddling_leaves(tree, cache), 10);
    Mesh4D extruded = extrude_time_faces(plain);
    REQUIRE(extruded.vertices.size() > plain.vertices.size());  // pops exist

    // triangle area appearing farther than half a finest cell from the
    // previous frame's surface, per frame step
    double finest = cfg.root_size / double(1 << cfg.max_depth);
    auto new_area_series = [&](const Mesh4D& mesh) {
        double worst = 0;
        std::vector<std::array<Vec3, 3>> prev;
        for (const auto& cam : path.samples) {
            Mesh3 slice = slice_mesh(mesh, cam.t);
            auto tris = fan_triangles(slice);
            double new_area = 0;
            for (const auto& t : tris) {
                Vec3 centroid = (t[0] + t[1] + t[2]) / 3.0;
                double dist = std::numeric_limits<double>::infinity();
                for (const auto& pt : prev) {
                    dist = std::min(dist, point_triangle_distance(centroid, pt[0], pt[1], pt[2]));
                    if (dist <= finest / 2) break;
                }
                if (dist > finest / 2)
                    new_area += norm(cross(t[1] - t[0], t[2] - t[0])) / 2;
            }
            if (!prev.empty()) worst = std::max(worst, new_area);
            prev = std::move(tris);
        }
        return worst;
    };
    double worst_plain = new_area_series(plain);
    double worst_ext = new_area_series(extruded);
    CHECK(worst_plain > 0);
    CHECK(worst_ext < worst_plain);
}

TEST_CASE("obj export basics") {
    Mesh3 m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    m.vertex_keys = {{0, 0}, {1, 0}, {2, 0}};
    m.polygons.push_back({{0, 1, 2}, 0});
    std::string tri = obj_string(m);
    CHECK(tri == "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");

    Mesh3 q;
    q.vertices = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}};
    q.vertex_keys = {{0, 0}, {1, 0}, {2, 0}, {3, 0}};
    q.polygons.push_back({{0, 1, 2, 3}, 0});
    std::istringstream is(obj_string(q));
    std::string line;
    int fcount = 0;
    while (std::getline(is, line))
        if (line[0] == 'f') ++fcount;
    CHECK(fcount == 2);  // fan of a quad

    // round-trip through the parser
    std::istringstream ris(obj_string(q, false));
    Mesh3 loaded = load_obj(ris, "mem");
    REQUIRE(loaded.polygons.size() == 1);
    CHECK(loaded.polygons[0].cycle.size() == 4);
    CHECK(loaded.vertices[2].y == 1.0);
}
