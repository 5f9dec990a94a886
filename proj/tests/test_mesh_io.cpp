#include <doctest.h>

#include <cstring>
#include <fstream>

#include "fixtures.hpp"
#include "spinemorph/error.hpp"
#include "spinemorph/mesh_io.hpp"
#include "spinemorph/synthetic.hpp"

using namespace spinemorph;
using fixtures::Vec3;

namespace {

ErrorCode error_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error thrown");
    return ErrorCode::kInvalidArgument;
}

void write_text(const std::filesystem::path& p, const std::string& s) {
    std::ofstream(p, std::ios::binary) << s;
}

std::string cube_ascii_stl() {
    const auto cube = fixtures::unit_cube();
    std::string s = "solid cube\n";
    for (const auto& f : cube.faces()) {
        s += "  facet normal 0 0 0\n    outer loop\n";
        for (auto i : f) {
            const auto& v = cube.vertices()[i];
            s += "      vertex " + std::to_string(v.x()) + " " + std::to_string(v.y()) + " " + std::to_string(v.z()) + "\n";
        }
        s += "    endloop\n  endfacet\n";
    }
    return s + "endsolid cube\n";
}

// Every vertex of `a` has a partner in `b` within tol, and the counts match.
bool same_vertex_set(const TriangleMesh& a, const TriangleMesh& b, double tol) {
    if (a.vertex_count() != b.vertex_count()) return false;
    for (const auto& p : a.vertices()) {
        bool found = false;
        for (const auto& q : b.vertices())
            if ((p - q).norm() <= tol) {
                found = true;
                break;
            }
        if (!found) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("ascii stl cube welds to 8 vertices") {
    const auto dir = fixtures::temp_dir("io_ascii");
    write_text(dir / "cube.stl", cube_ascii_stl());
    const TriangleMesh m = load_mesh(dir / "cube.stl");
    CHECK(m.vertex_count() == 8);
    CHECK(m.face_count() == 12);
}

TEST_CASE("stl round trips") {
    const auto dir = fixtures::temp_dir("io_stl");
    const auto cube = fixtures::unit_cube();
    save_mesh(cube, dir / "a.stl");
    CHECK(load_mesh(dir / "a.stl").face_count() == 12);
    save_mesh(cube, dir / "b.stl", MeshFormat::kAuto, SaveOptions{true});
    const auto bin = load_mesh(dir / "b.stl");
    CHECK(bin.face_count() == 12);
    CHECK(bin.vertex_count() == 8);
}

TEST_CASE("synthetic vertebra round trips within 1e-6 in every format") {
    const auto dir = fixtures::temp_dir("io_roundtrip");
    const auto v = generate_vertebra(VertebraSpec{}, 0.16);
    for (const char* name : {"v.stl", "v.obj", "v.ply"}) {
        save_mesh(v.mesh, dir / name);
        const auto back = load_mesh(dir / name);
        CHECK(back.face_count() == v.mesh.face_count());
        CHECK(same_vertex_set(v.mesh, back, 1e-6));
    }
    save_mesh(v.mesh, dir / "b.ply", MeshFormat::kAuto, SaveOptions{true});
    CHECK(same_vertex_set(v.mesh, load_mesh(dir / "b.ply"), 1e-12));
}

TEST_CASE("welding idempotence on reload") {
    const auto dir = fixtures::temp_dir("io_weld");
    const auto sphere = fixtures::icosphere(10, 2);
    save_mesh(sphere, dir / "s.stl");
    const auto once = load_mesh(dir / "s.stl");
    save_mesh(once, dir / "t.stl");
    const auto twice = load_mesh(dir / "t.stl");
    CHECK(once.vertex_count() == sphere.vertex_count());
    CHECK(twice.vertex_count() == once.vertex_count());
    CHECK(twice.face_count() == once.face_count());
}

TEST_CASE("spine meshes reload with identical face counts") {
    SpineSpec spec;
    spec.lordosis_deg = 50;
    spec.vertebrae.assign(5, VertebraSpec{});
    const auto spine = generate_spine(spec);
    const auto dir = fixtures::temp_dir("io_spine");
    write_spine(spine, "s", dir);
    for (std::size_t i = 0; i < spine.meshes.size(); ++i)
        CHECK(load_mesh(dir / (spine.labels[i] + ".stl")).face_count() == spine.meshes[i].face_count());
}

TEST_CASE("obj parsing") {
    const auto dir = fixtures::temp_dir("io_obj");
    write_text(dir / "quad.obj",
               "# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nvt 0 0\nf 1/1/1 2/1/1 3/1/1 4/1/1\n");
    const auto quad = load_mesh(dir / "quad.obj");
    CHECK(quad.face_count() == 2);
    write_text(dir / "neg.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n");
    CHECK(load_mesh(dir / "neg.obj").face_count() == 1);
    write_text(dir / "bad.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n");
    CHECK(error_of([&] { load_mesh(dir / "bad.obj"); }) == ErrorCode::kParseError);
}

TEST_CASE("ply ascii parsing with extra properties") {
    const auto dir = fixtures::temp_dir("io_ply");
    write_text(dir / "t.ply",
               "ply\nformat ascii 1.0\ncomment x\nelement vertex 4\nproperty float x\nproperty float y\n"
               "property float z\nproperty uchar red\nelement face 2\nproperty list uchar int vertex_indices\n"
               "end_header\n0 0 0 1\n1 0 0 2\n1 1 0 3\n0 1 0 4\n3 0 1 2\n3 0 2 3\n");
    const auto m = load_mesh(dir / "t.ply");
    CHECK(m.vertex_count() == 4);
    CHECK(m.face_count() == 2);
}

TEST_CASE("load errors") {
    const auto dir = fixtures::temp_dir("io_errors");
    CHECK(error_of([&] { load_mesh(dir / "missing.stl"); }) == ErrorCode::kFileNotFound);

    SUBCASE("truncated binary stl") {
        std::string data(80, ' ');
        const std::uint32_t count = 10;
        data.append(reinterpret_cast<const char*>(&count), 4);
        data.append(50 * 3, '\0');
        write_text(dir / "trunc.stl", data);
        CHECK(error_of([&] { load_mesh(dir / "trunc.stl"); }) == ErrorCode::kParseError);
    }
    SUBCASE("malformed ascii stl names the line") {
        write_text(dir / "bad.stl", "solid x\nfacet normal 0 0 1\nouter loop\nvertex 0 0 zero\n");
        try {
            load_mesh(dir / "bad.stl");
            FAIL("expected parse error");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::kParseError);
            CHECK(std::string(e.what()).find(":4") != std::string::npos);
        }
    }
    SUBCASE("degenerate") {
        write_text(dir / "flat.obj", "v 0 0 0\nv 1 0 0\n");
        CHECK(error_of([&] { load_mesh(dir / "flat.obj"); }) == ErrorCode::kDegenerateMesh);
    }
    SUBCASE("saving an empty mesh") {
        CHECK(error_of([&] { save_mesh(TriangleMesh{}, dir / "e.stl"); }) == ErrorCode::kDegenerateMesh);
    }
}
