#include <doctest.h>

#include <fstream>
#include <numbers>
#include <set>

#include "fixtures.hpp"
#include "spinemorph/error.hpp"
#include "spinemorph/mesh_io.hpp"
#include "spinemorph/morphometry.hpp"
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

LocalFrame global_frame(const Vec3& com) {
    LocalFrame f;
    f.com = com;
    return f;
}

std::set<std::array<long long, 9>> face_keys(const TriangleMesh& m) {
    std::set<std::array<long long, 9>> keys;
    for (std::size_t i = 0; i < m.face_count(); ++i) {
        auto t = m.triangle(i);
        std::sort(t.begin(), t.end(), [](const Vec3& a, const Vec3& b) {
            return std::lexicographical_compare(a.data(), a.data() + 3, b.data(), b.data() + 3);
        });
        std::array<long long, 9> k{};
        for (int j = 0; j < 3; ++j)
            for (int c = 0; c < 3; ++c) k[static_cast<std::size_t>(3 * j + c)] = std::llround(t[static_cast<std::size_t>(j)][c] * 1e6);
        keys.insert(k);
    }
    return keys;
}

/// Landmark sidedness and endplate membership checks shared by several tests.
void check_landmark_invariants(const Landmarks& lm, const LocalFrame& f, const EndplatePair& plates) {
    CHECK((lm.d_u1 - lm.d_u2).dot(f.front) > 0.0);
    CHECK((lm.d_l1 - lm.d_l2).dot(f.front) > 0.0);
    CHECK((lm.w_u1 - lm.w_u2).dot(f.right) > 0.0);
    CHECK((lm.w_l1 - lm.w_l2).dot(f.right) > 0.0);
    CHECK((lm.h_1 - lm.h_2).dot(f.up) > 0.0);
    // Each landmark lies on a triangle of its plate.
    auto on_plate = [](const Vec3& p, const TriangleMesh& plate) {
        double best = 1e300;
        for (std::size_t i = 0; i < plate.face_count(); ++i) {
            const auto t = plate.triangle(i);
            const Vec3 n = (t[1] - t[0]).cross(t[2] - t[0]);
            if (n.norm() == 0.0) continue;
            const Vec3 u = n.normalized();
            const Vec3 q = p - u * (p - t[0]).dot(u);
            const double a = (t[1] - t[0]).cross(q - t[0]).dot(n), b = (t[2] - t[1]).cross(q - t[1]).dot(n),
                         c = (t[0] - t[2]).cross(q - t[2]).dot(n);
            const double eps = -1e-9 * n.squaredNorm();
            if (a >= eps && b >= eps && c >= eps) best = std::min(best, std::abs((p - t[0]).dot(u)));
        }
        return best;
    };
    for (const Vec3* p : {&lm.w_u1, &lm.w_u2, &lm.d_u1, &lm.d_u2, &lm.h_1}) CHECK(on_plate(*p, plates.upper) <= 1e-3);
    for (const Vec3* p : {&lm.w_l1, &lm.w_l2, &lm.d_l1, &lm.d_l2, &lm.h_2}) CHECK(on_plate(*p, plates.lower) <= 1e-3);
}

}  // namespace

TEST_CASE("vertebral body of a box vertebra is exactly the box") {
    const auto v = fixtures::box_vertebra(40, 30, 25, Vec3(1, 2, 3));
    const Vec3 com = center_of_mass(v.mesh);
    const auto body = extract_vertebral_body(v.mesh, global_frame(com));
    CHECK(face_keys(body.mesh) == face_keys(v.body));
    CHECK((body.com - v.body_center).norm() <= 1e-6);

    // A cutting plane behind all geometry keeps everything.
    const auto all = extract_vertebral_body(v.mesh, global_frame(Vec3(0, 500, 0)));
    CHECK(all.mesh.face_count() == v.mesh.face_count());

    CHECK(error_of([&] { extract_vertebral_body(v.mesh, global_frame(Vec3(0, -500, 0))); }) == ErrorCode::kEmptyBody);
}

TEST_CASE("vertebral body of a generated vertebra matches the generator's body") {
    VertebraSpec spec;
    spec.endplate_dome = 1.0;
    spec.wedge_angle_deg = 3.0;
    const auto v = generate_vertebra(spec);
    const auto body = extract_vertebral_body(v.mesh, global_frame(center_of_mass(v.mesh)));
    const double expected = surface_area(body_submesh(v));
    CHECK(std::abs(surface_area(body.mesh) - expected) / expected < 0.05);
    for (const auto& p : body.mesh.vertices()) CHECK(p.y() <= center_of_mass(v.mesh).y() + 1e-6);
}

TEST_CASE("box endplates are the top and bottom faces") {
    const auto v = fixtures::box_vertebra(40, 30, 25, Vec3::Zero());
    const auto body = extract_vertebral_body(v.mesh, global_frame(center_of_mass(v.mesh)));
    const auto frame = global_frame(body.com);
    for (double angle : {45.0, 89.0}) {
        const auto plates = extract_endplates(body, frame, angle);
        CHECK(surface_area(plates.upper) == doctest::Approx(40.0 * 30.0));
        CHECK(surface_area(plates.lower) == doctest::Approx(40.0 * 30.0));
        for (const auto& p : plates.upper.vertices()) CHECK(p.z() == doctest::Approx(12.5));
        for (const auto& p : plates.lower.vertices()) CHECK(p.z() == doctest::Approx(-12.5));
    }
    CHECK(error_of([&] { extract_endplates(body, frame, 0.0); }) == ErrorCode::kInvalidArgument);
    CHECK(error_of([&] { extract_endplates(body, frame, 90.0); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("icosphere endplate is the 45 degree cap") {
    const auto sphere = fixtures::icosphere(10.0, 6);
    VertebralBody body{sphere, center_of_mass(sphere)};
    const auto plates = extract_endplates(body, global_frame(body.com), 45.0);
    const double ratio = surface_area(plates.upper) / surface_area(sphere);
    const double expected = (1.0 - std::cos(std::numbers::pi / 4.0)) / 2.0;
    CHECK(std::abs(ratio - expected) / expected < 0.05);
    const double lower_ratio = surface_area(plates.lower) / surface_area(sphere);
    CHECK(std::abs(lower_ratio - expected) / expected < 0.05);
}

TEST_CASE("endplate threshold monotonicity") {
    const auto sphere = fixtures::icosphere(10.0, 4);
    VertebralBody body{sphere, center_of_mass(sphere)};
    const auto f = global_frame(body.com);
    const auto p30 = extract_endplates(body, f, 30.0);
    const auto p45 = extract_endplates(body, f, 45.0);
    const auto p60 = extract_endplates(body, f, 60.0);
    auto subset = [](const TriangleMesh& a, const TriangleMesh& b) {
        const auto ka = face_keys(a), kb = face_keys(b);
        return std::includes(kb.begin(), kb.end(), ka.begin(), ka.end());
    };
    CHECK(subset(p30.upper, p45.upper));
    CHECK(subset(p45.upper, p60.upper));
    CHECK(subset(p30.lower, p45.lower));
    CHECK(subset(p45.lower, p60.lower));
    CHECK(p30.upper.face_count() < p60.upper.face_count());
}

TEST_CASE("extremal component rejects lower upward-facing patches") {
    // A box body with a small upward-facing ledge lower down.
    const auto body_box = fixtures::grid_box(Vec3(-20, -15, -12.5), Vec3(20, 15, 12.5), {4, 4, 16});
    const auto ledge = fixtures::grid_box(Vec3(-5, -30, -2), Vec3(5, -20, 0), {2, 2, 8});
    const TriangleMesh parts[] = {body_box, ledge};
    VertebralBody body{merge(parts), Vec3::Zero()};
    const auto plates = extract_endplates(body, global_frame(Vec3::Zero()));
    for (const auto& p : plates.upper.vertices()) CHECK(p.z() == doctest::Approx(12.5));
}

TEST_CASE("box landmarks and dimensions") {
    const double w = 40, d = 30, h = 25;
    const Vec3 c(5, -3, 7);
    const auto v = fixtures::box_vertebra(w, d, h, c);
    const auto body = extract_vertebral_body(v.mesh, global_frame(center_of_mass(v.mesh)));
    const auto frame = global_frame(body.com);
    const auto plates = extract_endplates(body, frame);
    const auto lm = compute_landmarks(plates, body, frame);
    const Vec3 up = frame.up, right = frame.right, front = frame.front;
    CHECK((lm.d_u1 - (c + d / 2 * front + h / 2 * up)).norm() < 1e-9);
    CHECK((lm.d_u2 - (c - d / 2 * front + h / 2 * up)).norm() < 1e-9);
    CHECK((lm.d_l1 - (c + d / 2 * front - h / 2 * up)).norm() < 1e-9);
    CHECK((lm.w_u1 - (c + w / 2 * right + h / 2 * up)).norm() < 1e-9);
    CHECK((lm.w_l2 - (c - w / 2 * right - h / 2 * up)).norm() < 1e-9);
    CHECK((lm.h_1 - (c + h / 2 * up)).norm() < 1e-9);
    CHECK((lm.h_2 - (c - h / 2 * up)).norm() < 1e-9);
    check_landmark_invariants(lm, frame, plates);

    const auto m = compute_dimensions(lm);
    CHECK(m[Dimension::kWidthUpper] == doctest::Approx(w));
    CHECK(m[Dimension::kWidthLower] == doctest::Approx(w));
    CHECK(m[Dimension::kDepthUpper] == doctest::Approx(d));
    CHECK(m[Dimension::kDepthLower] == doctest::Approx(d));
    for (auto dim : {Dimension::kHeightCentral, Dimension::kHeightAnterior, Dimension::kHeightPosterior,
                     Dimension::kHeightLeft, Dimension::kHeightRight})
        CHECK(m[dim] == doctest::Approx(h));

    // Translating everything moves landmarks by exactly t.
    const Vec3 t(100, 200, -300);
    const auto xf = Eigen::Affine3d(Eigen::Translation3d(t));
    const auto moved = extract_vertebral_body(v.mesh.transformed(xf), global_frame(center_of_mass(v.mesh) + t));
    const auto moved_frame = global_frame(moved.com);
    const auto lm2 = compute_landmarks(extract_endplates(moved, moved_frame), moved, moved_frame);
    for (std::size_t i = 0; i < Landmarks::kNames.size(); ++i) CHECK((lm2[i] - lm[i] - t).norm() < 1e-9);
}

TEST_CASE("dimensions of degenerate landmarks") {
    Landmarks lm;
    lm.h_1 = lm.h_2 = Vec3(1, 2, 3);
    CHECK(compute_dimensions(lm)[Dimension::kHeightCentral] == 0.0);
    CHECK(dimension_from_key("height_left") == Dimension::kHeightLeft);
    CHECK(dimension_from_key("d_u1d_l1") == Dimension::kHeightAnterior);
    CHECK(!dimension_from_key("volume"));
}

TEST_CASE("generated vertebra in a spine measures close to truth") {
    SpineSpec spec;
    spec.lordosis_deg = 0.0;
    VertebraSpec v;
    v.width = 50.0;
    v.depth = 35.0;
    v.height_central = 28.0;
    spec.vertebrae.assign(5, v);
    const auto spine = generate_spine(spec);
    const auto report = measure_spine(spine.model());
    for (std::size_t i = 0; i < report.vertebrae.size(); ++i) {
        REQUIRE(report.vertebrae[i].ok());
        for (std::size_t k = 0; k < kDimensionCount; ++k)
            CHECK(std::abs(report.vertebrae[i].measurements->values[k] - spine.truths[i].measurements.values[k]) <= 0.3);
    }
}

TEST_CASE("landmark invariants on generated spines") {
    for (std::uint64_t index = 0; index < 5; ++index) {
        const auto spine = generate_spine(sample_spine_spec(11, index, ParameterRanges{}));
        const auto model = spine.model();
        const auto frames = build_frames(model);
        for (std::size_t i = 0; i < frames.size(); ++i) {
            const auto body = extract_vertebral_body(model.vertebrae[i].mesh, frames[i]);
            const auto plates = extract_endplates(body, frames[i]);
            const auto lm = compute_landmarks(plates, body, frames[i]);
            check_landmark_invariants(lm, frames[i], plates);
            for (const auto& p : body.mesh.vertices())
                CHECK(Plane::through(frames[i].com, frames[i].front).signed_distance(p) >= -1e-6);
            const auto normals = vertex_normals(plates.upper);
            const auto m = compute_dimensions(lm);
            CHECK(m[Dimension::kWidthUpper] == (lm.w_u1 - lm.w_u2).norm());
            CHECK(center_of_mass(plates.upper).dot(frames[i].up) - center_of_mass(plates.lower).dot(frames[i].up) > 1.0);
        }
    }
}

TEST_CASE("measure_spine isolates failures and flags fallback") {
    auto spine = fixtures::box_stack(5, 40, 30, 25, 3);
    SUBCASE("all succeed exactly") {
        const auto report = measure_spine(spine);
        REQUIRE(report.vertebrae.size() == 5);
        CHECK(report.failures() == 0);
        for (const auto& r : report.vertebrae) {
            CHECK(std::abs((*r.measurements)[Dimension::kWidthUpper] - 40.0) < 1e-6);
            CHECK(std::abs((*r.measurements)[Dimension::kDepthLower] - 30.0) < 1e-6);
            CHECK(std::abs((*r.measurements)[Dimension::kHeightCentral] - 25.0) < 1e-6);
            CHECK(r.density_per_mm2 > 0.0);
            CHECK(r.timings_ms.count("landmarks") == 1);
        }
    }
    SUBCASE("one vertebra without an anterior part") {
        // Replace L3 by a coronal sheet facing posteriorly: nothing lies in front of its CoM.
        std::vector<Vec3> sheet{{-5, 0, 53}, {5, 0, 53}, {5, 0, 59}, {-5, 0, 59}};
        spine.vertebrae[2].mesh = TriangleMesh(sheet, {{0, 1, 2}, {0, 2, 3}});
        const auto report = measure_spine(spine);
        CHECK(report.failures() >= 1);
        CHECK(!report.vertebrae[2].ok());
        CHECK(report.vertebrae[2].error.find("empty-body") == 0);
        CHECK(report.vertebrae[0].ok());
    }
    SUBCASE("fallback for short spines") {
        spine.vertebrae.resize(1);
        const auto failed = measure_spine(spine);
        CHECK(failed.failures() == 1);
        CHECK(failed.vertebrae[0].error.find("too-few-vertebrae") == 0);
        const auto ok = measure_spine(spine, MeasureOptions{45.0, true});
        CHECK(ok.failures() == 0);
        CHECK(ok.vertebrae[0].warnings.size() == 1);
    }
}

TEST_CASE("measure_manifest failure isolation") {
    const auto dir = fixtures::temp_dir("measure_manifest");
    const auto spine = fixtures::box_stack(5, 40, 30, 25, 3);
    SpineManifest manifest;
    manifest.spine_id = "boxes";
    for (const auto& v : spine.vertebrae) {
        save_mesh(v.mesh, dir / (v.label + ".stl"));
        manifest.entries.push_back({v.label, v.label + ".stl"});
    }
    write_manifest(manifest, dir / "manifest.json");
    const auto good = measure_manifest(dir / "manifest.json");
    CHECK(good.spine_id == "boxes");
    CHECK(good.failures() == 0);

    std::ofstream(dir / "L3.stl", std::ios::trunc) << "solid broken\nfacet normal 0 0 1\nouter loop\nvertex 1 2\n";
    const auto partial = measure_manifest(dir / "manifest.json");
    REQUIRE(partial.vertebrae.size() == 5);
    CHECK(partial.failures() == 1);
    CHECK(partial.vertebrae[2].label == "L3");
    CHECK(partial.vertebrae[2].error.find("parse-error") == 0);

    std::filesystem::remove(dir / "L3.stl");
    try {
        measure_manifest(dir / "manifest.json");
        FAIL("expected a top-level error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kFileNotFound);
        CHECK(std::string(e.what()).find("L3.stl") != std::string::npos);
    }
}

TEST_CASE("report serialisation") {
    const auto report = measure_spine(fixtures::box_stack(5, 40, 30, 25, 3));
    const std::string json = report_to_json(report);
    CHECK(json == report_to_json(report));
    CHECK(json.find("timings") == std::string::npos);
    CHECK(timings_to_json(report).find("landmarks") != std::string::npos);

    const auto back = report_from_json(json);
    REQUIRE(back.vertebrae.size() == report.vertebrae.size());
    for (std::size_t i = 0; i < back.vertebrae.size(); ++i) {
        CHECK(back.vertebrae[i].label == report.vertebrae[i].label);
        // Shortest round-trip printing makes the values bit-identical.
        CHECK(back.vertebrae[i].measurements->values == report.vertebrae[i].measurements->values);
        const auto recomputed = compute_dimensions(*back.vertebrae[i].landmarks);
        CHECK(recomputed.values == back.vertebrae[i].measurements->values);
    }
    const std::string csv = report_to_csv(report);
    CHECK(csv.rfind("spine_id,label,status,width_upper", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
    CHECK(error_of([] { report_from_json("{}"); }) == ErrorCode::kSchemaError);
}
