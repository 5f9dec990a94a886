#include <doctest.h>

#include <fstream>
#include <numbers>

#include "fixtures.hpp"
#include "spinemorph/error.hpp"
#include "spinemorph/frames.hpp"
#include "spinemorph/mesh_io.hpp"

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

std::vector<Vec3> arc_points(double radius, double step_deg, int n) {
    std::vector<Vec3> pts;
    for (int i = 0; i < n; ++i) {
        const double a = (i - (n - 1) / 2.0) * step_deg * std::numbers::pi / 180.0;
        pts.emplace_back(0.0, radius - radius * std::cos(a), radius * std::sin(a));
    }
    return pts;
}

Vec3 arc_tangent(double step_deg, int n, int i) {
    const double a = (i - (n - 1) / 2.0) * step_deg * std::numbers::pi / 180.0;
    return Vec3(0.0, std::sin(a), std::cos(a));
}

SpineModel transformed(const SpineModel& spine, const Eigen::Affine3d& xf) {
    SpineModel out = spine;
    for (auto& v : out.vertebrae) v.mesh = v.mesh.transformed(xf);
    return out;
}

void check_orthonormal(const LocalFrame& f) {
    CHECK(std::abs(f.up.norm() - 1.0) <= 1e-9);
    CHECK(std::abs(f.right.norm() - 1.0) <= 1e-9);
    CHECK(std::abs(f.front.norm() - 1.0) <= 1e-9);
    CHECK(std::abs(f.up.dot(f.right)) <= 1e-6);
    CHECK(std::abs(f.up.dot(f.front)) <= 1e-6);
    CHECK(std::abs(f.right.dot(f.front)) <= 1e-6);
    CHECK(f.up.dot(kAxisS) > 0.0);
    CHECK(f.right.dot(kAxisL) > 0.0);
    CHECK(f.front.dot(-kAxisP) > 0.0);
}

double handedness(const LocalFrame& f) {
    Eigen::Matrix3d m;
    m << f.right, f.front, f.up;
    return m.determinant();
}

}  // namespace

TEST_CASE("spline through collinear points is a straight line") {
    std::vector<Vec3> pts;
    for (int i = 0; i < 5; ++i) pts.emplace_back(1.0, 2.0, 30.0 * i + (i == 2 ? 3.0 : 0.0));
    const auto s = fit_com_spline(pts);
    for (std::size_t i = 0; i < pts.size(); ++i) CHECK((spline_tangent(s, i) - Vec3(0, 0, 1)).norm() < 1e-12);
    for (double t = 0.0; t <= 1.0; t += 0.05) {
        const Vec3 p = s.evaluate(t);
        CHECK(std::abs(p.x() - 1.0) < 1e-12);
        CHECK(std::abs(p.y() - 2.0) < 1e-12);
    }
}

TEST_CASE("spline interpolates its control points") {
    const auto pts = arc_points(200.0, 9.0, 7);
    const auto s = fit_com_spline(pts);
    for (std::size_t i = 0; i < pts.size(); ++i) CHECK((s.evaluate(s.knots()[i]) - pts[i]).norm() <= 1e-9);
    CHECK(s.knots().front() == 0.0);
    CHECK(s.knots().back() == 1.0);
}

TEST_CASE("spline tangent on a circular arc") {
    const int n = 7;
    const double step = 9.0;
    const auto s = fit_com_spline(arc_points(200.0, step, n));
    for (int i = 0; i < n; ++i) {
        const double err = fixtures::angle_deg(spline_tangent(s, static_cast<std::size_t>(i)), arc_tangent(step, n, i));
        if (i == 0 || i == n - 1) CHECK(err < 5.0);
        else CHECK(err < 2.0);
    }
}

TEST_CASE("spline tangent points superior for cranial-to-caudal chains") {
    auto pts = arc_points(200.0, 9.0, 5);
    std::reverse(pts.begin(), pts.end());
    const auto s = fit_com_spline(pts);
    for (std::size_t i = 0; i < pts.size(); ++i) CHECK(spline_tangent(s, i).dot(kAxisS) > 0.0);
}

TEST_CASE("spline errors") {
    CHECK(error_of([] { fit_com_spline({Vec3(0, 0, 0), Vec3(0, 0, 1)}); }) == ErrorCode::kTooFewPoints);
    CHECK(error_of([] { fit_com_spline({Vec3(0, 0, 0), Vec3(0, 0, 1e-4), Vec3(0, 0, 2)}); }) ==
          ErrorCode::kCoincidentPoints);
}

TEST_CASE("right vector") {
    const auto box = fixtures::grid_box(Vec3(-20, -10, -5), Vec3(20, 10, 5), 6);
    CHECK((right_vector(box) - Vec3(1, 0, 0)).norm() < 1e-9);

    const Eigen::Affine3d yaw(Eigen::AngleAxisd(10.0 * std::numbers::pi / 180.0, Vec3::UnitZ()));
    CHECK(fixtures::angle_deg(right_vector(box.transformed(yaw)), yaw.linear() * Vec3::UnitX()) < 1.0);

    const Eigen::Affine3d flip(Eigen::AngleAxisd(std::numbers::pi, Vec3::UnitZ()));
    CHECK(right_vector(box.transformed(flip)).dot(kAxisL) > 0.99);

    CHECK((right_vector(fixtures::unit_cube()) - Vec3(1, 0, 0)).norm() < 1e-12);
}

TEST_CASE("frames of a straight box stack are the global axes") {
    const auto spine = fixtures::box_stack(5, 40, 30, 25, 3);
    const auto frames = build_frames(spine);
    REQUIRE(frames.size() == 5);
    for (const auto& f : frames) {
        CHECK((f.up - kAxisS).norm() < 1e-12);
        CHECK((f.right - kAxisL).norm() < 1e-12);
        CHECK((f.front + kAxisP).norm() < 1e-12);
        check_orthonormal(f);
    }
}

TEST_CASE("frames follow a flexed stack") {
    const auto spine = fixtures::box_stack(5, 40, 30, 25, 3);
    const Eigen::Affine3d xf(Eigen::AngleAxisd(10.0 * std::numbers::pi / 180.0, kAxisL));
    for (const auto& f : build_frames(transformed(spine, xf)))
        CHECK(fixtures::angle_deg(f.up, xf.linear() * kAxisS) < 2.0);
}

TEST_CASE("frames are robust to small rotations about each global axis") {
    const auto spine = fixtures::box_stack(5, 40, 30, 25, 3);
    for (const Vec3& axis : {kAxisL, kAxisP, kAxisS}) {
        for (double deg : {-10.0, -4.0, 5.0, 10.0}) {
            const Eigen::Affine3d xf(Eigen::AngleAxisd(deg * std::numbers::pi / 180.0, axis));
            for (const auto& f : build_frames(transformed(spine, xf))) {
                CHECK(fixtures::angle_deg(f.up, xf.linear() * kAxisS) <= 3.0);
                CHECK(fixtures::angle_deg(f.right, xf.linear() * kAxisL) <= 3.0);
                CHECK(fixtures::angle_deg(f.front, xf.linear() * -kAxisP) <= 3.0);
                check_orthonormal(f);
            }
        }
    }
}

TEST_CASE("frames are translation invariant and consistently handed") {
    auto spine = fixtures::box_stack(5, 40, 30, 25, 3);
    const Eigen::Affine3d yaw(Eigen::AngleAxisd(0.2, Vec3(0.3, 0.2, 1.0).normalized()));
    spine = transformed(spine, yaw);
    const Vec3 t(17.0, -250.0, 1000.0);
    const auto a = build_frames(spine);
    const auto b = build_frames(transformed(spine, Eigen::Affine3d(Eigen::Translation3d(t))));
    const double sign = handedness(a[0]);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK((a[i].up - b[i].up).norm() < 1e-12);
        CHECK((a[i].right - b[i].right).norm() < 1e-12);
        CHECK((a[i].front - b[i].front).norm() < 1e-12);
        CHECK((b[i].com - a[i].com - t).norm() < 1e-9);
        CHECK(handedness(a[i]) * sign > 0.0);
    }
}

TEST_CASE("too few vertebrae") {
    const auto spine = fixtures::box_stack(2, 40, 30, 25, 3);
    CHECK(error_of([&] { build_frames(spine); }) == ErrorCode::kTooFewVertebrae);
    const auto frames = build_frames(spine, FrameOptions{true});
    REQUIRE(frames.size() == 2);
    CHECK((frames[0].up - kAxisS).norm() == 0.0);
}

TEST_CASE("label order validation") {
    SpineModel s;
    s.vertebrae = {{"L5", {}}, {"L4", {}}, {"L3", {}}};
    CHECK_NOTHROW(s.validate());
    s.caudal_to_cranial = false;
    CHECK(error_of([&] { s.validate(); }) == ErrorCode::kInvalidManifest);
    s.vertebrae = {{"L1", {}}, {"L1", {}}};
    CHECK(error_of([&] { s.validate(); }) == ErrorCode::kInvalidManifest);
    CHECK(anatomical_rank("T12") + 1 == anatomical_rank("L1"));
    CHECK(anatomical_rank("X3") == -1);
}

TEST_CASE("manifest round trip") {
    const auto dir = fixtures::temp_dir("manifest");
    SpineManifest m;
    m.spine_id = "case_1";
    m.entries = {{"L2", "L2.stl"}, {"L1", "sub/L1.stl"}};
    write_manifest(m, dir / "manifest.json");
    const auto back = read_manifest(dir / "manifest.json");
    CHECK(back.spine_id == "case_1");
    CHECK(back.caudal_to_cranial);
    REQUIRE(back.entries.size() == 2);
    CHECK(back.entries[1].mesh_path == dir / "sub/L1.stl");

    std::ofstream(dir / "bare.json") << R"([{"label": "L3", "mesh": "a.stl"}])";
    const auto bare = read_manifest(dir / "bare.json");
    CHECK(bare.spine_id == dir.filename().string());

    std::ofstream(dir / "broken.json") << R"({"vertebrae": [{"label": 3}]})";
    CHECK(error_of([&] { read_manifest(dir / "broken.json"); }) == ErrorCode::kInvalidManifest);
    std::ofstream(dir / "garbage.json") << "{not json";
    CHECK(error_of([&] { read_manifest(dir / "garbage.json"); }) == ErrorCode::kParseError);
    CHECK(error_of([&] { read_manifest(dir / "nope.json"); }) == ErrorCode::kFileNotFound);
}
