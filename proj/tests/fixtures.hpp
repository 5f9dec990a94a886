#pragma once

// Test meshes and independent reference computations.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "spinemorph/frames.hpp"
#include "spinemorph/mesh.hpp"

namespace fixtures {

using spinemorph::Face;
using spinemorph::TriangleMesh;
using spinemorph::Vec3;

inline TriangleMesh unit_cube() {
    std::vector<Vec3> v{{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
    std::vector<Face> f{{0, 2, 1}, {0, 3, 2}, {4, 5, 6}, {4, 6, 7}, {0, 1, 5}, {0, 5, 4},
                        {1, 2, 6}, {1, 6, 5}, {2, 3, 7}, {2, 7, 6}, {3, 0, 4}, {3, 4, 7}};
    return TriangleMesh(v, f);
}

/// Closed axis-aligned box with `cells[a]` grid cells along axis a, outward winding.
inline TriangleMesh grid_box(const Vec3& lo, const Vec3& hi, std::array<int, 3> cells) {
    std::vector<Vec3> verts;
    std::vector<Face> faces;
    std::map<std::array<long long, 3>, std::uint32_t> index;
    auto vid = [&](const Vec3& p) {
        const std::array<long long, 3> key{std::llround(p.x() * 1e6), std::llround(p.y() * 1e6), std::llround(p.z() * 1e6)};
        auto it = index.find(key);
        if (it != index.end()) return it->second;
        const auto id = static_cast<std::uint32_t>(verts.size());
        verts.push_back(p);
        index.emplace(key, id);
        return id;
    };
    // axis `a` fixed at lo or hi; (u, v) chosen so u x v is outward.
    auto side = [&](int a, bool high, int u, int v) {
        const int nu = cells[u], nv = cells[v];
        for (int i = 0; i < nu; ++i)
            for (int j = 0; j < nv; ++j) {
                auto at = [&](int ii, int jj) {
                    Vec3 p;
                    p[a] = high ? hi[a] : lo[a];
                    p[u] = ii == nu ? hi[u] : lo[u] + (hi[u] - lo[u]) * ii / nu;
                    p[v] = jj == nv ? hi[v] : lo[v] + (hi[v] - lo[v]) * jj / nv;
                    return vid(p);
                };
                const auto p00 = at(i, j), p10 = at(i + 1, j), p11 = at(i + 1, j + 1), p01 = at(i, j + 1);
                faces.push_back({p00, p10, p11});
                faces.push_back({p00, p11, p01});
            }
    };
    side(0, false, 2, 1);
    side(0, true, 1, 2);
    side(1, false, 0, 2);
    side(1, true, 2, 0);
    side(2, false, 1, 0);
    side(2, true, 0, 1);
    return TriangleMesh(verts, faces);
}

inline TriangleMesh grid_box(const Vec3& lo, const Vec3& hi, int n) { return grid_box(lo, hi, {n, n, n}); }

inline TriangleMesh icosphere(double radius, int level, const Vec3& center = Vec3::Zero()) {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> v{{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                        {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    for (auto& p : v) p.normalize();
    std::vector<Face> f{{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                        {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                        {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
    for (int l = 0; l < level; ++l) {
        std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> mid;
        auto midpoint = [&](std::uint32_t a, std::uint32_t b) {
            const auto key = std::minmax(a, b);
            auto it = mid.find(key);
            if (it != mid.end()) return it->second;
            const auto id = static_cast<std::uint32_t>(v.size());
            v.push_back((v[a] + v[b]).normalized());
            mid.emplace(key, id);
            return id;
        };
        std::vector<Face> next;
        for (const auto& tri : f) {
            const auto a = midpoint(tri[0], tri[1]), b = midpoint(tri[1], tri[2]), c = midpoint(tri[2], tri[0]);
            next.push_back({tri[0], a, c});
            next.push_back({tri[1], b, a});
            next.push_back({tri[2], c, b});
            next.push_back({a, b, c});
        }
        f = std::move(next);
    }
    for (auto& p : v) p = center + radius * p;
    return TriangleMesh(v, f);
}

/// Box "vertebra": body w x d x h centred at `center` plus a posterior block
/// separated by a gap wide enough that the vertex mean lies in the gap. The
/// sides are split finely along z so rim vertex normals stay near +-z.
struct BoxVertebra {
    TriangleMesh mesh;
    TriangleMesh body;
    Vec3 body_center;
};

inline BoxVertebra box_vertebra(double w, double d, double h, const Vec3& center) {
    const std::array<int, 3> n{4, 4, 16};
    BoxVertebra out;
    out.body_center = center;
    out.body = grid_box(center - Vec3(w / 2, d / 2, h / 2), center + Vec3(w / 2, d / 2, h / 2), n);
    // Same tessellation as the body, so the vertex mean sits halfway between them.
    const double gap = 10.0;
    const Vec3 block_center = center + Vec3(0, d + gap, 0);
    const TriangleMesh block =
        grid_box(block_center - Vec3(0.6 * w / 2, d / 2, 0.6 * h / 2), block_center + Vec3(0.6 * w / 2, d / 2, 0.6 * h / 2), n);
    const TriangleMesh parts[] = {out.body, block};
    out.mesh = spinemorph::merge(parts);
    return out;
}

/// Straight stack of identical box vertebrae along +z, caudal first.
inline spinemorph::SpineModel box_stack(int count, double w, double d, double h, double gap) {
    spinemorph::SpineModel spine;
    const char* labels[] = {"L5", "L4", "L3", "L2", "L1"};
    for (int i = 0; i < count; ++i) {
        const double z = i * (h + gap);
        spine.vertebrae.push_back({labels[i], box_vertebra(w, d, h, Vec3(0, 0, z)).mesh});
    }
    return spine;
}

/// Mean of a point list by direct summation.
inline Vec3 brute_mean(const std::vector<Vec3>& pts) {
    double x = 0, y = 0, z = 0;
    for (const auto& p : pts) {
        x += p.x();
        y += p.y();
        z += p.z();
    }
    const double n = static_cast<double>(pts.size());
    return {x / n, y / n, z / n};
}

/// ICC(2,1) from explicit double loops over the two-way ANOVA table.
/// Residual sum of squares is accumulated from the interaction residuals
/// rather than by subtraction.
inline double anova_icc21(const std::vector<std::vector<double>>& x) {
    const std::size_t n = x.size(), k = x[0].size();
    double grand = 0;
    std::vector<double> row(n, 0.0), col(k, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            row[i] += x[i][j] / k;
            col[j] += x[i][j] / n;
            grand += x[i][j] / (n * k);
        }
    double ssr = 0, ssc = 0, sse = 0;
    for (std::size_t i = 0; i < n; ++i) ssr += (row[i] - grand) * (row[i] - grand) * k;
    for (std::size_t j = 0; j < k; ++j) ssc += (col[j] - grand) * (col[j] - grand) * n;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            const double r = x[i][j] - row[i] - col[j] + grand;
            sse += r * r;
        }
    const double msr = ssr / (n - 1.0), msc = ssc / (k - 1.0), mse = sse / ((n - 1.0) * (k - 1.0));
    return (msr - mse) / (msr + (k - 1.0) * mse + k * (msc - mse) / n);
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("spinemorph_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Angle in degrees between two directions.
inline double angle_deg(const Vec3& a, const Vec3& b) {
    const double c = std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0);
    return std::acos(c) * 180.0 / std::numbers::pi;
}

}  // namespace fixtures
