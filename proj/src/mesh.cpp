#include "spinemorph/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <utility>

#include <Eigen/Eigenvalues>

#include "point_index.hpp"
#include "spinemorph/error.hpp"

namespace spinemorph {

namespace {

// Vertices closer than this to a plane count as lying on it.
constexpr double kOnPlaneEps = 1e-9;

Vec3 face_cross(const TriangleMesh& mesh, const Face& f) {
    const auto& v = mesh.vertices();
    return (v[f[1]] - v[f[0]]).cross(v[f[2]] - v[f[0]]);
}

}  // namespace

TriangleMesh::TriangleMesh(std::vector<Vec3> vertices, std::vector<Face> faces)
    : vertices_(std::move(vertices)), faces_(std::move(faces)) {
    const auto n = vertices_.size();
    for (std::size_t i = 0; i < faces_.size(); ++i) {
        const auto& f = faces_[i];
        if (f[0] >= n || f[1] >= n || f[2] >= n)
            throw Error(ErrorCode::kDegenerateMesh,
                        "face " + std::to_string(i) + " references a vertex out of range");
        if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2])
            throw Error(ErrorCode::kDegenerateMesh,
                        "face " + std::to_string(i) + " references the same vertex twice");
    }
}

std::array<Vec3, 3> TriangleMesh::triangle(std::size_t face) const {
    const auto& f = faces_[face];
    return {vertices_[f[0]], vertices_[f[1]], vertices_[f[2]]};
}

TriangleMesh TriangleMesh::transformed(const Eigen::Affine3d& transform) const {
    std::vector<Vec3> out;
    out.reserve(vertices_.size());
    for (const auto& v : vertices_) out.push_back(transform * v);
    TriangleMesh result;
    result.vertices_ = std::move(out);
    result.faces_ = faces_;
    return result;
}

TriangleMesh TriangleMesh::submesh(std::span<const std::size_t> face_indices) const {
    constexpr auto kUnset = std::numeric_limits<std::uint32_t>::max();
    std::vector<std::uint32_t> remap(vertices_.size(), kUnset);
    std::vector<bool> used(vertices_.size(), false);
    for (auto fi : face_indices)
        for (auto vi : faces_[fi]) used[vi] = true;

    std::vector<Vec3> verts;
    for (std::size_t i = 0; i < vertices_.size(); ++i) {
        if (!used[i]) continue;
        remap[i] = static_cast<std::uint32_t>(verts.size());
        verts.push_back(vertices_[i]);
    }
    std::vector<Face> faces;
    faces.reserve(face_indices.size());
    for (auto fi : face_indices) {
        const auto& f = faces_[fi];
        faces.push_back({remap[f[0]], remap[f[1]], remap[f[2]]});
    }
    TriangleMesh result;
    result.vertices_ = std::move(verts);
    result.faces_ = std::move(faces);
    return result;
}

TriangleMesh weld(std::span<const Vec3> vertices, std::span<const Face> faces, double tolerance) {
    detail::PointIndex index(tolerance);
    std::vector<std::uint32_t> remap(vertices.size());
    for (std::size_t i = 0; i < vertices.size(); ++i) remap[i] = index.insert(vertices[i]);

    std::vector<Face> kept;
    kept.reserve(faces.size());
    for (const auto& f : faces) {
        if (f[0] >= vertices.size() || f[1] >= vertices.size() || f[2] >= vertices.size())
            throw Error(ErrorCode::kDegenerateMesh, "face references a vertex out of range");
        Face g{remap[f[0]], remap[f[1]], remap[f[2]]};
        if (g[0] == g[1] || g[1] == g[2] || g[0] == g[2]) continue;
        kept.push_back(g);
    }

    // Drop unreferenced vertices, preserving first-seen order.
    TriangleMesh welded(index.points(), std::move(kept));
    std::vector<std::size_t> all(welded.face_count());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return welded.submesh(all);
}

std::vector<Vec3> deduplicate_points(std::span<const Vec3> points, double tolerance) {
    detail::PointIndex index(tolerance);
    for (const auto& p : points) index.insert(p);
    return index.points();
}

TriangleMesh merge(std::span<const TriangleMesh> parts) {
    std::vector<Vec3> verts;
    std::vector<Face> faces;
    for (const auto& part : parts) {
        const auto offset = static_cast<std::uint32_t>(verts.size());
        verts.insert(verts.end(), part.vertices().begin(), part.vertices().end());
        for (const auto& f : part.faces()) faces.push_back({f[0] + offset, f[1] + offset, f[2] + offset});
    }
    return TriangleMesh(std::move(verts), std::move(faces));
}

Plane Plane::through(const Vec3& origin, const Vec3& normal) {
    const double n = normal.norm();
    if (!(n > 0.0) || !std::isfinite(n))
        throw Error(ErrorCode::kDegenerateGeometry, "plane normal has zero length");
    return Plane{origin, normal / n};
}

double face_area(const TriangleMesh& mesh, std::size_t face) {
    return 0.5 * face_cross(mesh, mesh.faces()[face]).norm();
}

double surface_area(const TriangleMesh& mesh) {
    double area = 0.0;
    for (const auto& f : mesh.faces()) area += 0.5 * face_cross(mesh, f).norm();
    return area;
}

Vec3 center_of_mass(const TriangleMesh& mesh) {
    if (mesh.vertex_count() == 0)
        throw Error(ErrorCode::kDegenerateMesh, "center of mass of an empty mesh");
    Vec3 sum = Vec3::Zero();
    for (const auto& v : mesh.vertices()) sum += v;
    return sum / static_cast<double>(mesh.vertex_count());
}

std::vector<Vec3> vertex_normals(const TriangleMesh& mesh) {
    std::vector<Vec3> normals(mesh.vertex_count(), Vec3::Zero());
    // The unnormalized cross product is twice the face area times its normal.
    for (const auto& f : mesh.faces()) {
        const Vec3 c = face_cross(mesh, f);
        for (auto vi : f) normals[vi] += c;
    }
    for (auto& n : normals) {
        const double len = n.norm();
        if (len > 0.0) n /= len;
        else n.setZero();
    }
    return normals;
}

namespace {

// Makes the axis point along the positive global direction it follows most
// closely; on a tie between global components the first nonzero component
// is made positive.
Vec3 canonical_sign(const Vec3& axis) {
    const Vec3 a = axis.cwiseAbs();
    const double top = a.maxCoeff();
    int dominant = 0;
    int ties = 0;
    for (int k = 0; k < 3; ++k)
        if (top - a[k] <= 1e-12) {
            if (ties == 0) dominant = k;
            ++ties;
        }
    if (ties > 1) {
        for (int k = 0; k < 3; ++k)
            if (a[k] > 1e-12) {
                dominant = k;
                break;
            }
    }
    return axis[dominant] < 0.0 ? Vec3(-axis) : axis;
}

}  // namespace

ObbFrame oriented_bounding_box(const TriangleMesh& mesh) {
    const auto& verts = mesh.vertices();
    if (verts.size() < 3)
        throw Error(ErrorCode::kDegenerateGeometry, "oriented bounding box needs at least 3 vertices");

    const Vec3 mean = center_of_mass(mesh);
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& v : verts) {
        const Vec3 d = v - mean;
        cov += d * d.transpose();
    }
    cov /= static_cast<double>(verts.size());

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
    if (solver.info() != Eigen::Success)
        throw Error(ErrorCode::kDegenerateGeometry, "covariance eigen-decomposition failed");

    // Eigen sorts ascending; we want descending.
    std::array<double, 3> lambda{solver.eigenvalues()[2], solver.eigenvalues()[1],
                                 solver.eigenvalues()[0]};
    std::array<Vec3, 3> vec{solver.eigenvectors().col(2), solver.eigenvectors().col(1),
                            solver.eigenvectors().col(0)};

    const double scale = std::max(lambda[0], 0.0);
    if (!(scale > 0.0) || lambda[1] <= 1e-12 * scale)
        throw Error(ErrorCode::kDegenerateGeometry, "vertex covariance has rank < 2 (collinear vertices)");

    // Within a cluster of (numerically) equal eigenvalues the solver's basis is
    // arbitrary; replace it with the global axes projected into the cluster's
    // eigenspace, taken in order of how much of each survives the projection.
    const double tie_tol = 1e-9 * scale;
    for (int start = 0; start < 3;) {
        int stop = start + 1;
        while (stop < 3 && lambda[stop - 1] - lambda[stop] <= tie_tol) ++stop;
        const int size = stop - start;
        if (size > 1) {
            Eigen::Matrix3d projector = Eigen::Matrix3d::Zero();
            for (int i = start; i < stop; ++i) projector += vec[i] * vec[i].transpose();
            std::array<Vec3, 3> global{kAxisL, kAxisP, kAxisS};
            std::array<int, 3> order{0, 1, 2};
            std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
                return (projector * global[a]).norm() > (projector * global[b]).norm() + 1e-12;
            });
            std::vector<Vec3> basis;
            for (int g : order) {
                if (static_cast<int>(basis.size()) == size) break;
                Vec3 candidate = projector * global[g];
                for (const auto& b : basis) candidate -= candidate.dot(b) * b;
                if (candidate.norm() > 1e-6) basis.push_back(candidate.normalized());
            }
            for (int i = 0; i < size && i < static_cast<int>(basis.size()); ++i) vec[start + i] = basis[i];
        }
        start = stop;
    }

    ObbFrame obb;
    obb.axes[0] = vec[0].normalized();
    obb.axes[1] = (vec[1] - vec[1].dot(obb.axes[0]) * obb.axes[0]).normalized();
    obb.axes[2] = obb.axes[0].cross(obb.axes[1]).normalized();
    for (auto& axis : obb.axes) axis = canonical_sign(axis);

    obb.center = mean;
    for (int k = 0; k < 3; ++k) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (const auto& v : verts) {
            const double s = (v - mean).dot(obb.axes[k]);
            lo = std::min(lo, s);
            hi = std::max(hi, s);
        }
        obb.half_extents[k] = 0.5 * (hi - lo);
        obb.center += 0.5 * (hi + lo) * obb.axes[k];
        obb.variances[k] = std::max(lambda[k], 0.0);
    }
    return obb;
}

TriangleMesh cut_mesh_by_plane(const TriangleMesh& mesh, const Plane& plane) {
    const auto& verts = mesh.vertices();
    std::vector<double> dist(verts.size());
    for (std::size_t i = 0; i < verts.size(); ++i) dist[i] = plane.signed_distance(verts[i]);

    // Output vertex ids: original vertices first (on demand), edge crossings cached by edge.
    constexpr auto kUnset = std::numeric_limits<std::uint32_t>::max();
    std::vector<std::uint32_t> kept_id(verts.size(), kUnset);
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> crossing_id;
    std::vector<Vec3> out_verts;
    std::vector<Face> out_faces;

    auto original = [&](std::uint32_t vi) {
        if (kept_id[vi] == kUnset) {
            kept_id[vi] = static_cast<std::uint32_t>(out_verts.size());
            out_verts.push_back(verts[vi]);
        }
        return kept_id[vi];
    };
    auto crossing = [&](std::uint32_t a, std::uint32_t b) {
        if (a > b) std::swap(a, b);
        auto [it, inserted] = crossing_id.try_emplace({a, b}, 0u);
        if (inserted) {
            const double t = dist[a] / (dist[a] - dist[b]);
            it->second = static_cast<std::uint32_t>(out_verts.size());
            out_verts.push_back(verts[a] + t * (verts[b] - verts[a]));
        }
        return it->second;
    };
    auto side = [&](std::uint32_t vi) {
        if (dist[vi] > kOnPlaneEps) return 1;
        if (dist[vi] < -kOnPlaneEps) return -1;
        return 0;
    };

    for (const auto& f : mesh.faces()) {
        const std::array<int, 3> s{side(f[0]), side(f[1]), side(f[2])};
        const bool any_inside = s[0] > 0 || s[1] > 0 || s[2] > 0;
        const bool any_outside = s[0] < 0 || s[1] < 0 || s[2] < 0;

        if (!any_inside && !any_outside) {
            // Face lies in the plane: it bounds the kept side iff it faces away from it.
            if (face_cross(mesh, f).dot(plane.normal) < 0.0)
                out_faces.push_back({original(f[0]), original(f[1]), original(f[2])});
            continue;
        }
        if (!any_inside) continue;
        if (!any_outside) {
            out_faces.push_back({original(f[0]), original(f[1]), original(f[2])});
            continue;
        }

        // Sutherland-Hodgman against a single plane; at most 4 output corners.
        std::vector<std::uint32_t> poly;
        for (int k = 0; k < 3; ++k) {
            const auto a = f[k];
            const auto b = f[(k + 1) % 3];
            const int sa = s[k];
            const int sb = s[(k + 1) % 3];
            if (sa >= 0) poly.push_back(original(a));
            if ((sa > 0 && sb < 0) || (sa < 0 && sb > 0)) poly.push_back(crossing(a, b));
        }
        for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
            const Face g{poly[0], poly[k], poly[k + 1]};
            if (g[0] == g[1] || g[1] == g[2] || g[0] == g[2]) continue;
            out_faces.push_back(g);
        }
    }
    return TriangleMesh(std::move(out_verts), std::move(out_faces));
}

std::vector<Vec3> plane_mesh_intersection(const TriangleMesh& mesh, const Plane& plane) {
    const auto& verts = mesh.vertices();
    std::vector<double> dist(verts.size());
    for (std::size_t i = 0; i < verts.size(); ++i) dist[i] = plane.signed_distance(verts[i]);

    std::vector<Vec3> hits;
    for (const auto& f : mesh.faces()) {
        for (int k = 0; k < 3; ++k) {
            auto a = f[k];
            auto b = f[(k + 1) % 3];
            if (std::abs(dist[a]) <= kOnPlaneEps) {
                hits.push_back(verts[a]);
                continue;
            }
            if (std::abs(dist[b]) <= kOnPlaneEps) continue;
            if ((dist[a] > 0.0) == (dist[b] > 0.0)) continue;
            // Same edge from either side interpolates identically.
            if (a > b) std::swap(a, b);
            const double t = dist[a] / (dist[a] - dist[b]);
            hits.push_back(verts[a] + t * (verts[b] - verts[a]));
        }
    }
    return deduplicate_points(hits);
}

std::vector<Vec3> line_mesh_intersection(const TriangleMesh& mesh, const Vec3& origin,
                                         const Vec3& direction) {
    // Moller-Trumbore without the t >= 0 restriction.
    constexpr double kBaryEps = 1e-9;
    std::vector<std::pair<double, Vec3>> hits;
    for (std::size_t fi = 0; fi < mesh.face_count(); ++fi) {
        const auto [p0, p1, p2] = mesh.triangle(fi);
        const Vec3 e1 = p1 - p0;
        const Vec3 e2 = p2 - p0;
        const Vec3 pv = direction.cross(e2);
        const double det = e1.dot(pv);
        if (std::abs(det) <= 1e-14 * e1.norm() * e2.norm()) continue;
        const double inv = 1.0 / det;
        const Vec3 tv = origin - p0;
        const double u = tv.dot(pv) * inv;
        if (u < -kBaryEps || u > 1.0 + kBaryEps) continue;
        const Vec3 qv = tv.cross(e1);
        const double v = direction.dot(qv) * inv;
        if (v < -kBaryEps || u + v > 1.0 + kBaryEps) continue;
        const double t = e2.dot(qv) * inv;
        hits.emplace_back(t, origin + t * direction);
    }
    std::stable_sort(hits.begin(), hits.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });

    std::vector<Vec3> out;
    for (const auto& [t, p] : hits) {
        bool duplicate = false;
        for (const auto& q : out)
            if ((q - p).norm() <= kWeldTolerance) {
                duplicate = true;
                break;
            }
        if (!duplicate) out.push_back(p);
    }
    return out;
}

double mesh_density(const TriangleMesh& mesh) {
    const double area = surface_area(mesh);
    if (!(area > 0.0)) throw Error(ErrorCode::kDegenerateGeometry, "mesh has zero surface area");
    return static_cast<double>(mesh.vertex_count()) / area;
}

}  // namespace spinemorph
