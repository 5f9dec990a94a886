#pragma once

// Geometry kernel: indexed triangle meshes in millimetres (LPS world frame)
// and the handful of queries the morphometry pipeline is built on.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace spinemorph {

using Vec3 = Eigen::Vector3d;
using Face = std::array<std::uint32_t, 3>;

/// Tolerance (mm) used for vertex welding and intersection-point deduplication.
inline constexpr double kWeldTolerance = 1e-6;

/// LPS global axes: +x Left, +y Posterior, +z Superior.
inline const Vec3 kAxisL{1.0, 0.0, 0.0};
inline const Vec3 kAxisP{0.0, 1.0, 0.0};
inline const Vec3 kAxisS{0.0, 0.0, 1.0};

/// Indexed triangle surface. Faces are counter-clockwise seen from outside.
///
/// The constructor checks index bounds and rejects faces that reference the
/// same vertex twice; it does not weld. An empty mesh is a valid value (it is
/// what cutting returns when nothing survives).
class TriangleMesh {
public:
    TriangleMesh() = default;
    TriangleMesh(std::vector<Vec3> vertices, std::vector<Face> faces);

    const std::vector<Vec3>& vertices() const noexcept { return vertices_; }
    const std::vector<Face>& faces() const noexcept { return faces_; }

    std::size_t vertex_count() const noexcept { return vertices_.size(); }
    std::size_t face_count() const noexcept { return faces_.size(); }
    bool empty() const noexcept { return faces_.empty(); }

    std::array<Vec3, 3> triangle(std::size_t face) const;

    /// Returns a copy with every vertex mapped through `transform`. Winding is
    /// kept, so a reflection turns normals inside out.
    TriangleMesh transformed(const Eigen::Affine3d& transform) const;

    /// Sub-mesh made of the listed faces; unreferenced vertices are dropped and
    /// the survivors keep their relative order.
    TriangleMesh submesh(std::span<const std::size_t> face_indices) const;

private:
    std::vector<Vec3> vertices_;
    std::vector<Face> faces_;
};

/// Merges vertices closer than `tolerance`, drops faces that collapse and
/// vertices no face references.
TriangleMesh weld(std::span<const Vec3> vertices, std::span<const Face> faces,
                  double tolerance = kWeldTolerance);

/// Removes points closer than `tolerance` to an earlier point; keeps first-seen order.
std::vector<Vec3> deduplicate_points(std::span<const Vec3> points,
                                     double tolerance = kWeldTolerance);

/// Concatenates meshes without welding.
TriangleMesh merge(std::span<const TriangleMesh> parts);

struct Plane {
    Vec3 origin = Vec3::Zero();
    Vec3 normal = kAxisS;

    /// Normalizes `normal`; throws degenerate-geometry for a zero vector.
    static Plane through(const Vec3& origin, const Vec3& normal);

    double signed_distance(const Vec3& p) const { return (p - origin).dot(normal); }
    Plane flipped() const { return Plane{origin, -normal}; }
};

struct ObbFrame {
    Vec3 center = Vec3::Zero();
    /// Principal axes, descending variance.
    std::array<Vec3, 3> axes{kAxisL, kAxisP, kAxisS};
    std::array<double, 3> half_extents{0.0, 0.0, 0.0};
    std::array<double, 3> variances{0.0, 0.0, 0.0};
};

double face_area(const TriangleMesh& mesh, std::size_t face);
double surface_area(const TriangleMesh& mesh);

/// Unweighted mean of the vertex positions. Throws degenerate-mesh if empty.
Vec3 center_of_mass(const TriangleMesh& mesh);

/// Area-weighted vertex normals (unit length); isolated vertices get zero.
std::vector<Vec3> vertex_normals(const TriangleMesh& mesh);

/// PCA box of the vertex cloud. Axis signs: each axis points along the
/// positive direction of the global axis it is most aligned with.
ObbFrame oriented_bounding_box(const TriangleMesh& mesh);

/// Part of the mesh on the positive side of `plane`, triangles clipped at
/// the plane. Faces lying in the plane are kept when they face away from the
/// kept half-space (they bound it).
TriangleMesh cut_mesh_by_plane(const TriangleMesh& mesh, const Plane& plane);

/// Edge/plane crossings plus vertices lying on the plane, deduplicated.
std::vector<Vec3> plane_mesh_intersection(const TriangleMesh& mesh, const Plane& plane);

/// Hits of the infinite line origin + t*direction, sorted by t.
std::vector<Vec3> line_mesh_intersection(const TriangleMesh& mesh, const Vec3& origin,
                                         const Vec3& direction);

/// Vertices per mm^2 of surface.
double mesh_density(const TriangleMesh& mesh);

}  // namespace spinemorph
