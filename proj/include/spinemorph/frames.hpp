#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "spinemorph/mesh.hpp"

namespace spinemorph {

struct Vertebra {
    std::string label;
    TriangleMesh mesh;
};

/// Ordered, labelled vertebra meshes sharing one LPS frame.
struct SpineModel {
    std::vector<Vertebra> vertebrae;
    bool caudal_to_cranial = true;

    /// Throws invalid-manifest on duplicate labels, or when recognised
    /// anatomical labels (C1..C7, T1..T12, L1..L6, S1..S5) are out of the
    /// order given by `caudal_to_cranial`.
    void validate() const;
};

/// Rank of a label from cranial (C1 = 0) to caudal, or -1 if unrecognised.
int anatomical_rank(const std::string& label);

/// Anatomical frame of one vertebra. `right` points toward global +x (L),
/// `front` anteriorly (-y), `up` superiorly (+z).
struct LocalFrame {
    Vec3 com = Vec3::Zero();
    Vec3 up = kAxisS;
    Vec3 right = kAxisL;
    Vec3 front = -kAxisP;
};

/// Natural cubic spline through 3D control points, parameterised by
/// cumulative chord length normalised to [0, 1].
class SplineCurve {
public:
    SplineCurve(std::vector<Vec3> control_points, std::vector<double> knots,
                std::vector<Vec3> second_derivatives);

    const std::vector<Vec3>& control_points() const noexcept { return points_; }
    const std::vector<double>& knots() const noexcept { return knots_; }
    std::size_t size() const noexcept { return points_.size(); }

    Vec3 evaluate(double t) const;
    Vec3 derivative(double t) const;

private:
    std::size_t segment(double t) const;

    std::vector<Vec3> points_;
    std::vector<double> knots_;
    std::vector<Vec3> second_;
};

/// Throws too-few-points (< 3 points) or coincident-points (consecutive points
/// closer than 1e-3 mm).
SplineCurve fit_com_spline(const std::vector<Vec3>& coms);

/// Unit tangent at control point `index`, oriented so that it has a
/// non-negative superior component.
Vec3 spline_tangent(const SplineCurve& spline, std::size_t index);

/// Signed OBB axis with the largest dot product with global +x.
/// Ties keep the earlier (larger-variance) axis.
Vec3 right_vector(const TriangleMesh& mesh);

struct FrameOptions {
    /// With fewer than 3 vertebrae, use global S as the up-vector instead of failing.
    bool fallback_single = false;
};

/// Per-vertebra frames: CoM, spline-tangent up, OBB right, front = up x right
/// (anterior), then right re-derived as up x front for exact orthonormality.
///
/// Throws too-few-vertebrae, or degenerate-frame when the OBB right-vector is
/// within ~0.06 degrees of the up-vector.
std::vector<LocalFrame> build_frames(const SpineModel& spine, const FrameOptions& options = {});

/// Spine manifest: {"caudal_to_cranial": bool, "vertebrae": [{"label", "mesh"}]}
/// or a bare array of {"label", "mesh"}; mesh paths are relative to the manifest.
struct ManifestEntry {
    std::string label;
    std::filesystem::path mesh_path;
};

struct SpineManifest {
    std::string spine_id;
    bool caudal_to_cranial = true;
    std::vector<ManifestEntry> entries;
};

/// Parses and validates a manifest. `spine_id` comes from the manifest's
/// "spine_id" field, or the manifest's parent directory name.
SpineManifest read_manifest(const std::filesystem::path& path);

void write_manifest(const SpineManifest& manifest, const std::filesystem::path& path);

/// Loads every mesh a manifest references.
SpineModel load_spine(const SpineManifest& manifest);

}  // namespace spinemorph
