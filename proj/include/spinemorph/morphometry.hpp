#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spinemorph/frames.hpp"
#include "spinemorph/mesh.hpp"

namespace spinemorph {

/// Anterior portion of a vertebra after the frontal cut.
struct VertebralBody {
    TriangleMesh mesh;
    Vec3 com = Vec3::Zero();
};

struct EndplatePair {
    TriangleMesh upper;
    TriangleMesh lower;
};

/// The ten landmarks (world coordinates). Index 1 is anterior for d_*, on the
/// +right side for w_*; h_1 lies on the upper endplate.
struct Landmarks {
    Vec3 w_u1 = Vec3::Zero(), w_u2 = Vec3::Zero(), w_l1 = Vec3::Zero(), w_l2 = Vec3::Zero();
    Vec3 d_u1 = Vec3::Zero(), d_u2 = Vec3::Zero(), d_l1 = Vec3::Zero(), d_l2 = Vec3::Zero();
    Vec3 h_1 = Vec3::Zero(), h_2 = Vec3::Zero();

    static constexpr std::array<std::string_view, 10> kNames{"w_u1", "w_u2", "w_l1", "w_l2", "d_u1",
                                                             "d_u2", "d_l1", "d_l2", "h_1",  "h_2"};
    const Vec3& operator[](std::size_t i) const;
    Vec3& operator[](std::size_t i);
};

enum class Dimension {
    kWidthUpper,
    kWidthLower,
    kDepthUpper,
    kDepthLower,
    kHeightCentral,
    kHeightAnterior,
    kHeightPosterior,
    kHeightLeft,
    kHeightRight,
};

inline constexpr std::size_t kDimensionCount = 9;

inline constexpr std::array<std::string_view, kDimensionCount> kDimensionKeys{
    "width_upper",    "width_lower",      "depth_upper", "depth_lower", "height_central",
    "height_anterior", "height_posterior", "height_left", "height_right"};

/// Landmark notation of each dimension, e.g. "w_u1w_u2".
inline constexpr std::array<std::string_view, kDimensionCount> kDimensionNotation{
    "w_u1w_u2", "w_l1w_l2", "d_u1d_u2", "d_l1d_l2", "h_1h_2", "d_u1d_l1", "d_u2d_l2", "w_u1w_l1", "w_u2w_l2"};

std::optional<Dimension> dimension_from_key(std::string_view key);

/// Nine distances in mm, indexable by Dimension.
struct Measurements {
    std::array<double, kDimensionCount> values{};

    double operator[](Dimension d) const { return values[static_cast<std::size_t>(d)]; }
    double& operator[](Dimension d) { return values[static_cast<std::size_t>(d)]; }
};

/// Cuts `mesh` with the frontal plane through frame.com (normal frame.front)
/// and keeps the anterior side. Throws empty-body if nothing remains.
VertebralBody extract_vertebral_body(const TriangleMesh& mesh, const LocalFrame& frame);

/// Upper endplate: faces whose three vertex normals all satisfy
/// n . up >= cos(max_angle); lower: n . up <= -cos(max_angle). Of each
/// candidate set only the connected component with the extreme vertex mean
/// along `up` is kept. Throws endplate-not-found.
EndplatePair extract_endplates(const VertebralBody& body, const LocalFrame& frame, double max_angle_deg = 45.0);

struct LandmarkDiagnostics {
    bool h1_fallback = false;
    bool h2_fallback = false;
};

/// Landmarks from the endplates cut by the sagittal (normal right) and
/// frontal (normal front) planes through body.com; h_1/h_2 from the line
/// through body.com along up. Throws no-intersection.
Landmarks compute_landmarks(const EndplatePair& plates, const VertebralBody& body, const LocalFrame& frame,
                            LandmarkDiagnostics* diagnostics = nullptr);

Measurements compute_dimensions(const Landmarks& lm);

struct MeasureOptions {
    double max_angle_deg = 45.0;
    bool fallback_single = false;
};

struct VertebraResult {
    std::string label;
    std::optional<LocalFrame> frame;
    std::optional<Landmarks> landmarks;
    std::optional<Measurements> measurements;
    double density_per_mm2 = 0.0;
    std::vector<std::string> warnings;
    /// Empty on success; otherwise "<error-code>: <message>".
    std::string error;
    /// Wall-clock milliseconds per pipeline step; kept out of the main report.
    std::map<std::string, double> timings_ms;

    bool ok() const { return error.empty() && measurements.has_value(); }
};

struct SpineReport {
    std::string spine_id;
    MeasureOptions options;
    std::vector<VertebraResult> vertebrae;

    std::size_t failures() const;
};

/// Frames once, then body -> endplates -> landmarks -> dimensions per vertebra.
/// Per-vertebra failures are recorded, not thrown; frame-estimation failures
/// mark every vertebra failed.
SpineReport measure_spine(const SpineModel& spine, const MeasureOptions& options = {});

/// Loads the manifest's meshes and measures. A missing mesh file is a
/// top-level error (file-not-found naming the path); a mesh that fails to
/// parse is recorded against its label and left out of frame estimation.
SpineReport measure_manifest(const std::filesystem::path& manifest_path, const MeasureOptions& options = {});

/// Report JSON without wall-clock data; byte-stable for identical input.
std::string report_to_json(const SpineReport& report);
/// Sidecar with per-vertebra timings.
std::string timings_to_json(const SpineReport& report);
/// One row per vertebra: spine_id,label,status,<nine dimension keys>.
std::string report_to_csv(const SpineReport& report);
/// Parses JSON written by report_to_json (landmarks, dimensions, status).
SpineReport report_from_json(std::string_view json);

}  // namespace spinemorph
