#pragma once

// Parametric vertebrae and lordotic spines with closed-form ground truth.
//
// Local vertebra frame: x lateral (+L), y posterior, z superior; the body's
// mid-point sits at the origin. The body is an elliptic prism (width along x,
// depth along y) whose endplates may be domed (paraboloid concavity) and
// wedged (anterior taller than posterior). A box behind the body stands in
// for the posterior elements; it is placed so that the vertex-mean CoM of the
// whole vertebra falls a few millimetres behind the body, inside the canal.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "spinemorph/frames.hpp"
#include "spinemorph/mesh.hpp"
#include "spinemorph/morphometry.hpp"

namespace spinemorph {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    bool contains(double x) const { return x >= lo && x <= hi; }
};

/// Sampling ranges. Defaults follow the published artificial lumbar dataset.
struct ParameterRanges {
    Interval width{34.84, 62.78};
    Interval depth{24.20, 45.10};
    Interval height_central{16.84, 33.16};
    Interval lordosis_deg{40.0, 74.0};
    Interval dome{0.0, 1.5};
    Interval wedge_deg{0.0, 5.0};
};

struct VertebraSpec {
    double width = 45.0;
    double depth = 32.0;
    /// Body height at the endplate centres (dome nadir to dome nadir).
    double height_central = 25.0;
    /// Concavity depth of each endplate below its rim.
    double endplate_dome = 0.0;
    /// Angle between the endplate rim planes; anterior side taller.
    double wedge_angle_deg = 0.0;
    /// Posterior block (x, y, z) extent; zero means (0.6 w, 0.8 d, 0.6 h).
    Vec3 posterior_element_size = Vec3::Zero();

    /// Throws invalid-spec.
    void validate() const;
    /// Throws invalid-spec when width/depth/height lie outside `ranges`.
    void validate_ranges(const ParameterRanges& ranges) const;
};

struct VertebraTruth {
    Landmarks landmarks;
    Measurements measurements;
};

struct GeneratedVertebra {
    TriangleMesh mesh;
    /// The first `body_face_count` faces form the body.
    std::size_t body_face_count = 0;
    /// Local coordinates.
    VertebraTruth truth;
};

inline constexpr double kDefaultResolution = 0.16;  // vertices per mm^2

/// `resolution` in vertices per mm^2, within [0.05, 20].
GeneratedVertebra generate_vertebra(const VertebraSpec& spec, double resolution = kDefaultResolution);

/// Body-only part of a generated vertebra.
TriangleMesh body_submesh(const GeneratedVertebra& vertebra);

struct SpineSpec {
    std::uint64_t seed = 0;
    /// Angle between the first and last vertebra's placement frames.
    double lordosis_deg = 0.0;
    /// Caudal to cranial; size is the vertebra count.
    std::vector<VertebraSpec> vertebrae;
};

struct GeneratedSpine {
    /// Caudal to cranial, e.g. L5..L1.
    std::vector<std::string> labels;
    std::vector<TriangleMesh> meshes;
    /// World coordinates.
    std::vector<VertebraTruth> truths;
    /// Local-to-world rigid transforms.
    std::vector<Eigen::Isometry3d> placements;

    SpineModel model() const;
};

/// Labels of the `count` most caudal vertebrae of T1..L5, caudal first.
std::vector<std::string> lumbar_labels(std::size_t count);

/// Places vertebrae so their CoMs lie on a circular arc in the sagittal
/// (y-z) plane, up-vectors tangent to it, concave posteriorly. Consecutive
/// CoMs are spaced by the mean rim height plus a gap of 10% of the mean
/// central height.
GeneratedSpine generate_spine(const SpineSpec& spec, double resolution = kDefaultResolution);

/// Writes manifest.json, <label>.stl and ground_truth.csv into `dir`.
void write_spine(const GeneratedSpine& spine, const std::string& spine_id, const std::filesystem::path& dir);

/// Deterministic draw for spine `index` of a dataset seeded with `seed`.
SpineSpec sample_spine_spec(std::uint64_t seed, std::size_t index, const ParameterRanges& ranges,
                            std::size_t vertebra_count = 5);

struct DatasetOptions {
    std::size_t count = 50;
    std::uint64_t seed = 7;
    double resolution = kDefaultResolution;
    std::size_t vertebra_count = 5;
    ParameterRanges ranges;
    unsigned jobs = 1;
};

struct DatasetManifest {
    std::filesystem::path root;
    std::vector<std::string> spine_ids;
    std::vector<std::filesystem::path> manifests;
};

/// Writes <out>/spine_###/{manifest.json, L#.stl, ground_truth.csv},
/// <out>/ground_truth.csv and <out>/dataset.json.
DatasetManifest generate_dataset(const DatasetOptions& options, const std::filesystem::path& out_dir);

/// Header and rows of the ground-truth CSV: spine_id, label, nine dimensions,
/// thirty landmark coordinates (w_u1_x, w_u1_y, ...).
std::string ground_truth_csv_header();
std::string ground_truth_csv_row(const std::string& spine_id, const std::string& label, const VertebraTruth& truth);

}  // namespace spinemorph
