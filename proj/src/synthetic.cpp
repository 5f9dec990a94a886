#include "spinemorph/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "parallel.hpp"
#include "spinemorph/error.hpp"
#include "spinemorph/mesh_io.hpp"
#include "text_util.hpp"

namespace spinemorph {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
// Vertebra CoM sits this far behind the posterior body wall.
constexpr double kCanalOffset = 4.0;
// Minimum clearance between that CoM and the posterior block.
constexpr double kBlockClearance = 2.0;
// Wall rows touching a rim are this fraction of the nominal edge length, so
// rim vertex normals stay dominated by the endplate faces.
constexpr double kRimRowFraction = 0.4;

double ellipse_perimeter(double a, double b) {
    const double h = (a - b) * (a - b) / ((a + b) * (a + b));
    return std::numbers::pi * (a + b) * (1.0 + 3.0 * h / (10.0 + std::sqrt(4.0 - 3.0 * h)));
}

long round_at_least(double x, long lo) { return std::max(lo, std::lround(x)); }

struct BodyShape {
    double a = 0.0;       // semi-axis along x
    double b = 0.0;       // semi-axis along y
    double rim_mid = 0.0; // rim height at y = 0
    double dome = 0.0;
    double tan_wedge = 0.0;

    double top_rim(double y) const { return 0.5 * rim_mid - 0.5 * y * tan_wedge; }
    double bottom_rim(double y) const { return -top_rim(y); }
    // Endplate surface at normalised radius r in [0, 1].
    double top(double y, double r) const { return top_rim(y) - dome * (1.0 - r * r); }
    double bottom(double y, double r) const { return -top(y, r); }
};

TriangleMesh build_body(const BodyShape& shape, double spacing) {
    const double perimeter = ellipse_perimeter(shape.a, shape.b);
    // Multiple of 4 puts vertices on both symmetry axes of the ellipse.
    const long n = std::max(8L, 4 * std::lround(perimeter / (4.0 * spacing)));

    const double rim_row = std::min(kRimRowFraction * spacing, 0.25 * shape.rim_mid);
    const long inner_rows = round_at_least((shape.rim_mid - 2.0 * rim_row) / spacing, 1);
    std::vector<double> fractions{0.0};
    const double thin = rim_row / shape.rim_mid;
    fractions.push_back(thin);
    for (long q = 1; q < inner_rows; ++q)
        fractions.push_back(thin + (1.0 - 2.0 * thin) * static_cast<double>(q) / static_cast<double>(inner_rows));
    fractions.push_back(1.0 - thin);
    fractions.push_back(1.0);
    const auto rows = static_cast<long>(fractions.size());  // rim to rim, inclusive

    const double density = 1.0 / (spacing * spacing);
    const double cap_area = std::numbers::pi * shape.a * shape.b;
    const long rings = 1 + std::max(0L, std::lround((density * cap_area - 1.0) / static_cast<double>(n)));

    std::vector<double> cos_t(n), sin_t(n);
    for (long j = 0; j < n; ++j) {
        // Exact zeros on the axes keep the symmetric vertices exactly on the symmetry planes.
        const long quarter = n / 4;
        if (j % quarter == 0) {
            const long k = j / quarter;
            cos_t[j] = (k == 0) ? 1.0 : (k == 2 ? -1.0 : 0.0);
            sin_t[j] = (k == 1) ? 1.0 : (k == 3 ? -1.0 : 0.0);
        } else {
            const double t = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
            cos_t[j] = std::cos(t);
            sin_t[j] = std::sin(t);
        }
    }

    std::vector<Vec3> verts;
    std::vector<Face> faces;
    auto wall = [&](long j, long q) { return static_cast<std::uint32_t>(q * n + (j % n)); };
    for (long q = 0; q < rows; ++q)
        for (long j = 0; j < n; ++j) {
            const double x = shape.a * cos_t[j];
            const double y = shape.b * sin_t[j];
            const double z0 = shape.bottom_rim(y), z1 = shape.top_rim(y);
            verts.emplace_back(x, y, z0 + fractions[q] * (z1 - z0));
        }
    for (long q = 0; q + 1 < rows; ++q)
        for (long j = 0; j < n; ++j) {
            faces.push_back({wall(j, q), wall(j + 1, q), wall(j + 1, q + 1)});
            faces.push_back({wall(j, q), wall(j + 1, q + 1), wall(j, q + 1)});
        }

    // Caps: rings k = 1..rings-1 at r = k / rings, the rim ring shared with the wall.
    auto add_cap = [&](bool upper) {
        const auto ring_base = static_cast<std::uint32_t>(verts.size());
        for (long k = 1; k < rings; ++k) {
            const double r = static_cast<double>(k) / static_cast<double>(rings);
            for (long j = 0; j < n; ++j) {
                const double x = shape.a * r * cos_t[j];
                const double y = shape.b * r * sin_t[j];
                verts.emplace_back(x, y, upper ? shape.top(y, r) : shape.bottom(y, r));
            }
        }
        const auto center = static_cast<std::uint32_t>(verts.size());
        verts.emplace_back(0.0, 0.0, upper ? shape.top(0.0, 0.0) : shape.bottom(0.0, 0.0));

        auto ring = [&](long k, long j) -> std::uint32_t {
            if (k == rings) return wall(j, upper ? rows - 1 : 0);
            return ring_base + static_cast<std::uint32_t>((k - 1) * n + (j % n));
        };
        auto emit = [&](std::uint32_t p, std::uint32_t q, std::uint32_t r) {
            if (upper) faces.push_back({p, q, r});
            else faces.push_back({p, r, q});
        };
        for (long j = 0; j < n; ++j) emit(center, ring(1, j), ring(1, j + 1));
        for (long k = 1; k < rings; ++k)
            for (long j = 0; j < n; ++j) {
                emit(ring(k, j), ring(k + 1, j), ring(k + 1, j + 1));
                emit(ring(k, j), ring(k + 1, j + 1), ring(k, j + 1));
            }
    };
    add_cap(true);
    add_cap(false);
    return TriangleMesh(std::move(verts), std::move(faces));
}

// Axis-aligned box with every face gridded at roughly `spacing`.
TriangleMesh build_box(const Vec3& lo, const Vec3& hi, double spacing) {
    std::array<std::vector<double>, 3> coords;
    for (int axis = 0; axis < 3; ++axis) {
        const long cells = round_at_least((hi[axis] - lo[axis]) / spacing, 1);
        for (long i = 0; i <= cells; ++i)
            coords[axis].push_back(i == cells ? hi[axis]
                                              : lo[axis] + (hi[axis] - lo[axis]) * static_cast<double>(i) /
                                                               static_cast<double>(cells));
    }
    std::vector<Vec3> verts;
    std::vector<Face> faces;
    // One face of the box: `fixed` axis at index `level`; u x v points outward.
    auto add_face = [&](int fixed, std::size_t level, int u_axis, int v_axis) {
        const auto base = static_cast<std::uint32_t>(verts.size());
        const auto nu = coords[u_axis].size(), nv = coords[v_axis].size();
        for (std::size_t j = 0; j < nv; ++j)
            for (std::size_t i = 0; i < nu; ++i) {
                Vec3 p;
                p[fixed] = coords[fixed][level];
                p[u_axis] = coords[u_axis][i];
                p[v_axis] = coords[v_axis][j];
                verts.push_back(p);
            }
        auto at = [&](std::size_t i, std::size_t j) { return base + static_cast<std::uint32_t>(j * nu + i); };
        for (std::size_t j = 0; j + 1 < nv; ++j)
            for (std::size_t i = 0; i + 1 < nu; ++i) {
                faces.push_back({at(i, j), at(i + 1, j), at(i + 1, j + 1)});
                faces.push_back({at(i, j), at(i + 1, j + 1), at(i, j + 1)});
            }
    };
    const std::size_t top[3] = {coords[0].size() - 1, coords[1].size() - 1, coords[2].size() - 1};
    add_face(0, 0, 2, 1);
    add_face(0, top[0], 1, 2);
    add_face(1, 0, 0, 2);
    add_face(1, top[1], 2, 0);
    add_face(2, 0, 1, 0);
    add_face(2, top[2], 0, 1);
    return weld(verts, faces, 1e-9);
}

Landmarks transform_landmarks(const Landmarks& lm, const Eigen::Isometry3d& xf) {
    Landmarks out;
    for (std::size_t i = 0; i < Landmarks::kNames.size(); ++i) out[i] = xf * lm[i];
    return out;
}

double uniform(std::mt19937_64& rng, const Interval& range) {
    // Explicit 53-bit mapping so draws do not depend on the standard library's distribution code.
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return range.lo + (range.hi - range.lo) * u;
}

}  // namespace

void VertebraSpec::validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::kInvalidSpec, what); };
    for (double v : {width, depth, height_central, endplate_dome, wedge_angle_deg})
        if (!std::isfinite(v)) fail("non-finite vertebra parameter");
    if (!(width > 0.0 && depth > 0.0 && height_central > 0.0)) fail("width, depth and height must be positive");
    if (endplate_dome < 0.0) fail("endplate dome must be non-negative");
    if (endplate_dome > 0.25 * height_central) fail("endplate dome exceeds a quarter of the central height");
    if (std::abs(wedge_angle_deg) >= 30.0) fail("wedge angle must lie in (-30, 30) degrees");
    if (height_central - 0.5 * depth * std::abs(std::tan(wedge_angle_deg * kDegToRad)) <= 1.0)
        fail("wedge leaves the short side of the body thinner than 1 mm");
    if (!posterior_element_size.isZero() && (posterior_element_size.array() <= 0.0).any())
        fail("posterior element size must be positive");
}

void VertebraSpec::validate_ranges(const ParameterRanges& ranges) const {
    if (!ranges.width.contains(width)) throw Error(ErrorCode::kInvalidSpec, "width outside range");
    if (!ranges.depth.contains(depth)) throw Error(ErrorCode::kInvalidSpec, "depth outside range");
    if (!ranges.height_central.contains(height_central))
        throw Error(ErrorCode::kInvalidSpec, "central height outside range");
}

GeneratedVertebra generate_vertebra(const VertebraSpec& spec, double resolution) {
    spec.validate();
    if (!(resolution >= 0.05 && resolution <= 20.0))
        throw Error(ErrorCode::kInvalidSpec, "resolution must lie in [0.05, 20] vertices per mm^2");
    const double spacing = 1.0 / std::sqrt(resolution);

    BodyShape shape;
    shape.a = 0.5 * spec.width;
    shape.b = 0.5 * spec.depth;
    shape.dome = spec.endplate_dome;
    shape.rim_mid = spec.height_central + 2.0 * spec.endplate_dome;
    shape.tan_wedge = std::tan(spec.wedge_angle_deg * kDegToRad);

    TriangleMesh body = build_body(shape, spacing);

    const Vec3 block_size = spec.posterior_element_size.isZero()
                                ? Vec3(0.6 * spec.width, 0.8 * spec.depth, 0.6 * spec.height_central)
                                : spec.posterior_element_size;
    TriangleMesh block = build_box(Vec3(-0.5 * block_size.x(), 0.0, -0.5 * block_size.z()),
                                   Vec3(0.5 * block_size.x(), block_size.y(), 0.5 * block_size.z()), spacing);

    // Choose the block's offset so the vertex-mean CoM lands kCanalOffset behind the body.
    double body_y = 0.0, block_y = 0.0;
    for (const auto& v : body.vertices()) body_y += v.y();
    for (const auto& v : block.vertices()) block_y += v.y();
    const auto nb = static_cast<double>(body.vertex_count());
    const auto np = static_cast<double>(block.vertex_count());
    const double target = shape.b + kCanalOffset;
    const double offset = (target * (nb + np) - body_y - block_y) / np;
    if (offset < target + kBlockClearance)
        throw Error(ErrorCode::kInvalidSpec, "posterior elements too large to keep the CoM behind the body");
    block = block.transformed(Eigen::Affine3d(Eigen::Translation3d(0.0, offset, 0.0)));

    GeneratedVertebra out;
    out.body_face_count = body.face_count();
    const TriangleMesh parts[] = {body, block};
    out.mesh = merge(parts);

    Landmarks& lm = out.truth.landmarks;
    const double a = shape.a, b = shape.b;
    lm.w_u1 = Vec3(a, 0.0, shape.top_rim(0.0));
    lm.w_u2 = Vec3(-a, 0.0, shape.top_rim(0.0));
    lm.w_l1 = Vec3(a, 0.0, shape.bottom_rim(0.0));
    lm.w_l2 = Vec3(-a, 0.0, shape.bottom_rim(0.0));
    lm.d_u1 = Vec3(0.0, -b, shape.top_rim(-b));
    lm.d_u2 = Vec3(0.0, b, shape.top_rim(b));
    lm.d_l1 = Vec3(0.0, -b, shape.bottom_rim(-b));
    lm.d_l2 = Vec3(0.0, b, shape.bottom_rim(b));
    lm.h_1 = Vec3(0.0, 0.0, shape.top(0.0, 0.0));
    lm.h_2 = Vec3(0.0, 0.0, shape.bottom(0.0, 0.0));
    out.truth.measurements = compute_dimensions(lm);
    return out;
}

TriangleMesh body_submesh(const GeneratedVertebra& vertebra) {
    std::vector<std::size_t> faces(vertebra.body_face_count);
    std::iota(faces.begin(), faces.end(), std::size_t{0});
    return vertebra.mesh.submesh(faces);
}

SpineModel GeneratedSpine::model() const {
    SpineModel spine;
    spine.caudal_to_cranial = true;
    for (std::size_t i = 0; i < meshes.size(); ++i) spine.vertebrae.push_back({labels[i], meshes[i]});
    return spine;
}

std::vector<std::string> lumbar_labels(std::size_t count) {
    std::vector<std::string> cranial_to_caudal;
    for (int i = 1; i <= 12; ++i) cranial_to_caudal.push_back("T" + std::to_string(i));
    for (int i = 1; i <= 5; ++i) cranial_to_caudal.push_back("L" + std::to_string(i));
    if (count == 0 || count > cranial_to_caudal.size())
        throw Error(ErrorCode::kInvalidSpec, "vertebra count must lie in [1, 17]");
    return {cranial_to_caudal.rbegin(), cranial_to_caudal.rbegin() + static_cast<std::ptrdiff_t>(count)};
}

GeneratedSpine generate_spine(const SpineSpec& spec, double resolution) {
    const std::size_t n = spec.vertebrae.size();
    if (n == 0) throw Error(ErrorCode::kInvalidSpec, "spine has no vertebrae");
    if (!(spec.lordosis_deg >= 0.0 && spec.lordosis_deg < 180.0))
        throw Error(ErrorCode::kInvalidSpec, "lordosis angle must lie in [0, 180) degrees");

    GeneratedSpine spine;
    spine.labels = lumbar_labels(n);
    std::vector<GeneratedVertebra> local;
    local.reserve(n);
    for (const auto& v : spec.vertebrae) local.push_back(generate_vertebra(v, resolution));

    double mean_height = 0.0;
    for (const auto& v : spec.vertebrae) mean_height += v.height_central;
    mean_height /= static_cast<double>(n);
    const double gap = 0.1 * mean_height;

    // Arc-length positions of the CoMs, centred on the middle of the chain.
    std::vector<double> arc(n, 0.0);
    for (std::size_t i = 1; i < n; ++i) {
        const double h0 = spec.vertebrae[i - 1].height_central + 2.0 * spec.vertebrae[i - 1].endplate_dome;
        const double h1 = spec.vertebrae[i].height_central + 2.0 * spec.vertebrae[i].endplate_dome;
        arc[i] = arc[i - 1] + 0.5 * (h0 + h1) + gap;
    }
    const double half = 0.5 * arc.back();
    for (auto& s : arc) s -= half;

    const double theta = spec.lordosis_deg * kDegToRad;
    const double radius = theta > 0.0 && n > 1 ? (2.0 * half) / theta : 0.0;

    for (std::size_t i = 0; i < n; ++i) {
        Eigen::Matrix3d rot = Eigen::Matrix3d::Identity();
        Vec3 position(0.0, 0.0, arc[i]);
        if (radius > 0.0) {
            const double phi = arc[i] / radius;
            // Columns: lateral, posterior, superior of the placed vertebra.
            rot.col(1) = Vec3(0.0, std::cos(phi), -std::sin(phi));
            rot.col(2) = Vec3(0.0, std::sin(phi), std::cos(phi));
            position = Vec3(0.0, radius - radius * std::cos(phi), radius * std::sin(phi));
        }
        const Vec3 com = center_of_mass(local[i].mesh);
        Eigen::Isometry3d xf = Eigen::Isometry3d::Identity();
        xf.linear() = rot;
        xf.translation() = position - rot * com;

        spine.meshes.push_back(local[i].mesh.transformed(Eigen::Affine3d(xf.matrix())));
        VertebraTruth truth;
        truth.landmarks = transform_landmarks(local[i].truth.landmarks, xf);
        truth.measurements = compute_dimensions(truth.landmarks);
        spine.truths.push_back(truth);
        spine.placements.push_back(xf);
    }
    return spine;
}

std::string ground_truth_csv_header() {
    std::string out = "spine_id,label";
    for (auto key : kDimensionKeys) (out += ',') += key;
    for (auto name : Landmarks::kNames)
        for (const char* axis : {"_x", "_y", "_z"}) (out += ',') += std::string(name) + axis;
    return out + '\n';
}

std::string ground_truth_csv_row(const std::string& spine_id, const std::string& label, const VertebraTruth& truth) {
    std::string out = spine_id + ',' + label;
    for (double v : truth.measurements.values) (out += ',') += detail::format_double(v);
    for (std::size_t i = 0; i < Landmarks::kNames.size(); ++i)
        for (int k = 0; k < 3; ++k) (out += ',') += detail::format_double(truth.landmarks[i][k]);
    return out + '\n';
}

void write_spine(const GeneratedSpine& spine, const std::string& spine_id, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::kIoError, "cannot create " + dir.string());

    SpineManifest manifest;
    manifest.spine_id = spine_id;
    manifest.caudal_to_cranial = true;
    std::string csv = ground_truth_csv_header();
    for (std::size_t i = 0; i < spine.meshes.size(); ++i) {
        const std::string file = spine.labels[i] + ".stl";
        save_mesh(spine.meshes[i], dir / file, MeshFormat::kStl);
        manifest.entries.push_back({spine.labels[i], file});
        csv += ground_truth_csv_row(spine_id, spine.labels[i], spine.truths[i]);
    }
    write_manifest(manifest, dir / "manifest.json");
    detail::write_file_atomic(dir / "ground_truth.csv", csv);
}

SpineSpec sample_spine_spec(std::uint64_t seed, std::size_t index, const ParameterRanges& ranges,
                            std::size_t vertebra_count) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(std::uint64_t{index} >> 32)};
    std::mt19937_64 rng(seq);

    SpineSpec spec;
    spec.seed = seed;
    spec.lordosis_deg = uniform(rng, ranges.lordosis_deg);
    for (std::size_t i = 0; i < vertebra_count; ++i) {
        VertebraSpec v;
        v.width = uniform(rng, ranges.width);
        v.depth = uniform(rng, ranges.depth);
        v.height_central = uniform(rng, ranges.height_central);
        v.endplate_dome = uniform(rng, ranges.dome);
        v.wedge_angle_deg = uniform(rng, ranges.wedge_deg);
        spec.vertebrae.push_back(v);
    }
    return spec;
}

DatasetManifest generate_dataset(const DatasetOptions& options, const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec || !std::filesystem::is_directory(out_dir))
        throw Error(ErrorCode::kIoError, "cannot create output directory " + out_dir.string());

    DatasetManifest manifest;
    manifest.root = out_dir;
    std::vector<std::string> rows(options.count);
    for (std::size_t i = 0; i < options.count; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "spine_%03zu", i);
        manifest.spine_ids.emplace_back(id);
        manifest.manifests.push_back(out_dir / id / "manifest.json");
    }

    detail::parallel_for(options.count, options.jobs, [&](std::size_t i) {
        const SpineSpec spec = sample_spine_spec(options.seed, i, options.ranges, options.vertebra_count);
        const GeneratedSpine spine = generate_spine(spec, options.resolution);
        write_spine(spine, manifest.spine_ids[i], out_dir / manifest.spine_ids[i]);
        for (std::size_t k = 0; k < spine.meshes.size(); ++k)
            rows[i] += ground_truth_csv_row(manifest.spine_ids[i], spine.labels[k], spine.truths[k]);
    });

    std::string csv = ground_truth_csv_header();
    for (const auto& r : rows) csv += r;
    detail::write_file_atomic(out_dir / "ground_truth.csv", csv);

    nlohmann::ordered_json doc;
    doc["seed"] = options.seed;
    doc["count"] = options.count;
    doc["resolution_per_mm2"] = options.resolution;
    doc["vertebrae_per_spine"] = options.vertebra_count;
    auto range = [](const Interval& r) { return nlohmann::ordered_json::array({r.lo, r.hi}); };
    doc["ranges"] = {{"width", range(options.ranges.width)},
                     {"depth", range(options.ranges.depth)},
                     {"height_central", range(options.ranges.height_central)},
                     {"lordosis_deg", range(options.ranges.lordosis_deg)},
                     {"dome", range(options.ranges.dome)},
                     {"wedge_deg", range(options.ranges.wedge_deg)}};
    doc["spines"] = nlohmann::ordered_json::array();
    for (const auto& id : manifest.spine_ids) doc["spines"].push_back(id + "/manifest.json");
    detail::write_file_atomic(out_dir / "dataset.json", doc.dump(2) + "\n");
    return manifest;
}

}  // namespace spinemorph
