#include "spinemorph/morphometry.hpp"

#include <chrono>
#include <limits>
#include <map>
#include <cmath>
#include <numbers>
#include <numeric>

#include <nlohmann/json.hpp>

#include "spinemorph/error.hpp"
#include "spinemorph/mesh_io.hpp"
#include "text_util.hpp"

namespace spinemorph {

namespace {

constexpr double kTieEps = 1e-9;
constexpr double kMinEndplateSeparation = 1.0;  // mm along up

class DisjointSets {
public:
    explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }
    std::size_t find(std::size_t x) {
        while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
        return x;
    }
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent_[std::max(a, b)] = std::min(a, b);
    }

private:
    std::vector<std::size_t> parent_;
};

// Keeps the vertex-connected component whose vertex mean is highest (sign = +1)
// or lowest (sign = -1) along `up`.
std::vector<std::size_t> extremal_component(const TriangleMesh& mesh, const std::vector<std::size_t>& faces,
                                            const Vec3& up, double sign) {
    DisjointSets sets(mesh.vertex_count());
    for (auto fi : faces) {
        const auto& f = mesh.faces()[fi];
        sets.unite(f[0], f[1]);
        sets.unite(f[1], f[2]);
    }
    std::map<std::size_t, std::vector<std::size_t>> components;
    for (auto fi : faces) components[sets.find(mesh.faces()[fi][0])].push_back(fi);

    const std::vector<std::size_t>* best = nullptr;
    double best_score = -std::numeric_limits<double>::infinity();
    for (const auto& [root, members] : components) {
        std::vector<bool> seen(mesh.vertex_count(), false);
        double sum = 0.0;
        std::size_t count = 0;
        for (auto fi : members)
            for (auto vi : mesh.faces()[fi])
                if (!seen[vi]) {
                    seen[vi] = true;
                    sum += mesh.vertices()[vi].dot(up);
                    ++count;
                }
        const double score = sign * sum / static_cast<double>(count);
        if (score > best_score) {
            best_score = score;
            best = &members;
        }
    }
    return best ? *best : std::vector<std::size_t>{};
}

// Point with extreme projection on `axis`; ties go to larger up, then larger right.
Vec3 extreme_point(const std::vector<Vec3>& points, const Vec3& axis, bool maximum, const LocalFrame& frame) {
    const double sign = maximum ? 1.0 : -1.0;
    std::size_t best = 0;
    for (std::size_t i = 1; i < points.size(); ++i) {
        const double a = sign * points[i].dot(axis);
        const double b = sign * points[best].dot(axis);
        if (a > b + kTieEps) {
            best = i;
        } else if (a >= b - kTieEps) {
            const double ua = points[i].dot(frame.up), ub = points[best].dot(frame.up);
            if (ua > ub + kTieEps || (ua >= ub - kTieEps && points[i].dot(frame.right) > points[best].dot(frame.right)))
                best = i;
        }
    }
    return points[best];
}

Vec3 central_point(const TriangleMesh& plate, const std::vector<Vec3>& polyline, const Vec3& origin,
                   const Vec3& up, bool upper, bool& fallback) {
    const auto hits = line_mesh_intersection(plate, origin, up);
    if (!hits.empty()) {
        fallback = false;
        return upper ? hits.back() : hits.front();
    }
    fallback = true;
    std::size_t best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < polyline.size(); ++i) {
        const Vec3 d = polyline[i] - origin;
        const double dist = (d - d.dot(up) * up).norm();
        if (dist < best_dist) {
            best_dist = dist;
            best = i;
        }
    }
    return polyline[best];
}

double elapsed_ms(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

nlohmann::ordered_json vec_json(const Vec3& v) { return nlohmann::ordered_json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from_json(const nlohmann::ordered_json& j) {
    if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::kSchemaError, "expected [x, y, z]");
    return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

}  // namespace

const Vec3& Landmarks::operator[](std::size_t i) const {
    return const_cast<Landmarks&>(*this)[i];
}

Vec3& Landmarks::operator[](std::size_t i) {
    switch (i) {
        case 0: return w_u1;
        case 1: return w_u2;
        case 2: return w_l1;
        case 3: return w_l2;
        case 4: return d_u1;
        case 5: return d_u2;
        case 6: return d_l1;
        case 7: return d_l2;
        case 8: return h_1;
        case 9: return h_2;
        default: throw Error(ErrorCode::kInvalidArgument, "landmark index out of range");
    }
}

std::optional<Dimension> dimension_from_key(std::string_view key) {
    for (std::size_t i = 0; i < kDimensionCount; ++i)
        if (kDimensionKeys[i] == key || kDimensionNotation[i] == key) return static_cast<Dimension>(i);
    return std::nullopt;
}

VertebralBody extract_vertebral_body(const TriangleMesh& mesh, const LocalFrame& frame) {
    VertebralBody body;
    body.mesh = cut_mesh_by_plane(mesh, Plane::through(frame.com, frame.front));
    if (body.mesh.empty())
        throw Error(ErrorCode::kEmptyBody, "nothing of the mesh lies anterior to the cutting plane");
    body.com = center_of_mass(body.mesh);
    return body;
}

EndplatePair extract_endplates(const VertebralBody& body, const LocalFrame& frame, double max_angle_deg) {
    if (!(max_angle_deg > 0.0 && max_angle_deg < 90.0))
        throw Error(ErrorCode::kInvalidArgument, "max_angle must lie in (0, 90) degrees");
    const double threshold = std::cos(max_angle_deg * std::numbers::pi / 180.0);
    const auto normals = vertex_normals(body.mesh);

    std::vector<std::size_t> upper, lower;
    for (std::size_t fi = 0; fi < body.mesh.face_count(); ++fi) {
        const auto& f = body.mesh.faces()[fi];
        bool all_up = true, all_down = true;
        for (auto vi : f) {
            const double proj = normals[vi].dot(frame.up);
            all_up = all_up && proj >= threshold;
            all_down = all_down && proj <= -threshold;
        }
        if (all_up) upper.push_back(fi);
        if (all_down) lower.push_back(fi);
    }
    if (upper.empty()) throw Error(ErrorCode::kEndplateNotFound, "no face within the threshold of +up");
    if (lower.empty()) throw Error(ErrorCode::kEndplateNotFound, "no face within the threshold of -up");

    EndplatePair plates;
    const auto upper_faces = extremal_component(body.mesh, upper, frame.up, 1.0);
    const auto lower_faces = extremal_component(body.mesh, lower, frame.up, -1.0);
    plates.upper = body.mesh.submesh(upper_faces);
    plates.lower = body.mesh.submesh(lower_faces);

    const double gap = center_of_mass(plates.upper).dot(frame.up) - center_of_mass(plates.lower).dot(frame.up);
    if (!(gap > kMinEndplateSeparation))
        throw Error(ErrorCode::kEndplateNotFound, "upper and lower endplates are not separated along up");
    return plates;
}

Landmarks compute_landmarks(const EndplatePair& plates, const VertebralBody& body, const LocalFrame& frame,
                            LandmarkDiagnostics* diagnostics) {
    if (plates.upper.empty() || plates.lower.empty())
        throw Error(ErrorCode::kEndplateNotFound, "landmarks need both endplates");
    const Plane sagittal = Plane::through(body.com, frame.right);
    const Plane frontal = Plane::through(body.com, frame.front);

    auto section = [](const TriangleMesh& plate, const Plane& plane, const char* what) {
        auto pts = plane_mesh_intersection(plate, plane);
        if (pts.empty()) throw Error(ErrorCode::kNoIntersection, std::string(what) + " does not cross the endplate");
        return pts;
    };
    const auto upper_sag = section(plates.upper, sagittal, "sagittal plane (upper)");
    const auto lower_sag = section(plates.lower, sagittal, "sagittal plane (lower)");
    const auto upper_front = section(plates.upper, frontal, "frontal plane (upper)");
    const auto lower_front = section(plates.lower, frontal, "frontal plane (lower)");

    Landmarks lm;
    lm.d_u1 = extreme_point(upper_sag, frame.front, true, frame);
    lm.d_u2 = extreme_point(upper_sag, frame.front, false, frame);
    lm.d_l1 = extreme_point(lower_sag, frame.front, true, frame);
    lm.d_l2 = extreme_point(lower_sag, frame.front, false, frame);
    lm.w_u1 = extreme_point(upper_front, frame.right, true, frame);
    lm.w_u2 = extreme_point(upper_front, frame.right, false, frame);
    lm.w_l1 = extreme_point(lower_front, frame.right, true, frame);
    lm.w_l2 = extreme_point(lower_front, frame.right, false, frame);

    auto joined = [](std::vector<Vec3> a, const std::vector<Vec3>& b) {
        a.insert(a.end(), b.begin(), b.end());
        return a;
    };
    LandmarkDiagnostics diag;
    lm.h_1 = central_point(plates.upper, joined(upper_sag, upper_front), body.com, frame.up, true, diag.h1_fallback);
    lm.h_2 = central_point(plates.lower, joined(lower_sag, lower_front), body.com, frame.up, false, diag.h2_fallback);
    if (diagnostics) *diagnostics = diag;
    return lm;
}

Measurements compute_dimensions(const Landmarks& lm) {
    Measurements m;
    m[Dimension::kWidthUpper] = (lm.w_u1 - lm.w_u2).norm();
    m[Dimension::kWidthLower] = (lm.w_l1 - lm.w_l2).norm();
    m[Dimension::kDepthUpper] = (lm.d_u1 - lm.d_u2).norm();
    m[Dimension::kDepthLower] = (lm.d_l1 - lm.d_l2).norm();
    m[Dimension::kHeightCentral] = (lm.h_1 - lm.h_2).norm();
    m[Dimension::kHeightAnterior] = (lm.d_u1 - lm.d_l1).norm();
    m[Dimension::kHeightPosterior] = (lm.d_u2 - lm.d_l2).norm();
    m[Dimension::kHeightLeft] = (lm.w_u1 - lm.w_l1).norm();
    m[Dimension::kHeightRight] = (lm.w_u2 - lm.w_l2).norm();
    return m;
}

std::size_t SpineReport::failures() const {
    std::size_t n = 0;
    for (const auto& v : vertebrae) n += v.ok() ? 0 : 1;
    return n;
}

SpineReport measure_spine(const SpineModel& spine, const MeasureOptions& options) {
    SpineReport report;
    report.options = options;
    report.vertebrae.resize(spine.vertebrae.size());
    for (std::size_t i = 0; i < spine.vertebrae.size(); ++i) report.vertebrae[i].label = spine.vertebrae[i].label;

    std::vector<LocalFrame> frames;
    const auto frames_start = std::chrono::steady_clock::now();
    try {
        frames = build_frames(spine, FrameOptions{options.fallback_single});
    } catch (const Error& e) {
        for (auto& r : report.vertebrae) r.error = e.what();
        return report;
    }
    const double frames_ms = elapsed_ms(frames_start);
    const bool used_fallback = spine.vertebrae.size() < 3;

    for (std::size_t i = 0; i < spine.vertebrae.size(); ++i) {
        VertebraResult& r = report.vertebrae[i];
        const TriangleMesh& mesh = spine.vertebrae[i].mesh;
        r.frame = frames[i];
        r.timings_ms["frames"] = frames_ms;
        if (used_fallback) r.warnings.push_back("fewer than 3 vertebrae: up-vector fixed to global S");
        try {
            r.density_per_mm2 = mesh_density(mesh);
            auto t0 = std::chrono::steady_clock::now();
            const VertebralBody body = extract_vertebral_body(mesh, frames[i]);
            r.timings_ms["body"] = elapsed_ms(t0);

            t0 = std::chrono::steady_clock::now();
            const EndplatePair plates = extract_endplates(body, frames[i], options.max_angle_deg);
            r.timings_ms["endplates"] = elapsed_ms(t0);

            t0 = std::chrono::steady_clock::now();
            LandmarkDiagnostics diag;
            r.landmarks = compute_landmarks(plates, body, frames[i], &diag);
            if (diag.h1_fallback) r.warnings.push_back("h_1: central line misses upper endplate, nearest section point used");
            if (diag.h2_fallback) r.warnings.push_back("h_2: central line misses lower endplate, nearest section point used");
            r.measurements = compute_dimensions(*r.landmarks);
            r.timings_ms["landmarks"] = elapsed_ms(t0);
        } catch (const Error& e) {
            r.error = e.what();
            r.landmarks.reset();
            r.measurements.reset();
        }
    }
    return report;
}

SpineReport measure_manifest(const std::filesystem::path& manifest_path, const MeasureOptions& options) {
    const SpineManifest manifest = read_manifest(manifest_path);
    for (const auto& e : manifest.entries) {
        std::error_code ec;
        if (!std::filesystem::is_regular_file(e.mesh_path, ec))
            throw Error(ErrorCode::kFileNotFound, e.mesh_path.string() + " (label " + e.label + ")");
    }

    SpineModel spine;
    spine.caudal_to_cranial = manifest.caudal_to_cranial;
    std::vector<std::optional<std::string>> load_errors(manifest.entries.size());
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        try {
            spine.vertebrae.push_back({manifest.entries[i].label, load_mesh(manifest.entries[i].mesh_path)});
        } catch (const Error& e) {
            if (e.code() == ErrorCode::kIoError) throw;
            load_errors[i] = e.what();
        }
    }

    SpineReport measured = measure_spine(spine, options);
    SpineReport report;
    report.spine_id = manifest.spine_id;
    report.options = options;
    std::size_t next = 0;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        if (load_errors[i]) {
            VertebraResult r;
            r.label = manifest.entries[i].label;
            r.error = *load_errors[i];
            report.vertebrae.push_back(std::move(r));
        } else {
            report.vertebrae.push_back(std::move(measured.vertebrae[next++]));
        }
    }
    return report;
}

std::string report_to_json(const SpineReport& report) {
    using json = nlohmann::ordered_json;
    json doc;
    doc["spine_id"] = report.spine_id;
    doc["options"] = {{"max_angle_deg", report.options.max_angle_deg},
                      {"fallback_single", report.options.fallback_single}};
    doc["vertebrae"] = json::object();
    for (const auto& v : report.vertebrae) {
        json entry;
        entry["status"] = v.ok() ? "ok" : "error";
        if (!v.error.empty()) entry["error"] = v.error;
        if (v.landmarks) {
            json lm = json::object();
            for (std::size_t i = 0; i < Landmarks::kNames.size(); ++i)
                lm[std::string(Landmarks::kNames[i])] = vec_json((*v.landmarks)[i]);
            entry["landmarks"] = lm;
        }
        if (v.measurements) {
            json dims = json::object();
            for (std::size_t i = 0; i < kDimensionCount; ++i)
                dims[std::string(kDimensionKeys[i])] = v.measurements->values[i];
            entry["dimensions_mm"] = dims;
        }
        if (v.frame) {
            entry["frame"] = {{"com", vec_json(v.frame->com)},
                              {"up", vec_json(v.frame->up)},
                              {"right", vec_json(v.frame->right)},
                              {"front", vec_json(v.frame->front)}};
        }
        entry["diagnostics"] = {{"density_per_mm2", v.density_per_mm2}, {"warnings", v.warnings}};
        doc["vertebrae"][v.label] = entry;
    }
    return doc.dump(2) + "\n";
}

std::string timings_to_json(const SpineReport& report) {
    nlohmann::ordered_json doc;
    doc["spine_id"] = report.spine_id;
    doc["timings_ms"] = nlohmann::ordered_json::object();
    for (const auto& v : report.vertebrae) doc["timings_ms"][v.label] = v.timings_ms;
    return doc.dump(2) + "\n";
}

std::string report_to_csv(const SpineReport& report) {
    std::string out = "spine_id,label,status";
    for (auto key : kDimensionKeys) (out += ',') += key;
    out += '\n';
    for (const auto& v : report.vertebrae) {
        out += report.spine_id + ',' + v.label + ',' + (v.ok() ? "ok" : "error");
        for (std::size_t i = 0; i < kDimensionCount; ++i) {
            out += ',';
            if (v.measurements) out += detail::format_double(v.measurements->values[i]);
        }
        out += '\n';
    }
    return out;
}

SpineReport report_from_json(std::string_view text) {
    nlohmann::ordered_json doc;
    try {
        doc = nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::ordered_json::parse_error& e) {
        throw Error(ErrorCode::kParseError, e.what());
    }
    if (!doc.is_object() || !doc.contains("vertebrae") || !doc["vertebrae"].is_object())
        throw Error(ErrorCode::kSchemaError, "report lacks a 'vertebrae' object");

    SpineReport report;
    report.spine_id = doc.value("spine_id", std::string{});
    if (doc.contains("options")) {
        report.options.max_angle_deg = doc["options"].value("max_angle_deg", 45.0);
        report.options.fallback_single = doc["options"].value("fallback_single", false);
    }
    try {
        for (const auto& [label, entry] : doc["vertebrae"].items()) {
            VertebraResult r;
            r.label = label;
            if (entry.value("status", std::string{}) != "ok") r.error = entry.value("error", std::string{"error"});
            if (entry.contains("landmarks")) {
                Landmarks lm;
                for (std::size_t i = 0; i < Landmarks::kNames.size(); ++i) {
                    const std::string name(Landmarks::kNames[i]);
                    if (!entry["landmarks"].contains(name))
                        throw Error(ErrorCode::kSchemaError, label + ": missing landmark " + name);
                    lm[i] = vec_from_json(entry["landmarks"][name]);
                }
                r.landmarks = lm;
            }
            if (entry.contains("dimensions_mm")) {
                Measurements m;
                for (std::size_t i = 0; i < kDimensionCount; ++i) {
                    const std::string key(kDimensionKeys[i]);
                    if (!entry["dimensions_mm"].contains(key))
                        throw Error(ErrorCode::kSchemaError, label + ": missing dimension " + key);
                    m.values[i] = entry["dimensions_mm"][key].get<double>();
                }
                r.measurements = m;
            }
            if (entry.contains("diagnostics")) {
                r.density_per_mm2 = entry["diagnostics"].value("density_per_mm2", 0.0);
                if (entry["diagnostics"].contains("warnings"))
                    r.warnings = entry["diagnostics"]["warnings"].get<std::vector<std::string>>();
            }
            report.vertebrae.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kSchemaError, e.what());
    }
    return report;
}

}  // namespace spinemorph
