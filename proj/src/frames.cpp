#include "spinemorph/frames.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "spinemorph/error.hpp"
#include "spinemorph/mesh_io.hpp"
#include "text_util.hpp"

namespace spinemorph {

namespace {

constexpr double kMinControlSeparation = 1e-3;  // mm
constexpr double kMinFrontNorm = 1e-3;

}  // namespace

int anatomical_rank(const std::string& label) {
    if (label.size() < 2) return -1;
    const char region = label[0];
    long long n = 0;
    if (!detail::parse_int(std::string_view(label).substr(1), n)) return -1;
    switch (region) {
        case 'C': return (n >= 1 && n <= 7) ? static_cast<int>(n - 1) : -1;
        case 'T': return (n >= 1 && n <= 12) ? static_cast<int>(7 + n - 1) : -1;
        case 'L': return (n >= 1 && n <= 6) ? static_cast<int>(19 + n - 1) : -1;
        case 'S': return (n >= 1 && n <= 5) ? static_cast<int>(25 + n - 1) : -1;
        default: return -1;
    }
}

void SpineModel::validate() const {
    std::set<std::string> seen;
    int previous = -1;
    std::string previous_label;
    for (const auto& v : vertebrae) {
        if (!seen.insert(v.label).second)
            throw Error(ErrorCode::kInvalidManifest, "duplicate vertebra label '" + v.label + "'");
        const int rank = anatomical_rank(v.label);
        if (rank < 0) continue;
        if (previous >= 0) {
            const bool ok = caudal_to_cranial ? rank < previous : rank > previous;
            if (!ok)
                throw Error(ErrorCode::kInvalidManifest,
                            "label '" + v.label + "' after '" + previous_label + "' contradicts " +
                                (caudal_to_cranial ? "caudal-to-cranial" : "cranial-to-caudal") + " ordering");
        }
        previous = rank;
        previous_label = v.label;
    }
}

// ---- spline ----------------------------------------------------------------

SplineCurve::SplineCurve(std::vector<Vec3> control_points, std::vector<double> knots,
                         std::vector<Vec3> second_derivatives)
    : points_(std::move(control_points)), knots_(std::move(knots)), second_(std::move(second_derivatives)) {}

std::size_t SplineCurve::segment(double t) const {
    const auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
    const auto idx = static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - knots_.begin() - 1, 0));
    return std::min(idx, knots_.size() - 2);
}

Vec3 SplineCurve::evaluate(double t) const {
    const auto i = segment(t);
    const double h = knots_[i + 1] - knots_[i];
    const double a = (knots_[i + 1] - t) / h;
    const double b = (t - knots_[i]) / h;
    return a * points_[i] + b * points_[i + 1] +
           ((a * a * a - a) * second_[i] + (b * b * b - b) * second_[i + 1]) * (h * h / 6.0);
}

Vec3 SplineCurve::derivative(double t) const {
    const auto i = segment(t);
    const double h = knots_[i + 1] - knots_[i];
    const double a = (knots_[i + 1] - t) / h;
    const double b = (t - knots_[i]) / h;
    return (points_[i + 1] - points_[i]) / h - (3.0 * a * a - 1.0) / 6.0 * h * second_[i] +
           (3.0 * b * b - 1.0) / 6.0 * h * second_[i + 1];
}

SplineCurve fit_com_spline(const std::vector<Vec3>& coms) {
    const std::size_t n = coms.size();
    if (n < 3) throw Error(ErrorCode::kTooFewPoints, "spline needs at least 3 points, got " + std::to_string(n));

    std::vector<double> knots(n, 0.0);
    for (std::size_t i = 1; i < n; ++i) {
        const double step = (coms[i] - coms[i - 1]).norm();
        if (!(step > kMinControlSeparation))
            throw Error(ErrorCode::kCoincidentPoints,
                        "control points " + std::to_string(i - 1) + " and " + std::to_string(i) + " coincide");
        knots[i] = knots[i - 1] + step;
    }
    const double total = knots.back();
    for (auto& k : knots) k /= total;
    knots.back() = 1.0;

    // Natural boundary: M_0 = M_{n-1} = 0; Thomas algorithm on the interior.
    std::vector<Vec3> second(n, Vec3::Zero());
    const std::size_t m = n - 2;
    std::vector<double> diag(m), upper(m), lower(m);
    std::vector<Vec3> rhs(m);
    for (std::size_t j = 0; j < m; ++j) {
        const std::size_t i = j + 1;
        const double h0 = knots[i] - knots[i - 1];
        const double h1 = knots[i + 1] - knots[i];
        lower[j] = h0;
        diag[j] = 2.0 * (h0 + h1);
        upper[j] = h1;
        rhs[j] = 6.0 * ((coms[i + 1] - coms[i]) / h1 - (coms[i] - coms[i - 1]) / h0);
    }
    for (std::size_t j = 1; j < m; ++j) {
        const double w = lower[j] / diag[j - 1];
        diag[j] -= w * upper[j - 1];
        rhs[j] -= w * rhs[j - 1];
    }
    second[m] = rhs[m - 1] / diag[m - 1];
    for (std::size_t j = m - 1; j-- > 0;) second[j + 1] = (rhs[j] - upper[j] * second[j + 2]) / diag[j];

    return SplineCurve(coms, std::move(knots), std::move(second));
}

Vec3 spline_tangent(const SplineCurve& spline, std::size_t index) {
    if (index >= spline.size())
        throw Error(ErrorCode::kInvalidArgument, "spline index " + std::to_string(index) + " out of range");
    Vec3 d = spline.derivative(spline.knots()[index]);
    const double len = d.norm();
    if (!(len > 0.0)) throw Error(ErrorCode::kDegenerateGeometry, "spline derivative vanishes");
    d /= len;
    if (d.dot(kAxisS) < 0.0) d = -d;
    return d;
}

// ---- frames ----------------------------------------------------------------

Vec3 right_vector(const TriangleMesh& mesh) {
    const ObbFrame obb = oriented_bounding_box(mesh);
    Vec3 best = obb.axes[0];
    double best_dot = -2.0;
    for (const auto& axis : obb.axes) {
        for (const Vec3& candidate : {axis, Vec3(-axis)}) {
            const double d = candidate.dot(kAxisL);
            if (d > best_dot) {
                best_dot = d;
                best = candidate;
            }
        }
    }
    return best;
}

std::vector<LocalFrame> build_frames(const SpineModel& spine, const FrameOptions& options) {
    const std::size_t n = spine.vertebrae.size();
    if (n == 0 || (n < 3 && !options.fallback_single))
        throw Error(ErrorCode::kTooFewVertebrae,
                    "frame estimation needs at least 3 vertebrae, got " + std::to_string(n));

    std::vector<Vec3> coms;
    coms.reserve(n);
    for (const auto& v : spine.vertebrae) coms.push_back(center_of_mass(v.mesh));

    std::vector<Vec3> ups(n, kAxisS);
    if (n >= 3) {
        const SplineCurve spline = fit_com_spline(coms);
        for (std::size_t i = 0; i < n; ++i) ups[i] = spline_tangent(spline, i);
    }

    std::vector<LocalFrame> frames(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3 raw_right = right_vector(spine.vertebrae[i].mesh);
        Vec3 front = ups[i].cross(raw_right);
        if (front.norm() < kMinFrontNorm)
            throw Error(ErrorCode::kDegenerateFrame,
                        "vertebra '" + spine.vertebrae[i].label + "': up-vector parallel to OBB right-vector");
        front.normalize();
        if (front.dot(-kAxisP) < 0.0) front = -front;

        LocalFrame& f = frames[i];
        f.com = coms[i];
        f.up = ups[i];
        f.front = front;
        f.right = ups[i].cross(front).normalized();
    }
    return frames;
}

// ---- manifest --------------------------------------------------------------

SpineManifest read_manifest(const std::filesystem::path& path) {
    const std::string text = detail::read_file(path);
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::kParseError, path.string() + ": " + e.what());
    }

    SpineManifest manifest;
    const nlohmann::json* list = &doc;
    if (doc.is_object()) {
        if (!doc.contains("vertebrae") || !doc["vertebrae"].is_array())
            throw Error(ErrorCode::kInvalidManifest, path.string() + ": missing 'vertebrae' array");
        list = &doc["vertebrae"];
        if (doc.contains("caudal_to_cranial")) {
            if (!doc["caudal_to_cranial"].is_boolean())
                throw Error(ErrorCode::kInvalidManifest, path.string() + ": 'caudal_to_cranial' must be boolean");
            manifest.caudal_to_cranial = doc["caudal_to_cranial"].get<bool>();
        }
        if (doc.contains("spine_id") && doc["spine_id"].is_string())
            manifest.spine_id = doc["spine_id"].get<std::string>();
    } else if (!doc.is_array()) {
        throw Error(ErrorCode::kInvalidManifest, path.string() + ": expected an object or array");
    }

    const auto base = path.parent_path();
    for (std::size_t i = 0; i < list->size(); ++i) {
        const auto& item = (*list)[i];
        if (!item.is_object() || !item.contains("label") || !item.contains("mesh") || !item["label"].is_string() ||
            !item["mesh"].is_string())
            throw Error(ErrorCode::kInvalidManifest,
                        path.string() + ": entry " + std::to_string(i) + " needs string 'label' and 'mesh'");
        manifest.entries.push_back({item["label"].get<std::string>(), base / item["mesh"].get<std::string>()});
    }
    if (manifest.spine_id.empty()) {
        const auto abs = std::filesystem::absolute(path).lexically_normal();
        manifest.spine_id = abs.parent_path().filename().string();
        if (manifest.spine_id.empty()) manifest.spine_id = path.stem().string();
    }

    SpineModel check;
    check.caudal_to_cranial = manifest.caudal_to_cranial;
    for (const auto& e : manifest.entries) check.vertebrae.push_back({e.label, {}});
    check.validate();
    return manifest;
}

void write_manifest(const SpineManifest& manifest, const std::filesystem::path& path) {
    nlohmann::ordered_json doc;
    doc["spine_id"] = manifest.spine_id;
    doc["caudal_to_cranial"] = manifest.caudal_to_cranial;
    doc["vertebrae"] = nlohmann::ordered_json::array();
    for (const auto& e : manifest.entries)
        doc["vertebrae"].push_back({{"label", e.label}, {"mesh", e.mesh_path.generic_string()}});
    detail::write_file_atomic(path, doc.dump(2) + "\n");
}

SpineModel load_spine(const SpineManifest& manifest) {
    SpineModel spine;
    spine.caudal_to_cranial = manifest.caudal_to_cranial;
    for (const auto& e : manifest.entries) spine.vertebrae.push_back({e.label, load_mesh(e.mesh_path)});
    spine.validate();
    return spine;
}

}  // namespace spinemorph
