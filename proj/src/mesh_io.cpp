#include "spinemorph/mesh_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <optional>
#include <string>
#include <string_view>

#include "spinemorph/error.hpp"
#include "text_util.hpp"

namespace spinemorph {

namespace {

using detail::format_double;
using detail::parse_double;
using detail::parse_int;
using detail::split_ws;

static_assert(std::endian::native == std::endian::little, "binary mesh I/O assumes a little-endian host");

struct RawMesh {
    std::vector<Vec3> vertices;
    std::vector<Face> faces;
};

[[noreturn]] void parse_fail(const std::filesystem::path& path, std::size_t line, const std::string& what) {
    std::string msg = path.string();
    if (line > 0) msg += ":" + std::to_string(line);
    throw Error(ErrorCode::kParseError, msg + ": " + what);
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

// Iterates lines with 1-based numbering.
class LineReader {
public:
    explicit LineReader(std::string_view text) : text_(text) {}

    bool next(std::string_view& line) {
        if (pos_ >= text_.size()) return false;
        auto end = text_.find('\n', pos_);
        if (end == std::string_view::npos) end = text_.size();
        line = text_.substr(pos_, end - pos_);
        pos_ = end + 1;
        ++number_;
        return true;
    }
    std::size_t number() const { return number_; }
    std::size_t offset() const { return pos_; }

private:
    std::string_view text_;
    std::size_t pos_ = 0;
    std::size_t number_ = 0;
};

template <typename T>
T read_le(const char* p) {
    T value;
    std::memcpy(&value, p, sizeof(T));
    return value;
}

// ---- STL -------------------------------------------------------------------

RawMesh parse_stl_binary(const std::filesystem::path& path, std::string_view data) {
    if (data.size() < 84) parse_fail(path, 0, "binary STL shorter than its 84-byte header");
    const auto count = read_le<std::uint32_t>(data.data() + 80);
    const std::uint64_t needed = 84ull + 50ull * count;
    if (data.size() < needed)
        parse_fail(path, 0, "binary STL declares " + std::to_string(count) + " triangles but holds only " +
                                std::to_string((data.size() - 84) / 50));
    RawMesh raw;
    raw.vertices.reserve(3ull * count);
    raw.faces.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const char* rec = data.data() + 84 + 50ull * i + 12;  // skip the stored normal
        const auto base = static_cast<std::uint32_t>(raw.vertices.size());
        for (int k = 0; k < 3; ++k) {
            raw.vertices.emplace_back(read_le<float>(rec + 12 * k), read_le<float>(rec + 12 * k + 4),
                                      read_le<float>(rec + 12 * k + 8));
        }
        raw.faces.push_back({base, base + 1, base + 2});
    }
    return raw;
}

RawMesh parse_stl_ascii(const std::filesystem::path& path, std::string_view text) {
    RawMesh raw;
    LineReader reader(text);
    std::string_view line;
    std::vector<Vec3> facet;
    bool in_facet = false;
    bool saw_solid = false;
    while (reader.next(line)) {
        const auto tok = split_ws(line);
        if (tok.empty()) continue;
        const std::string key = lower(tok[0]);
        if (key == "solid") {
            saw_solid = true;
        } else if (key == "facet") {
            if (in_facet) parse_fail(path, reader.number(), "nested facet");
            in_facet = true;
            facet.clear();
        } else if (key == "outer" || key == "endloop") {
            if (!in_facet) parse_fail(path, reader.number(), "'" + std::string(tok[0]) + "' outside a facet");
        } else if (key == "vertex") {
            if (!in_facet) parse_fail(path, reader.number(), "vertex outside a facet");
            Vec3 p;
            if (tok.size() != 4 || !parse_double(tok[1], p.x()) || !parse_double(tok[2], p.y()) ||
                !parse_double(tok[3], p.z()))
                parse_fail(path, reader.number(), "malformed vertex record");
            facet.push_back(p);
        } else if (key == "endfacet") {
            if (!in_facet || facet.size() != 3)
                parse_fail(path, reader.number(), "facet does not have exactly 3 vertices");
            const auto base = static_cast<std::uint32_t>(raw.vertices.size());
            raw.vertices.insert(raw.vertices.end(), facet.begin(), facet.end());
            raw.faces.push_back({base, base + 1, base + 2});
            in_facet = false;
        } else if (key == "endsolid") {
            if (in_facet) parse_fail(path, reader.number(), "endsolid inside a facet");
        } else {
            parse_fail(path, reader.number(), "unexpected token '" + std::string(tok[0]) + "'");
        }
    }
    if (!saw_solid) parse_fail(path, 1, "missing 'solid' header");
    if (in_facet) parse_fail(path, reader.number(), "unterminated facet");
    return raw;
}

RawMesh parse_stl(const std::filesystem::path& path, std::string_view data) {
    if (data.size() >= 84) {
        const auto count = read_le<std::uint32_t>(data.data() + 80);
        if (84ull + 50ull * count == data.size()) return parse_stl_binary(path, data);
    }
    auto first = data.find_first_not_of(" \t\r\n");
    const bool looks_ascii = first != std::string_view::npos && lower(data.substr(first, 5)) == "solid";
    if (looks_ascii) return parse_stl_ascii(path, data);
    return parse_stl_binary(path, data);
}

// ---- OBJ -------------------------------------------------------------------

RawMesh parse_obj(const std::filesystem::path& path, std::string_view text) {
    RawMesh raw;
    LineReader reader(text);
    std::string_view line;
    while (reader.next(line)) {
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        const auto tok = split_ws(line);
        if (tok.empty()) continue;
        if (tok[0] == "v") {
            Vec3 p;
            if (tok.size() < 4 || !parse_double(tok[1], p.x()) || !parse_double(tok[2], p.y()) ||
                !parse_double(tok[3], p.z()))
                parse_fail(path, reader.number(), "malformed vertex record");
            raw.vertices.push_back(p);
        } else if (tok[0] == "f") {
            if (tok.size() < 4) parse_fail(path, reader.number(), "face with fewer than 3 vertices");
            std::vector<std::uint32_t> poly;
            for (std::size_t i = 1; i < tok.size(); ++i) {
                const auto ref = tok[i].substr(0, tok[i].find('/'));
                long long idx = 0;
                if (!parse_int(ref, idx) || idx == 0) parse_fail(path, reader.number(), "malformed face index");
                const long long n = static_cast<long long>(raw.vertices.size());
                const long long resolved = idx > 0 ? idx - 1 : n + idx;
                if (resolved < 0 || resolved >= n) parse_fail(path, reader.number(), "face index out of range");
                poly.push_back(static_cast<std::uint32_t>(resolved));
            }
            for (std::size_t k = 1; k + 1 < poly.size(); ++k) raw.faces.push_back({poly[0], poly[k], poly[k + 1]});
        }
    }
    return raw;
}

// ---- PLY -------------------------------------------------------------------

enum class PlyType { kInt8, kUint8, kInt16, kUint16, kInt32, kUint32, kFloat32, kFloat64 };

std::optional<PlyType> ply_type(std::string_view name) {
    const std::string n = lower(name);
    if (n == "char" || n == "int8") return PlyType::kInt8;
    if (n == "uchar" || n == "uint8") return PlyType::kUint8;
    if (n == "short" || n == "int16") return PlyType::kInt16;
    if (n == "ushort" || n == "uint16") return PlyType::kUint16;
    if (n == "int" || n == "int32") return PlyType::kInt32;
    if (n == "uint" || n == "uint32") return PlyType::kUint32;
    if (n == "float" || n == "float32") return PlyType::kFloat32;
    if (n == "double" || n == "float64") return PlyType::kFloat64;
    return std::nullopt;
}

std::size_t ply_size(PlyType t) {
    switch (t) {
        case PlyType::kInt8:
        case PlyType::kUint8: return 1;
        case PlyType::kInt16:
        case PlyType::kUint16: return 2;
        case PlyType::kInt32:
        case PlyType::kUint32:
        case PlyType::kFloat32: return 4;
        case PlyType::kFloat64: return 8;
    }
    return 0;
}

double ply_read_binary(PlyType t, const char* p) {
    switch (t) {
        case PlyType::kInt8: return read_le<std::int8_t>(p);
        case PlyType::kUint8: return read_le<std::uint8_t>(p);
        case PlyType::kInt16: return read_le<std::int16_t>(p);
        case PlyType::kUint16: return read_le<std::uint16_t>(p);
        case PlyType::kInt32: return read_le<std::int32_t>(p);
        case PlyType::kUint32: return read_le<std::uint32_t>(p);
        case PlyType::kFloat32: return read_le<float>(p);
        case PlyType::kFloat64: return read_le<double>(p);
    }
    return 0.0;
}

struct PlyProperty {
    std::string name;
    PlyType type = PlyType::kFloat32;
    bool is_list = false;
    PlyType count_type = PlyType::kUint8;
};

struct PlyElement {
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> properties;
};

// Sequential value source over either ASCII tokens or binary bytes.
class PlyCursor {
public:
    PlyCursor(const std::filesystem::path& path, std::string_view body, bool binary, std::size_t first_line)
        : path_(path), body_(body), binary_(binary), lines_(body), line_no_(first_line) {}

    double next(PlyType type) {
        if (binary_) {
            const auto n = ply_size(type);
            if (pos_ + n > body_.size()) parse_fail(path_, 0, "binary PLY body truncated");
            const double v = ply_read_binary(type, body_.data() + pos_);
            pos_ += n;
            return v;
        }
        while (token_ >= tokens_.size()) {
            std::string_view line;
            if (!lines_.next(line)) parse_fail(path_, line_no_, "ASCII PLY body truncated");
            ++line_no_;
            tokens_ = split_ws(line);
            token_ = 0;
        }
        double v = 0.0;
        if (!parse_double(tokens_[token_++], v)) parse_fail(path_, line_no_, "malformed number");
        return v;
    }

    // ASCII elements occupy one line each; drop leftovers so a short record is caught.
    void end_record() {
        if (!binary_ && token_ < tokens_.size()) parse_fail(path_, line_no_, "extra values in PLY record");
        token_ = tokens_.size();
    }

    std::size_t line() const { return line_no_; }

private:
    const std::filesystem::path& path_;
    std::string_view body_;
    bool binary_;
    std::size_t pos_ = 0;
    LineReader lines_;
    std::size_t line_no_;
    std::vector<std::string_view> tokens_;
    std::size_t token_ = 0;
};

RawMesh parse_ply(const std::filesystem::path& path, std::string_view data) {
    LineReader reader(data);
    std::string_view line;
    if (!reader.next(line) || split_ws(line).empty() || split_ws(line)[0] != "ply")
        parse_fail(path, 1, "missing 'ply' magic");

    bool binary = false;
    bool saw_format = false;
    std::vector<PlyElement> elements;
    bool header_done = false;
    while (reader.next(line)) {
        const auto tok = split_ws(line);
        if (tok.empty()) continue;
        if (tok[0] == "format") {
            if (tok.size() < 2) parse_fail(path, reader.number(), "malformed format line");
            if (tok[1] == "ascii") binary = false;
            else if (tok[1] == "binary_little_endian") binary = true;
            else parse_fail(path, reader.number(), "unsupported PLY format '" + std::string(tok[1]) + "'");
            saw_format = true;
        } else if (tok[0] == "element") {
            long long count = 0;
            if (tok.size() != 3 || !parse_int(tok[2], count) || count < 0)
                parse_fail(path, reader.number(), "malformed element line");
            elements.push_back(PlyElement{std::string(tok[1]), static_cast<std::size_t>(count), {}});
        } else if (tok[0] == "property") {
            if (elements.empty()) parse_fail(path, reader.number(), "property before any element");
            PlyProperty prop;
            if (tok.size() == 5 && tok[1] == "list") {
                auto ct = ply_type(tok[2]);
                auto it = ply_type(tok[3]);
                if (!ct || !it) parse_fail(path, reader.number(), "unknown PLY list type");
                prop.is_list = true;
                prop.count_type = *ct;
                prop.type = *it;
                prop.name = std::string(tok[4]);
            } else if (tok.size() == 3) {
                auto t = ply_type(tok[1]);
                if (!t) parse_fail(path, reader.number(), "unknown PLY type '" + std::string(tok[1]) + "'");
                prop.type = *t;
                prop.name = std::string(tok[2]);
            } else {
                parse_fail(path, reader.number(), "malformed property line");
            }
            elements.back().properties.push_back(prop);
        } else if (tok[0] == "end_header") {
            header_done = true;
            break;
        } else if (tok[0] == "comment" || tok[0] == "obj_info") {
            continue;
        } else {
            parse_fail(path, reader.number(), "unexpected header line");
        }
    }
    if (!header_done) parse_fail(path, reader.number(), "missing end_header");
    if (!saw_format) parse_fail(path, reader.number(), "missing format line");

    RawMesh raw;
    PlyCursor cursor(path, data.substr(reader.offset()), binary, reader.number());
    bool have_vertices = false;
    for (const auto& el : elements) {
        const bool is_vertex = el.name == "vertex";
        const bool is_face = el.name == "face";
        int ix = -1, iy = -1, iz = -1, iidx = -1;
        for (int p = 0; p < static_cast<int>(el.properties.size()); ++p) {
            const auto& name = el.properties[p].name;
            if (name == "x") ix = p;
            if (name == "y") iy = p;
            if (name == "z") iz = p;
            if ((name == "vertex_indices" || name == "vertex_index") && el.properties[p].is_list) iidx = p;
        }
        if (is_vertex && (ix < 0 || iy < 0 || iz < 0)) parse_fail(path, 0, "vertex element lacks x/y/z");
        if (is_face && iidx < 0) parse_fail(path, 0, "face element lacks a vertex_indices list");
        if (is_vertex) have_vertices = true;

        for (std::size_t r = 0; r < el.count; ++r) {
            Vec3 p = Vec3::Zero();
            std::vector<std::uint32_t> poly;
            for (int pi = 0; pi < static_cast<int>(el.properties.size()); ++pi) {
                const auto& prop = el.properties[pi];
                if (prop.is_list) {
                    const double n = cursor.next(prop.count_type);
                    if (n < 0 || n != static_cast<long long>(n)) parse_fail(path, cursor.line(), "bad list length");
                    for (long long k = 0; k < static_cast<long long>(n); ++k) {
                        const double v = cursor.next(prop.type);
                        if (is_face && pi == iidx) {
                            if (v < 0 || v >= static_cast<double>(raw.vertices.size()) || !have_vertices)
                                parse_fail(path, cursor.line(), "face index out of range");
                            poly.push_back(static_cast<std::uint32_t>(v));
                        }
                    }
                } else {
                    const double v = cursor.next(prop.type);
                    if (pi == ix) p.x() = v;
                    if (pi == iy) p.y() = v;
                    if (pi == iz) p.z() = v;
                }
            }
            cursor.end_record();
            if (is_vertex) raw.vertices.push_back(p);
            if (is_face) {
                if (poly.size() < 3) parse_fail(path, cursor.line(), "face with fewer than 3 vertices");
                for (std::size_t k = 1; k + 1 < poly.size(); ++k) raw.faces.push_back({poly[0], poly[k], poly[k + 1]});
            }
        }
    }
    return raw;
}

// ---- writers ---------------------------------------------------------------

void append_vec(std::string& out, const Vec3& v) {
    out += format_double(v.x());
    out += ' ';
    out += format_double(v.y());
    out += ' ';
    out += format_double(v.z());
}

template <typename T>
void append_le(std::string& out, T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.append(buf, sizeof(T));
}

std::string write_stl(const TriangleMesh& mesh, bool binary) {
    std::string out;
    if (binary) {
        out.assign(80, '\0');
        const char tag[] = "spinemorph binary STL";
        std::memcpy(out.data(), tag, sizeof tag - 1);
        append_le<std::uint32_t>(out, static_cast<std::uint32_t>(mesh.face_count()));
        for (std::size_t f = 0; f < mesh.face_count(); ++f) {
            const auto tri = mesh.triangle(f);
            Vec3 n = (tri[1] - tri[0]).cross(tri[2] - tri[0]);
            if (n.norm() > 0) n.normalize();
            for (int k = 0; k < 3; ++k) append_le<float>(out, static_cast<float>(n[k]));
            for (const auto& v : tri)
                for (int k = 0; k < 3; ++k) append_le<float>(out, static_cast<float>(v[k]));
            append_le<std::uint16_t>(out, 0);
        }
        return out;
    }
    out.reserve(mesh.face_count() * 200);
    out += "solid spinemorph\n";
    for (std::size_t f = 0; f < mesh.face_count(); ++f) {
        const auto tri = mesh.triangle(f);
        Vec3 n = (tri[1] - tri[0]).cross(tri[2] - tri[0]);
        if (n.norm() > 0) n.normalize();
        // Normals are recomputed on load; keep them short.
        char buf[96];
        std::snprintf(buf, sizeof buf, "facet normal %.6g %.6g %.6g\nouter loop\n", n.x(), n.y(), n.z());
        out += buf;
        for (const auto& v : tri) {
            out += "vertex ";
            append_vec(out, v);
            out += '\n';
        }
        out += "endloop\nendfacet\n";
    }
    out += "endsolid spinemorph\n";
    return out;
}

std::string write_obj(const TriangleMesh& mesh) {
    std::string out;
    out.reserve(mesh.vertex_count() * 60 + mesh.face_count() * 24);
    for (const auto& v : mesh.vertices()) {
        out += "v ";
        append_vec(out, v);
        out += '\n';
    }
    for (const auto& f : mesh.faces()) {
        out += "f " + std::to_string(f[0] + 1) + ' ' + std::to_string(f[1] + 1) + ' ' + std::to_string(f[2] + 1) + '\n';
    }
    return out;
}

std::string write_ply(const TriangleMesh& mesh, bool binary) {
    std::string out = "ply\nformat ";
    out += binary ? "binary_little_endian" : "ascii";
    out += " 1.0\nelement vertex " + std::to_string(mesh.vertex_count()) + "\n";
    out += "property double x\nproperty double y\nproperty double z\n";
    out += "element face " + std::to_string(mesh.face_count()) + "\n";
    out += "property list uchar uint vertex_indices\nend_header\n";
    if (binary) {
        for (const auto& v : mesh.vertices())
            for (int k = 0; k < 3; ++k) append_le<double>(out, v[k]);
        for (const auto& f : mesh.faces()) {
            append_le<std::uint8_t>(out, 3);
            for (auto i : f) append_le<std::uint32_t>(out, i);
        }
        return out;
    }
    for (const auto& v : mesh.vertices()) {
        append_vec(out, v);
        out += '\n';
    }
    for (const auto& f : mesh.faces())
        out += "3 " + std::to_string(f[0]) + ' ' + std::to_string(f[1]) + ' ' + std::to_string(f[2]) + '\n';
    return out;
}

}  // namespace

MeshFormat format_from_extension(const std::filesystem::path& path) {
    const std::string ext = lower(path.extension().string());
    if (ext == ".stl") return MeshFormat::kStl;
    if (ext == ".obj") return MeshFormat::kObj;
    if (ext == ".ply") return MeshFormat::kPly;
    throw Error(ErrorCode::kInvalidArgument, "cannot infer mesh format from '" + path.string() + "'");
}

TriangleMesh load_mesh(const std::filesystem::path& path, MeshFormat format) {
    if (format == MeshFormat::kAuto) format = format_from_extension(path);
    const std::string data = detail::read_file(path);

    RawMesh raw;
    switch (format) {
        case MeshFormat::kStl: raw = parse_stl(path, data); break;
        case MeshFormat::kObj: raw = parse_obj(path, data); break;
        case MeshFormat::kPly: raw = parse_ply(path, data); break;
        case MeshFormat::kAuto: break;
    }
    for (const auto& v : raw.vertices)
        if (!v.allFinite()) throw Error(ErrorCode::kParseError, path.string() + ": non-finite coordinate");

    // Faces that collapse under welding are dropped rather than rejected.
    TriangleMesh mesh = weld(raw.vertices, raw.faces);
    if (mesh.vertex_count() < 3 || mesh.face_count() == 0)
        throw Error(ErrorCode::kDegenerateMesh, path.string() + ": " + std::to_string(mesh.vertex_count()) +
                                                    " unique vertices, " + std::to_string(mesh.face_count()) +
                                                    " faces");
    return mesh;
}

void save_mesh(const TriangleMesh& mesh, const std::filesystem::path& path, MeshFormat format,
               SaveOptions options) {
    if (mesh.face_count() == 0 || mesh.vertex_count() < 3)
        throw Error(ErrorCode::kDegenerateMesh, "refusing to write a mesh without faces to " + path.string());
    if (format == MeshFormat::kAuto) format = format_from_extension(path);

    std::string contents;
    switch (format) {
        case MeshFormat::kStl: contents = write_stl(mesh, options.binary); break;
        case MeshFormat::kObj: contents = write_obj(mesh); break;
        case MeshFormat::kPly: contents = write_ply(mesh, options.binary); break;
        case MeshFormat::kAuto: break;
    }
    detail::write_file_atomic(path, contents);
}

}  // namespace spinemorph
