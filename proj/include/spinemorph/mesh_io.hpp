#pragma once

#include <filesystem>

#include "spinemorph/mesh.hpp"

namespace spinemorph {

enum class MeshFormat { kAuto, kStl, kObj, kPly };

struct SaveOptions {
    /// STL: binary float32 records (lossy above ~1e-5 mm at spine scale).
    /// PLY: binary_little_endian with float64 coordinates.
    bool binary = false;
};

/// Format implied by the file extension (.stl/.obj/.ply, case-insensitive).
MeshFormat format_from_extension(const std::filesystem::path& path);

/// Reads STL (ASCII or binary), OBJ or PLY (ASCII or binary little-endian)
/// and welds coincident vertices.
///
/// Throws file-not-found, parse-error (with line number for text formats) or
/// degenerate-mesh when fewer than 3 unique vertices or no faces remain.
TriangleMesh load_mesh(const std::filesystem::path& path, MeshFormat format = MeshFormat::kAuto);

/// Writes via a temporary file renamed into place. Text formats print
/// coordinates with the shortest round-trip representation, so reloading
/// reproduces the in-memory vertices exactly.
void save_mesh(const TriangleMesh& mesh, const std::filesystem::path& path,
               MeshFormat format = MeshFormat::kAuto, SaveOptions options = {});

}  // namespace spinemorph
