#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

#include "spinemorph/mesh.hpp"

namespace spinemorph::detail {

// Uniform-grid hash over points; find() looks in the 27 cells around a query
// so any stored point within `tolerance` is found.
class PointIndex {
public:
    explicit PointIndex(double tolerance) : tolerance_(tolerance), cell_(tolerance > 0 ? tolerance : 1e-12) {}

    std::optional<std::uint32_t> find(const Vec3& p) const {
        const auto key = cell_of(p);
        const double tol2 = tolerance_ * tolerance_;
        for (int dx = -1; dx <= 1; ++dx)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dz = -1; dz <= 1; ++dz) {
                    auto it = cells_.find(Key{key.x + dx, key.y + dy, key.z + dz});
                    if (it == cells_.end()) continue;
                    for (std::uint32_t id : it->second)
                        if ((points_[id] - p).squaredNorm() <= tol2) return id;
                }
        return std::nullopt;
    }

    /// Returns the id of an existing point within tolerance, or stores `p`.
    std::uint32_t insert(const Vec3& p) {
        if (auto id = find(p)) return *id;
        const auto id = static_cast<std::uint32_t>(points_.size());
        points_.push_back(p);
        cells_[cell_of(p)].push_back(id);
        return id;
    }

    const std::vector<Vec3>& points() const noexcept { return points_; }

private:
    struct Key {
        std::int64_t x, y, z;
        bool operator==(const Key&) const = default;
    };
    struct KeyHash {
        std::size_t operator()(const Key& k) const noexcept {
            std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9E3779B97F4A7C15ull;
            h ^= static_cast<std::uint64_t>(k.y) * 0xC2B2AE3D27D4EB4Full + (h << 6) + (h >> 2);
            h ^= static_cast<std::uint64_t>(k.z) * 0x165667B19E3779F9ull + (h << 6) + (h >> 2);
            return static_cast<std::size_t>(h);
        }
    };

    Key cell_of(const Vec3& p) const {
        return Key{static_cast<std::int64_t>(std::floor(p.x() / cell_)),
                   static_cast<std::int64_t>(std::floor(p.y() / cell_)),
                   static_cast<std::int64_t>(std::floor(p.z() / cell_))};
    }

    double tolerance_;
    double cell_;
    std::vector<Vec3> points_;
    std::unordered_map<Key, std::vector<std::uint32_t>, KeyHash> cells_;
};

}  // namespace spinemorph::detail
