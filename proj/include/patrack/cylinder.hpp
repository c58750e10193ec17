// Finite cylinder model and the discrete fit search: voxel-count similarity
// scoring over a deterministic direction/radius grid.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "patrack/volume.hpp"

namespace patrack {

/// Finite cylinder: extends from `base` along unit `axis` for `height` mm
/// with the given radius. Membership is tested in world coordinates.
struct Cylinder {
    WorldPoint base;
    Vec3 axis;
    double radius = 0.0;
    double height = 0.0;

    /// Voxel-center-in-cylinder test. The perpendicular distance is evaluated
    /// as |q|^2 - t^2 with t the axial coordinate; this exact discriminant is
    /// part of the membership contract shared with the phantom rasterizer.
    bool contains(const WorldPoint& p) const {
        const Vec3 q = p - base;
        const double t = dot(q, axis);
        if (t < 0.0 || t > height) return false;
        return dot(q, q) - t * t <= radius * radius;
    }

    void validate() const {
        if (!(radius > 0.0) || !(height > 0.0)) throw std::invalid_argument("cylinder: radius and height must be positive");
        if (std::fabs(norm(axis) - 1.0) > 1e-6) throw std::invalid_argument("cylinder: axis must be unit length");
    }
};

/// Inclusive lattice index range covering the cylinder's world-space bounding
/// box. Indices are NOT clamped to the grid: lattice points outside the
/// volume participate as background.
inline void cylinder_index_range(const GridGeometry& g, const Cylinder& c, GridIndex& lo, GridIndex& hi) {
    const Vec3 tip = c.base + c.axis * c.height;
    // half-extent of the cylinder perpendicular to each world axis
    const Vec3 pad{c.radius * std::sqrt(std::max(0.0, 1.0 - c.axis.x * c.axis.x)),
                   c.radius * std::sqrt(std::max(0.0, 1.0 - c.axis.y * c.axis.y)),
                   c.radius * std::sqrt(std::max(0.0, 1.0 - c.axis.z * c.axis.z))};
    const Vec3 wlo{std::min(c.base.x, tip.x) - pad.x, std::min(c.base.y, tip.y) - pad.y,
                   std::min(c.base.z, tip.z) - pad.z};
    const Vec3 whi{std::max(c.base.x, tip.x) + pad.x, std::max(c.base.y, tip.y) + pad.y,
                   std::max(c.base.z, tip.z) + pad.z};
    const Vec3 clo = g.world_to_voxel(wlo);
    const Vec3 chi = g.world_to_voxel(whi);
    lo = {static_cast<int>(std::ceil(clo.x - 1e-12)), static_cast<int>(std::ceil(clo.y - 1e-12)),
          static_cast<int>(std::ceil(clo.z - 1e-12))};
    hi = {static_cast<int>(std::floor(chi.x + 1e-12)), static_cast<int>(std::floor(chi.y + 1e-12)),
          static_cast<int>(std::floor(chi.z + 1e-12))};
}

struct CylinderScore {
    long long score = 0;   // foreground - 5 * background
    long long fg = 0;
    long long total = 0;   // lattice points whose center lies in the cylinder
    double fill = 0.0;     // fg / total, 0 when the cylinder encloses no centers
};

constexpr int kBackgroundPenalty = 5;

/// Similarity between a model cylinder and the working mask: +1 per enclosed
/// foreground voxel, -5 per enclosed background voxel. Deliberately not
/// normalized by cylinder size. Lattice points outside the volume count as
/// background.
inline CylinderScore score_cylinder(const Mask& m, const Cylinder& c) {
    GridIndex lo, hi;
    cylinder_index_range(m.geom, c, lo, hi);
    CylinderScore r;
    const auto& dims = m.geom.dims;
    for (int z = lo.z; z <= hi.z; ++z) {
        const double pz = m.geom.origin.z + z * m.geom.spacing.z;
        const bool z_in = z >= 0 && z < dims[2];
        for (int y = lo.y; y <= hi.y; ++y) {
            const double py = m.geom.origin.y + y * m.geom.spacing.y;
            const bool zy_in = z_in && y >= 0 && y < dims[1];
            const std::size_t row =
                zy_in ? static_cast<std::size_t>(dims[0]) * (static_cast<std::size_t>(y) +
                        static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(z))
                      : 0;
            for (int x = lo.x; x <= hi.x; ++x) {
                const double px = m.geom.origin.x + x * m.geom.spacing.x;
                if (!c.contains({px, py, pz})) continue;
                ++r.total;
                if (zy_in && x >= 0 && x < dims[0] && m.values[row + static_cast<std::size_t>(x)]) ++r.fg;
            }
        }
    }
    r.score = r.fg - kBackgroundPenalty * (r.total - r.fg);
    r.fill = r.total > 0 ? static_cast<double>(r.fg) / static_cast<double>(r.total) : 0.0;
    return r;
}

/// Foreground voxel indices (linear) enclosed by the cylinder.
inline std::vector<std::size_t> captured_voxels(const Mask& m, const Cylinder& c) {
    GridIndex lo, hi;
    cylinder_index_range(m.geom, c, lo, hi);
    std::vector<std::size_t> out;
    const auto& dims = m.geom.dims;
    for (int z = std::max(lo.z, 0); z <= std::min(hi.z, dims[2] - 1); ++z) {
        const double pz = m.geom.origin.z + z * m.geom.spacing.z;
        for (int y = std::max(lo.y, 0); y <= std::min(hi.y, dims[1] - 1); ++y) {
            const double py = m.geom.origin.y + y * m.geom.spacing.y;
            for (int x = std::max(lo.x, 0); x <= std::min(hi.x, dims[0] - 1); ++x) {
                const std::size_t lin = m.geom.linear({x, y, z});
                if (!m.values[lin]) continue;
                if (c.contains({m.geom.origin.x + x * m.geom.spacing.x, py, pz})) out.push_back(lin);
            }
        }
    }
    return out;
}

/// Deterministic Fibonacci-spiral direction set spanning the hemisphere about
/// `about` (solid angle 2*pi). Sample 0 is exactly `about`; polar angle grows
/// strictly with the sample index, down to the equator.
inline std::vector<Vec3> hemisphere_directions(const Vec3& about, int n) {
    if (n < 1) throw std::invalid_argument("hemisphere_directions: n must be >= 1");
    Vec3 u, v;
    orthonormal_basis(about, u, v);
    std::vector<Vec3> dirs;
    dirs.reserve(n);
    constexpr double golden_angle = 2.399963229728653;  // pi * (3 - sqrt(5))
    for (int k = 0; k < n; ++k) {
        const double z = n == 1 ? 1.0 : 1.0 - static_cast<double>(k) / (n - 1);
        const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double phi = golden_angle * k;
        dirs.push_back(normalized(about * z + u * (rho * std::cos(phi)) + v * (rho * std::sin(phi))));
    }
    return dirs;
}

/// Deterministic Fibonacci-spiral set inside a cone of the given half-angle
/// about `about` (sample 0 is exactly `about`).
inline std::vector<Vec3> cone_directions(const Vec3& about, double half_angle_rad, int n) {
    if (n < 1) throw std::invalid_argument("cone_directions: n must be >= 1");
    Vec3 u, v;
    orthonormal_basis(about, u, v);
    std::vector<Vec3> dirs;
    dirs.reserve(n);
    constexpr double golden_angle = 2.399963229728653;
    const double z_min = std::cos(half_angle_rad);
    for (int k = 0; k < n; ++k) {
        const double z = n == 1 ? 1.0 : 1.0 - (1.0 - z_min) * static_cast<double>(k) / (n - 1);
        const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double phi = golden_angle * k;
        dirs.push_back(normalized(about * z + u * (rho * std::cos(phi)) + v * (rho * std::sin(phi))));
    }
    return dirs;
}

struct FitResult {
    Cylinder cylinder;
    long long score = 0;
    double fill = 0.0;
};

/// Exhaustive argmax of the similarity score over a direction set and radius
/// grid. Ties prefer the smaller angle to `prev_axis`, then the larger
/// radius; the direction set's strict polar ordering makes this a total
/// order, so the search is deterministic.
inline FitResult fit_cylinder_grid(const Mask& m, const WorldPoint& base, const Vec3& prev_axis,
                                   const std::vector<Vec3>& directions, const std::vector<double>& radii,
                                   double height) {
    FitResult best;
    bool have = false;
    double best_align = 0.0;
    for (const auto& dir : directions) {
        const double align = dot(dir, prev_axis);
        for (const double r : radii) {
            const Cylinder c{base, dir, r, height};
            const CylinderScore s = score_cylinder(m, c);
            const bool better =
                !have || s.score > best.score ||
                (s.score == best.score && (align > best_align ||
                (align == best_align && r > best.cylinder.radius)));
            if (better) {
                best = {c, s.score, s.fill};
                best_align = align;
                have = true;
            }
        }
    }
    return best;
}

/// Uniform radius grid over [lo, hi] with the given number of samples.
inline std::vector<double> radius_window_grid(double lo, double hi, int steps) {
    std::vector<double> radii;
    if (steps <= 1 || hi <= lo) {
        radii.push_back(lo);
        return radii;
    }
    for (int i = 0; i < steps; ++i) radii.push_back(lo + (hi - lo) * i / (steps - 1));
    return radii;
}

/// Radius grid with fixed step, inclusive of both ends.
inline std::vector<double> radius_step_grid(double lo, double hi, double step) {
    std::vector<double> radii;
    for (double r = lo; r <= hi + 1e-9; r += step) radii.push_back(std::min(r, hi));
    if (radii.empty() || radii.back() < hi - 1e-9) radii.push_back(hi);
    return radii;
}

}  // namespace patrack
