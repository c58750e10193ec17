// Synthetic ground truth: bifurcating vascular trees (Murray's law radii)
// rasterized into HU volumes with an optional airway companion, decoy veins,
// reproducible noise and paired surface markings.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "patrack/ssmetric.hpp"
#include "patrack/volume.hpp"

namespace patrack {

/// One straight phantom branch: a capsule (segment swept by a sphere).
struct PhantomBranch {
    int id = 0;
    int parent = -1;
    int generation = 0;
    Vec3 origin{};
    Vec3 direction{0.0, 0.0, 1.0};
    double length = 0.0;
    double radius = 0.0;
    VesselKind kind = VesselKind::artery;

    Vec3 tip() const { return origin + direction * length; }
    bool contains(const WorldPoint& p) const {
        return point_segment_distance(p, origin, direction, length) <= radius;
    }
};

struct TreeSpec {
    std::vector<PhantomBranch> branches;
    int generations = 1;
    double bifurcation_angle_deg = 60.0;
    double radius_exponent = 3.0;  // Murray's law
};

struct AirwayCompanion {
    bool enabled = false;
    double lumen_radius = 3.0;    // air core, mm
    double wall_thickness = 1.5;  // soft-tissue wall, mm
    double offset = 10.0;         // axis-to-axis distance from the root branch, mm
};

struct PhantomConfig {
    std::array<int, 3> dims{128, 128, 128};
    Vec3 spacing{0.7, 0.7, 1.25};
    Vec3 origin{0.0, 0.0, 0.0};
    std::int16_t vessel_hu = 0;
    std::int16_t parenchyma_hu = -900;
    std::int16_t airway_lumen_hu = -1000;
    std::int16_t airway_wall_hu = 0;
    double noise_sigma_hu = 0.0;
    std::uint64_t rng_seed = 17;
    AirwayCompanion airway;

    GridGeometry geometry() const { return GridGeometry{dims, spacing, origin}; }

    void validate() const {
        geometry().validate();
        if (!(vessel_hu > -400 && parenchyma_hu < -400))
            throw std::invalid_argument("phantom: HU levels must straddle the -400 threshold");
        if (noise_sigma_hu < 0.0) throw std::invalid_argument("phantom: noise sigma must be >= 0");
    }
};

namespace detail {

/// splitmix64: tiny deterministic generator, stable across platforms.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline double uniform01(std::uint64_t& state) {
    return static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
}

/// Rotate `v` by `angle` radians within the plane spanned by `v` and unit `m`
/// (m perpendicular to v).
inline Vec3 rotate_towards(const Vec3& v, const Vec3& m, double angle) {
    return normalized(v * std::cos(angle) + m * std::sin(angle));
}

}  // namespace detail

struct TreeOptions {
    int generations = 3;
    double root_radius = 4.0;
    double angle_deg = 60.0;       // angle between sibling children
    double length_factor = 4.0;    // branch length = factor * radius
    std::uint64_t rng_seed = 17;
    Vec3 root_origin{0.0, 0.0, 0.0};
    Vec3 root_direction{0.0, 0.0, 1.0};
    double radius_exponent = 3.0;
};

/// Generate a symmetric bifurcating tree. Children split the parent radius
/// equally under Murray's law (r_child = r_parent / 2^(1/exponent)); the
/// split plane azimuth is drawn deterministically from the seed.
inline TreeSpec generate_tree(const TreeOptions& opts) {
    if (opts.generations < 1) throw std::invalid_argument("generate_tree: generations must be >= 1");
    if (!(opts.root_radius > 0.0)) throw std::invalid_argument("generate_tree: root radius must be positive");
    if (!(opts.angle_deg > 0.0 && opts.angle_deg < 180.0))
        throw std::invalid_argument("generate_tree: angle must be in (0, 180)");
    TreeSpec spec;
    spec.generations = opts.generations;
    spec.bifurcation_angle_deg = opts.angle_deg;
    spec.radius_exponent = opts.radius_exponent;

    PhantomBranch root;
    root.id = 0;
    root.origin = opts.root_origin;
    root.direction = normalized(opts.root_direction);
    root.radius = opts.root_radius;
    root.length = opts.length_factor * opts.root_radius;
    spec.branches.push_back(root);

    std::uint64_t rng = opts.rng_seed;
    const double half_angle = opts.angle_deg * 3.14159265358979323846 / 180.0 / 2.0;
    const double shrink = std::pow(2.0, -1.0 / opts.radius_exponent);
    std::size_t level_begin = 0;
    for (int g = 1; g < opts.generations; ++g) {
        const std::size_t level_end = spec.branches.size();
        for (std::size_t b = level_begin; b < level_end; ++b) {
            const PhantomBranch parent = spec.branches[b];
            Vec3 u, v;
            orthonormal_basis(parent.direction, u, v);
            const double azimuth = detail::uniform01(rng) * 2.0 * 3.14159265358979323846;
            const Vec3 m = u * std::cos(azimuth) + v * std::sin(azimuth);
            for (int side = 0; side < 2; ++side) {
                PhantomBranch child;
                child.id = static_cast<int>(spec.branches.size());
                child.parent = parent.id;
                child.generation = g;
                child.origin = parent.tip();
                child.direction =
                    detail::rotate_towards(parent.direction, m, side == 0 ? half_angle : -half_angle);
                child.radius = parent.radius * shrink;
                child.length = opts.length_factor * child.radius;
                spec.branches.push_back(child);
            }
        }
        level_begin = level_end;
    }
    return spec;
}

/// Append a detached straight tube (used as a decoy vein).
inline void add_decoy_tube(TreeSpec& spec, const Vec3& origin, const Vec3& direction, double length,
                           double radius) {
    PhantomBranch b;
    b.id = static_cast<int>(spec.branches.size());
    b.parent = -1;
    b.generation = 0;
    b.origin = origin;
    b.direction = normalized(direction);
    b.length = length;
    b.radius = radius;
    b.kind = VesselKind::vein;
    spec.branches.push_back(b);
}

/// Smallest capsule-to-capsule clearance between a candidate tube and every
/// existing branch (negative when they overlap).
inline double tube_clearance(const TreeSpec& spec, const PhantomBranch& tube) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& b : spec.branches) {
        // sampled segment-segment distance; branches are short, 64 samples suffice
        double axis_dist = std::numeric_limits<double>::infinity();
        for (int i = 0; i <= 64; ++i) {
            const Vec3 p = tube.origin + tube.direction * (tube.length * i / 64.0);
            axis_dist = std::min(axis_dist, point_segment_distance(p, b.origin, b.direction, b.length));
        }
        for (int i = 0; i <= 64; ++i) {
            const Vec3 p = b.origin + b.direction * (b.length * i / 64.0);
            axis_dist = std::min(axis_dist, point_segment_distance(p, tube.origin, tube.direction, tube.length));
        }
        best = std::min(best, axis_dist - tube.radius - b.radius);
    }
    return best;
}

/// Place detached decoy vein tubes around the tree, parallel to the root, at
/// deterministic azimuths, pushed outward until each keeps the requested
/// clearance from every artery branch.
inline void place_decoy_tubes(TreeSpec& spec, int count, double radius, double length, double clearance,
                              const PhantomConfig& cfg) {
    const PhantomBranch& root = spec.branches.front();
    Vec3 u, v;
    orthonormal_basis(root.direction, u, v);
    const GridGeometry geom = cfg.geometry();
    const Vec3 world_lo = geom.voxel_to_world(0.0, 0.0, 0.0);
    const Vec3 world_hi = geom.voxel_to_world(geom.dims[0] - 1.0, geom.dims[1] - 1.0, geom.dims[2] - 1.0);
    for (int d = 0; d < count; ++d) {
        // keep decoys away from the airway side (azimuth 0)
        const double azimuth = 3.14159265358979323846 * (0.5 + static_cast<double>(d) / count);
        const Vec3 dir = u * std::cos(azimuth) + v * std::sin(azimuth);
        bool placed = false;
        for (double dist = 15.0; dist <= 80.0; dist += 1.0) {
            PhantomBranch tube;
            tube.origin = root.origin + dir * dist;
            tube.direction = root.direction;
            tube.length = length;
            tube.radius = radius;
            const Vec3 tip = tube.tip();
            bool in_bounds = true;
            for (int a = 0; a < 3; ++a) {
                const double lo = std::min(axis_of(tube.origin, a), axis_of(tip, a)) - radius;
                const double hi = std::max(axis_of(tube.origin, a), axis_of(tip, a)) + radius;
                if (lo < axis_of(world_lo, a) || hi > axis_of(world_hi, a)) in_bounds = false;
            }
            if (!in_bounds) break;
            if (tube_clearance(spec, tube) >= clearance) {
                add_decoy_tube(spec, tube.origin, tube.direction, length, radius);
                placed = true;
                break;
            }
        }
        if (!placed)
            throw std::invalid_argument("place_decoy_tubes: no in-bounds position with the requested clearance");
    }
}

/// Axis of the airway companion tube (parallel to the root branch, offset
/// along the root's first in-plane basis vector).
inline PhantomBranch airway_axis(const TreeSpec& spec, const PhantomConfig& cfg) {
    const PhantomBranch& root = spec.branches.front();
    Vec3 u, v;
    orthonormal_basis(root.direction, u, v);
    PhantomBranch tube;
    tube.origin = root.origin + u * cfg.airway.offset;
    tube.direction = root.direction;
    tube.length = root.length;
    tube.radius = cfg.airway.lumen_radius;
    return tube;
}

struct PhantomImage {
    Volume volume;
    LabelMask labels;       // branch id + 1 per vessel voxel
    Mask airway_lumen;      // empty-geometry mask when no airway is configured
};

/// Rasterize the tree (and optional airway) into an HU volume. A voxel is
/// vessel iff its center lies within some branch capsule; branch order
/// breaks ownership ties.
inline PhantomImage rasterize(const TreeSpec& spec, const PhantomConfig& cfg) {
    cfg.validate();
    const GridGeometry geom = cfg.geometry();
    const Vec3 world_lo = geom.voxel_to_world(0.0, 0.0, 0.0);
    const Vec3 world_hi = geom.voxel_to_world(geom.dims[0] - 1.0, geom.dims[1] - 1.0, geom.dims[2] - 1.0);
    for (const auto& b : spec.branches) {
        const Vec3 tip = b.tip();
        for (int a = 0; a < 3; ++a) {
            const double lo = std::min(axis_of(b.origin, a), axis_of(tip, a)) - b.radius;
            const double hi = std::max(axis_of(b.origin, a), axis_of(tip, a)) + b.radius;
            if (lo < axis_of(world_lo, a) - 1e-9 || hi > axis_of(world_hi, a) + 1e-9)
                throw std::invalid_argument("rasterize: tree exceeds volume bounds (branch " +
                                            std::to_string(b.id) + ")");
        }
    }

    PhantomImage img{Volume(geom, cfg.parenchyma_hu), LabelMask(geom), Mask(geom)};
    const PhantomBranch airway = cfg.airway.enabled ? airway_axis(spec, cfg) : PhantomBranch{};
    const double wall_outer = cfg.airway.lumen_radius + cfg.airway.wall_thickness;

    for (int z = 0; z < geom.dims[2]; ++z)
        for (int y = 0; y < geom.dims[1]; ++y)
            for (int x = 0; x < geom.dims[0]; ++x) {
                const WorldPoint p = geom.voxel_to_world(GridIndex{x, y, z});
                if (cfg.airway.enabled) {
                    const double d = point_segment_distance(p, airway.origin, airway.direction, airway.length);
                    if (d <= cfg.airway.lumen_radius) {
                        img.volume.at(x, y, z) = cfg.airway_lumen_hu;
                        img.airway_lumen.at(x, y, z) = 1;
                        continue;
                    }
                    if (d <= wall_outer) {
                        img.volume.at(x, y, z) = cfg.airway_wall_hu;
                        continue;
                    }
                }
                for (const auto& b : spec.branches)
                    if (b.contains(p)) {
                        img.volume.at(x, y, z) = cfg.vessel_hu;
                        img.labels.at(x, y, z) = static_cast<std::uint16_t>(b.id + 1);
                        break;
                    }
            }
    return img;
}

/// Additive Gaussian noise (Box-Muller over splitmix64: deterministic per
/// seed on every platform), clamped to the int16 range.
inline Volume add_noise(const Volume& v, double sigma_hu, std::uint64_t rng_seed) {
    if (sigma_hu < 0.0) throw std::invalid_argument("add_noise: sigma must be >= 0");
    if (sigma_hu == 0.0) return v;
    Volume out = v;
    std::uint64_t state = rng_seed;
    const std::size_t n = out.values.size();
    for (std::size_t i = 0; i < n; i += 2) {
        double u1 = detail::uniform01(state);
        const double u2 = detail::uniform01(state);
        if (u1 < 1e-300) u1 = 1e-300;
        const double mag = std::sqrt(-2.0 * std::log(u1));
        const double g0 = mag * std::cos(2.0 * 3.14159265358979323846 * u2);
        const double g1 = mag * std::sin(2.0 * 3.14159265358979323846 * u2);
        auto apply = [&](std::size_t idx, double g) {
            const double val = static_cast<double>(out.values[idx]) + sigma_hu * g;
            out.values[idx] = static_cast<std::int16_t>(std::clamp(val, -32768.0, 32767.0));
        };
        apply(i, g0);
        if (i + 1 < n) apply(i + 1, g1);
    }
    return out;
}

enum class MarkingMode { dense, sparse };

struct MarkingOptions {
    double sparse_spacing = 4.0;  // ring interval and circumferential spacing, mm
    double end_margin_factor = 0.5;  // skip this fraction of the radius at branch ends
};

/// Emit surface markings on the analytic lateral surfaces of every branch.
/// Sparse mode spaces rings and points at ~4 mm; dense mode at ~the finest
/// voxel pitch. Points falling inside another branch (junction overlap) or
/// outside the volume are skipped so every emitted point lies on the
/// rasterized union surface.
inline GroundTruth emit_truth_markings(const TreeSpec& spec, const PhantomConfig& cfg, MarkingMode mode,
                                       const MarkingOptions& opts = {}) {
    const double pitch = std::min(cfg.spacing.x, std::min(cfg.spacing.y, cfg.spacing.z));
    const double spacing = mode == MarkingMode::sparse ? opts.sparse_spacing : pitch;
    const GridGeometry geom = cfg.geometry();
    const Vec3 world_lo = geom.voxel_to_world(0.0, 0.0, 0.0);
    const Vec3 world_hi = geom.voxel_to_world(geom.dims[0] - 1.0, geom.dims[1] - 1.0, geom.dims[2] - 1.0);
    constexpr double golden_angle = 2.399963229728653;

    GroundTruth truth;
    for (const auto& b : spec.branches) {
        TruthObject obj;
        obj.label = std::to_string(b.id);
        obj.kind = b.kind;
        Vec3 u, v;
        orthonormal_basis(b.direction, u, v);
        const double margin = opts.end_margin_factor * b.radius;
        const double usable = b.length - 2.0 * margin;
        if (usable <= 0.0) continue;
        const int n_rings = std::max(2, static_cast<int>(std::floor(usable / spacing)) + 1);
        const int per_ring = std::max(3, static_cast<int>(std::lround(2.0 * 3.14159265358979323846 *
                                                                      b.radius / spacing)));
        for (int ring = 0; ring < n_rings; ++ring) {
            const double s = margin + usable * (n_rings == 1 ? 0.5 : static_cast<double>(ring) / (n_rings - 1));
            const Vec3 center = b.origin + b.direction * s;
            const double phase = ring * golden_angle;
            for (int k = 0; k < per_ring; ++k) {
                const double phi = phase + 2.0 * 3.14159265358979323846 * k / per_ring;
                const WorldPoint p = center + (u * std::cos(phi) + v * std::sin(phi)) * b.radius;
                bool inside_other = false;
                for (const auto& other : spec.branches) {
                    if (other.id == b.id) continue;
                    if (point_segment_distance(p, other.origin, other.direction, other.length) <
                        other.radius - 1e-9) {
                        inside_other = true;
                        break;
                    }
                }
                if (inside_other) continue;
                if (p.x < world_lo.x || p.y < world_lo.y || p.z < world_lo.z || p.x > world_hi.x ||
                    p.y > world_hi.y || p.z > world_hi.z)
                    continue;
                obj.points.push_back(p);
            }
        }
        if (!obj.points.empty()) truth.objects.push_back(std::move(obj));
    }
    return truth;
}

}  // namespace patrack
