// Volumetric data model: scalar/binary grids with anisotropic spacing and a
// voxel-center world mapping, plus oblique plane resampling.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "patrack/vec3.hpp"

namespace patrack {

struct GridIndex {
    int x = 0;
    int y = 0;
    int z = 0;
    constexpr bool operator==(const GridIndex& o) const { return x == o.x && y == o.y && z == o.z; }
};

/// Geometry shared by all grid types. Voxel centers define world positions:
/// voxel (i,j,k) sits at origin + (i*sx, j*sy, k*sz).
struct GridGeometry {
    std::array<int, 3> dims{0, 0, 0};
    Vec3 spacing{1.0, 1.0, 1.0};
    Vec3 origin{0.0, 0.0, 0.0};

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    }
    bool contains(const GridIndex& i) const {
        return i.x >= 0 && i.y >= 0 && i.z >= 0 && i.x < dims[0] && i.y < dims[1] && i.z < dims[2];
    }
    std::size_t linear(const GridIndex& i) const {
        return static_cast<std::size_t>(i.x) +
               static_cast<std::size_t>(dims[0]) * (static_cast<std::size_t>(i.y) +
               static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(i.z));
    }
    bool same_geometry(const GridGeometry& o, double tol = 1e-9) const {
        return dims == o.dims &&
               std::fabs(spacing.x - o.spacing.x) <= tol && std::fabs(spacing.y - o.spacing.y) <= tol &&
               std::fabs(spacing.z - o.spacing.z) <= tol &&
               std::fabs(origin.x - o.origin.x) <= tol && std::fabs(origin.y - o.origin.y) <= tol &&
               std::fabs(origin.z - o.origin.z) <= tol;
    }

    WorldPoint voxel_to_world(double cx, double cy, double cz) const {
        return {origin.x + cx * spacing.x, origin.y + cy * spacing.y, origin.z + cz * spacing.z};
    }
    WorldPoint voxel_to_world(const GridIndex& i) const {
        return voxel_to_world(static_cast<double>(i.x), static_cast<double>(i.y), static_cast<double>(i.z));
    }
    /// Continuous voxel coordinate of a world point (no clamping).
    Vec3 world_to_voxel(const WorldPoint& p) const {
        return {(p.x - origin.x) / spacing.x, (p.y - origin.y) / spacing.y, (p.z - origin.z) / spacing.z};
    }
    /// Index of the voxel whose cell contains `p` (nearest center). May be out of bounds.
    GridIndex containing_voxel(const WorldPoint& p) const {
        const Vec3 c = world_to_voxel(p);
        return {static_cast<int>(std::floor(c.x + 0.5)), static_cast<int>(std::floor(c.y + 0.5)),
                static_cast<int>(std::floor(c.z + 0.5))};
    }

    void validate() const {
        if (dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0)
            throw std::invalid_argument("grid dims must be positive");
        if (!(spacing.x > 0.0) || !(spacing.y > 0.0) || !(spacing.z > 0.0) || !finite(spacing))
            throw std::invalid_argument("grid spacing must be positive and finite");
        if (!finite(origin)) throw std::invalid_argument("grid origin must be finite");
    }
};

/// Dense 3D grid, x-fastest storage order.
template <typename T>
struct Grid {
    GridGeometry geom;
    std::vector<T> values;

    Grid() = default;
    Grid(const GridGeometry& g, T fill = T{}) : geom(g), values() {
        geom.validate();
        values.assign(geom.voxel_count(), fill);
    }

    int nx() const { return geom.dims[0]; }
    int ny() const { return geom.dims[1]; }
    int nz() const { return geom.dims[2]; }

    T& at(int x, int y, int z) { return values[geom.linear({x, y, z})]; }
    const T& at(int x, int y, int z) const { return values[geom.linear({x, y, z})]; }
    T& at(const GridIndex& i) { return values[geom.linear(i)]; }
    const T& at(const GridIndex& i) const { return values[geom.linear(i)]; }

    bool operator==(const Grid& o) const {
        return geom.dims == o.geom.dims && geom.spacing == o.geom.spacing &&
               geom.origin == o.geom.origin && values == o.values;
    }
};

/// CT-style scalar volume, HU samples.
using Volume = Grid<std::int16_t>;
/// Binary working mask (0 background, 1 foreground), geometry-matched to its source volume.
using Mask = Grid<std::uint8_t>;
/// Per-segment / per-branch label image.
using LabelMask = Grid<std::uint16_t>;

inline bool foreground(const Mask& m, const GridIndex& i) {
    return m.geom.contains(i) && m.values[m.geom.linear(i)] != 0;
}

inline std::size_t count_foreground(const Mask& m) {
    std::size_t n = 0;
    for (auto v : m.values) n += (v != 0);
    return n;
}

/// Oblique sampling plane: world frame plus the resampled scalar patch.
/// Samples form a (2k+1)^2 grid; sample (i,j) sits at
/// center + (i-k)*pitch*axis_u + (j-k)*pitch*axis_v.
struct PlaneFrame {
    WorldPoint center;
    Vec3 normal;
    Vec3 axis_u;
    Vec3 axis_v;
    double half_width = 0.0;
    double pixel_pitch = 0.0;
    int half_samples = 0;  // k above; side length is 2k+1
    std::vector<double> samples;

    int side() const { return 2 * half_samples + 1; }
    double sample(int i, int j) const { return samples[static_cast<std::size_t>(j) * side() + i]; }
    double& sample(int i, int j) { return samples[static_cast<std::size_t>(j) * side() + i]; }
    /// World position of sample (i,j).
    WorldPoint position(int i, int j) const {
        const double du = (i - half_samples) * pixel_pitch;
        const double dv = (j - half_samples) * pixel_pitch;
        return center + axis_u * du + axis_v * dv;
    }
    /// In-plane distance of sample (i,j) from the frame center.
    double radial_distance(int i, int j) const {
        const double du = (i - half_samples) * pixel_pitch;
        const double dv = (j - half_samples) * pixel_pitch;
        return std::sqrt(du * du + dv * dv);
    }
};

constexpr std::int16_t kAirHU = -1000;

/// Trilinear sample of `v` at world point `p`. Points outside the voxel-center
/// hull read as air (-1000 HU).
inline double sample_trilinear(const Volume& v, const WorldPoint& p) {
    const Vec3 c = v.geom.world_to_voxel(p);
    const auto& d = v.geom.dims;
    if (c.x < 0.0 || c.y < 0.0 || c.z < 0.0 || c.x > d[0] - 1 || c.y > d[1] - 1 || c.z > d[2] - 1)
        return static_cast<double>(kAirHU);
    int ix = static_cast<int>(c.x), iy = static_cast<int>(c.y), iz = static_cast<int>(c.z);
    if (ix == d[0] - 1) --ix;
    if (iy == d[1] - 1) --iy;
    if (iz == d[2] - 1) --iz;
    if (d[0] == 1) ix = 0;
    if (d[1] == 1) iy = 0;
    if (d[2] == 1) iz = 0;
    const double fx = d[0] == 1 ? 0.0 : c.x - ix;
    const double fy = d[1] == 1 ? 0.0 : c.y - iy;
    const double fz = d[2] == 1 ? 0.0 : c.z - iz;
    const int x1 = d[0] == 1 ? ix : ix + 1;
    const int y1 = d[1] == 1 ? iy : iy + 1;
    const int z1 = d[2] == 1 ? iz : iz + 1;
    auto val = [&](int x, int y, int z) { return static_cast<double>(v.at(x, y, z)); };
    const double c00 = val(ix, iy, iz) * (1 - fx) + val(x1, iy, iz) * fx;
    const double c10 = val(ix, y1, iz) * (1 - fx) + val(x1, y1, iz) * fx;
    const double c01 = val(ix, iy, z1) * (1 - fx) + val(x1, iy, z1) * fx;
    const double c11 = val(ix, y1, z1) * (1 - fx) + val(x1, y1, z1) * fx;
    return (c00 * (1 - fy) + c10 * fy) * (1 - fz) + (c01 * (1 - fy) + c11 * fy) * fz;
}

/// Fill an already-framed plane by trilinear resampling.
inline void fill_plane_samples(const Volume& v, PlaneFrame& f) {
    f.half_samples = static_cast<int>(std::lround(f.half_width / f.pixel_pitch));
    const int side = f.side();
    f.samples.assign(static_cast<std::size_t>(side) * side, static_cast<double>(kAirHU));
    for (int j = 0; j < side; ++j)
        for (int i = 0; i < side; ++i)
            f.sample(i, j) = sample_trilinear(v, f.position(i, j));
}

/// Resample a cutting plane orthogonal to `normal` through `center`.
inline PlaneFrame resample_plane(const Volume& v, const WorldPoint& center, const Vec3& normal,
                                 double half_width, double pixel_pitch) {
    const double n = norm(normal);
    if (n < 1e-6) throw std::invalid_argument("resample_plane: degenerate normal");
    if (std::fabs(n - 1.0) > 1e-6) throw std::invalid_argument("resample_plane: normal must be unit length");
    if (!(half_width > 0.0) || !(pixel_pitch > 0.0))
        throw std::invalid_argument("resample_plane: half_width and pixel_pitch must be positive");
    PlaneFrame f;
    f.center = center;
    f.normal = normal;
    orthonormal_basis(normal, f.axis_u, f.axis_v);
    f.half_width = half_width;
    f.pixel_pitch = pixel_pitch;
    fill_plane_samples(v, f);
    return f;
}

}  // namespace patrack
