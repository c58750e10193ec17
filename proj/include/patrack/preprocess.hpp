// Preliminary pipeline: in-plane median filtering, soft-tissue thresholding,
// world-distance dilation and airway-wall removal.

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "patrack/volume.hpp"

namespace patrack {

/// 3x3 in-plane median filter applied slice by slice. Borders replicate the
/// nearest in-bounds coordinate.
inline Volume median_filter_3x3(const Volume& v) {
    Volume out(v.geom);
    const int nx = v.nx(), ny = v.ny(), nz = v.nz();
    std::array<std::int16_t, 9> window;
    for (int z = 0; z < nz; ++z) {
        for (int y = 0; y < ny; ++y) {
            for (int x = 0; x < nx; ++x) {
                int n = 0;
                for (int dy = -1; dy <= 1; ++dy) {
                    const int yy = std::clamp(y + dy, 0, ny - 1);
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int xx = std::clamp(x + dx, 0, nx - 1);
                        window[n++] = v.at(xx, yy, z);
                    }
                }
                std::nth_element(window.begin(), window.begin() + 4, window.end());
                out.at(x, y, z) = window[4];
            }
        }
    }
    return out;
}

/// Foreground iff HU strictly above `level`.
inline Mask threshold_soft_tissue(const Volume& v, std::int16_t level = -400) {
    Mask m(v.geom);
    for (std::size_t i = 0; i < v.values.size(); ++i) m.values[i] = v.values[i] > level ? 1 : 0;
    return m;
}

/// Integer voxel offsets whose center-to-center world distance is <= radius_mm.
inline std::vector<GridIndex> ball_offsets(const Vec3& spacing, double radius_mm) {
    std::vector<GridIndex> offsets;
    const int rx = static_cast<int>(radius_mm / spacing.x);
    const int ry = static_cast<int>(radius_mm / spacing.y);
    const int rz = static_cast<int>(radius_mm / spacing.z);
    const double r2 = radius_mm * radius_mm;
    for (int dz = -rz; dz <= rz; ++dz)
        for (int dy = -ry; dy <= ry; ++dy)
            for (int dx = -rx; dx <= rx; ++dx) {
                const double d2 = dx * spacing.x * dx * spacing.x + dy * spacing.y * dy * spacing.y +
                                  dz * spacing.z * dz * spacing.z;
                if (d2 <= r2) offsets.push_back({dx, dy, dz});
            }
    return offsets;
}

/// Dilation by a world-metric ball: output foreground is every voxel whose
/// center lies within radius_mm of some input foreground voxel center.
inline Mask dilate_mask(const Mask& m, double radius_mm = 2.0) {
    if (radius_mm < 0.0) throw std::invalid_argument("dilate_mask: radius must be >= 0");
    const auto offsets = ball_offsets(m.geom.spacing, radius_mm);
    Mask out(m.geom);
    const int nx = m.nx(), ny = m.ny(), nz = m.nz();
    for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x) {
                if (!m.at(x, y, z)) continue;
                for (const auto& o : offsets) {
                    const int xx = x + o.x, yy = y + o.y, zz = z + o.z;
                    if (xx < 0 || yy < 0 || zz < 0 || xx >= nx || yy >= ny || zz >= nz) continue;
                    out.at(xx, yy, zz) = 1;
                }
            }
    return out;
}

/// Subtract the 2 mm-dilated airway lumen from the tissue mask, stripping the
/// airway walls from the working image.
inline Mask remove_airway_walls(const Mask& tissue, const Mask& airway_lumen, double dilation_mm = 2.0) {
    if (!tissue.geom.same_geometry(airway_lumen.geom))
        throw std::invalid_argument("remove_airway_walls: geometry mismatch between tissue and lumen masks");
    const Mask grown = dilate_mask(airway_lumen, dilation_mm);
    Mask out(tissue.geom);
    for (std::size_t i = 0; i < tissue.values.size(); ++i)
        out.values[i] = (tissue.values[i] && !grown.values[i]) ? 1 : 0;
    return out;
}

/// Blank a region of a volume to the given HU (used to erase airway walls
/// from the scan before seed detection).
inline Volume mask_out(const Volume& v, const Mask& region, std::int16_t fill_hu = kAirHU) {
    if (!v.geom.same_geometry(region.geom)) throw std::invalid_argument("mask_out: geometry mismatch");
    Volume out = v;
    for (std::size_t i = 0; i < out.values.size(); ++i)
        if (region.values[i]) out.values[i] = fill_hu;
    return out;
}

}  // namespace patrack
