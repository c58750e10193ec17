// Automated seed detection: a curved ROI is resampled around an airway
// centerline, the adjacent artery is isolated by progressive morphological
// opening, and its proximal centroid becomes the tracker seed.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "patrack/preprocess.hpp"
#include "patrack/spline.hpp"
#include "patrack/volume.hpp"

namespace patrack {

/// One airway branch centerline, proximal to distal, with its arc-length spline.
struct AirwayPath {
    std::string label;
    std::vector<WorldPoint> points;
    ArcLengthSpline spline;
    double sample_interval;  // arc table resolution, mm
};

/// Cutting planes at constant arc-length stations along one airway branch.
/// Frame 0 is the most proximal station.
struct RoiStack {
    std::vector<PlaneFrame> frames;
    std::vector<double> stations;  // arc length of each frame, mm
    double half_width = 0.0;
    double pixel_pitch = 0.0;
    double interval = 0.0;
};

/// Connected soft-tissue component inside a RoiStack, as (frame, i, j) pixels.
struct RoiPixel {
    int frame;
    int i;
    int j;
};

struct RoiComponent {
    std::vector<RoiPixel> pixels;
    int opening_radius = 0;  // kernel radius (in pixels) that isolated it
};

/// Tracker starting state: position x0 and unit direction d0.
struct SeedPoint {
    WorldPoint position;
    Vec3 direction;
    std::string source_airway;
};

/// Fit a natural cubic spline through >= 4 centerline points and
/// reparameterize it to arc length.
inline AirwayPath fit_centerline_spline(const std::vector<WorldPoint>& points,
                                        const std::string& label = "", double table_step = 0.25) {
    if (points.size() < 4) throw std::invalid_argument("fit_centerline_spline: need at least 4 points");
    for (std::size_t i = 1; i < points.size(); ++i)
        if (distance(points[i], points[i - 1]) < 1e-9)
            throw std::invalid_argument("fit_centerline_spline: coincident consecutive points");
    return AirwayPath{label, points, ArcLengthSpline(points, table_step), table_step};
}

/// Build the stack of cutting planes orthogonal to the spline. In-plane axes
/// are propagated frame to frame to avoid orientation flips along the path.
inline RoiStack build_airway_roi(const Volume& v, const AirwayPath& path, double half_width = 50.0,
                                 double interval = 1.0, double pixel_pitch = 0.5) {
    if (!(interval > 0.0)) throw std::invalid_argument("build_airway_roi: interval must be positive");
    RoiStack roi;
    roi.half_width = half_width;
    roi.pixel_pitch = pixel_pitch;
    roi.interval = interval;
    const double len = path.spline.length();
    const int n_frames = static_cast<int>(std::floor(len / interval + 1e-9)) + 1;
    Vec3 prev_u{}, prev_v{};
    for (int k = 0; k < n_frames; ++k) {
        const double s = k * interval;
        PlaneFrame f;
        f.center = path.spline.point_at(s);
        f.normal = path.spline.tangent_at(s);
        if (k == 0) {
            orthonormal_basis(f.normal, f.axis_u, f.axis_v);
        } else {
            // project the previous u into the new plane (rotation-minimizing)
            Vec3 u = prev_u - f.normal * dot(prev_u, f.normal);
            if (norm(u) < 1e-6) orthonormal_basis(f.normal, f.axis_u, f.axis_v);
            else {
                f.axis_u = normalized(u);
                f.axis_v = cross(f.normal, f.axis_u);
            }
        }
        prev_u = f.axis_u;
        prev_v = f.axis_v;
        f.half_width = half_width;
        f.pixel_pitch = pixel_pitch;
        fill_plane_samples(v, f);
        roi.frames.push_back(std::move(f));
        roi.stations.push_back(s);
    }
    return roi;
}

namespace detail {

/// Binarize the ROI stack into a Grid whose spacing is (pitch, pitch, interval).
inline Mask roi_to_stack_mask(const RoiStack& roi, double threshold_hu) {
    const int side = roi.frames.front().side();
    GridGeometry g;
    g.dims = {side, side, static_cast<int>(roi.frames.size())};
    g.spacing = {roi.pixel_pitch, roi.pixel_pitch, roi.interval};
    Mask m(g);
    for (int f = 0; f < g.dims[2]; ++f)
        for (int j = 0; j < side; ++j)
            for (int i = 0; i < side; ++i)
                m.at(i, j, f) = roi.frames[f].sample(i, j) > threshold_hu ? 1 : 0;
    return m;
}

inline Mask erode_mask(const Mask& m, const std::vector<GridIndex>& offsets) {
    Mask out(m.geom);
    const int nx = m.nx(), ny = m.ny(), nz = m.nz();
    for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x) {
                if (!m.at(x, y, z)) continue;
                bool keep = true;
                for (const auto& o : offsets) {
                    const int xx = x + o.x, yy = y + o.y, zz = z + o.z;
                    if (xx < 0 || yy < 0 || zz < 0 || xx >= nx || yy >= ny || zz >= nz || !m.at(xx, yy, zz)) {
                        keep = false;
                        break;
                    }
                }
                if (keep) out.at(x, y, z) = 1;
            }
    return out;
}

inline Mask open_mask(const Mask& m, double radius_mm) {
    const auto offsets = ball_offsets(m.geom.spacing, radius_mm);
    return dilate_mask(erode_mask(m, offsets), radius_mm);
}

/// 26-connected component labelling of a binary stack.
inline std::vector<std::vector<GridIndex>> connected_components_26(const Mask& m) {
    std::vector<std::vector<GridIndex>> comps;
    std::vector<std::uint8_t> seen(m.values.size(), 0);
    const int nx = m.nx(), ny = m.ny(), nz = m.nz();
    std::vector<GridIndex> stack;
    for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x) {
                const std::size_t lin = m.geom.linear({x, y, z});
                if (!m.values[lin] || seen[lin]) continue;
                comps.emplace_back();
                auto& comp = comps.back();
                stack.assign(1, {x, y, z});
                seen[lin] = 1;
                while (!stack.empty()) {
                    const GridIndex c = stack.back();
                    stack.pop_back();
                    comp.push_back(c);
                    for (int dz = -1; dz <= 1; ++dz)
                        for (int dy = -1; dy <= 1; ++dy)
                            for (int dx = -1; dx <= 1; ++dx) {
                                if (!dx && !dy && !dz) continue;
                                const GridIndex n{c.x + dx, c.y + dy, c.z + dz};
                                if (!m.geom.contains(n)) continue;
                                const std::size_t nl = m.geom.linear(n);
                                if (m.values[nl] && !seen[nl]) {
                                    seen[nl] = 1;
                                    stack.push_back(n);
                                }
                            }
                }
            }
    return comps;
}

}  // namespace detail

struct IsolateOptions {
    double threshold_hu = -400.0;
    double max_extent_mm = 40.0;  // components reaching past this are heart, not artery
    int max_kernel_radius = 10;   // opening growth cap, in pixels
};

/// Isolate the artery inside the ROI by progressive morphological opening.
/// Opening starts at a 1-pixel ball and grows until at least one component
/// survives the extent rule; among survivors the one nearest the airway
/// center in the most proximal occupied frame wins. Returns nullopt when the
/// kernel cap is reached without a candidate (seed failure for this branch).
inline std::optional<RoiComponent> isolate_artery(const RoiStack& roi, const IsolateOptions& opts = {}) {
    if (roi.frames.empty()) return std::nullopt;
    const Mask stack = detail::roi_to_stack_mask(roi, opts.threshold_hu);
    const int half = roi.frames.front().half_samples;
    auto radial = [&](const GridIndex& p) {
        const double du = (p.x - half) * roi.pixel_pitch;
        const double dv = (p.y - half) * roi.pixel_pitch;
        return std::sqrt(du * du + dv * dv);
    };
    for (int k = 1; k <= opts.max_kernel_radius; ++k) {
        const Mask opened = detail::open_mask(stack, k * roi.pixel_pitch);
        const auto comps = detail::connected_components_26(opened);
        std::vector<std::size_t> valid;
        for (std::size_t c = 0; c < comps.size(); ++c) {
            bool ok = true;
            for (const auto& p : comps[c])
                if (radial(p) > opts.max_extent_mm) {
                    ok = false;
                    break;
                }
            if (ok && !comps[c].empty()) valid.push_back(c);
        }
        if (valid.empty()) continue;
        // most proximal frame in which any valid candidate appears
        int f0 = stack.nz();
        for (auto c : valid)
            for (const auto& p : comps[c]) f0 = std::min(f0, p.z);
        std::size_t best = comps.size();
        double best_dist = 0.0;
        for (auto c : valid) {
            double d = std::numeric_limits<double>::infinity();
            for (const auto& p : comps[c])
                if (p.z == f0) d = std::min(d, radial(p));
            if (!std::isfinite(d)) continue;  // candidate absent from the proximal frame
            if (best == comps.size() || d < best_dist) {
                best = c;
                best_dist = d;
            }
        }
        if (best == comps.size()) continue;
        RoiComponent comp;
        comp.opening_radius = k;
        comp.pixels.reserve(comps[best].size());
        for (const auto& p : comps[best]) comp.pixels.push_back({p.z, p.x, p.y});
        return comp;
    }
    return std::nullopt;
}

/// Seed position = component centroid in its most proximal occupied frame;
/// direction = unit vector from that centroid to the most distal one.
inline SeedPoint compute_seed(const RoiComponent& comp, const RoiStack& roi,
                              const std::string& source_airway = "") {
    if (comp.pixels.empty()) throw std::invalid_argument("compute_seed: empty component");
    int fmin = comp.pixels.front().frame, fmax = fmin;
    for (const auto& p : comp.pixels) {
        fmin = std::min(fmin, p.frame);
        fmax = std::max(fmax, p.frame);
    }
    if (fmin == fmax) throw std::invalid_argument("compute_seed: component occupies a single frame");
    auto centroid_in = [&](int f) {
        Vec3 sum{};
        int n = 0;
        for (const auto& p : comp.pixels)
            if (p.frame == f) {
                sum += roi.frames[f].position(p.i, p.j);
                ++n;
            }
        return sum / static_cast<double>(n);
    };
    const Vec3 proximal = centroid_in(fmin);
    const Vec3 distal = centroid_in(fmax);
    return SeedPoint{proximal, normalized(distal - proximal), source_airway};
}

/// Fallback centerline for phantoms: per-slice centroids of a labelled airway
/// lumen, ordered along z.
inline std::vector<WorldPoint> centerline_from_mask(const Mask& lumen) {
    std::vector<WorldPoint> pts;
    for (int z = 0; z < lumen.nz(); ++z) {
        Vec3 sum{};
        int n = 0;
        for (int y = 0; y < lumen.ny(); ++y)
            for (int x = 0; x < lumen.nx(); ++x)
                if (lumen.at(x, y, z)) {
                    sum += lumen.geom.voxel_to_world(GridIndex{x, y, z});
                    ++n;
                }
        if (n > 0) pts.push_back(sum / static_cast<double>(n));
    }
    return pts;
}

}  // namespace patrack
