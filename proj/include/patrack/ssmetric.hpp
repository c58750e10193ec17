// Sparse-surface validation metric: signed truth-point-to-surface distances
// per marked object, object statistics, vessel classification and the
// training score.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "patrack/volume.hpp"

namespace patrack {

enum class VesselKind { artery, vein };

inline const char* to_string(VesselKind k) { return k == VesselKind::artery ? "artery" : "vein"; }

inline VesselKind vessel_kind_from(const std::string& s) {
    if (s == "artery") return VesselKind::artery;
    if (s == "vein") return VesselKind::vein;
    throw std::invalid_argument("unknown vessel kind: " + s);
}

/// Manually (or synthetically) marked surface points for one object.
struct TruthObject {
    std::string label;
    VesselKind kind = VesselKind::artery;
    std::vector<WorldPoint> points;
};

struct GroundTruth {
    std::vector<TruthObject> objects;

    void validate() const {
        for (std::size_t i = 0; i < objects.size(); ++i) {
            if (objects[i].points.empty())
                throw std::invalid_argument("ground truth object " + objects[i].label + " has no points");
            for (std::size_t j = i + 1; j < objects.size(); ++j)
                if (objects[i].label == objects[j].label)
                    throw std::invalid_argument("duplicate ground truth label " + objects[i].label);
        }
    }
};

/// Segmentation surface: world centers of foreground voxels 6-connected to a
/// background voxel, plus a copy of the source mask for interior tests and a
/// uniform-grid spatial index for nearest-point queries.
class SurfaceSet {
public:
    SurfaceSet(std::vector<WorldPoint> points, Mask source)
        : points_(std::move(points)), source_(std::move(source)) {
        build_index();
    }

    const std::vector<WorldPoint>& points() const { return points_; }
    const Mask& source() const { return source_; }
    bool empty() const { return points_.empty(); }

    /// Point is interior iff its containing voxel is foreground.
    bool interior(const WorldPoint& p) const {
        return foreground(source_, source_.geom.containing_voxel(p));
    }

    /// Exact nearest-surface distance via the bucket grid. Falls back to a
    /// full scan on degenerate indexes; both paths compute the identical
    /// per-pair expression, so the result matches brute force bit for bit.
    double nearest_distance(const WorldPoint& p) const {
        if (points_.empty()) return std::numeric_limits<double>::infinity();
        double best2 = std::numeric_limits<double>::infinity();
        const int ci = std::clamp(cell_of(p.x, grid_lo_.x), 0, cells_[0] - 1);
        const int cj = std::clamp(cell_of(p.y, grid_lo_.y), 0, cells_[1] - 1);
        const int ck = std::clamp(cell_of(p.z, grid_lo_.z), 0, cells_[2] - 1);
        const int max_ring = std::max({cells_[0], cells_[1], cells_[2]}) + 1;
        for (int ring = 0; ring <= max_ring; ++ring) {
            // once a hit exists, no point beyond (ring-1)*cell can beat it
            if (std::isfinite(best2) && ring > 0) {
                const double bound = (ring - 1) * cell_;
                if (bound > 0.0 && bound * bound > best2) break;
            }
            for_ring(ci, cj, ck, ring, [&](int i, int j, int k) {
                const std::size_t c = cell_linear(i, j, k);
                for (std::size_t idx = cell_start_[c]; idx < cell_start_[c + 1]; ++idx) {
                    const WorldPoint& s = points_[cell_points_[idx]];
                    const double dx = p.x - s.x, dy = p.y - s.y, dz = p.z - s.z;
                    const double d2 = dx * dx + dy * dy + dz * dz;
                    if (d2 < best2) best2 = d2;
                }
            });
        }
        return std::sqrt(best2);
    }

private:
    void build_index() {
        if (points_.empty()) return;
        grid_lo_ = points_.front();
        Vec3 hi = points_.front();
        for (const auto& p : points_) {
            grid_lo_.x = std::min(grid_lo_.x, p.x);
            grid_lo_.y = std::min(grid_lo_.y, p.y);
            grid_lo_.z = std::min(grid_lo_.z, p.z);
            hi.x = std::max(hi.x, p.x);
            hi.y = std::max(hi.y, p.y);
            hi.z = std::max(hi.z, p.z);
        }
        const Vec3 extent = hi - grid_lo_;
        const double vol = std::max(1e-9, extent.x * extent.y * extent.z);
        cell_ = std::clamp(2.0 * std::cbrt(vol / static_cast<double>(points_.size())), 0.5, 50.0);
        for (int a = 0; a < 3; ++a) {
            const double e = a == 0 ? extent.x : a == 1 ? extent.y : extent.z;
            cells_[a] = std::max(1, static_cast<int>(e / cell_) + 1);
        }
        cell_start_.assign(static_cast<std::size_t>(cells_[0]) * cells_[1] * cells_[2] + 1, 0);
        std::vector<std::size_t> cell_of_point(points_.size());
        for (std::size_t i = 0; i < points_.size(); ++i) {
            const auto& p = points_[i];
            cell_of_point[i] = cell_linear(cell_of(p.x, grid_lo_.x), cell_of(p.y, grid_lo_.y),
                                           cell_of(p.z, grid_lo_.z));
            ++cell_start_[cell_of_point[i] + 1];
        }
        for (std::size_t c = 1; c < cell_start_.size(); ++c) cell_start_[c] += cell_start_[c - 1];
        cell_points_.resize(points_.size());
        std::vector<std::size_t> cursor(cell_start_.begin(), cell_start_.end() - 1);
        for (std::size_t i = 0; i < points_.size(); ++i) cell_points_[cursor[cell_of_point[i]]++] = i;
    }

    int cell_of(double v, double lo) const {
        return std::clamp(static_cast<int>((v - lo) / cell_), 0, 1 << 28);
    }
    std::size_t cell_linear(int i, int j, int k) const {
        i = std::clamp(i, 0, cells_[0] - 1);
        j = std::clamp(j, 0, cells_[1] - 1);
        k = std::clamp(k, 0, cells_[2] - 1);
        return static_cast<std::size_t>(i) +
               static_cast<std::size_t>(cells_[0]) * (static_cast<std::size_t>(j) +
               static_cast<std::size_t>(cells_[1]) * static_cast<std::size_t>(k));
    }

    /// Visit cells on the Chebyshev shell at distance `ring` from (ci,cj,ck),
    /// clipped to the grid.
    template <typename F>
    void for_ring(int ci, int cj, int ck, int ring, F&& fn) const {
        const int ilo = std::max(0, ci - ring), ihi = std::min(cells_[0] - 1, ci + ring);
        const int jlo = std::max(0, cj - ring), jhi = std::min(cells_[1] - 1, cj + ring);
        const int klo = std::max(0, ck - ring), khi = std::min(cells_[2] - 1, ck + ring);
        for (int k = klo; k <= khi; ++k)
            for (int j = jlo; j <= jhi; ++j)
                for (int i = ilo; i <= ihi; ++i) {
                    const int cheb = std::max({std::abs(i - ci), std::abs(j - cj), std::abs(k - ck)});
                    if (cheb == ring) fn(i, j, k);
                }
    }

    std::vector<WorldPoint> points_;
    Mask source_;
    Vec3 grid_lo_{};
    double cell_ = 1.0;
    std::array<int, 3> cells_{1, 1, 1};
    std::vector<std::size_t> cell_start_;
    std::vector<std::size_t> cell_points_;
};

/// Extract the segmentation surface: foreground voxels with at least one of
/// their six face neighbours background (out-of-bounds counts as background).
inline SurfaceSet extract_surface(const Mask& m) {
    std::vector<WorldPoint> pts;
    const int nx = m.nx(), ny = m.ny(), nz = m.nz();
    for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x) {
                if (!m.at(x, y, z)) continue;
                const bool boundary = x == 0 || !m.at(x - 1, y, z) || x == nx - 1 || !m.at(x + 1, y, z) ||
                                      y == 0 || !m.at(x, y - 1, z) || y == ny - 1 || !m.at(x, y + 1, z) ||
                                      z == 0 || !m.at(x, y, z - 1) || z == nz - 1 || !m.at(x, y, z + 1);
                if (boundary) pts.push_back(m.geom.voxel_to_world(GridIndex{x, y, z}));
            }
    return SurfaceSet(std::move(pts), m);
}

/// Signed distances from one object's truth points to the segmentation
/// surface: magnitude is the nearest-surface Euclidean distance, sign is
/// negative for points interior to the segmentation. An empty segmentation
/// yields +infinity for every point.
struct DistanceSet {
    std::string label;
    VesselKind kind = VesselKind::artery;
    std::vector<double> distances;  // signed, mm
};

inline DistanceSet signed_distances(const TruthObject& obj, const SurfaceSet& surf) {
    DistanceSet d;
    d.label = obj.label;
    d.kind = obj.kind;
    d.distances.reserve(obj.points.size());
    for (const auto& g : obj.points) {
        if (surf.empty()) {
            d.distances.push_back(std::numeric_limits<double>::infinity());
            continue;
        }
        const double dist = surf.nearest_distance(g);
        d.distances.push_back(surf.interior(g) ? -dist : dist);
    }
    return d;
}

struct ObjectStats {
    double asd = 0.0;           // average signed distance (bias)
    double rmsd = 0.0;          // root mean square distance (error magnitude)
    double max_negative = 0.0;  // greatest over-segmentation (<= 0); 0 when absent
    double max_positive = 0.0;  // greatest under-segmentation (>= 0); 0 when absent
    bool has_negative = false;
    bool has_positive = false;
    std::size_t n_points = 0;
};

inline ObjectStats object_stats(const DistanceSet& d) {
    if (d.distances.empty()) throw std::invalid_argument("object_stats: empty distance set");
    ObjectStats s;
    s.n_points = d.distances.size();
    double sum = 0.0, sum2 = 0.0;
    for (const double m : d.distances) {
        sum += m;
        sum2 += m * m;
        if (std::signbit(m)) {
            s.has_negative = true;
            s.max_negative = std::min(s.max_negative, m);
        } else {
            s.has_positive = true;
            s.max_positive = std::max(s.max_positive, m);
        }
    }
    s.asd = sum / static_cast<double>(s.n_points);
    s.rmsd = std::sqrt(sum2 / static_cast<double>(s.n_points));
    return s;
}

enum class VesselCategory { TP, FN, TN, FP };

inline const char* to_string(VesselCategory c) {
    switch (c) {
        case VesselCategory::TP: return "TP";
        case VesselCategory::FN: return "FN";
        case VesselCategory::TN: return "TN";
        case VesselCategory::FP: return "FP";
    }
    return "?";
}

struct ObjectReport {
    std::string label;
    VesselKind kind = VesselKind::artery;
    ObjectStats stats;
    VesselCategory category = VesselCategory::FN;
};

struct ClassificationReport {
    std::vector<ObjectReport> objects;
    int tp = 0, fn = 0, tn = 0, fp = 0;
    double sensitivity = 0.0;
    double specificity = 0.0;
    double rms_threshold = 2.0;
};

/// Classify each marked vessel by its RMS error: arteries below the threshold
/// are true positives, veins below it are false positives. The threshold is
/// strict (RMSD exactly at the threshold counts as not segmented).
inline ClassificationReport classify_objects(const std::vector<ObjectReport>& objects,
                                             double rms_threshold = 2.0) {
    ClassificationReport r;
    r.rms_threshold = rms_threshold;
    r.objects = objects;
    for (auto& o : r.objects) {
        const bool segmented = o.stats.rmsd < rms_threshold;
        if (o.kind == VesselKind::artery) {
            o.category = segmented ? VesselCategory::TP : VesselCategory::FN;
            ++(segmented ? r.tp : r.fn);
        } else {
            o.category = segmented ? VesselCategory::FP : VesselCategory::TN;
            ++(segmented ? r.fp : r.tn);
        }
    }
    r.sensitivity = (r.tp + r.fn) > 0 ? static_cast<double>(r.tp) / (r.tp + r.fn) : 0.0;
    r.specificity = (r.tn + r.fp) > 0 ? static_cast<double>(r.tn) / (r.tn + r.fp) : 0.0;
    return r;
}

/// Training score maximized during parameter optimization.
inline long long training_score(const ClassificationReport& r) {
    return static_cast<long long>(r.tp) + r.tn - r.fp - r.fn;
}

/// Full evaluation of a segmentation mask against ground truth.
struct Evaluation {
    std::vector<DistanceSet> distances;
    ClassificationReport report;
    long long score = 0;
};

inline Evaluation evaluate_segmentation(const Mask& segmentation, const GroundTruth& truth,
                                        double rms_threshold = 2.0) {
    truth.validate();
    if (truth.objects.empty()) throw std::invalid_argument("evaluate_segmentation: empty ground truth");
    const SurfaceSet surf = extract_surface(segmentation);
    Evaluation e;
    std::vector<ObjectReport> reports;
    for (const auto& obj : truth.objects) {
        DistanceSet d = signed_distances(obj, surf);
        ObjectReport rep{obj.label, obj.kind, object_stats(d), VesselCategory::FN};
        reports.push_back(rep);
        e.distances.push_back(std::move(d));
    }
    e.report = classify_objects(reports, rms_threshold);
    e.score = training_score(e.report);
    return e;
}

}  // namespace patrack
