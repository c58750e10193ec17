// Iterative cylindrical vessel tracking: stepwise model fitting, radius-drop
// bifurcation detection, second-child search, false-bifurcation pruning and
// leak removal. Trackers are expanded breadth-first into a segment tree.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "patrack/cylinder.hpp"
#include "patrack/seeding.hpp"
#include "patrack/volume.hpp"

namespace patrack {

struct TrackerParams {
    double h0 = 15.0;                       // cylinder height, mm
    double step_frac = 0.20;                // step length as a fraction of h0
    double radius_change_threshold = 0.90;  // bifurcation candidate ratio
    double r_init_min = 2.0;                // initial radius search interval, mm
    double r_init_max = 12.0;
    double r_step_init = 0.5;               // initial radius grid step, mm
    double radius_window_lo = 0.7;          // per-step radius window around r_{t-1}
    double radius_window_hi = 1.3;
    int radius_window_steps = 7;
    double fill_min = 0.5;                  // strong-match soft-tissue fraction
    double leak_ratio = 1.5;                // leak when r grows past this ratio
    int n_directions = 64;                  // hemisphere samples (solid angle 2*pi)
    int false_bif_max_iters = 3;            // child-1 lifetime that voids a bifurcation
    double child_overlap_discard = 0.80;    // child whose first capture is mostly old voxels
    int max_cylinders_per_segment = 4096;   // hard safety caps, generous
    int max_segments = 512;

    double step_length() const { return step_frac * h0; }

    void validate() const {
        if (!(h0 > 0.0)) throw std::invalid_argument("params: h0 must be positive");
        if (!(step_frac > 0.0) || step_frac > 0.5)
            throw std::invalid_argument("params: step_frac must be in (0, 0.5]");
        if (!(radius_change_threshold > 0.0) || radius_change_threshold > 1.0)
            throw std::invalid_argument("params: radius_change_threshold must be in (0, 1]");
        if (!(r_init_min > 0.0) || r_init_max < r_init_min)
            throw std::invalid_argument("params: initial radius range must be positive and ordered");
        if (!(fill_min > 0.0) || fill_min >= 1.0)
            throw std::invalid_argument("params: fill_min must be in (0, 1)");
        if (!(leak_ratio > 1.0)) throw std::invalid_argument("params: leak_ratio must exceed 1");
        if (!(radius_window_lo > 0.0) || radius_window_hi < radius_window_lo)
            throw std::invalid_argument("params: radius window must be positive and ordered");
        if (n_directions < 1 || radius_window_steps < 1)
            throw std::invalid_argument("params: grid sizes must be positive");
    }
};

enum class Termination {
    weak_match,
    leak_removed,
    bifurcation,
    merged_after_false_bifurcation,
};

inline const char* to_string(Termination t) {
    switch (t) {
        case Termination::weak_match: return "weak_match";
        case Termination::leak_removed: return "leak_removed";
        case Termination::bifurcation: return "bifurcation";
        case Termination::merged_after_false_bifurcation: return "merged_after_false_bifurcation";
    }
    return "unknown";
}

/// State of one in-flight tracker. history.back() is the current cylinder.
struct TrackerState {
    std::vector<Cylinder> history;
    double last_fill = 0.0;
    int parent_segment = -1;

    const Cylinder& current() const { return history.back(); }
};

struct Segment {
    Segment() = default;
    Segment(int id_, int parent) : id(id_), parent_id(parent) {}

    int id = 0;
    int parent_id = -1;
    std::vector<Cylinder> cylinders;
    std::vector<std::vector<std::size_t>> captures;  // per-cylinder foreground voxel indices
    Termination termination = Termination::weak_match;
    WorldPoint bifurcation_point{};
    std::vector<int> children;

    /// Sorted, deduplicated union of every cylinder's captured voxels.
    std::vector<std::size_t> voxels() const {
        std::vector<std::size_t> all;
        for (const auto& c : captures) all.insert(all.end(), c.begin(), c.end());
        std::sort(all.begin(), all.end());
        all.erase(std::unique(all.begin(), all.end()), all.end());
        return all;
    }
};

struct VesselTree {
    SeedPoint seed;
    std::vector<Segment> segments;  // root first, ids equal indices
    bool seeded = false;
    std::string failure_reason;

    std::size_t total_cylinders() const {
        std::size_t n = 0;
        for (const auto& s : segments) n += s.cylinders.size();
        return n;
    }
};

struct StepResult {
    FitResult fit;
    bool accepted = false;
};

namespace detail {

/// Hemisphere fit with a fine cone refinement around the coarse winner. The
/// coarse pass is the declared sampling grid; the refinement resolves the
/// direction below its ~10 degree pitch and can only improve the score.
/// Degenerate direction grids (tests) skip the refinement.
inline FitResult fit_with_refinement(const Mask& m, const WorldPoint& base, const Vec3& about,
                                     const std::vector<double>& radii, const TrackerParams& params) {
    FitResult best =
        fit_cylinder_grid(m, base, about, hemisphere_directions(about, params.n_directions), radii, params.h0);
    if (params.n_directions < 8) return best;
    const double pitch = std::acos(std::max(-1.0, 1.0 - 2.0 / params.n_directions));
    const FitResult fine =
        fit_cylinder_grid(m, base, about, cone_directions(best.cylinder.axis, pitch, 24), radii, params.h0);
    const double a_best = dot(best.cylinder.axis, about), a_fine = dot(fine.cylinder.axis, about);
    if (fine.score > best.score ||
        (fine.score == best.score &&
         (a_fine > a_best || (a_fine == a_best && fine.cylinder.radius > best.cylinder.radius))))
        best = fine;
    return best;
}

}  // namespace detail

/// Advance one tracker iteration: progress the base along the previous axis,
/// refit within the slow-variation radius window, accept on a strong match.
/// The step fit stays on the declared direction grid; refining it below the
/// hemisphere pitch rewards wedge-crossing cylinders near junctions as much
/// as aligned ones.
inline StepResult step_tracker(const Mask& m, const TrackerState& st, const TrackerParams& params) {
    const Cylinder& prev = st.current();
    const WorldPoint base = prev.base + prev.axis * params.step_length();
    const auto dirs = hemisphere_directions(prev.axis, params.n_directions);
    const auto radii = radius_window_grid(params.radius_window_lo * prev.radius,
                                          params.radius_window_hi * prev.radius, params.radius_window_steps);
    StepResult r;
    r.fit = fit_cylinder_grid(m, base, prev.axis, dirs, radii, params.h0);
    r.accepted = r.fit.fill >= params.fill_min;
    return r;
}

namespace detail {

/// Index of the accepted cylinder whose base is nearest to `target` mm
/// upstream of the current one (ties prefer the farther cylinder). nullopt
/// when the chain does not yet reach back that far.
inline std::optional<std::size_t> upstream_reference(std::size_t hist_size, double step_len, double target) {
    if (hist_size < 2) return std::nullopt;
    const std::size_t k = hist_size - 1;
    if (k * step_len < target - 1e-9) return std::nullopt;
    std::size_t best = k;
    double best_err = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) {
        const double dist = (k - j) * step_len;
        const double err = std::fabs(dist - target);
        // iterating j upward means earlier (farther) cylinders win ties
        if (err < best_err - 1e-12) {
            best = j;
            best_err = err;
        }
    }
    return best;
}

}  // namespace detail

/// Bifurcation candidate: the radius has dropped below the change threshold
/// relative to the cylinder half a height upstream.
inline bool detect_bifurcation(const TrackerState& st, const TrackerParams& params) {
    const auto ref = detail::upstream_reference(st.history.size(), params.step_length(), params.h0 / 2.0);
    if (!ref) return false;
    const double r_up = st.history[*ref].radius;
    return st.current().radius / r_up < params.radius_change_threshold;
}

/// Leak: the radius exceeds leak_ratio times the radius one full cylinder
/// length upstream. Returns the index of the upstream reference cylinder;
/// everything after it is to be removed.
inline std::optional<std::size_t> detect_leak(const TrackerState& st, const TrackerParams& params) {
    const auto ref = detail::upstream_reference(st.history.size(), params.step_length(), params.h0);
    if (!ref) return std::nullopt;
    if (st.current().radius > params.leak_ratio * st.history[*ref].radius) return ref;
    return std::nullopt;
}

/// Search for the second child at a bifurcation: directions within the
/// bifurcation model (30..90 degrees from child 1, under 90 degrees from the
/// parent) and radii no larger than the parent's. A coarse hemisphere pass is
/// followed by a fine cone refinement around its winner, so the child
/// direction is resolved below the hemisphere sampling pitch. Returns the
/// best strong match, or nullopt when no admissible cylinder reaches the
/// fill minimum.
inline std::optional<FitResult> find_second_child(const Mask& m, const WorldPoint& bif_point,
                                                  const Vec3& d_parent, const Vec3& d_child1,
                                                  double r_parent, const TrackerParams& params) {
    constexpr double cos30 = 0.86602540378443864676;
    const auto admissible = [&](const Vec3& dir) {
        const double dot12 = dot(dir, d_child1);
        return dot12 >= -1e-12 && dot12 <= cos30 + 1e-12 && dot(dir, d_parent) > 0.0;
    };
    std::vector<double> radii;
    if (r_parent <= params.r_init_min) radii.push_back(r_parent);
    else radii = radius_step_grid(params.r_init_min, r_parent, params.r_step_init);

    auto best_over = [&](const std::vector<Vec3>& dirs, FitResult& best, bool& have, double& best_align) {
        for (const auto& dir : dirs) {
            if (!admissible(dir)) continue;
            const double align = dot(dir, d_parent);
            for (const double r : radii) {
                const Cylinder c{bif_point, dir, r, params.h0};
                const CylinderScore s = score_cylinder(m, c);
                if (s.fill < params.fill_min) continue;
                const bool better = !have || s.score > best.score ||
                                    (s.score == best.score &&
                                     (align > best_align || (align == best_align && r > best.cylinder.radius)));
                if (better) {
                    best = {c, s.score, s.fill};
                    best_align = align;
                    have = true;
                }
            }
        }
    };

    FitResult best;
    bool have = false;
    double best_align = 0.0;
    best_over(hemisphere_directions(d_parent, params.n_directions), best, have, best_align);
    if (!have) return std::nullopt;
    // refine: the hemisphere pitch for n samples over 2*pi sr
    const double pitch = std::acos(std::max(-1.0, 1.0 - 2.0 / params.n_directions));
    best_over(cone_directions(best.cylinder.axis, pitch, 24), best, have, best_align);
    return best;
}

namespace detail {

struct BifurcationRecord {
    int parent;
    int child1;
    int child2;
};

/// Child radius grid: from the global minimum up to the parent radius.
inline std::vector<double> child_radius_grid(double r_parent, const TrackerParams& params) {
    if (r_parent <= params.r_init_min) return {r_parent};
    return radius_step_grid(params.r_init_min, r_parent, params.r_step_init);
}

inline void append_capture(Segment& seg, const Mask& m, const Cylinder& c,
                           std::vector<std::uint8_t>& global_captured) {
    seg.cylinders.push_back(c);
    seg.captures.push_back(captured_voxels(m, c));
    for (auto v : seg.captures.back()) global_captured[v] = 1;
}

inline double captured_overlap_fraction(const std::vector<std::size_t>& capture,
                                        const std::vector<std::uint8_t>& global_captured) {
    if (capture.empty()) return 0.0;
    std::size_t hit = 0;
    for (auto v : capture) hit += global_captured[v];
    return static_cast<double>(hit) / static_cast<double>(capture.size());
}

inline bool died_fast(const Segment& s, const TrackerParams& params) {
    return s.termination == Termination::weak_match && s.children.empty() &&
           s.cylinders.size() <= static_cast<std::size_t>(params.false_bif_max_iters);
}

inline void splice_into_parent(VesselTree& tree, int parent_id, Segment& child) {
    Segment& parent = tree.segments[parent_id];
    parent.cylinders.insert(parent.cylinders.end(), child.cylinders.begin(), child.cylinders.end());
    parent.captures.insert(parent.captures.end(), child.captures.begin(), child.captures.end());
    parent.termination = child.termination == Termination::weak_match
                             ? Termination::merged_after_false_bifurcation
                             : child.termination;
    parent.bifurcation_point = child.bifurcation_point;
    parent.children = child.children;
    for (int g : child.children) tree.segments[g].parent_id = parent_id;
}

}  // namespace detail

/// Resolve one recorded bifurcation after its subtree finished tracking.
/// A child 1 that weak-matched out within false_bif_max_iters cylinders marks
/// the bifurcation as false: child 1 is erased and child 2 is merged into the
/// parent as the continued vessel. If both children died that fast the split
/// is rolled back entirely and the parent terminates at the candidate point.
inline void prune_false_bifurcation(VesselTree& tree, int parent_id, int child1_id, int child2_id,
                                    const TrackerParams& params, std::vector<bool>& erased) {
    Segment& c1 = tree.segments[child1_id];
    Segment& c2 = tree.segments[child2_id];
    if (!detail::died_fast(c1, params)) return;  // genuine bifurcation
    Segment& parent = tree.segments[parent_id];
    if (detail::died_fast(c2, params)) {
        parent.termination = Termination::weak_match;
        parent.children.clear();
    } else {
        detail::splice_into_parent(tree, parent_id, c2);
    }
    erased[child1_id] = erased[child2_id] = true;
}

namespace detail {

/// Drop erased segments and renumber the survivors in pre-order.
inline VesselTree compact_tree(const VesselTree& tree, const std::vector<bool>& erased) {
    VesselTree out;
    out.seed = tree.seed;
    out.seeded = tree.seeded;
    out.failure_reason = tree.failure_reason;
    if (tree.segments.empty()) return out;
    std::vector<int> remap(tree.segments.size(), -1);
    std::vector<int> stack{0};
    std::vector<int> order;
    while (!stack.empty()) {
        const int id = stack.back();
        stack.pop_back();
        if (erased[id]) continue;
        order.push_back(id);
        const auto& ch = tree.segments[id].children;
        for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back(*it);
    }
    for (std::size_t i = 0; i < order.size(); ++i) remap[order[i]] = static_cast<int>(i);
    for (int id : order) {
        Segment s = tree.segments[id];
        s.id = remap[id];
        s.parent_id = s.parent_id >= 0 ? remap[s.parent_id] : -1;
        std::vector<int> kids;
        for (int c : s.children)
            if (!erased[c]) kids.push_back(remap[c]);
        s.children = kids;
        out.segments.push_back(std::move(s));
    }
    return out;
}

}  // namespace detail

/// Track a full vessel tree from one seed: breadth-first expansion of
/// trackers, splitting at detected bifurcations and cleaning up false
/// bifurcations and leaks.
inline VesselTree track_tree(const Mask& m, const SeedPoint& seed, const TrackerParams& params = {}) {
    params.validate();
    VesselTree tree;
    tree.seed = seed;

    const auto init_dirs = hemisphere_directions(seed.direction, params.n_directions);
    const auto init_radii = radius_step_grid(params.r_init_min, params.r_init_max, params.r_step_init);
    const FitResult init = fit_cylinder_grid(m, seed.position, seed.direction, init_dirs, init_radii, params.h0);
    if (init.fill < params.fill_min) {
        tree.seeded = false;
        tree.failure_reason = "no initial cylinder reached the minimum fill fraction";
        return tree;
    }
    tree.seeded = true;

    std::vector<std::uint8_t> global_captured(m.geom.voxel_count(), 0);
    std::vector<detail::BifurcationRecord> records;
    std::deque<TrackerState> queue;
    std::vector<int> queue_ids;

    tree.segments.push_back(Segment{0, -1});
    detail::append_capture(tree.segments[0], m, init.cylinder, global_captured);
    queue.push_back(TrackerState{{init.cylinder}, init.fill, -1});
    queue_ids.push_back(0);

    while (!queue.empty()) {
        TrackerState st = std::move(queue.front());
        const int seg_id = queue_ids.front();
        queue.pop_front();
        queue_ids.erase(queue_ids.begin());

        // a candidate whose second-child search failed arms a probe: the
        // tracker keeps stepping, and if the continuation weak-matches out
        // within false_bif_max_iters cylinders the candidate was a vessel end
        // and the tail from the trigger onward is trimmed
        std::ptrdiff_t probe_start = -1;
        while (true) {
            Segment& seg = tree.segments[seg_id];
            if (seg.cylinders.size() >= static_cast<std::size_t>(params.max_cylinders_per_segment)) {
                seg.termination = Termination::weak_match;
                break;
            }
            const StepResult step = step_tracker(m, st, params);
            if (!step.accepted) {
                seg.termination = Termination::weak_match;
                if (probe_start >= 0 && seg.cylinders.size() - probe_start <=
                                            static_cast<std::size_t>(params.false_bif_max_iters)) {
                    seg.cylinders.resize(probe_start);
                    seg.captures.resize(probe_start);
                }
                break;
            }
            st.history.push_back(step.fit.cylinder);
            st.last_fill = step.fit.fill;
            detail::append_capture(seg, m, step.fit.cylinder, global_captured);
            if (probe_start >= 0 && seg.cylinders.size() - probe_start >
                                        static_cast<std::size_t>(params.false_bif_max_iters))
                probe_start = -1;  // the continuation survived: taper, not an end

            if (const auto leak_ref = detect_leak(st, params)) {
                // erase everything after the reference cylinder
                const std::size_t keep = *leak_ref + 1;
                const std::size_t seg_keep = seg.cylinders.size() - (st.history.size() - keep);
                seg.cylinders.resize(seg_keep);
                seg.captures.resize(seg_keep);
                seg.termination = Termination::leak_removed;
                break;
            }

            if (detect_bifurcation(st, params) &&
                tree.segments.size() + 2 <= static_cast<std::size_t>(params.max_segments)) {
                const Cylinder trigger = st.history.back();
                const Cylinder& before = st.history[st.history.size() - 2];

                // child 1 is re-initiated at the candidate point about the
                // trigger direction, with the radius freed up to the parent's
                const FitResult child1 = detail::fit_with_refinement(
                    m, trigger.base, trigger.axis, detail::child_radius_grid(before.radius, params), params);

                std::optional<FitResult> second;
                if (child1.fill >= params.fill_min) {
                    second = find_second_child(m, trigger.base, before.axis, child1.cylinder.axis,
                                               before.radius, params);
                    if (second) {
                        // a second child re-tracking already captured voxels
                        // is a self-collision, not a branch
                        const auto second_capture = captured_voxels(m, second->cylinder);
                        if (detail::captured_overlap_fraction(second_capture, global_captured) >=
                            params.child_overlap_discard)
                            second.reset();
                    }
                }
                if (!second) {
                    if (probe_start < 0) probe_start = static_cast<std::ptrdiff_t>(seg.cylinders.size()) - 1;
                    continue;
                }

                // true split: the parent ends at the candidate point
                seg.cylinders.pop_back();
                seg.captures.pop_back();
                seg.termination = Termination::bifurcation;
                seg.bifurcation_point = trigger.base;

                const int c1 = static_cast<int>(tree.segments.size());
                const int c2 = c1 + 1;
                tree.segments[seg_id].children = {c1, c2};
                records.push_back({seg_id, c1, c2});

                tree.segments.push_back(Segment{c1, seg_id});
                detail::append_capture(tree.segments[c1], m, child1.cylinder, global_captured);
                queue.push_back(TrackerState{{child1.cylinder}, child1.fill, seg_id});
                queue_ids.push_back(c1);

                tree.segments.push_back(Segment{c2, seg_id});
                detail::append_capture(tree.segments[c2], m, second->cylinder, global_captured);
                queue.push_back(TrackerState{{second->cylinder}, second->fill, seg_id});
                queue_ids.push_back(c2);
                break;
            }
        }
    }

    std::vector<bool> erased(tree.segments.size(), false);
    for (auto it = records.rbegin(); it != records.rend(); ++it)
        prune_false_bifurcation(tree, it->parent, it->child1, it->child2, params, erased);
    return detail::compact_tree(tree, erased);
}

/// Per-segment label image of the captured voxels (labels are segment id + 1,
/// first owner wins) plus helpers for evaluation.
inline LabelMask tree_label_mask(const VesselTree& tree, const GridGeometry& geom) {
    LabelMask labels(geom);
    for (const auto& seg : tree.segments) {
        const auto vox = seg.voxels();
        const std::uint16_t label = static_cast<std::uint16_t>(seg.id + 1);
        for (auto v : vox)
            if (labels.values[v] == 0) labels.values[v] = label;
    }
    return labels;
}

inline Mask tree_binary_mask(const VesselTree& tree, const GridGeometry& geom) {
    Mask out(geom);
    for (const auto& seg : tree.segments)
        for (const auto& cap : seg.captures)
            for (auto v : cap) out.values[v] = 1;
    return out;
}

}  // namespace patrack
