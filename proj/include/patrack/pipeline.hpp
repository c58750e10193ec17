// End-to-end orchestration: the preprocessing + seeding + tracking pipeline,
// segmentation evaluation and the training-parameter sweep.

#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "patrack/formats.hpp"
#include "patrack/preprocess.hpp"
#include "patrack/seeding.hpp"
#include "patrack/ssmetric.hpp"
#include "patrack/tracker.hpp"

namespace patrack {

struct RoiOptions {
    double half_width = 50.0;
    double interval = 1.0;
    double pixel_pitch = 0.5;
};

struct SegmentOptions {
    TrackerParams params;
    RoiOptions roi;
    IsolateOptions isolate;
    std::int16_t threshold_hu = -400;
    double airway_dilation_mm = 2.0;
};

struct BranchOutcome {
    std::string label;
    bool seeded = false;
    std::string message;
};

struct SegmentResult {
    std::vector<VesselTree> trees;      // one per successfully seeded branch
    std::vector<BranchOutcome> outcomes;
    Mask working_mask;                  // thresholded, airway walls removed

    int seeded_count() const {
        int n = 0;
        for (const auto& o : outcomes) n += o.seeded;
        return n;
    }

    /// Union of all captured voxels across trees.
    Mask binary_mask() const {
        Mask out(working_mask.geom);
        for (const auto& t : trees)
            for (const auto& seg : t.segments)
                for (const auto& cap : seg.captures)
                    for (auto v : cap) out.values[v] = 1;
        return out;
    }

    /// One label per segment across all trees, numbered in tree order.
    LabelMask label_mask() const {
        LabelMask out(working_mask.geom);
        std::uint16_t next = 1;
        for (const auto& t : trees)
            for (const auto& seg : t.segments) {
                for (auto v : seg.voxels())
                    if (out.values[v] == 0) out.values[v] = next;
                ++next;
            }
        return out;
    }
};

/// Locate one seed along an airway branch and track its tree. Returns the
/// outcome even when seeding fails (recoverable per branch).
inline std::optional<VesselTree> seed_and_track(const Volume& seed_volume, const Mask& working,
                                                const CenterlineBranch& branch, const SegmentOptions& opts,
                                                BranchOutcome& outcome) {
    outcome.label = branch.label;
    try {
        const AirwayPath path = fit_centerline_spline(branch.points, branch.label);
        const RoiStack roi =
            build_airway_roi(seed_volume, path, opts.roi.half_width, opts.roi.interval, opts.roi.pixel_pitch);
        const auto component = isolate_artery(roi, opts.isolate);
        if (!component) {
            outcome.message = "no artery candidate isolated in the ROI";
            return std::nullopt;
        }
        const SeedPoint seed = compute_seed(*component, roi, branch.label);
        VesselTree tree = track_tree(working, seed, opts.params);
        if (!tree.seeded) {
            outcome.message = tree.failure_reason;
            return std::nullopt;
        }
        outcome.seeded = true;
        return tree;
    } catch (const std::exception& ex) {
        outcome.message = ex.what();
        return std::nullopt;
    }
}

/// Full segmentation pipeline: median filter, threshold, airway-wall removal,
/// per-branch seed detection and vessel tracking.
inline SegmentResult segment_volume(const Volume& volume, const std::vector<CenterlineBranch>& branches,
                                    const std::optional<Mask>& airway_lumen, const SegmentOptions& opts = {}) {
    opts.params.validate();
    const Volume filtered = median_filter_3x3(volume);
    const Mask tissue = threshold_soft_tissue(filtered, opts.threshold_hu);

    SegmentResult result;
    Volume seed_volume = filtered;
    if (airway_lumen) {
        result.working_mask = remove_airway_walls(tissue, *airway_lumen, opts.airway_dilation_mm);
        seed_volume = mask_out(filtered, dilate_mask(*airway_lumen, opts.airway_dilation_mm), kAirHU);
    } else {
        result.working_mask = tissue;
    }

    for (const auto& branch : branches) {
        BranchOutcome outcome;
        auto tree = seed_and_track(seed_volume, result.working_mask, branch, opts, outcome);
        if (tree) result.trees.push_back(std::move(*tree));
        result.outcomes.push_back(std::move(outcome));
    }
    return result;
}

// ---- training parameter sweep --------------------------------------------

struct SweepCase {
    Volume volume;
    std::vector<CenterlineBranch> branches;
    std::optional<Mask> airway_lumen;
    GroundTruth truth;
};

struct SweepGrid {
    std::vector<double> h0{5.0, 10.0, 15.0, 20.0, 25.0, 30.0};
    std::vector<double> step_frac{0.10, 0.15, 0.20, 0.25, 0.30};
    std::vector<double> delta_radius{0.75, 0.80, 0.85, 0.90, 0.95, 1.00};
};

struct SweepRow {
    double h0 = 0.0;
    double step_frac = 0.0;
    double delta_radius = 0.0;
    long long score = 0;
    int tp = 0, fn = 0, tn = 0, fp = 0;
};

/// Evaluate one parameter tuple on pre-seeded cases. Seeding does not depend
/// on the tracker parameters, so seeds are computed once per case and reused
/// across the grid; results are identical to running the full pipeline.
struct PreparedCase {
    Mask working;
    std::vector<SeedPoint> seeds;
    GroundTruth truth;
};

inline PreparedCase prepare_sweep_case(const SweepCase& c, const SegmentOptions& opts) {
    PreparedCase p;
    const Volume filtered = median_filter_3x3(c.volume);
    const Mask tissue = threshold_soft_tissue(filtered, opts.threshold_hu);
    Volume seed_volume = filtered;
    if (c.airway_lumen) {
        p.working = remove_airway_walls(tissue, *c.airway_lumen, opts.airway_dilation_mm);
        seed_volume = mask_out(filtered, dilate_mask(*c.airway_lumen, opts.airway_dilation_mm), kAirHU);
    } else {
        p.working = tissue;
    }
    for (const auto& branch : c.branches) {
        try {
            const AirwayPath path = fit_centerline_spline(branch.points, branch.label);
            const RoiStack roi = build_airway_roi(seed_volume, path, opts.roi.half_width, opts.roi.interval,
                                                  opts.roi.pixel_pitch);
            const auto component = isolate_artery(roi, opts.isolate);
            if (component) p.seeds.push_back(compute_seed(*component, roi, branch.label));
        } catch (const std::exception&) {
            // unseedable branch: skipped for every tuple alike
        }
    }
    p.truth = c.truth;
    return p;
}

inline SweepRow run_sweep_tuple(const std::vector<PreparedCase>& cases, const TrackerParams& base,
                                double h0, double step_frac, double delta_radius, double rms_threshold) {
    TrackerParams params = base;
    params.h0 = h0;
    params.step_frac = step_frac;
    params.radius_change_threshold = delta_radius;
    SweepRow row{h0, step_frac, delta_radius, 0, 0, 0, 0, 0};
    for (const auto& c : cases) {
        Mask seg(c.working.geom);
        for (const auto& seed : c.seeds) {
            const VesselTree tree = track_tree(c.working, seed, params);
            for (const auto& s : tree.segments)
                for (const auto& cap : s.captures)
                    for (auto v : cap) seg.values[v] = 1;
        }
        const Evaluation e = evaluate_segmentation(seg, c.truth, rms_threshold);
        row.tp += e.report.tp;
        row.fn += e.report.fn;
        row.tn += e.report.tn;
        row.fp += e.report.fp;
    }
    row.score = static_cast<long long>(row.tp) + row.tn - row.fp - row.fn;
    return row;
}

/// Full-grid sweep. Tuples run concurrently; the output ordering (score
/// descending, then the tuple ascending) is fixed by the final sort, so the
/// result is independent of scheduling.
inline std::vector<SweepRow> run_sweep(const std::vector<SweepCase>& cases, const SweepGrid& grid = {},
                                       const SegmentOptions& opts = {}, double rms_threshold = 2.0,
                                       unsigned threads = std::thread::hardware_concurrency()) {
    std::vector<PreparedCase> prepared;
    prepared.reserve(cases.size());
    for (const auto& c : cases) {
        c.truth.validate();
        prepared.push_back(prepare_sweep_case(c, opts));
    }

    struct Tuple {
        double h0, step, delta;
    };
    std::vector<Tuple> tuples;
    for (double h0 : grid.h0)
        for (double s : grid.step_frac)
            for (double d : grid.delta_radius) tuples.push_back({h0, s, d});
    // reject bad grids here rather than inside the worker threads
    for (const auto& t : tuples) {
        TrackerParams p = opts.params;
        p.h0 = t.h0;
        p.step_frac = t.step;
        p.radius_change_threshold = t.delta;
        p.validate();
    }

    std::vector<SweepRow> rows(tuples.size());
    if (threads < 1) threads = 1;
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= tuples.size()) break;
            rows[i] = run_sweep_tuple(prepared, opts.params, tuples[i].h0, tuples[i].step, tuples[i].delta,
                                      rms_threshold);
        }
    };
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    std::sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.h0 != b.h0) return a.h0 < b.h0;
        if (a.step_frac != b.step_frac) return a.step_frac < b.step_frac;
        return a.delta_radius < b.delta_radius;
    });
    return rows;
}

inline std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
    std::string out = "h0,step_frac,delta_radius,score,tp,fn,tn,fp\n";
    char line[128];
    for (const auto& r : rows) {
        std::snprintf(line, sizeof line, "%.6g,%.6g,%.6g,%lld,%d,%d,%d,%d\n", r.h0, r.step_frac,
                      r.delta_radius, r.score, r.tp, r.fn, r.tn, r.fp);
        out += line;
    }
    return out;
}

}  // namespace patrack
