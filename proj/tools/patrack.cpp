// patrack command-line tool: phantom generation, the full segmentation
// pipeline, sparse-surface evaluation and the training parameter sweep.
//
// Exit codes: 0 success, 1 usage or I/O error, 2 algorithmic failure
// (e.g. no branch could be seeded).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "patrack/formats.hpp"
#include "patrack/phantom.hpp"
#include "patrack/pipeline.hpp"
#include "patrack/volume_io.hpp"

namespace fs = std::filesystem;
using namespace patrack;

namespace {

struct PhantomArgs {
    std::string out_dir;
    int generations = 3;
    double root_radius = 4.0;
    double angle_deg = 60.0;
    double length_factor = 4.0;
    std::vector<int> dims{128, 128, 128};
    std::vector<double> spacing{0.7, 0.7, 1.25};
    double noise_sigma = 0.0;
    std::uint64_t seed = 17;
    bool airway = false;
    double airway_offset = 10.0;
    double lumen_radius = 3.0;
    double wall_thickness = 1.5;
    int decoys = 0;
    double decoy_radius = 3.0;
    double decoy_length = 30.0;
    double decoy_clearance = 5.0;
};

int cmd_phantom(const PhantomArgs& a) {
    PhantomConfig cfg;
    cfg.dims = {a.dims[0], a.dims[1], a.dims[2]};
    cfg.spacing = {a.spacing[0], a.spacing[1], a.spacing[2]};
    cfg.noise_sigma_hu = a.noise_sigma;
    cfg.rng_seed = a.seed;
    cfg.airway.enabled = a.airway;
    cfg.airway.offset = a.airway_offset;
    cfg.airway.lumen_radius = a.lumen_radius;
    cfg.airway.wall_thickness = a.wall_thickness;
    cfg.validate();

    const GridGeometry geom = cfg.geometry();
    TreeOptions topts;
    topts.generations = a.generations;
    topts.root_radius = a.root_radius;
    topts.angle_deg = a.angle_deg;
    topts.length_factor = a.length_factor;
    topts.rng_seed = a.seed;
    topts.root_origin = geom.voxel_to_world(0.5 * (geom.dims[0] - 1), 0.5 * (geom.dims[1] - 1),
                                            0.15 * (geom.dims[2] - 1));
    TreeSpec spec = generate_tree(topts);
    if (a.decoys > 0)
        place_decoy_tubes(spec, a.decoys, a.decoy_radius, a.decoy_length, a.decoy_clearance, cfg);

    PhantomImage img = rasterize(spec, cfg);
    if (cfg.noise_sigma_hu > 0.0) img.volume = add_noise(img.volume, cfg.noise_sigma_hu, cfg.rng_seed);

    fs::create_directories(a.out_dir);
    const fs::path out(a.out_dir);
    save_volume(img.volume, (out / "volume.mha").string());
    save_labels(img.labels, (out / "labels.mha").string());
    save_truth_csv(emit_truth_markings(spec, cfg, MarkingMode::dense), (out / "truth_dense.csv").string());
    save_truth_csv(emit_truth_markings(spec, cfg, MarkingMode::sparse), (out / "truth_sparse.csv").string());
    save_phantom_json(spec, cfg, (out / "phantom.json").string());
    if (cfg.airway.enabled) {
        save_mask(img.airway_lumen, (out / "airway_lumen.mha").string());
        const PhantomBranch tube = airway_axis(spec, cfg);
        CenterlineBranch branch;
        branch.label = "airway_0";
        const int n = std::max(4, static_cast<int>(tube.length / 2.0) + 1);
        for (int i = 0; i < n; ++i)
            branch.points.push_back(tube.origin + tube.direction * (tube.length * i / (n - 1)));
        save_centerline({branch}, (out / "airway_centerline.json").string());
    }
    std::cout << "phantom written to " << a.out_dir << " (" << spec.branches.size() << " branches)\n";
    return 0;
}

struct SegmentArgs {
    std::string volume_path;
    std::string centerline_path;
    std::string lumen_path;
    std::string out_dir;
    TrackerParams params;
    RoiOptions roi;
};

int cmd_segment(const SegmentArgs& a) {
    const Volume volume = load_volume(a.volume_path);
    const auto branches = load_centerline(a.centerline_path);
    std::optional<Mask> lumen;
    if (!a.lumen_path.empty()) lumen = load_mask(a.lumen_path);

    SegmentOptions opts;
    opts.params = a.params;
    opts.roi = a.roi;
    const SegmentResult result = segment_volume(volume, branches, lumen, opts);

    fs::create_directories(a.out_dir);
    const fs::path out(a.out_dir);
    save_forest_json(result.trees, (out / "tree.json").string());
    save_labels(result.label_mask(), (out / "labels.mha").string());
    for (const auto& o : result.outcomes)
        std::cout << "branch " << o.label << ": " << (o.seeded ? "seeded" : "failed (" + o.message + ")")
                  << "\n";
    if (result.seeded_count() == 0) {
        std::cerr << "error: no branch could be seeded\n";
        return 2;
    }
    std::size_t cylinders = 0;
    for (const auto& t : result.trees) cylinders += t.total_cylinders();
    std::cout << result.trees.size() << " tree(s), " << cylinders << " cylinders\n";
    return 0;
}

struct EvaluateArgs {
    std::string segmentation_path;
    std::string truth_path;
    std::string out_dir;
    double rms_threshold = 2.0;
};

Mask load_segmentation_as_mask(const std::string& path) {
    const std::string type = probe_element_type(path);
    Mask m;
    if (type == "MET_UCHAR") {
        m = load_mask(path);
    } else if (type == "MET_USHORT") {
        const LabelMask labels = load_labels(path);
        m = Mask(labels.geom);
        for (std::size_t i = 0; i < labels.values.size(); ++i) m.values[i] = labels.values[i] != 0;
    } else if (type == "MET_SHORT") {
        const Volume v = load_volume(path);
        m = Mask(v.geom);
        for (std::size_t i = 0; i < v.values.size(); ++i) m.values[i] = v.values[i] != 0;
    } else {
        throw std::runtime_error(path + ": unsupported segmentation element type " + type);
    }
    return m;
}

int cmd_evaluate(const EvaluateArgs& a) {
    const Mask seg = load_segmentation_as_mask(a.segmentation_path);
    const GroundTruth truth = load_truth_csv(a.truth_path);
    const Evaluation e = evaluate_segmentation(seg, truth, a.rms_threshold);

    fs::create_directories(a.out_dir);
    const fs::path out(a.out_dir);
    save_evaluation_json(e, (out / "report.json").string());
    save_distances_csv(e, (out / "distances.csv").string());
    std::printf("TP=%d FN=%d TN=%d FP=%d  sensitivity=%.3f specificity=%.3f  score=%lld\n", e.report.tp,
                e.report.fn, e.report.tn, e.report.fp, e.report.sensitivity, e.report.specificity, e.score);
    return 0;
}

struct SweepArgs {
    std::vector<std::string> volume_paths;
    std::vector<std::string> centerline_paths;
    std::vector<std::string> truth_paths;
    std::vector<std::string> lumen_paths;
    std::string out_dir;
    std::string h0_grid = "5:30:5";
    std::string step_grid = "0.10:0.30:0.05";
    std::string delta_grid = "0.75:1.00:0.05";
    double rms_threshold = 2.0;
    unsigned threads = std::thread::hardware_concurrency();
    TrackerParams params;
};

std::vector<double> parse_grid(const std::string& s) {
    double lo = 0, hi = 0, step = 0;
    if (std::sscanf(s.c_str(), "%lf:%lf:%lf", &lo, &hi, &step) != 3 || step <= 0 || hi < lo)
        throw std::runtime_error("bad grid spec '" + s + "' (expected lo:hi:step)");
    std::vector<double> out;
    for (int i = 0;; ++i) {
        const double v = lo + i * step;
        if (v > hi + 1e-9) break;
        out.push_back(v);
    }
    return out;
}

int cmd_sweep(const SweepArgs& a) {
    if (a.volume_paths.size() != a.centerline_paths.size() || a.volume_paths.size() != a.truth_paths.size())
        throw std::runtime_error("sweep: --volume, --centerline and --truth must be given once per case");
    if (!a.lumen_paths.empty() && a.lumen_paths.size() != a.volume_paths.size())
        throw std::runtime_error("sweep: --airway-lumen must be given for every case or none");

    std::vector<SweepCase> cases;
    for (std::size_t i = 0; i < a.volume_paths.size(); ++i) {
        SweepCase c;
        c.volume = load_volume(a.volume_paths[i]);
        c.branches = load_centerline(a.centerline_paths[i]);
        c.truth = load_truth_csv(a.truth_paths[i]);
        if (!a.lumen_paths.empty()) c.airway_lumen = load_mask(a.lumen_paths[i]);
        cases.push_back(std::move(c));
    }

    SweepGrid grid;
    grid.h0 = parse_grid(a.h0_grid);
    grid.step_frac = parse_grid(a.step_grid);
    grid.delta_radius = parse_grid(a.delta_grid);

    SegmentOptions opts;
    opts.params = a.params;
    const auto rows = run_sweep(cases, grid, opts, a.rms_threshold, a.threads);

    fs::create_directories(a.out_dir);
    const fs::path out(a.out_dir);
    std::ofstream csv(out / "sweep.csv", std::ios::trunc);
    if (!csv) throw std::runtime_error((out / "sweep.csv").string() + ": cannot open for writing");
    csv << sweep_to_csv(rows);
    std::printf("%zu tuples; best: h0=%.6g step_frac=%.6g delta_radius=%.6g score=%lld\n", rows.size(),
                rows.front().h0, rows.front().step_frac, rows.front().delta_radius, rows.front().score);
    return 0;
}

void add_tracker_flags(CLI::App* cmd, TrackerParams& p) {
    cmd->add_option("--h0", p.h0, "cylinder height, mm");
    cmd->add_option("--step-frac", p.step_frac, "step length as a fraction of h0");
    cmd->add_option("--delta-radius", p.radius_change_threshold, "bifurcation radius-change threshold");
    cmd->add_option("--fill-min", p.fill_min, "strong-match fill fraction");
    cmd->add_option("--leak-ratio", p.leak_ratio, "leak detection radius ratio");
    cmd->add_option("--n-directions", p.n_directions, "hemisphere direction samples");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"patrack: pulmonary-artery-style vessel tracking on CT volumes"};
    app.require_subcommand(1);

    PhantomArgs pa;
    auto* phantom = app.add_subcommand("phantom", "generate a synthetic vascular phantom");
    phantom->add_option("--out", pa.out_dir, "output directory")->required();
    phantom->add_option("--generations", pa.generations, "tree generations");
    phantom->add_option("--root-radius", pa.root_radius, "root branch radius, mm");
    phantom->add_option("--angle", pa.angle_deg, "angle between sibling children, degrees");
    phantom->add_option("--length-factor", pa.length_factor, "branch length = factor * radius");
    phantom->add_option("--dims", pa.dims, "volume dimensions")->expected(3);
    phantom->add_option("--spacing", pa.spacing, "voxel spacing, mm")->expected(3);
    phantom->add_option("--noise-sigma", pa.noise_sigma, "Gaussian noise sigma, HU");
    phantom->add_option("--seed", pa.seed, "random seed");
    phantom->add_flag("--airway", pa.airway, "rasterize an airway companion tube");
    phantom->add_option("--airway-offset", pa.airway_offset, "airway axis offset from the root, mm");
    phantom->add_option("--lumen-radius", pa.lumen_radius, "airway lumen radius, mm");
    phantom->add_option("--wall-thickness", pa.wall_thickness, "airway wall thickness, mm");
    phantom->add_option("--decoys", pa.decoys, "number of decoy vein tubes");
    phantom->add_option("--decoy-radius", pa.decoy_radius, "decoy tube radius, mm");
    phantom->add_option("--decoy-length", pa.decoy_length, "decoy tube length, mm");
    phantom->add_option("--decoy-clearance", pa.decoy_clearance, "minimum decoy clearance, mm");

    SegmentArgs sa;
    auto* segment = app.add_subcommand("segment", "run the segmentation pipeline");
    segment->add_option("--volume", sa.volume_path, "input volume (.mha)")->required();
    segment->add_option("--centerline", sa.centerline_path, "airway centerline JSON")->required();
    segment->add_option("--airway-lumen", sa.lumen_path, "airway lumen mask (.mha)");
    segment->add_option("--out", sa.out_dir, "output directory")->required();
    segment->add_option("--roi-half-width", sa.roi.half_width, "seed ROI half width, mm");
    segment->add_option("--roi-interval", sa.roi.interval, "seed ROI frame interval, mm");
    segment->add_option("--roi-pitch", sa.roi.pixel_pitch, "seed ROI pixel pitch, mm");
    add_tracker_flags(segment, sa.params);

    EvaluateArgs ea;
    auto* evaluate = app.add_subcommand("evaluate", "evaluate a segmentation with the sparse-surface metric");
    evaluate->add_option("--segmentation", ea.segmentation_path, "segmentation mask or label image")->required();
    evaluate->add_option("--truth", ea.truth_path, "ground-truth CSV")->required();
    evaluate->add_option("--out", ea.out_dir, "output directory")->required();
    evaluate->add_option("--rms-threshold", ea.rms_threshold, "classification RMS threshold, mm");

    SweepArgs wa;
    auto* sweep = app.add_subcommand("sweep", "full-grid parameter sweep maximizing the training score");
    sweep->add_option("--volume", wa.volume_paths, "input volume(s)")->required();
    sweep->add_option("--centerline", wa.centerline_paths, "centerline JSON per volume")->required();
    sweep->add_option("--truth", wa.truth_paths, "truth CSV per volume")->required();
    sweep->add_option("--airway-lumen", wa.lumen_paths, "airway lumen mask per volume");
    sweep->add_option("--out", wa.out_dir, "output directory")->required();
    sweep->add_option("--h0-grid", wa.h0_grid, "h0 grid lo:hi:step, mm");
    sweep->add_option("--step-grid", wa.step_grid, "step fraction grid lo:hi:step");
    sweep->add_option("--delta-grid", wa.delta_grid, "radius threshold grid lo:hi:step");
    sweep->add_option("--rms-threshold", wa.rms_threshold, "classification RMS threshold, mm");
    sweep->add_option("--threads", wa.threads, "worker threads");

    CLI11_PARSE(app, argc, argv);

    try {
        if (phantom->parsed()) return cmd_phantom(pa);
        if (segment->parsed()) return cmd_segment(sa);
        if (evaluate->parsed()) return cmd_evaluate(ea);
        if (sweep->parsed()) return cmd_sweep(wa);
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 1;
}
