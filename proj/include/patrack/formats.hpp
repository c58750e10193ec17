// Interchange formats: airway centerline JSON, truth-marking CSV, vessel tree
// JSON and evaluation reports. Schemas are documented in the README.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "patrack/phantom.hpp"
#include "patrack/ssmetric.hpp"
#include "patrack/tracker.hpp"

namespace patrack {

struct CenterlineBranch {
    std::string label;
    std::vector<WorldPoint> points;  // proximal to distal
};

inline nlohmann::json centerline_to_json(const std::vector<CenterlineBranch>& branches) {
    nlohmann::json out;
    out["branches"] = nlohmann::json::array();
    for (const auto& b : branches) {
        nlohmann::json jb;
        jb["label"] = b.label;
        jb["points"] = nlohmann::json::array();
        for (const auto& p : b.points) jb["points"].push_back({p.x, p.y, p.z});
        out["branches"].push_back(jb);
    }
    return out;
}

inline std::vector<CenterlineBranch> centerline_from_json(const nlohmann::json& j) {
    std::vector<CenterlineBranch> branches;
    for (const auto& jb : j.at("branches")) {
        CenterlineBranch b;
        b.label = jb.at("label").get<std::string>();
        for (const auto& jp : jb.at("points"))
            b.points.push_back({jp.at(0).get<double>(), jp.at(1).get<double>(), jp.at(2).get<double>()});
        branches.push_back(std::move(b));
    }
    return branches;
}

inline std::vector<CenterlineBranch> load_centerline(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path + ": cannot open centerline JSON");
    return centerline_from_json(nlohmann::json::parse(in));
}

inline void save_centerline(const std::vector<CenterlineBranch>& branches, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << centerline_to_json(branches).dump(2) << '\n';
}

// Truth CSV: rows of object_label,kind,x,y,z in world mm (header optional).

inline void save_truth_csv(const GroundTruth& truth, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << "label,kind,x,y,z\n";
    char line[160];
    for (const auto& obj : truth.objects)
        for (const auto& p : obj.points) {
            std::snprintf(line, sizeof line, "%s,%s,%.9g,%.9g,%.9g\n", obj.label.c_str(),
                          to_string(obj.kind), p.x, p.y, p.z);
            out << line;
        }
}

inline GroundTruth load_truth_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path + ": cannot open truth CSV");
    GroundTruth truth;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        std::istringstream ss(line);
        std::string label, kind, xs, ys, zs;
        if (!std::getline(ss, label, ',') || !std::getline(ss, kind, ',') || !std::getline(ss, xs, ',') ||
            !std::getline(ss, ys, ',') || !std::getline(ss, zs))
            throw std::runtime_error(path + ": malformed CSV at line " + std::to_string(lineno));
        if (lineno == 1 && label == "label") continue;  // header
        WorldPoint p;
        try {
            p = {std::stod(xs), std::stod(ys), std::stod(zs)};
        } catch (const std::exception&) {
            throw std::runtime_error(path + ": bad coordinate at line " + std::to_string(lineno));
        }
        auto it = std::find_if(truth.objects.begin(), truth.objects.end(),
                               [&](const TruthObject& o) { return o.label == label; });
        if (it == truth.objects.end()) {
            truth.objects.push_back(TruthObject{label, vessel_kind_from(kind), {}});
            it = truth.objects.end() - 1;
        }
        it->points.push_back(p);
    }
    return truth;
}

// Vessel tree JSON.

inline nlohmann::json tree_to_json(const VesselTree& tree) {
    nlohmann::json out;
    out["seeded"] = tree.seeded;
    if (!tree.seeded) out["failure_reason"] = tree.failure_reason;
    out["seed"] = {{"position", {tree.seed.position.x, tree.seed.position.y, tree.seed.position.z}},
                   {"direction", {tree.seed.direction.x, tree.seed.direction.y, tree.seed.direction.z}},
                   {"source_airway", tree.seed.source_airway}};
    out["segments"] = nlohmann::json::array();
    for (const auto& seg : tree.segments) {
        nlohmann::json js;
        js["id"] = seg.id;
        if (seg.parent_id >= 0) js["parent_id"] = seg.parent_id;
        else js["parent_id"] = nullptr;
        js["termination"] = to_string(seg.termination);
        js["cylinders"] = nlohmann::json::array();
        for (const auto& c : seg.cylinders)
            js["cylinders"].push_back({{"base", {c.base.x, c.base.y, c.base.z}},
                                       {"axis", {c.axis.x, c.axis.y, c.axis.z}},
                                       {"radius", c.radius},
                                       {"height", c.height}});
        out["segments"].push_back(js);
    }
    return out;
}

inline void save_tree_json(const VesselTree& tree, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << tree_to_json(tree).dump(2) << '\n';
}

/// Forest variant: several seeded trees in one file, segment ids offset so
/// they match the label mask.
inline void save_forest_json(const std::vector<VesselTree>& trees, const std::string& path) {
    nlohmann::json out;
    out["trees"] = nlohmann::json::array();
    int id_offset = 0;
    for (const auto& t : trees) {
        nlohmann::json jt = tree_to_json(t);
        for (auto& js : jt["segments"]) {
            js["id"] = js["id"].get<int>() + id_offset;
            if (!js["parent_id"].is_null()) js["parent_id"] = js["parent_id"].get<int>() + id_offset;
        }
        jt["label_offset"] = id_offset;
        out["trees"].push_back(jt);
        id_offset += static_cast<int>(t.segments.size());
    }
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error(path + ": cannot open for writing");
    f << out.dump(2) << '\n';
}

// Evaluation report JSON + flat distance CSV.

inline double json_safe(double v) {
    // nlohmann serializes non-finite numbers as null; keep a sentinel instead
    if (std::isinf(v)) return v > 0 ? 1e30 : -1e30;
    return v;
}

inline nlohmann::json evaluation_to_json(const Evaluation& e) {
    nlohmann::json out;
    out["rms_threshold"] = e.report.rms_threshold;
    out["objects"] = nlohmann::json::array();
    for (const auto& o : e.report.objects) {
        out["objects"].push_back({{"label", o.label},
                                  {"kind", to_string(o.kind)},
                                  {"n_points", o.stats.n_points},
                                  {"asd", json_safe(o.stats.asd)},
                                  {"rmsd", json_safe(o.stats.rmsd)},
                                  {"max_negative", json_safe(o.stats.max_negative)},
                                  {"max_positive", json_safe(o.stats.max_positive)},
                                  {"category", to_string(o.category)}});
    }
    out["counts"] = {{"tp", e.report.tp}, {"fn", e.report.fn}, {"tn", e.report.tn}, {"fp", e.report.fp}};
    out["sensitivity"] = e.report.sensitivity;
    out["specificity"] = e.report.specificity;
    out["training_score"] = e.score;
    return out;
}

inline void save_evaluation_json(const Evaluation& e, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << evaluation_to_json(e).dump(2) << '\n';
}

inline void save_distances_csv(const Evaluation& e, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << "label,kind,distance\n";
    char line[96];
    for (const auto& d : e.distances)
        for (const double m : d.distances) {
            std::snprintf(line, sizeof line, "%s,%s,%.9g\n", d.label.c_str(), to_string(d.kind), m);
            out << line;
        }
}

// Phantom spec JSON.

inline nlohmann::json phantom_to_json(const TreeSpec& spec, const PhantomConfig& cfg) {
    nlohmann::json out;
    out["config"] = {{"dims", cfg.dims},
                     {"spacing", {cfg.spacing.x, cfg.spacing.y, cfg.spacing.z}},
                     {"origin", {cfg.origin.x, cfg.origin.y, cfg.origin.z}},
                     {"vessel_hu", cfg.vessel_hu},
                     {"parenchyma_hu", cfg.parenchyma_hu},
                     {"airway_lumen_hu", cfg.airway_lumen_hu},
                     {"airway_wall_hu", cfg.airway_wall_hu},
                     {"noise_sigma_hu", cfg.noise_sigma_hu},
                     {"rng_seed", cfg.rng_seed},
                     {"airway", {{"enabled", cfg.airway.enabled},
                                 {"lumen_radius", cfg.airway.lumen_radius},
                                 {"wall_thickness", cfg.airway.wall_thickness},
                                 {"offset", cfg.airway.offset}}}};
    out["tree"] = {{"generations", spec.generations},
                   {"bifurcation_angle_deg", spec.bifurcation_angle_deg},
                   {"radius_exponent", spec.radius_exponent}};
    out["tree"]["branches"] = nlohmann::json::array();
    for (const auto& b : spec.branches)
        out["tree"]["branches"].push_back({{"id", b.id},
                                           {"parent", b.parent},
                                           {"generation", b.generation},
                                           {"origin", {b.origin.x, b.origin.y, b.origin.z}},
                                           {"direction", {b.direction.x, b.direction.y, b.direction.z}},
                                           {"length", b.length},
                                           {"radius", b.radius},
                                           {"kind", to_string(b.kind)}});
    return out;
}

inline void save_phantom_json(const TreeSpec& spec, const PhantomConfig& cfg, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << phantom_to_json(spec, cfg).dump(2) << '\n';
}

}  // namespace patrack
