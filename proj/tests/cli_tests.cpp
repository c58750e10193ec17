// End-to-end tests of the patrack command-line tool. The binary path comes
// from the PATRACK_BIN environment variable (set by CTest).

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "patrack/formats.hpp"
#include "patrack/volume_io.hpp"

using namespace patrack;
namespace fs = std::filesystem;

namespace {

std::string binary() {
    const char* env = std::getenv("PATRACK_BIN");
    REQUIRE_MESSAGE(env != nullptr, "PATRACK_BIN must point at the patrack binary");
    return env;
}

int run(const std::string& args) {
    const std::string cmd = binary() + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "patrack_cli_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("phantom: default invocation writes the five phantom files") {
    const fs::path out = fresh_dir("phantom_default");
    CHECK(run("phantom --out " + out.string()) == 0);
    for (const char* name : {"volume.mha", "labels.mha", "truth_dense.csv", "truth_sparse.csv", "phantom.json"})
        CHECK_MESSAGE(fs::exists(out / name), name);
    // geometry headers match and the configured spacing survives the round trip
    const Volume v = load_volume((out / "volume.mha").string());
    const LabelMask l = load_labels((out / "labels.mha").string());
    CHECK(v.geom.same_geometry(l.geom));
    CHECK(v.geom.spacing == Vec3{0.7, 0.7, 1.25});
}

TEST_CASE("phantom: same seed twice is byte-identical, different seed differs") {
    const fs::path a = fresh_dir("phantom_a");
    const fs::path b = fresh_dir("phantom_b");
    const fs::path c = fresh_dir("phantom_c");
    const std::string flags = " --dims 48 48 48 --noise-sigma 40 --seed 11";
    CHECK(run("phantom --out " + a.string() + flags) == 0);
    CHECK(run("phantom --out " + b.string() + flags) == 0);
    CHECK(run("phantom --out " + c.string() + " --dims 48 48 48 --noise-sigma 40 --seed 12") == 0);
    CHECK(slurp(a / "volume.mha") == slurp(b / "volume.mha"));
    CHECK(slurp(a / "truth_sparse.csv") == slurp(b / "truth_sparse.csv"));
    CHECK(slurp(a / "volume.mha") != slurp(c / "volume.mha"));
}

TEST_CASE("phantom: three generations mark seven labelled objects") {
    const fs::path out = fresh_dir("phantom_3gen");
    CHECK(run("phantom --out " + out.string() + " --generations 3") == 0);
    const GroundTruth truth = load_truth_csv((out / "truth_sparse.csv").string());
    CHECK(truth.objects.size() == 7);
}

TEST_CASE("segment + evaluate round trip on an airway phantom") {
    const fs::path ph = fresh_dir("e2e_phantom");
    const fs::path seg = fresh_dir("e2e_segment");
    const fs::path ev = fresh_dir("e2e_eval");
    CHECK(run("phantom --out " + ph.string() +
              " --dims 64 64 64 --spacing 1 1 1 --generations 2 --length-factor 6 --airway") == 0);
    REQUIRE(fs::exists(ph / "airway_lumen.mha"));
    REQUIRE(fs::exists(ph / "airway_centerline.json"));

    const int seg_rc = run("segment --volume " + (ph / "volume.mha").string() + " --centerline " +
                           (ph / "airway_centerline.json").string() + " --airway-lumen " +
                           (ph / "airway_lumen.mha").string() + " --out " + seg.string());
    CHECK(seg_rc == 0);
    REQUIRE(fs::exists(seg / "tree.json"));
    REQUIRE(fs::exists(seg / "labels.mha"));

    const int ev_rc = run("evaluate --segmentation " + (seg / "labels.mha").string() + " --truth " +
                          (ph / "truth_sparse.csv").string() + " --out " + ev.string());
    CHECK(ev_rc == 0);
    REQUIRE(fs::exists(ev / "report.json"));
    REQUIRE(fs::exists(ev / "distances.csv"));
    const auto report = nlohmann::json::parse(slurp(ev / "report.json"));
    CHECK(report.at("counts").at("tp").get<int>() >= 1);
    CHECK(report.at("rms_threshold").get<double>() == 2.0);
}

TEST_CASE("segment exits 2 when nothing can be seeded") {
    const fs::path dir = fresh_dir("seed_failure");
    Volume air(GridGeometry{{32, 32, 32}, {1, 1, 1}, {0, 0, 0}}, -1000);
    save_volume(air, (dir / "air.mha").string());
    std::vector<CenterlineBranch> branches{{"aw", {{15, 15, 4}, {15, 15, 10}, {15, 15, 16}, {15, 15, 22}}}};
    save_centerline(branches, (dir / "centerline.json").string());
    CHECK(run("segment --volume " + (dir / "air.mha").string() + " --centerline " +
              (dir / "centerline.json").string() + " --out " + (dir / "out").string()) == 2);
}

TEST_CASE("usage and I/O errors exit 1") {
    CHECK(run("segment --volume /nonexistent.mha --centerline /nonexistent.json --out /tmp/patrack_x") == 1);
    CHECK(run("bogus-subcommand") != 0);
    CHECK(run("evaluate --segmentation /nonexistent.mha --truth /nonexistent.csv --out /tmp/patrack_x") == 1);
}

TEST_CASE("evaluating the phantom's own label mask yields perfect classification") {
    const fs::path ph = fresh_dir("self_eval_phantom");
    const fs::path ev = fresh_dir("self_eval_out");
    CHECK(run("phantom --out " + ph.string() + " --dims 64 64 64 --spacing 1 1 1 --generations 2") == 0);
    CHECK(run("evaluate --segmentation " + (ph / "labels.mha").string() + " --truth " +
              (ph / "truth_sparse.csv").string() + " --out " + ev.string()) == 0);
    const auto report = nlohmann::json::parse(slurp(ev / "report.json"));
    CHECK(report.at("counts").at("tp").get<int>() == 3);
    CHECK(report.at("counts").at("fn").get<int>() == 0);
    for (const auto& obj : report.at("objects")) CHECK(std::fabs(obj.at("asd").get<double>()) < 1.0);
}

TEST_CASE("spelling out --rms-threshold 2.0 matches the default") {
    const fs::path ph = fresh_dir("thr_phantom");
    const fs::path a = fresh_dir("thr_a");
    const fs::path b = fresh_dir("thr_b");
    CHECK(run("phantom --out " + ph.string() + " --dims 48 48 48 --spacing 1 1 1 --generations 2") == 0);
    const std::string inputs = " --segmentation " + (ph / "labels.mha").string() + " --truth " +
                               (ph / "truth_sparse.csv").string();
    CHECK(run("evaluate" + inputs + " --out " + a.string()) == 0);
    CHECK(run("evaluate" + inputs + " --out " + b.string() + " --rms-threshold 2.0") == 0);
    CHECK(slurp(a / "report.json") == slurp(b / "report.json"));
    CHECK(slurp(a / "distances.csv") == slurp(b / "distances.csv"));
}

TEST_CASE("empty segmentation classifies arteries FN and veins TN") {
    const fs::path ph = fresh_dir("empty_seg_phantom");
    const fs::path ev = fresh_dir("empty_seg_out");
    CHECK(run("phantom --out " + ph.string() + " --dims 64 64 64 --spacing 1 1 1 --generations 2 --decoys 1 "
              "--decoy-length 20 --decoy-radius 2.5") == 0);
    Mask empty(GridGeometry{{64, 64, 64}, {1, 1, 1}, {0, 0, 0}});
    save_mask(empty, (ph / "empty.mha").string());
    CHECK(run("evaluate --segmentation " + (ph / "empty.mha").string() + " --truth " +
              (ph / "truth_sparse.csv").string() + " --out " + ev.string()) == 0);
    const auto report = nlohmann::json::parse(slurp(ev / "report.json"));
    CHECK(report.at("counts").at("fn").get<int>() == 3);
    CHECK(report.at("counts").at("tn").get<int>() == 1);
    CHECK(report.at("counts").at("tp").get<int>() == 0);
    CHECK(report.at("training_score").get<long long>() == 1 - 3);
}

TEST_CASE("sweep: single-tuple grid equals segment + evaluate composition") {
    const fs::path ph = fresh_dir("sweep_phantom");
    const fs::path seg = fresh_dir("sweep_segment");
    const fs::path ev = fresh_dir("sweep_eval");
    const fs::path sw = fresh_dir("sweep_out");
    CHECK(run("phantom --out " + ph.string() +
              " --dims 64 64 64 --spacing 1 1 1 --generations 2 --length-factor 6 --airway") == 0);
    const std::string inputs = " --volume " + (ph / "volume.mha").string() + " --centerline " +
                               (ph / "airway_centerline.json").string() + " --airway-lumen " +
                               (ph / "airway_lumen.mha").string();
    CHECK(run("sweep" + inputs + " --truth " + (ph / "truth_sparse.csv").string() + " --out " + sw.string() +
              " --h0-grid 15:15:5 --step-grid 0.20:0.20:0.05 --delta-grid 0.90:0.90:0.05") == 0);
    CHECK(run("segment" + inputs + " --out " + seg.string()) == 0);
    CHECK(run("evaluate --segmentation " + (seg / "labels.mha").string() + " --truth " +
              (ph / "truth_sparse.csv").string() + " --out " + ev.string()) == 0);

    const std::string csv = slurp(sw / "sweep.csv");
    const auto report = nlohmann::json::parse(slurp(ev / "report.json"));
    std::istringstream rows(csv);
    std::string header, row;
    std::getline(rows, header);
    REQUIRE(std::getline(rows, row));
    char expected[128];
    std::snprintf(expected, sizeof expected, "15,0.2,0.9,%lld,%d,%d,%d,%d",
                  report.at("training_score").get<long long>(), report.at("counts").at("tp").get<int>(),
                  report.at("counts").at("fn").get<int>(), report.at("counts").at("tn").get<int>(),
                  report.at("counts").at("fp").get<int>());
    CHECK(row == expected);
}

TEST_CASE("tracker flag defaults reproduce the optimized parameter tuple") {
    // a run with the optimized values spelled out matches the bare run
    const fs::path ph = fresh_dir("defaults_phantom");
    const fs::path a = fresh_dir("defaults_a");
    const fs::path b = fresh_dir("defaults_b");
    CHECK(run("phantom --out " + ph.string() +
              " --dims 64 64 64 --spacing 1 1 1 --generations 2 --length-factor 6 --airway") == 0);
    const std::string inputs = " --volume " + (ph / "volume.mha").string() + " --centerline " +
                               (ph / "airway_centerline.json").string() + " --airway-lumen " +
                               (ph / "airway_lumen.mha").string();
    CHECK(run("segment" + inputs + " --out " + a.string()) == 0);
    CHECK(run("segment" + inputs + " --out " + b.string() + " --h0 15 --step-frac 0.20 --delta-radius 0.90") == 0);
    CHECK(slurp(a / "tree.json") == slurp(b / "tree.json"));
    CHECK(slurp(a / "labels.mha") == slurp(b / "labels.mha"));
}
