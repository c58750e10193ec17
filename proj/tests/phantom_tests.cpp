#include <doctest.h>

#include <cmath>

#include "patrack/phantom.hpp"
#include "patrack/preprocess.hpp"
#include "patrack/ssmetric.hpp"

using namespace patrack;

namespace {

PhantomConfig small_config() {
    PhantomConfig cfg;
    cfg.dims = {64, 64, 64};
    cfg.spacing = {0.7, 0.7, 1.25};
    return cfg;
}

TreeOptions centered_tree(const PhantomConfig& cfg, int generations, double root_radius) {
    TreeOptions o;
    o.generations = generations;
    o.root_radius = root_radius;
    const GridGeometry g = cfg.geometry();
    o.root_origin = g.voxel_to_world(0.5 * (g.dims[0] - 1), 0.5 * (g.dims[1] - 1), 0.12 * (g.dims[2] - 1));
    return o;
}

}  // namespace

TEST_SUITE("phantom") {

TEST_CASE("equal Murray split shrinks radii by 2^(-1/3)") {
    auto opts = centered_tree(small_config(), 2, 4.0);
    const TreeSpec spec = generate_tree(opts);
    REQUIRE(spec.branches.size() == 3);
    const double expected = 4.0 / std::cbrt(2.0);
    CHECK(spec.branches[1].radius == doctest::Approx(expected).epsilon(1e-12));
    CHECK(spec.branches[2].radius == doctest::Approx(3.1748).epsilon(1e-4));
}

TEST_CASE("single generation is one straight branch") {
    auto opts = centered_tree(small_config(), 1, 4.0);
    const TreeSpec spec = generate_tree(opts);
    CHECK(spec.branches.size() == 1);
    CHECK(spec.branches[0].parent == -1);
    CHECK(spec.branches[0].length == doctest::Approx(16.0));
}

TEST_CASE("three generations give seven branches with the configured sibling angle") {
    auto opts = centered_tree(small_config(), 3, 4.0);
    opts.angle_deg = 60.0;
    const TreeSpec spec = generate_tree(opts);
    REQUIRE(spec.branches.size() == 7);
    for (const auto& b : spec.branches) {
        if (b.parent < 0) continue;
        // find the sibling
        for (const auto& s : spec.branches) {
            if (s.id == b.id || s.parent != b.parent) continue;
            const double angle = std::acos(std::clamp(dot(b.direction, s.direction), -1.0, 1.0));
            CHECK(angle == doctest::Approx(60.0 * 3.14159265358979323846 / 180.0).epsilon(1e-6));
        }
        const double half = std::acos(std::clamp(dot(b.direction, spec.branches[b.parent].direction), -1.0, 1.0));
        CHECK(half == doctest::Approx(30.0 * 3.14159265358979323846 / 180.0).epsilon(1e-6));
    }
}

TEST_CASE("Murray invariant holds at every internal node") {
    auto opts = centered_tree(small_config(), 3, 4.5);
    const TreeSpec spec = generate_tree(opts);
    for (const auto& parent : spec.branches) {
        double child_sum = 0.0;
        bool any = false;
        for (const auto& c : spec.branches)
            if (c.parent == parent.id) {
                child_sum += std::pow(c.radius, 3.0);
                any = true;
            }
        if (any) CHECK(std::pow(parent.radius, 3.0) == doctest::Approx(child_sum).epsilon(1e-9));
    }
}

TEST_CASE("tree generation is deterministic per seed") {
    auto opts = centered_tree(small_config(), 3, 4.0);
    opts.rng_seed = 99;
    const TreeSpec a = generate_tree(opts);
    const TreeSpec b = generate_tree(opts);
    REQUIRE(a.branches.size() == b.branches.size());
    for (std::size_t i = 0; i < a.branches.size(); ++i)
        CHECK(a.branches[i].direction == b.branches[i].direction);
    opts.rng_seed = 100;
    const TreeSpec c = generate_tree(opts);
    bool different = false;
    for (std::size_t i = 1; i < a.branches.size(); ++i)
        if (!(a.branches[i].direction == c.branches[i].direction)) different = true;
    CHECK(different);
}

TEST_CASE("rasterized cross-section area matches the analytic disk within 5%") {
    PhantomConfig cfg = small_config();
    auto opts = centered_tree(cfg, 1, 4.0);
    opts.length_factor = 8.0;  // 32 mm long
    // generic sub-voxel alignment; a half-integer axis position piles
    // inclusion ties onto the rim and inflates the count
    opts.root_origin += Vec3{0.263, 0.157, 0.0};
    const TreeSpec spec = generate_tree(opts);
    const PhantomImage img = rasterize(spec, cfg);
    const double expected = 3.14159265358979323846 * 16.0 / (0.7 * 0.7);
    // interior slices only, away from the end caps
    const GridGeometry g = cfg.geometry();
    const double z0 = spec.branches[0].origin.z;
    int checked = 0;
    for (int z = 0; z < g.dims[2]; ++z) {
        const double wz = g.voxel_to_world(GridIndex{0, 0, z}).z;
        if (wz < z0 + 5.0 || wz > z0 + 27.0) continue;
        int count = 0;
        for (int y = 0; y < g.dims[1]; ++y)
            for (int x = 0; x < g.dims[0]; ++x)
                if (img.labels.at(x, y, z) != 0) ++count;
        CHECK(std::fabs(count - expected) / expected < 0.05);
        ++checked;
    }
    CHECK(checked > 10);
}

TEST_CASE("empty tree rasterizes to pure parenchyma") {
    const PhantomConfig cfg = small_config();
    const PhantomImage img = rasterize(TreeSpec{}, cfg);
    for (auto hu : img.volume.values) CHECK(hu == cfg.parenchyma_hu);
}

TEST_CASE("two-generation tree produces three distinct labels") {
    PhantomConfig cfg = small_config();
    const TreeSpec spec = generate_tree(centered_tree(cfg, 2, 4.0));
    const PhantomImage img = rasterize(spec, cfg);
    std::array<bool, 4> seen{};
    for (auto l : img.labels.values)
        if (l < 4) seen[l] = true;
    CHECK(seen[1]);
    CHECK(seen[2]);
    CHECK(seen[3]);
}

TEST_CASE("thresholding a noise-free phantom reproduces capsule membership exactly") {
    PhantomConfig cfg = small_config();
    const TreeSpec spec = generate_tree(centered_tree(cfg, 2, 4.0));
    const PhantomImage img = rasterize(spec, cfg);
    const Mask mask = threshold_soft_tissue(img.volume);
    const GridGeometry g = cfg.geometry();
    for (int z = 0; z < g.dims[2]; ++z)
        for (int y = 0; y < g.dims[1]; ++y)
            for (int x = 0; x < g.dims[0]; ++x) {
                const WorldPoint p = g.voxel_to_world(GridIndex{x, y, z});
                bool analytic = false;
                for (const auto& b : spec.branches)
                    if (b.contains(p)) analytic = true;
                CHECK(static_cast<bool>(mask.at(x, y, z)) == analytic);
            }
}

TEST_CASE("a tree exceeding the volume bounds is rejected") {
    PhantomConfig cfg = small_config();
    auto opts = centered_tree(cfg, 1, 4.0);
    opts.length_factor = 40.0;  // 160 mm in an 80 mm volume
    CHECK_THROWS_AS(rasterize(generate_tree(opts), cfg), std::invalid_argument);
}

TEST_CASE("noise: sigma 0 is the identity, same seed reproduces, LLN holds") {
    Volume v(GridGeometry{{64, 64, 64}, {1, 1, 1}, {0, 0, 0}}, -900);
    CHECK(add_noise(v, 0.0, 7) == v);
    const Volume a = add_noise(v, 100.0, 7);
    const Volume b = add_noise(v, 100.0, 7);
    CHECK(a == b);
    const Volume c = add_noise(v, 100.0, 8);
    CHECK_FALSE(a == c);
    double mean = 0.0;
    for (auto hu : a.values) mean += hu;
    mean /= static_cast<double>(a.values.size());
    CHECK(std::fabs(mean + 900.0) < 5.0);
}

TEST_CASE("sparse markings: ~6 points per ring on a 4 mm branch, rings every ~4 mm") {
    PhantomConfig cfg = small_config();
    auto opts = centered_tree(cfg, 1, 4.0);
    opts.length_factor = 8.0;  // 32 mm
    const TreeSpec spec = generate_tree(opts);
    const GroundTruth truth = emit_truth_markings(spec, cfg, MarkingMode::sparse);
    REQUIRE(truth.objects.size() == 1);
    const auto& pts = truth.objects[0].points;
    // circumference 2*pi*4 ~ 25.1 mm -> 6 points per ring
    CHECK(pts.size() % 6 == 0);
    const int rings = static_cast<int>(pts.size()) / 6;
    CHECK(rings >= 6);
    CHECK(rings <= 9);
}

TEST_CASE("dense markings outnumber sparse by at least 10x") {
    PhantomConfig cfg = small_config();
    const TreeSpec spec = generate_tree(centered_tree(cfg, 2, 4.0));
    const auto sparse = emit_truth_markings(spec, cfg, MarkingMode::sparse);
    const auto dense = emit_truth_markings(spec, cfg, MarkingMode::dense);
    std::size_t n_sparse = 0, n_dense = 0;
    for (const auto& o : sparse.objects) n_sparse += o.points.size();
    for (const auto& o : dense.objects) n_dense += o.points.size();
    CHECK(n_dense >= 10 * n_sparse);
}

TEST_CASE("emitted points sit on the rasterized surface up to voxel quantization") {
    PhantomConfig cfg = small_config();
    const TreeSpec spec = generate_tree(centered_tree(cfg, 2, 4.0));
    const PhantomImage img = rasterize(spec, cfg);
    const SurfaceSet surf = extract_surface(threshold_soft_tissue(img.volume));
    // surface voxel centers on oblique branches quantize up to one voxel
    // inside the analytic surface; the aggregate stays within half a voxel
    const double max_spacing = std::max({cfg.spacing.x, cfg.spacing.y, cfg.spacing.z});
    const double half_diagonal = 0.5 * norm(cfg.spacing);
    for (const auto mode : {MarkingMode::sparse, MarkingMode::dense}) {
        const GroundTruth truth = emit_truth_markings(spec, cfg, mode);
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& obj : truth.objects)
            for (const auto& p : obj.points) {
                const double d = surf.nearest_distance(p);
                CHECK(d <= max_spacing);
                sum += d;
                ++n;
            }
        REQUIRE(n > 0);
        CHECK(sum / static_cast<double>(n) <= half_diagonal);
    }
}

TEST_CASE("decoy tubes keep their clearance from the tree") {
    PhantomConfig cfg;
    cfg.dims = {128, 128, 96};
    cfg.spacing = {0.7, 0.7, 1.25};
    TreeSpec spec = generate_tree(centered_tree(cfg, 3, 4.0));
    place_decoy_tubes(spec, 3, 3.0, 30.0, 5.0, cfg);
    REQUIRE(spec.branches.size() == 10);
    int veins = 0;
    for (const auto& b : spec.branches)
        if (b.kind == VesselKind::vein) ++veins;
    CHECK(veins == 3);
    for (const auto& b : spec.branches) {
        if (b.kind != VesselKind::vein) continue;
        TreeSpec arteries;
        for (const auto& a : spec.branches)
            if (a.kind == VesselKind::artery) arteries.branches.push_back(a);
        CHECK(tube_clearance(arteries, b) >= 5.0 - 1e-9);
    }
}

TEST_CASE("airway companion rasterizes lumen, wall and centered offset") {
    PhantomConfig cfg;
    cfg.dims = {96, 96, 64};
    cfg.spacing = {0.7, 0.7, 1.25};
    cfg.airway.enabled = true;
    const TreeSpec spec = generate_tree(centered_tree(cfg, 1, 4.0));
    const PhantomImage img = rasterize(spec, cfg);
    CHECK(count_foreground(img.airway_lumen) > 0);
    const PhantomBranch tube = airway_axis(spec, cfg);
    CHECK(distance(tube.origin, spec.branches[0].origin) == doctest::Approx(cfg.airway.offset));
    // lumen voxels read as air, wall voxels as soft tissue
    bool saw_wall = false;
    const GridGeometry g = cfg.geometry();
    for (int z = 0; z < g.dims[2]; ++z)
        for (int y = 0; y < g.dims[1]; ++y)
            for (int x = 0; x < g.dims[0]; ++x) {
                if (img.airway_lumen.at(x, y, z)) CHECK(img.volume.at(x, y, z) == cfg.airway_lumen_hu);
                const WorldPoint p = g.voxel_to_world(GridIndex{x, y, z});
                const double d = point_segment_distance(p, tube.origin, tube.direction, tube.length);
                if (d > cfg.airway.lumen_radius && d <= cfg.airway.lumen_radius + cfg.airway.wall_thickness) {
                    CHECK(img.volume.at(x, y, z) == cfg.airway_wall_hu);
                    saw_wall = true;
                }
            }
    CHECK(saw_wall);
}

}  // TEST_SUITE
