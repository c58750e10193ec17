#include <doctest.h>

#include <algorithm>
#include <random>

#include "patrack/preprocess.hpp"

using namespace patrack;

namespace {

Volume constant_volume(int n, std::int16_t hu) {
    return Volume(GridGeometry{{n, n, n}, {1, 1, 1}, {0, 0, 0}}, hu);
}

/// Independent per-voxel oracle: gather the 9 clamped in-plane neighbours and
/// sort-and-pick the 5th.
std::int16_t median9_oracle(const Volume& v, int x, int y, int z) {
    std::vector<std::int16_t> w;
    for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
            const int xx = std::clamp(x + dx, 0, v.nx() - 1);
            const int yy = std::clamp(y + dy, 0, v.ny() - 1);
            w.push_back(v.at(xx, yy, z));
        }
    std::sort(w.begin(), w.end());
    return w[4];
}

}  // namespace

TEST_SUITE("preprocess") {

TEST_CASE("median filter leaves a constant volume unchanged") {
    Volume v = constant_volume(6, -900);
    CHECK(median_filter_3x3(v) == v);
}

TEST_CASE("median filter removes an isolated impulse") {
    Volume v = constant_volume(7, -900);
    v.at(3, 3, 3) = 1000;
    const Volume out = median_filter_3x3(v);
    CHECK(out.at(3, 3, 3) == -900);
}

TEST_CASE("median filter equals the sort-and-pick oracle on random volumes") {
    std::mt19937 rng(11);
    Volume v(GridGeometry{{9, 8, 4}, {0.7, 0.7, 1.25}, {0, 0, 0}});
    for (auto& hu : v.values) hu = static_cast<std::int16_t>(static_cast<int>(rng()) % 2001 - 1000);
    const Volume out = median_filter_3x3(v);
    for (int z = 0; z < v.nz(); ++z)
        for (int y = 0; y < v.ny(); ++y)
            for (int x = 0; x < v.nx(); ++x) CHECK(out.at(x, y, z) == median9_oracle(v, x, y, z));
}

TEST_CASE("threshold separates soft tissue from parenchyma") {
    Volume v = constant_volume(2, 0);
    v.at(0, 0, 0) = -350;
    v.at(1, 0, 0) = -450;
    v.at(0, 1, 0) = -400;  // boundary: strictly greater than
    const Mask m = threshold_soft_tissue(v);
    CHECK(m.at(0, 0, 0) == 1);
    CHECK(m.at(1, 0, 0) == 0);
    CHECK(m.at(0, 1, 0) == 0);
}

TEST_CASE("thresholding an all-air volume yields an empty mask") {
    const Mask m = threshold_soft_tissue(constant_volume(4, -1000));
    CHECK(count_foreground(m) == 0);
}

TEST_CASE("dilation with radius zero is the identity") {
    Mask m(GridGeometry{{8, 8, 8}, {1, 1, 1}, {0, 0, 0}});
    m.at(3, 4, 5) = 1;
    m.at(0, 0, 0) = 1;
    CHECK(dilate_mask(m, 0.0) == m);
}

TEST_CASE("isotropic 2 mm dilation of a single voxel is the 33-voxel ball") {
    // oracle: integer offsets with dx^2+dy^2+dz^2 <= 4
    int expected = 0;
    for (int dz = -2; dz <= 2; ++dz)
        for (int dy = -2; dy <= 2; ++dy)
            for (int dx = -2; dx <= 2; ++dx)
                if (dx * dx + dy * dy + dz * dz <= 4) ++expected;
    CHECK(expected == 33);

    Mask m(GridGeometry{{9, 9, 9}, {1, 1, 1}, {0, 0, 0}});
    m.at(4, 4, 4) = 1;
    const Mask out = dilate_mask(m, 2.0);
    CHECK(count_foreground(out) == 33);
    for (int z = 0; z < 9; ++z)
        for (int y = 0; y < 9; ++y)
            for (int x = 0; x < 9; ++x) {
                const int d2 = (x - 4) * (x - 4) + (y - 4) * (y - 4) + (z - 4) * (z - 4);
                CHECK(static_cast<bool>(out.at(x, y, z)) == (d2 <= 4));
            }
}

TEST_CASE("dilation respects anisotropic spacing") {
    Mask m(GridGeometry{{9, 9, 9}, {1, 1, 2}, {0, 0, 0}});
    m.at(4, 4, 4) = 1;
    const Mask out = dilate_mask(m, 2.0);
    CHECK(out.at(4, 4, 5) == 1);  // 2 mm away in z: exactly on the ball
    CHECK(out.at(4, 4, 6) == 0);  // 4 mm away
    CHECK(out.at(6, 4, 4) == 1);  // 2 mm away in x
    CHECK(out.at(7, 4, 4) == 0);
}

TEST_CASE("dilation is monotone and extensive") {
    std::mt19937 rng(5);
    Mask small(GridGeometry{{12, 12, 12}, {0.8, 0.8, 1.5}, {0, 0, 0}});
    for (auto& b : small.values) b = (rng() % 10) == 0;
    Mask big = small;
    for (auto& b : big.values) b = b || (rng() % 10) == 0;
    const Mask ds = dilate_mask(small, 2.0);
    const Mask db = dilate_mask(big, 2.0);
    for (std::size_t i = 0; i < ds.values.size(); ++i) {
        if (small.values[i]) CHECK(ds.values[i] == 1);  // extensive
        if (ds.values[i]) CHECK(db.values[i] == 1);     // monotone
    }
}

TEST_CASE("airway wall removal subtracts the dilated lumen and never adds voxels") {
    // tissue tube r=5 around a lumen tube r=3, spacing 1 mm
    GridGeometry g{{24, 24, 10}, {1, 1, 1}, {0, 0, 0}};
    Mask tissue(g), lumen(g);
    const double cx = 11.5, cy = 11.5;
    for (int z = 0; z < g.dims[2]; ++z)
        for (int y = 0; y < g.dims[1]; ++y)
            for (int x = 0; x < g.dims[0]; ++x) {
                const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                if (d2 <= 25.0) tissue.at(x, y, z) = 1;
                if (d2 <= 9.0) lumen.at(x, y, z) = 1;
            }
    Mask walls_removed = remove_airway_walls(tissue, lumen, 2.0);
    const Mask grown = dilate_mask(lumen, 2.0);
    for (std::size_t i = 0; i < tissue.values.size(); ++i) {
        CHECK((walls_removed.values[i] && !tissue.values[i]) == false);  // subset of tissue
        if (walls_removed.values[i]) CHECK(grown.values[i] == 0);
    }
    // every tissue voxel > 2 mm from any lumen voxel is retained
    for (int z = 0; z < g.dims[2]; ++z)
        for (int y = 0; y < g.dims[1]; ++y)
            for (int x = 0; x < g.dims[0]; ++x) {
                if (!tissue.at(x, y, z)) continue;
                double min_d2 = 1e30;
                for (int zz = 0; zz < g.dims[2]; ++zz)
                    for (int yy = 0; yy < g.dims[1]; ++yy)
                        for (int xx = 0; xx < g.dims[0]; ++xx)
                            if (lumen.at(xx, yy, zz)) {
                                const double d2 = (x - xx) * (x - xx) + (y - yy) * (y - yy) +
                                                  (z - zz) * (z - zz) * 1.0;
                                min_d2 = std::min(min_d2, d2);
                            }
                if (min_d2 > 4.0 + 1e-9) CHECK(walls_removed.at(x, y, z) == 1);
            }
}

TEST_CASE("empty airway leaves tissue unchanged") {
    GridGeometry g{{6, 6, 6}, {1, 1, 1}, {0, 0, 0}};
    Mask tissue(g), lumen(g);
    tissue.at(2, 2, 2) = 1;
    tissue.at(3, 3, 3) = 1;
    CHECK(remove_airway_walls(tissue, lumen) == tissue);
}

TEST_CASE("geometry mismatch is rejected") {
    Mask a(GridGeometry{{4, 4, 4}, {1, 1, 1}, {0, 0, 0}});
    Mask b(GridGeometry{{4, 4, 4}, {1, 1, 2}, {0, 0, 0}});
    CHECK_THROWS_AS(remove_airway_walls(a, b), std::invalid_argument);
}

}  // TEST_SUITE
