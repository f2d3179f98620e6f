#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <vector>

#include "confpred/grid.hpp"
#include "confpred/random.hpp"

using namespace confpred;

namespace {

GridRegion random_region(const Grid& g, Rng& rng, double fill = 0.5) {
  GridRegion r;
  r.grid = g;
  r.mask.resize(g.cell_count());
  for (auto& b : r.mask) b = rng.uniform01() < fill ? 1 : 0;
  return r;
}

bool unit_disk(std::span<const double> p) {
  return p[0] * p[0] + p[1] * p[1] <= 1.0;
}

}  // namespace

TEST_CASE("grid construction and indexing") {
  const Grid g = Grid::make({0.0, -1.0}, {2.0, 1.0}, {4, 8});
  CHECK(g.dim() == 2);
  CHECK(g.cell_count() == 32);
  CHECK(g.cell_width(0) == 0.5);
  CHECK(g.cell_width(1) == 0.25);
  CHECK(g.cell_volume() == 0.125);
  CHECK(g.box_volume() == 4.0);

  SECTION("center/flat_index round trip") {
    std::array<double, 2> c{};
    for (std::size_t i = 0; i < g.cell_count(); ++i) {
      g.center(i, c.data());
      REQUIRE(g.contains(c));
      REQUIRE(g.flat_index_of(c) == i);
    }
  }

  SECTION("validation") {
    CHECK_THROWS_AS(Grid::make({0.0}, {0.0}, {4}), std::invalid_argument);
    CHECK_THROWS_AS(Grid::make({0.0}, {1.0}, {0}), std::invalid_argument);
    CHECK_THROWS_AS(Grid::make({0.0, 0.0}, {1.0}, {4}), std::invalid_argument);
    CHECK_THROWS_AS(Grid::make({0.0}, {std::nan("")}, {4}),
                    std::invalid_argument);
  }
}

TEST_CASE("rasterize trivial predicates") {
  const Grid g = Grid::make({0.0, 0.0}, {1.0, 1.0}, {10, 10});
  const auto full = rasterize(g, [](std::span<const double>) { return true; });
  CHECK(full.count_set() == 100);
  CHECK(volume(full) == Catch::Approx(1.0));
  const auto empty =
      rasterize(g, [](std::span<const double>) { return false; });
  CHECK(empty.count_set() == 0);
  CHECK(volume(empty) == 0.0);
}

TEST_CASE("rasterized disk area approximates pi") {
  const Grid g = Grid::make({-2.0, -2.0}, {2.0, 2.0}, {400, 400});
  const auto disk = rasterize(g, unit_disk, 2);
  CHECK(std::fabs(volume(disk) - 3.14159265358979) < 0.01);
}

TEST_CASE("half-space volume") {
  const Grid g = Grid::make({-1.0, -1.0}, {1.0, 1.0}, {200, 200});
  const auto half =
      rasterize(g, [](std::span<const double> p) { return p[0] >= 0.0; });
  CHECK(std::fabs(volume(half) - 2.0) < g.cell_volume() * 200 + 1e-12);
}

TEST_CASE("set arithmetic identities on random masks") {
  Rng rng(99);
  const Grid g = Grid::make({0.0, 0.0}, {3.0, 2.0}, {30, 20});
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = random_region(g, rng, 0.3 + 0.4 * rng.uniform01());
    const auto b = random_region(g, rng, 0.3 + 0.4 * rng.uniform01());
    // mu(a^b) = mu(a) + mu(b) - 2 mu(a&b), exact at the cell-count level
    std::size_t xor_count = 0, and_count = 0;
    for (std::size_t i = 0; i < a.mask.size(); ++i) {
      xor_count += static_cast<std::size_t>(a.mask[i] ^ b.mask[i]);
      and_count += static_cast<std::size_t>(a.mask[i] & b.mask[i]);
    }
    REQUIRE(xor_count == a.count_set() + b.count_set() - 2 * and_count);
    CHECK(symmetric_difference_volume(a, b) ==
          Catch::Approx(volume(a) + volume(b) - 2 * intersection_volume(a, b))
              .margin(1e-12));
  }

  SECTION("trivial cases") {
    const auto a = random_region(g, rng);
    CHECK(symmetric_difference_volume(a, a) == 0.0);
    GridRegion full{g, std::vector<std::uint8_t>(g.cell_count(), 1)};
    GridRegion empty{g, std::vector<std::uint8_t>(g.cell_count(), 0)};
    CHECK(symmetric_difference_volume(full, empty) ==
          Catch::Approx(g.box_volume()));
  }

  SECTION("grid mismatch rejected") {
    const Grid other = Grid::make({0.0, 0.0}, {3.0, 2.0}, {30, 21});
    GridRegion b{other, std::vector<std::uint8_t>(other.cell_count(), 0)};
    const auto a = random_region(g, rng);
    CHECK_THROWS_AS(symmetric_difference_volume(a, b), std::invalid_argument);
    CHECK_THROWS_AS(excess_loss(a, b), std::invalid_argument);
    CHECK_THROWS_AS(subset_of(a, b), std::invalid_argument);
  }
}

TEST_CASE("excess loss") {
  Rng rng(123);
  const Grid g = Grid::make({0.0}, {1.0}, {64});
  const auto a = random_region(g, rng);
  CHECK(excess_loss(a, a) == 0.0);

  SECTION("superset identity: excess equals the symmetric difference") {
    auto superset = a;
    for (std::size_t i = 0; i < superset.mask.size(); i += 3)
      superset.mask[i] = 1;
    REQUIRE(subset_of(a, superset));
    CHECK(excess_loss(superset, a) ==
          Catch::Approx(symmetric_difference_volume(superset, a))
              .margin(1e-12));
    CHECK(excess_loss(superset, a) >= 0.0);
  }

  SECTION("signed for undercovering regions") {
    GridRegion empty{g, std::vector<std::uint8_t>(g.cell_count(), 0)};
    CHECK(excess_loss(empty, a) == -volume(a));
  }

  SECTION("excess is bounded by the symmetric difference") {
    for (int trial = 0; trial < 30; ++trial) {
      const auto c = random_region(g, rng);
      const auto o = random_region(g, rng);
      CHECK(excess_loss(c, o) <= symmetric_difference_volume(c, o) + 1e-12);
    }
  }
}

TEST_CASE("volume is monotone under mask inclusion") {
  Rng rng(7);
  const Grid g = Grid::make({0.0, 0.0}, {1.0, 1.0}, {25, 25});
  for (int trial = 0; trial < 20; ++trial) {
    const auto b = random_region(g, rng, 0.6);
    auto a = b;
    for (auto& bit : a.mask)
      if (bit && rng.uniform01() < 0.4) bit = 0;
    REQUIRE(subset_of(a, b));
    CHECK(volume(a) <= volume(b));
  }
}

TEST_CASE("monte-carlo volume") {
  const std::array<double, 2> lo{-2.0, -2.0}, hi{2.0, 2.0};

  SECTION("always-true gives the box volume with zero error") {
    const auto mc = mc_volume([](std::span<const double>) { return true; },
                              lo, hi, 1000, 42);
    CHECK(mc.estimate == 16.0);
    CHECK(mc.standard_error == 0.0);
  }

  SECTION("unit disk within three standard errors of pi") {
    const auto mc = mc_volume(unit_disk, lo, hi, 1000000, 42);
    CHECK(mc.standard_error > 0.0);
    CHECK(std::fabs(mc.estimate - 3.14159265358979) <=
          3.0 * mc.standard_error);
  }

  SECTION("same seed, same answer") {
    const auto a = mc_volume(unit_disk, lo, hi, 50000, 7);
    const auto b = mc_volume(unit_disk, lo, hi, 50000, 7);
    CHECK(a.estimate == b.estimate);
    CHECK(a.standard_error == b.standard_error);
  }

  SECTION("sample floor enforced") {
    CHECK_THROWS_AS(mc_volume(unit_disk, lo, hi, 99, 1),
                    std::invalid_argument);
  }
}

TEST_CASE("grid refinement changes the disk volume within the rim bound") {
  auto disk_volume = [&](std::size_t res) {
    const Grid g = Grid::make({-2.0, -2.0}, {2.0, 2.0}, {res, res});
    return volume(rasterize(g, unit_disk, 2));
  };
  const double coarse = disk_volume(100);
  const double fine = disk_volume(200);
  // rim area ~ perimeter x cell width
  const double rim = 2.0 * 3.14159265358979 * (4.0 / 100.0);
  CHECK(std::fabs(fine - coarse) < 2.0 * rim);
  CHECK(std::fabs(fine - 3.14159265358979) <
        std::fabs(coarse - 3.14159265358979) + rim);
}

TEST_CASE("region JSON round trip is byte exact") {
  Rng rng(2023);
  const Grid g = Grid::make({-1.5, 0.25}, {2.5, 1.75}, {40, 12});
  const auto region = random_region(g, rng, 0.37);
  const auto j = region_to_json(region);
  const std::string dumped = j.dump();
  const auto parsed = region_from_json(nlohmann::json::parse(dumped));
  REQUIRE(parsed.grid == region.grid);
  REQUIRE(parsed.mask == region.mask);
  CHECK(region_to_json(parsed).dump() == dumped);

  SECTION("mask length mismatch rejected") {
    auto bad = j;
    bad["mask_rle"] = {3};
    CHECK_THROWS_AS(region_from_json(bad), std::invalid_argument);
  }
}

TEST_CASE("touches_boundary") {
  const Grid g = Grid::make({0.0, 0.0}, {1.0, 1.0}, {8, 8});
  GridRegion interior{g, std::vector<std::uint8_t>(64, 0)};
  interior.mask[3 * 8 + 4] = 1;
  CHECK_FALSE(touches_boundary(interior));
  GridRegion edge = interior;
  edge.mask[0 * 8 + 5] = 1;
  CHECK(touches_boundary(edge));
  GridRegion side = interior;
  side.mask[4 * 8 + 7] = 1;
  CHECK(touches_boundary(side));
}
