#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "confpred/bandwidth.hpp"
#include "confpred/conformal.hpp"
#include "confpred/random.hpp"

using namespace confpred;

namespace {

Dataset bimodal_1d(Rng& rng, std::size_t n) {
  std::vector<double> flat(n);
  for (std::size_t i = 0; i < n; ++i)
    flat[i] = (i % 2 == 0 ? -2.0 : 2.0) + 0.5 * rng.normal();
  return Dataset::from_flat(std::move(flat), n, 1);
}

}  // namespace

TEST_CASE("theory-default bandwidth arithmetic") {
  CHECK(a2_bandwidth(200, 1) ==
        Catch::Approx(std::pow(std::log(200.0) / 200.0, 1.0 / 3.0))
            .epsilon(1e-15));
  CHECK(a2_bandwidth(200, 1) == Catch::Approx(0.2981).margin(5e-4));
  CHECK(a2_bandwidth(1000, 2) == Catch::Approx(0.2883).margin(5e-4));
  CHECK(a2_bandwidth(100, 2, 2.0) ==
        Catch::Approx(std::pow(std::log(100.0) / 100.0, 1.0 / 6.0))
            .epsilon(1e-15));
  CHECK(a2_bandwidth(100, 1, 1.0, 2.0) ==
        Catch::Approx(2.0 * a2_bandwidth(100, 1)).epsilon(1e-15));
  CHECK_THROWS_AS(a2_bandwidth(1, 1), std::invalid_argument);
}

TEST_CASE("default bandwidth grid") {
  const auto grid = default_bandwidth_grid(200, 1, 1.0, 20, 1.0, 8.0);
  REQUIRE(grid.candidates.size() == 20);
  const double h0 = a2_bandwidth(200, 1);
  CHECK(grid.candidates.front() == Catch::Approx(h0 / 8.0).epsilon(1e-12));
  CHECK(grid.candidates.back() == Catch::Approx(h0 * 8.0).epsilon(1e-12));
  for (std::size_t i = 1; i < grid.candidates.size(); ++i) {
    CHECK(grid.candidates[i] > grid.candidates[i - 1]);
    CHECK(grid.candidates[i] > 0.0);
  }
  // geometric: constant ratio
  const double r0 = grid.candidates[1] / grid.candidates[0];
  for (std::size_t i = 2; i < grid.candidates.size(); ++i)
    CHECK(grid.candidates[i] / grid.candidates[i - 1] ==
          Catch::Approx(r0).epsilon(1e-9));

  SECTION("single-point grid is the theory default") {
    const auto single = default_bandwidth_grid(200, 2, 1.0, 1);
    REQUIRE(single.candidates.size() == 1);
    CHECK(single.candidates[0] == a2_bandwidth(200, 2));
  }
}

TEST_CASE("volume curve") {
  Rng rng(42);
  const auto data = bimodal_1d(rng, 20);
  const auto kernel = product_kernel(KernelFamily::epanechnikov, 1);
  auto build = [&](const Dataset& d, double h, double level) {
    return ConformalModel(DensityEstimate(d, kernel, h), level);
  };
  const auto bwgrid = default_bandwidth_grid(data.n, 1, 1.0, 12, 1.0, 12.0);
  // shared evaluation grid across candidates
  std::vector<double> lo, hi;
  data.bounds(lo, hi);
  const double pad = bwgrid.candidates.back();
  const Grid vgrid = Grid::make({lo[0] - pad - 0.1}, {hi[0] + pad + 0.1},
                                {4000});
  auto vol_of = [&](const ConformalModel& m) {
    return volume(rasterize_sandwich(m, vgrid, 1).conformal);
  };

  const auto curve =
      volume_vs_bandwidth(data, bwgrid, 0.1, build, vol_of);
  REQUIRE(curve.size() == bwgrid.candidates.size());
  for (std::size_t i = 0; i < curve.size(); ++i)
    CHECK(curve[i].first == bwgrid.candidates[i]);

  SECTION("undersmoothing and oversmoothing both inflate the region") {
    double best = curve[0].second;
    for (const auto& [h, v] : curve) best = std::min(best, v);
    CHECK(curve.front().second > 1.3 * best);
    CHECK(curve.back().second > 1.1 * best);
    // the minimum is interior
    std::size_t argmin = 0;
    for (std::size_t i = 1; i < curve.size(); ++i)
      if (curve[i].second < curve[argmin].second) argmin = i;
    CHECK(argmin > 0);
    CHECK(argmin + 1 < curve.size());
  }

  SECTION("curve entries equal one-off recomputation") {
    for (const auto& [h, v] : curve) {
      const auto model = build(data, h, 0.1);
      CHECK(vol_of(model) == v);
    }
  }

  SECTION("single-candidate grid gives a single point") {
    const BandwidthGrid one{{0.5}};
    const auto c1 = volume_vs_bandwidth(data, one, 0.1, build, vol_of);
    REQUIRE(c1.size() == 1);
  }
}

TEST_CASE("bonferroni tuner") {
  Rng rng(7);
  const auto data = bimodal_1d(rng, 60);
  const auto kernel = product_kernel(KernelFamily::epanechnikov, 1);
  auto build = [&](const Dataset& d, double h, double level) {
    return ConformalModel(DensityEstimate(d, kernel, h), level);
  };
  const Grid vgrid = Grid::make({-8.0}, {8.0}, {2000});
  auto vol_of = [&](const ConformalModel& m) {
    return volume(rasterize_sandwich(m, vgrid, 1).conformal);
  };

  SECTION("candidates are built at level alpha/m and the min volume wins") {
    const auto bwgrid = default_bandwidth_grid(data.n, 1, 1.0, 5, 1.0, 6.0);
    const auto tuned = tune_bonferroni(data, bwgrid, 0.25, build, vol_of);
    REQUIRE(tuned.curve.size() == 5);
    // every candidate is evaluated at miscoverage alpha/m
    CHECK(tuned.region.alpha() == 0.25 / 5.0);
    double best = tuned.curve[0].second;
    for (const auto& [h, v] : tuned.curve) best = std::min(best, v);
    CHECK(vol_of(tuned.region) == best);
    bool chosen_matches = false;
    for (const auto& [h, v] : tuned.curve)
      if (h == tuned.chosen_h && v == best) chosen_matches = true;
    CHECK(chosen_matches);
  }

  SECTION("m = 1 reduces to the plain region at level alpha") {
    const BandwidthGrid one{{0.7}};
    const auto tuned = tune_bonferroni(data, one, 0.1, build, vol_of);
    CHECK(tuned.chosen_h == 0.7);
    CHECK(tuned.region.alpha() == 0.1);
    const auto direct = build(data, 0.7, 0.1);
    CHECK(vol_of(tuned.region) == vol_of(direct));
  }

  SECTION("ties break toward the smaller bandwidth") {
    const BandwidthGrid pair{{0.5, 0.8}};
    auto constant_vol = [](const ConformalModel&) { return 1.0; };
    const auto tuned = tune_bonferroni(data, pair, 0.1, build, constant_vol);
    CHECK(tuned.chosen_h == 0.5);
  }
}

TEST_CASE("split tuner") {
  Rng rng(1234);
  const auto data = bimodal_1d(rng, 61);  // odd n
  const auto kernel = product_kernel(KernelFamily::epanechnikov, 1);
  auto build = [&](const Dataset& d, double h, double level) {
    return ConformalModel(DensityEstimate(d, kernel, h), level);
  };
  const Grid vgrid = Grid::make({-8.0}, {8.0}, {2000});
  auto vol_of = [&](const ConformalModel& m) {
    return volume(rasterize_sandwich(m, vgrid, 1).conformal);
  };
  const auto bwgrid = default_bandwidth_grid(data.n, 1, 1.0, 8, 1.0, 6.0);

  SECTION("deterministic split; odd n gives the first half the extra point") {
    const auto [a1, b1] = split_indices(61, 99);
    const auto [a2, b2] = split_indices(61, 99);
    CHECK(a1 == a2);
    CHECK(b1 == b2);
    CHECK(a1.size() == 31);
    CHECK(b1.size() == 30);
    const auto [a3, b3] = split_indices(61, 100);
    CHECK(a1 != a3);
    // a partition of 0..60
    std::vector<bool> seen(61, false);
    for (auto i : a1) seen[i] = true;
    for (auto i : b1) seen[i] = true;
    for (bool s : seen) CHECK(s);
  }

  SECTION("same seed, same choice and same final region") {
    const auto t1 = tune_split(data, bwgrid, 0.1, build, vol_of, 5);
    const auto t2 = tune_split(data, bwgrid, 0.1, build, vol_of, 5);
    CHECK(t1.chosen_h == t2.chosen_h);
    CHECK(t1.curve == t2.curve);
    CHECK(vol_of(t1.region) == vol_of(t2.region));
    CHECK(t1.region.estimate().n() == 30);  // built on the second half
    CHECK(t1.region.alpha() == 0.1);
  }

  SECTION("single-candidate grid: final region is the 1-alpha region on Y2") {
    const BandwidthGrid one{{0.8}};
    const auto tuned = tune_split(data, one, 0.1, build, vol_of, 5);
    CHECK(tuned.chosen_h == 0.8);
    const auto [i1, i2] = split_indices(61, 5);
    const auto direct = build(data.subset(i2), 0.8, 0.1);
    CHECK(vol_of(tuned.region) == vol_of(direct));
  }

  SECTION("needs at least four points") {
    const auto tiny = bimodal_1d(rng, 3);
    CHECK_THROWS_AS(tune_split(tiny, bwgrid, 0.1, build, vol_of, 1),
                    std::invalid_argument);
  }

  SECTION("the holdout half is never evaluated before the choice is fixed") {
    struct Call {
      std::size_t n;
      double first_point;
      double h;
    };
    std::vector<Call> calls;
    auto instrumented = [&](const Dataset& d, double h, double level) {
      calls.push_back({d.n, d.point(0)[0], h});
      return ConformalModel(DensityEstimate(d, kernel, h), level);
    };
    const auto tuned =
        tune_split(data, bwgrid, 0.1, instrumented, vol_of, 77);
    REQUIRE(calls.size() == bwgrid.candidates.size() + 1);
    // all but the last call see the same (selection) dataset
    for (std::size_t i = 0; i + 1 < calls.size(); ++i) {
      CHECK(calls[i].n == 31);
      CHECK(calls[i].first_point == calls[0].first_point);
      CHECK(calls[i].h == bwgrid.candidates[i]);
    }
    CHECK(calls.back().n == 30);
    CHECK(calls.back().h == tuned.chosen_h);
  }
}
