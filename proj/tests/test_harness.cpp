#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <vector>

#include "confpred/harness.hpp"

using namespace confpred;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig cfg(frozen_l_mixture());
  cfg.n = 60;
  cfg.alpha = 0.1;
  cfg.repetitions = 20;
  cfg.bandwidth.kind = BandwidthPolicyKind::fixed;
  cfg.bandwidth.fixed_h = 0.8;
  cfg.volume.resolution = 60;
  cfg.volume.lower = {-7.0, -7.0};
  cfg.volume.upper = {10.0, 10.0};
  cfg.oracle_mc_samples = 40000;
  cfg.seed = 31415;
  cfg.threads = 2;
  return cfg;
}

}  // namespace

TEST_CASE("single repetition matches a hand-stepped trace") {
  ExperimentConfig cfg = small_config();
  cfg.repetitions = 1;
  const auto report = run_coverage_experiment(cfg);
  REQUIRE(report.per_rep.size() == 1);

  // replay the repetition with the documented seed scheme
  const std::uint64_t rep_seed =
      derive_seed(cfg.seed, seed_stream::repetition, 0);
  CHECK(report.per_rep[0].seed == rep_seed);
  Rng rng(rep_seed);
  const Dataset data = cfg.truth.sample_dataset(rng, cfg.n);
  std::array<double, 2> fresh{};
  cfg.truth.sample(rng, fresh.data());

  const auto kernel = product_kernel(cfg.kernel, 2);
  const ConformalModel model(
      DensityEstimate(data, kernel, cfg.bandwidth.fixed_h), cfg.alpha);
  const Grid grid = Grid::make(cfg.volume.lower, cfg.volume.upper,
                               {cfg.volume.resolution, cfg.volume.resolution});
  const auto masks = rasterize_sandwich(model, grid, 1);

  CHECK(report.per_rep[0].bandwidth == cfg.bandwidth.fixed_h);
  CHECK(report.per_rep[0].coverage[0] == (model.member(fresh) ? 1.0 : 0.0));
  CHECK(report.per_rep[0].volume[0] == volume(masks.conformal));
  CHECK(report.per_rep[0].volume[1] == volume(masks.inner));
  CHECK(report.per_rep[0].volume[2] == volume(masks.outer));

  auto [oracle, oracle_mask] = oracle_region(
      cfg.truth, cfg.alpha, grid, cfg.oracle_mc_samples,
      derive_seed(cfg.seed, seed_stream::oracle_cutoff, 0), 1);
  CHECK(report.oracle_cutoff == oracle.cutoff);
  CHECK(report.oracle_volume == volume(oracle_mask));
  CHECK(report.per_rep[0].sym_diff[0] ==
        loss_against_oracle(masks.conformal, oracle_mask).sym_diff);
  CHECK(report.per_rep[0].excess[0] ==
        loss_against_oracle(masks.conformal, oracle_mask).excess);
}

TEST_CASE("report is byte-identical across worker counts") {
  ExperimentConfig cfg = small_config();
  cfg.threads = 1;
  const auto r1 = run_coverage_experiment(cfg);
  cfg.threads = 4;
  const auto r2 = run_coverage_experiment(cfg);
  // config echo includes threads; compare everything else
  auto j1 = report_to_json(r1);
  auto j2 = report_to_json(r2);
  j1["config"].erase("threads");
  j2["config"].erase("threads");
  CHECK(j1.dump() == j2.dump());
  CHECK(report_to_csv(r1) == report_to_csv(r2));
  CHECK(per_rep_csv(r1, cfg.estimators) == per_rep_csv(r2, cfg.estimators));
}

TEST_CASE("per-repetition sandwich ordering of coverage and volume") {
  const auto report = run_coverage_experiment(small_config());
  for (const auto& rep : report.per_rep) {
    // estimators: conformal, inner, outer
    CHECK(rep.coverage[1] <= rep.coverage[0]);
    CHECK(rep.coverage[0] <= rep.coverage[2]);
    CHECK(rep.volume[1] <= rep.volume[0]);
    CHECK(rep.volume[0] <= rep.volume[2]);
  }
}

TEST_CASE("summary standard errors match the per-rep log") {
  const auto report = run_coverage_experiment(small_config());
  const std::size_t R = report.per_rep.size();
  for (std::size_t e = 0; e < 3; ++e) {
    double mean = 0.0;
    for (const auto& rep : report.per_rep) mean += rep.coverage[e];
    mean /= static_cast<double>(R);
    double ss = 0.0;
    for (const auto& rep : report.per_rep)
      ss += (rep.coverage[e] - mean) * (rep.coverage[e] - mean);
    const double se =
        std::sqrt(ss / static_cast<double>(R - 1)) /
        std::sqrt(static_cast<double>(R));
    CHECK(report.results[e].coverage.mean == Catch::Approx(mean).margin(0.0));
    CHECK(report.results[e].coverage.se == Catch::Approx(se).margin(1e-15));
  }
}

TEST_CASE("split-tuned policy uses the documented tuner stream") {
  ExperimentConfig cfg = small_config();
  cfg.n = 80;
  cfg.repetitions = 3;
  cfg.bandwidth.kind = BandwidthPolicyKind::split;
  cfg.bandwidth.grid_size = 6;
  cfg.bandwidth.tune_resolution = 40;
  const auto report = run_coverage_experiment(cfg);
  REQUIRE(report.per_rep.size() == 3);

  // replay repetition 1 by hand
  const std::uint64_t rep_seed =
      derive_seed(cfg.seed, seed_stream::repetition, 1);
  Rng rng(rep_seed);
  const Dataset data = cfg.truth.sample_dataset(rng, cfg.n);
  const auto kernel = product_kernel(cfg.kernel, 2);
  const auto bwgrid = default_bandwidth_grid(cfg.n, 2, 1.0, 6, 1.0, 8.0);
  const Grid tgrid = Grid::make(cfg.volume.lower, cfg.volume.upper, {40, 40});
  auto build = [&](const Dataset& d, double h, double level) {
    return ConformalModel(DensityEstimate(d, kernel, h), level);
  };
  auto vol_of = [&](const ConformalModel& m) {
    return volume(rasterize_sandwich(m, tgrid, 1).conformal);
  };
  const auto tuned =
      tune_split(data, bwgrid, cfg.alpha, build, vol_of,
                 derive_seed(cfg.seed, seed_stream::split_tuner, 1));
  CHECK(report.per_rep[1].bandwidth == tuned.chosen_h);
}

TEST_CASE("split policy works in coverage-only runs") {
  ExperimentConfig cfg = small_config();
  cfg.n = 80;
  cfg.repetitions = 5;
  cfg.bandwidth.kind = BandwidthPolicyKind::split;
  cfg.bandwidth.grid_size = 5;
  cfg.bandwidth.tune_resolution = 40;
  cfg.volume.enabled = false;
  cfg.measure_losses = false;
  const auto report = run_coverage_experiment(cfg);
  REQUIRE(report.per_rep.size() == 5);
  for (const auto& rep : report.per_rep) CHECK(rep.bandwidth > 0.0);
  CHECK(report.results[0].coverage.mean >= 0.0);
}

TEST_CASE("d >= 4 uses monte-carlo volumes") {
  std::vector<double> cov(16, 0.0);
  for (int j = 0; j < 4; ++j) cov[j * 4 + j] = 1.0;
  ExperimentConfig cfg(
      MixtureDensity({MixtureComponent{1.0, {0.0, 0.0, 0.0, 0.0}, cov}}, 4));
  cfg.n = 40;
  cfg.alpha = 0.1;
  cfg.repetitions = 2;
  cfg.bandwidth.kind = BandwidthPolicyKind::fixed;
  cfg.bandwidth.fixed_h = 1.2;
  cfg.volume.mc_samples = 2000;
  cfg.measure_losses = false;
  cfg.seed = 12;
  cfg.threads = 2;
  const auto report = run_coverage_experiment(cfg);
  for (const auto& rep : report.per_rep) {
    CHECK(rep.volume[0] > 0.0);
    CHECK(std::isfinite(rep.volume[0]));
    CHECK(rep.volume[1] <= rep.volume[0]);
    CHECK(rep.volume[0] <= rep.volume[2]);
  }

  SECTION("losses and region-mass need grid masks") {
    cfg.measure_losses = true;
    CHECK_THROWS_AS(run_coverage_experiment(cfg), std::invalid_argument);
    cfg.measure_losses = false;
    cfg.coverage_mode = CoverageMode::region_mass;
    CHECK_THROWS_AS(run_coverage_experiment(cfg), std::invalid_argument);
  }
}

TEST_CASE("region-mass coverage mode") {
  ExperimentConfig cfg = small_config();
  cfg.repetitions = 10;
  cfg.coverage_mode = CoverageMode::region_mass;
  cfg.region_mass_samples = 4000;
  cfg.measure_losses = false;
  const auto report = run_coverage_experiment(cfg);
  for (const auto& rep : report.per_rep) {
    CHECK(rep.coverage[0] >= 0.0);
    CHECK(rep.coverage[0] <= 1.0);
    // mass estimates are not 0/1 indicators
    CHECK(rep.coverage[0] != 0.0);
  }
  CHECK(report.results[0].coverage.mean > 0.7);

  SECTION("region_mass requires masks") {
    cfg.volume.enabled = false;
    CHECK_THROWS_AS(run_coverage_experiment(cfg), std::invalid_argument);
  }
}

TEST_CASE("rate experiment with identical n gives a ratio near one") {
  ExperimentConfig cfg = small_config();
  cfg.repetitions = 40;
  const auto rate = run_rate_experiment(cfg, {80, 80});
  REQUIRE(rate.rows.size() == 2);
  const double ratio = rate.excess_ratio(Estimator::conformal);
  CHECK(ratio > 0.55);
  CHECK(ratio < 1.8);
  CHECK_THROWS_AS(run_rate_experiment(cfg, {80}), std::invalid_argument);
}

TEST_CASE("stress suite smoke run") {
  StressConfig sc;
  sc.n = 100;
  sc.repetitions = 150;
  sc.seed = 7;
  sc.threads = 2;
  sc.cases = {{"near-discrete", 1.0 / 20.0}, {"heavy-tailed", 20.0}};
  const auto results = run_validity_stress(sc);
  REQUIRE(results.size() == 2);
  for (const auto& r : results) {
    CHECK(r.conformal_coverage >= r.threshold);
    CHECK(r.outer_coverage >= r.conformal_coverage - 1e-12);
    CHECK(r.pass);
  }
}

TEST_CASE("config JSON round trip and validation") {
  ExperimentConfig cfg = small_config();
  cfg.bandwidth.kind = BandwidthPolicyKind::split;
  const auto j = experiment_config_to_json(cfg);
  const auto back = experiment_config_from_json(j);
  CHECK(back.n == cfg.n);
  CHECK(back.alpha == cfg.alpha);
  CHECK(back.repetitions == cfg.repetitions);
  CHECK(back.bandwidth.kind == BandwidthPolicyKind::split);
  CHECK(back.volume.lower == cfg.volume.lower);
  CHECK(back.seed == cfg.seed);
  CHECK(experiment_config_to_json(back).dump() == j.dump());

  SECTION("unknown keys rejected with their path") {
    auto bad = j;
    bad["repetitionz"] = 5;
    CHECK_THROWS_WITH(experiment_config_from_json(bad),
                      Catch::Matchers::ContainsSubstring("repetitionz"));
    auto bad2 = j;
    bad2["bandwidth"]["span"] = 2.0;
    CHECK_THROWS_WITH(experiment_config_from_json(bad2),
                      Catch::Matchers::ContainsSubstring("bandwidth.span"));
  }

  SECTION("presets resolve") {
    const auto cfg2 = experiment_config_from_json(
        {{"truth", "frozen-l"}, {"n", 50}, {"alpha", 0.2}});
    CHECK(cfg2.truth.dim() == 2);
    CHECK(cfg2.alpha == 0.2);
    CHECK_THROWS_AS(experiment_config_from_json({{"truth", "nonsense"}}),
                    std::invalid_argument);
  }
}

TEST_CASE("estimate regions clipped by a small box are counted") {
  ExperimentConfig cfg = small_config();
  cfg.repetitions = 5;
  cfg.measure_losses = false;  // oracle would reject this box
  cfg.volume.lower = {-1.0, -1.0};
  cfg.volume.upper = {3.0, 3.0};
  const auto report = run_coverage_experiment(cfg);
  CHECK(report.clipped_repetitions == 5);
}

TEST_CASE("oracle abort propagates when the box is too small for it") {
  ExperimentConfig cfg = small_config();
  cfg.repetitions = 2;
  cfg.volume.lower = {-1.0, -1.0};
  cfg.volume.upper = {3.0, 3.0};
  CHECK_THROWS_AS(run_coverage_experiment(cfg), std::domain_error);
}
