#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "confpred/bandwidth.hpp"
#include "confpred/conformal.hpp"
#include "confpred/mixture.hpp"
#include "confpred/parallel.hpp"
#include "confpred/random.hpp"

namespace confpred {

// ---------------------------------------------------------------------------
// Experiment fixtures
// ---------------------------------------------------------------------------

//! The repository's canonical 2-d benchmark: two anisotropic bars meeting
//! at a right angle, so the 0.9-level set is L-shaped (non-convex). All
//! table-style reference numbers in this repo are measured against this
//! mixture.
inline MixtureDensity frozen_l_mixture() {
  MixtureComponent bar_x{0.5, {2.0, 0.0}, {3.9, 0.62, 0.62, 0.46}};
  MixtureComponent bar_y{0.5, {0.0, 2.0}, {0.46, 0.62, 0.62, 3.9}};
  return MixtureDensity({bar_x, bar_y}, 2);
}

//! 2-d mixture with a small huge-variance component.
inline MixtureDensity heavy_tailed_truth() {
  MixtureComponent core{0.95, {0.0, 0.0}, {1.0, 0.0, 0.0, 1.0}};
  MixtureComponent tail{0.05, {0.0, 0.0}, {400.0, 0.0, 0.0, 400.0}};
  return MixtureDensity({core, tail}, 2);
}

//! 1-d two-atom distribution: tiny-variance components at -1 and +1.
inline MixtureDensity near_discrete_truth() {
  MixtureComponent a{0.5, {-1.0}, {1e-6}};
  MixtureComponent b{0.5, {1.0}, {1e-6}};
  return MixtureDensity({a, b}, 1);
}

//! Skewed 1-d mixture.
inline MixtureDensity skewed_truth() {
  MixtureComponent a{0.6, {0.0}, {0.25}};
  MixtureComponent b{0.3, {1.5}, {1.0}};
  MixtureComponent c{0.1, {4.0}, {4.0}};
  return MixtureDensity({a, b, c}, 1);
}

inline MixtureDensity mixture_preset(const std::string& name) {
  if (name == "frozen-l") return frozen_l_mixture();
  if (name == "heavy-tailed") return heavy_tailed_truth();
  if (name == "near-discrete") return near_discrete_truth();
  if (name == "skewed") return skewed_truth();
  throw std::invalid_argument("unknown mixture preset: " + name);
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class Estimator { conformal, sandwich_inner, sandwich_outer };

inline std::string to_string(Estimator e) {
  switch (e) {
    case Estimator::conformal: return "conformal";
    case Estimator::sandwich_inner: return "sandwich_inner";
    case Estimator::sandwich_outer: return "sandwich_outer";
  }
  return "conformal";
}

inline Estimator estimator_from_string(const std::string& s) {
  if (s == "conformal") return Estimator::conformal;
  if (s == "sandwich_inner") return Estimator::sandwich_inner;
  if (s == "sandwich_outer") return Estimator::sandwich_outer;
  throw std::invalid_argument("unknown estimator: " + s);
}

enum class BandwidthPolicyKind { fixed, a2, split };

struct BandwidthPolicy {
  BandwidthPolicyKind kind = BandwidthPolicyKind::a2;
  double fixed_h = 0.0;    // kind == fixed
  double beta = 1.0;       // A2 exponent default
  double scale = 1.0;      // multiplier on the A2 default
  std::size_t grid_size = 20;  // split tuning candidates
  double grid_span = 8.0;
  std::size_t tune_resolution = 64;  // cells/dim for candidate volumes
};

struct VolumeSettings {
  bool enabled = true;
  std::size_t resolution = 200;      // cells per dimension (d <= 3)
  std::vector<double> lower, upper;  // empty -> derived from the truth
  std::size_t mc_samples = 200000;   // used when d >= 4
};

enum class CoverageMode { fresh_point, region_mass };

struct ExperimentConfig {
  explicit ExperimentConfig(MixtureDensity truth_) : truth(std::move(truth_)) {}

  MixtureDensity truth;
  std::size_t n = 200;
  double alpha = 0.1;
  std::size_t repetitions = 1000;
  std::vector<Estimator> estimators = {Estimator::conformal,
                                       Estimator::sandwich_inner,
                                       Estimator::sandwich_outer};
  KernelFamily kernel = KernelFamily::epanechnikov;
  BandwidthPolicy bandwidth;
  VolumeSettings volume;
  bool measure_losses = true;
  std::size_t oracle_mc_samples = 1000000;
  CoverageMode coverage_mode = CoverageMode::fresh_point;
  std::size_t region_mass_samples = 10000;
  std::uint64_t seed = 1;
  int threads = 0;  // 0 -> hardware
};

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct Moments {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double se = std::numeric_limits<double>::quiet_NaN();  // sample SD / sqrt(R)
};

inline Moments moments_of(const std::vector<double>& xs) {
  Moments m;
  if (xs.empty()) return m;
  double sum = 0.0;
  for (double x : xs) sum += x;
  m.mean = sum / static_cast<double>(xs.size());
  if (xs.size() < 2) {
    m.se = 0.0;
    return m;
  }
  double ss = 0.0;
  for (double x : xs) ss += (x - m.mean) * (x - m.mean);
  const double sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  m.se = sd / std::sqrt(static_cast<double>(xs.size()));
  return m;
}

struct EstimatorSummary {
  Estimator estimator = Estimator::conformal;
  Moments coverage, volume, sym_diff, excess;
};

//! One repetition's raw measurements, indexed parallel to
//! config.estimators. Loss entries are NaN when losses are off.
struct RepetitionLog {
  std::uint64_t seed = 0;
  double bandwidth = 0.0;
  std::vector<double> coverage, volume, sym_diff, excess;
};

struct ExperimentReport {
  nlohmann::json config_echo;
  std::vector<EstimatorSummary> results;
  double oracle_cutoff = std::numeric_limits<double>::quiet_NaN();
  double oracle_volume = std::numeric_limits<double>::quiet_NaN();
  std::size_t clipped_repetitions = 0;  // estimate mask touched the box edge
  std::vector<RepetitionLog> per_rep;
  double wall_seconds = 0.0;  // informational; not part of the canonical JSON
};

// ---------------------------------------------------------------------------
// Config serialization (strict: unknown keys are rejected with their path)
// ---------------------------------------------------------------------------

namespace detail {

inline void require_keys(const nlohmann::json& j,
                         std::initializer_list<const char*> allowed,
                         const std::string& path) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    if (!ok)
      throw std::invalid_argument("config: unknown key '" + path + key + "'");
  }
}

}  // namespace detail

inline MixtureDensity truth_from_json(const nlohmann::json& j,
                                      const std::string& path) {
  if (j.is_string()) return mixture_preset(j.get<std::string>());
  if (j.contains("preset")) {
    detail::require_keys(j, {"preset"}, path);
    return mixture_preset(j.at("preset").get<std::string>());
  }
  detail::require_keys(j, {"dim", "components"}, path);
  return mixture_from_json(j);
}

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  detail::require_keys(
      j, {"truth", "n", "alpha", "repetitions", "estimators", "kernel",
          "bandwidth", "volume", "measure_losses", "oracle_mc_samples",
          "coverage_mode", "region_mass_samples", "seed", "threads"},
      "");
  ExperimentConfig cfg(truth_from_json(j.at("truth"), "truth."));
  if (j.contains("n")) cfg.n = j.at("n").get<std::size_t>();
  if (j.contains("alpha")) cfg.alpha = j.at("alpha").get<double>();
  if (j.contains("repetitions"))
    cfg.repetitions = j.at("repetitions").get<std::size_t>();
  if (j.contains("estimators")) {
    cfg.estimators.clear();
    for (const auto& e : j.at("estimators"))
      cfg.estimators.push_back(estimator_from_string(e.get<std::string>()));
  }
  if (j.contains("kernel"))
    cfg.kernel = kernel_family_from_string(j.at("kernel").get<std::string>());
  if (j.contains("bandwidth")) {
    const auto& b = j.at("bandwidth");
    detail::require_keys(b,
                         {"policy", "value", "beta", "scale", "grid_size",
                          "grid_span", "tune_resolution"},
                         "bandwidth.");
    const std::string policy = b.at("policy").get<std::string>();
    if (policy == "fixed") {
      cfg.bandwidth.kind = BandwidthPolicyKind::fixed;
      cfg.bandwidth.fixed_h = b.at("value").get<double>();
    } else if (policy == "a2") {
      cfg.bandwidth.kind = BandwidthPolicyKind::a2;
    } else if (policy == "split") {
      cfg.bandwidth.kind = BandwidthPolicyKind::split;
    } else {
      throw std::invalid_argument("config: unknown key 'bandwidth.policy=" +
                                  policy + "'");
    }
    if (b.contains("beta")) cfg.bandwidth.beta = b.at("beta").get<double>();
    if (b.contains("scale")) cfg.bandwidth.scale = b.at("scale").get<double>();
    if (b.contains("grid_size"))
      cfg.bandwidth.grid_size = b.at("grid_size").get<std::size_t>();
    if (b.contains("grid_span"))
      cfg.bandwidth.grid_span = b.at("grid_span").get<double>();
    if (b.contains("tune_resolution"))
      cfg.bandwidth.tune_resolution = b.at("tune_resolution").get<std::size_t>();
  }
  if (j.contains("volume")) {
    const auto& v = j.at("volume");
    detail::require_keys(v, {"enabled", "resolution", "bounds", "mc_samples"},
                         "volume.");
    if (v.contains("enabled")) cfg.volume.enabled = v.at("enabled").get<bool>();
    if (v.contains("resolution"))
      cfg.volume.resolution = v.at("resolution").get<std::size_t>();
    if (v.contains("bounds") && !v.at("bounds").is_string()) {
      for (const auto& b : v.at("bounds")) {
        cfg.volume.lower.push_back(b.at(0).get<double>());
        cfg.volume.upper.push_back(b.at(1).get<double>());
      }
    }
    if (v.contains("mc_samples"))
      cfg.volume.mc_samples = v.at("mc_samples").get<std::size_t>();
  }
  if (j.contains("measure_losses"))
    cfg.measure_losses = j.at("measure_losses").get<bool>();
  if (j.contains("oracle_mc_samples"))
    cfg.oracle_mc_samples = j.at("oracle_mc_samples").get<std::size_t>();
  if (j.contains("coverage_mode")) {
    const std::string mode = j.at("coverage_mode").get<std::string>();
    if (mode == "fresh_point") cfg.coverage_mode = CoverageMode::fresh_point;
    else if (mode == "region_mass")
      cfg.coverage_mode = CoverageMode::region_mass;
    else
      throw std::invalid_argument("config: unknown key 'coverage_mode=" +
                                  mode + "'");
  }
  if (j.contains("region_mass_samples"))
    cfg.region_mass_samples = j.at("region_mass_samples").get<std::size_t>();
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("threads")) cfg.threads = j.at("threads").get<int>();
  return cfg;
}

inline nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json estimators = nlohmann::json::array();
  for (auto e : cfg.estimators) estimators.push_back(to_string(e));
  nlohmann::json bandwidth;
  switch (cfg.bandwidth.kind) {
    case BandwidthPolicyKind::fixed:
      bandwidth = {{"policy", "fixed"}, {"value", cfg.bandwidth.fixed_h}};
      break;
    case BandwidthPolicyKind::a2:
      bandwidth = {{"policy", "a2"},
                   {"beta", cfg.bandwidth.beta},
                   {"scale", cfg.bandwidth.scale}};
      break;
    case BandwidthPolicyKind::split:
      bandwidth = {{"policy", "split"},
                   {"beta", cfg.bandwidth.beta},
                   {"scale", cfg.bandwidth.scale},
                   {"grid_size", cfg.bandwidth.grid_size},
                   {"grid_span", cfg.bandwidth.grid_span},
                   {"tune_resolution", cfg.bandwidth.tune_resolution}};
      break;
  }
  nlohmann::json volume = {{"enabled", cfg.volume.enabled},
                           {"resolution", cfg.volume.resolution},
                           {"mc_samples", cfg.volume.mc_samples}};
  if (!cfg.volume.lower.empty()) {
    nlohmann::json bounds = nlohmann::json::array();
    for (std::size_t jx = 0; jx < cfg.volume.lower.size(); ++jx)
      bounds.push_back({cfg.volume.lower[jx], cfg.volume.upper[jx]});
    volume["bounds"] = bounds;
  }
  return {{"truth", mixture_to_json(cfg.truth)},
          {"n", cfg.n},
          {"alpha", cfg.alpha},
          {"repetitions", cfg.repetitions},
          {"estimators", estimators},
          {"kernel", std::string(to_string(cfg.kernel))},
          {"bandwidth", bandwidth},
          {"volume", volume},
          {"measure_losses", cfg.measure_losses},
          {"oracle_mc_samples", cfg.oracle_mc_samples},
          {"coverage_mode", cfg.coverage_mode == CoverageMode::fresh_point
                                ? "fresh_point"
                                : "region_mass"},
          {"region_mass_samples", cfg.region_mass_samples},
          {"seed", cfg.seed},
          {"threads", cfg.threads}};
}

// ---------------------------------------------------------------------------
// The experiment engine
// ---------------------------------------------------------------------------

namespace detail {

//! Experiment box: explicit config bounds, otherwise a seeded sample from
//! the truth expanded by the largest plausible bandwidth plus slack.
inline void experiment_bounds(const ExperimentConfig& cfg,
                              std::vector<double>& lo,
                              std::vector<double>& hi) {
  const int d = cfg.truth.dim();
  if (!cfg.volume.lower.empty()) {
    if (static_cast<int>(cfg.volume.lower.size()) != d)
      throw std::invalid_argument("volume bounds dimension mismatch");
    lo = cfg.volume.lower;
    hi = cfg.volume.upper;
    return;
  }
  Rng rng(derive_seed(cfg.seed, seed_stream::auto_bounds, 0));
  const std::size_t probes = 100000;
  std::vector<double> point(d);
  lo.assign(d, std::numeric_limits<double>::infinity());
  hi.assign(d, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < probes; ++i) {
    cfg.truth.sample(rng, point.data());
    for (int j = 0; j < d; ++j) {
      lo[j] = std::min(lo[j], point[j]);
      hi[j] = std::max(hi[j], point[j]);
    }
  }
  double h_margin = 0.0;
  switch (cfg.bandwidth.kind) {
    case BandwidthPolicyKind::fixed:
      h_margin = cfg.bandwidth.fixed_h;
      break;
    case BandwidthPolicyKind::a2:
      h_margin = a2_bandwidth(cfg.n, d, cfg.bandwidth.beta,
                              cfg.bandwidth.scale);
      break;
    case BandwidthPolicyKind::split:
      h_margin = a2_bandwidth(cfg.n, d, cfg.bandwidth.beta,
                              cfg.bandwidth.scale) *
                 cfg.bandwidth.grid_span;
      break;
  }
  for (int j = 0; j < d; ++j) {
    const double slack = h_margin + 0.05 * (hi[j] - lo[j]);
    lo[j] -= slack;
    hi[j] += slack;
  }
}

struct RepetitionOutputs {
  RepetitionLog log;
  bool clipped = false;
};

}  // namespace detail

//! One full Monte-Carlo coverage/volume experiment. Deterministic given
//! (config, seed): every repetition draws from its own derived seed stream
//! and results are aggregated in repetition order, so the report is
//! byte-identical for any worker count.
inline ExperimentReport run_coverage_experiment(const ExperimentConfig& cfg) {
  const auto t_start = std::chrono::steady_clock::now();
  if (cfg.repetitions < 1)
    throw std::invalid_argument("experiment: repetitions must be >= 1");
  if (cfg.estimators.empty())
    throw std::invalid_argument("experiment: estimators must be nonempty");
  const int d = cfg.truth.dim();
  // d <= 3 uses shared-grid masks; d >= 4 falls back to Monte-Carlo
  // volumes (no masks, hence no losses or region-mass coverage there).
  const bool want_masks =
      (cfg.volume.enabled || cfg.coverage_mode == CoverageMode::region_mass) &&
      d <= 3;
  const bool want_mc_volumes = cfg.volume.enabled && d > 3;
  if (cfg.coverage_mode == CoverageMode::region_mass && !cfg.volume.enabled)
    throw std::invalid_argument(
        "experiment: region_mass coverage requires volume.enabled");
  if (d > 3 && (cfg.measure_losses && cfg.volume.enabled))
    throw std::invalid_argument(
        "experiment: oracle losses need grid masks, which support d <= 3");
  if (d > 3 && cfg.coverage_mode == CoverageMode::region_mass)
    throw std::invalid_argument(
        "experiment: region_mass coverage needs grid masks (d <= 3)");

  ExperimentReport report;
  report.config_echo = experiment_config_to_json(cfg);

  // The split tuner needs candidate volumes even when the experiment
  // itself measures none, so bounds are resolved for it too.
  const bool want_bounds = want_masks || want_mc_volumes ||
                           cfg.bandwidth.kind == BandwidthPolicyKind::split;
  std::vector<double> lo, hi;
  if (want_bounds) detail::experiment_bounds(cfg, lo, hi);

  std::optional<Grid> box_grid;
  std::optional<GridRegion> oracle_mask;
  if (want_masks) {
    box_grid = Grid::make(
        lo, hi, std::vector<std::size_t>(static_cast<std::size_t>(d),
                                         cfg.volume.resolution));
    if (cfg.measure_losses) {
      auto [oracle, mask] = oracle_region(
          cfg.truth, cfg.alpha, *box_grid, cfg.oracle_mc_samples,
          derive_seed(cfg.seed, seed_stream::oracle_cutoff, 0), cfg.threads);
      report.oracle_cutoff = oracle.cutoff;
      report.oracle_volume = volume(mask);
      oracle_mask = std::move(mask);
    }
  }

  // Shared evaluation points for region-mass coverage.
  std::vector<double> mass_points;
  if (cfg.coverage_mode == CoverageMode::region_mass) {
    Rng rng(derive_seed(cfg.seed, seed_stream::region_mass, 0));
    mass_points.resize(cfg.region_mass_samples * static_cast<std::size_t>(d));
    for (std::size_t i = 0; i < cfg.region_mass_samples; ++i)
      cfg.truth.sample(rng, mass_points.data() + i * d);
  }

  const auto kernel = product_kernel(cfg.kernel, d);
  std::optional<Grid> tune_grid;
  if (cfg.bandwidth.kind == BandwidthPolicyKind::split && d <= 3) {
    tune_grid = Grid::make(
        lo, hi, std::vector<std::size_t>(static_cast<std::size_t>(d),
                                         cfg.bandwidth.tune_resolution));
  }

  std::vector<detail::RepetitionOutputs> reps(cfg.repetitions);
  parallel_for(cfg.repetitions, cfg.threads, [&](std::size_t begin,
                                                 std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      auto& out = reps[r];
      const std::uint64_t rep_seed =
          derive_seed(cfg.seed, seed_stream::repetition, r);
      Rng rng(rep_seed);
      const Dataset data = cfg.truth.sample_dataset(rng, cfg.n);
      std::vector<double> fresh(d);
      cfg.truth.sample(rng, fresh.data());

      auto build = [&](const Dataset& dset, double h, double level) {
        return ConformalModel(DensityEstimate(dset, kernel, h), level);
      };

      double chosen_h = 0.0;
      std::optional<ConformalModel> model;
      switch (cfg.bandwidth.kind) {
        case BandwidthPolicyKind::fixed:
          chosen_h = cfg.bandwidth.fixed_h;
          model.emplace(build(data, chosen_h, cfg.alpha));
          break;
        case BandwidthPolicyKind::a2:
          chosen_h = a2_bandwidth(cfg.n, d, cfg.bandwidth.beta,
                                  cfg.bandwidth.scale);
          model.emplace(build(data, chosen_h, cfg.alpha));
          break;
        case BandwidthPolicyKind::split: {
          const auto grid =
              default_bandwidth_grid(cfg.n, d, cfg.bandwidth.beta,
                                     cfg.bandwidth.grid_size,
                                     cfg.bandwidth.scale,
                                     cfg.bandwidth.grid_span);
          std::uint64_t mc_counter = 0;
          auto vol_of = [&](const ConformalModel& m) {
            if (tune_grid) {
              return volume(
                  rasterize_sandwich(m, *tune_grid, 1).conformal);
            }
            const auto mc = mc_volume(
                [&](std::span<const double> y) { return m.member(y); }, lo,
                hi, cfg.volume.mc_samples,
                derive_seed(rep_seed, seed_stream::mc_volume, mc_counter++));
            return mc.estimate;
          };
          auto tuned = tune_split(
              data, grid, cfg.alpha, build, vol_of,
              derive_seed(cfg.seed, seed_stream::split_tuner, r));
          chosen_h = tuned.chosen_h;
          model.emplace(std::move(tuned.region));
          break;
        }
      }

      const auto& est = model->estimate();
      const auto& cut = model->cutoffs();
      const std::size_t n_est = cfg.estimators.size();
      out.log.seed = rep_seed;
      out.log.bandwidth = chosen_h;
      out.log.coverage.assign(n_est,
                              std::numeric_limits<double>::quiet_NaN());
      out.log.volume.assign(n_est, std::numeric_limits<double>::quiet_NaN());
      out.log.sym_diff.assign(n_est,
                              std::numeric_limits<double>::quiet_NaN());
      out.log.excess.assign(n_est, std::numeric_limits<double>::quiet_NaN());

      std::optional<SandwichMasks> masks;
      if (want_masks) masks = rasterize_sandwich(*model, *box_grid, 1);

      // d >= 4: one shared uniform sample prices all three regions, so the
      // setwise inclusion carries over to the volume estimates exactly.
      double mc_vol_conformal = 0.0, mc_vol_inner = 0.0, mc_vol_outer = 0.0;
      if (want_mc_volumes) {
        Rng mc_rng(derive_seed(rep_seed, seed_stream::mc_volume, 1000000));
        std::vector<double> pt(d);
        std::vector<double> scratch(est.n());
        std::size_t hit_conformal = 0, hit_inner = 0, hit_outer = 0;
        for (std::size_t s = 0; s < cfg.volume.mc_samples; ++s) {
          for (int j = 0; j < d; ++j) pt[j] = mc_rng.uniform(lo[j], hi[j]);
          const double raw =
              est.kernel_sum_storing_terms(pt.data(), scratch.data());
          const double self = model->raw_self_score(raw);
          std::size_t count = 1;
          for (std::size_t i = 0; i < est.n(); ++i)
            if (model->indicator(model->raw_scores()[i], self, scratch[i]))
              ++count;
          if (count >= model->cut_index()) ++hit_conformal;
          if (raw >= cut.raw_t_minus) ++hit_inner;
          if (raw >= cut.raw_t_plus) ++hit_outer;
        }
        double box = 1.0;
        for (int j = 0; j < d; ++j) box *= hi[j] - lo[j];
        const auto total = static_cast<double>(cfg.volume.mc_samples);
        mc_vol_conformal = box * static_cast<double>(hit_conformal) / total;
        mc_vol_inner = box * static_cast<double>(hit_inner) / total;
        mc_vol_outer = box * static_cast<double>(hit_outer) / total;
      }

      // raw kernel-sum units: consistent with the masks and exact on ties
      const double fresh_raw =
          cfg.coverage_mode == CoverageMode::fresh_point
              ? est.kernel_sum(fresh)
              : 0.0;

      for (std::size_t e = 0; e < n_est; ++e) {
        const Estimator which = cfg.estimators[e];
        const GridRegion* mask = nullptr;
        if (masks) {
          mask = which == Estimator::conformal ? &masks->conformal
                 : which == Estimator::sandwich_inner
                     ? &masks->inner
                     : &masks->outer;
        }
        // coverage
        if (cfg.coverage_mode == CoverageMode::fresh_point) {
          bool covered = false;
          switch (which) {
            case Estimator::conformal: covered = model->member(fresh); break;
            case Estimator::sandwich_inner:
              covered = fresh_raw >= cut.raw_t_minus;
              break;
            case Estimator::sandwich_outer:
              covered = fresh_raw >= cut.raw_t_plus;
              break;
          }
          out.log.coverage[e] = covered ? 1.0 : 0.0;
        } else {
          std::size_t inside = 0;
          for (std::size_t i = 0; i < cfg.region_mass_samples; ++i) {
            std::span<const double> p(mass_points.data() + i * d,
                                      static_cast<std::size_t>(d));
            if (mask->grid.contains(p) &&
                mask->mask[mask->grid.flat_index_of(p)])
              ++inside;
          }
          out.log.coverage[e] = static_cast<double>(inside) /
                                static_cast<double>(cfg.region_mass_samples);
        }
        // volume and losses
        if (cfg.volume.enabled && mask) {
          out.log.volume[e] = volume(*mask);
          if (oracle_mask) {
            const auto losses = loss_against_oracle(*mask, *oracle_mask);
            out.log.sym_diff[e] = losses.sym_diff;
            out.log.excess[e] = losses.excess;
          }
          if (touches_boundary(*mask)) out.clipped = true;
        } else if (want_mc_volumes) {
          switch (which) {
            case Estimator::conformal:
              out.log.volume[e] = mc_vol_conformal;
              break;
            case Estimator::sandwich_inner:
              out.log.volume[e] = mc_vol_inner;
              break;
            case Estimator::sandwich_outer:
              out.log.volume[e] = mc_vol_outer;
              break;
          }
        }
      }
    }
  });

  // Fixed-order aggregation.
  const std::size_t n_est = cfg.estimators.size();
  for (std::size_t e = 0; e < n_est; ++e) {
    EstimatorSummary summary;
    summary.estimator = cfg.estimators[e];
    std::vector<double> cov, vol, sym, exc;
    for (const auto& rep : reps) {
      cov.push_back(rep.log.coverage[e]);
      if (cfg.volume.enabled) {
        vol.push_back(rep.log.volume[e]);
        if (oracle_mask) {
          sym.push_back(rep.log.sym_diff[e]);
          exc.push_back(rep.log.excess[e]);
        }
      }
    }
    summary.coverage = moments_of(cov);
    summary.volume = moments_of(vol);
    summary.sym_diff = moments_of(sym);
    summary.excess = moments_of(exc);
    report.results.push_back(summary);
  }
  for (auto& rep : reps) {
    if (rep.clipped) ++report.clipped_repetitions;
    report.per_rep.push_back(std::move(rep.log));
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                    t_start)
          .count();
  return report;
}

// ---------------------------------------------------------------------------
// Rate experiment
// ---------------------------------------------------------------------------

struct RateReport {
  std::vector<std::pair<std::size_t, ExperimentReport>> rows;

  //! Mean excess-loss ratio of the first n over the last n for one
  //! estimator; summarizes how fast the region tightens with sample size.
  double excess_ratio(Estimator which) const {
    const auto pick = [&](const ExperimentReport& r) {
      for (const auto& s : r.results)
        if (s.estimator == which) return s.excess.mean;
      return std::numeric_limits<double>::quiet_NaN();
    };
    return pick(rows.front().second) / pick(rows.back().second);
  }
};

inline RateReport run_rate_experiment(const ExperimentConfig& base,
                                      const std::vector<std::size_t>& n_list) {
  if (n_list.size() < 2)
    throw std::invalid_argument("rate experiment: need at least two n values");
  RateReport out;
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    ExperimentConfig cfg = base;
    cfg.n = n_list[i];
    cfg.seed = derive_seed(base.seed, 100, i);  // stream per n
    out.rows.emplace_back(n_list[i], run_coverage_experiment(cfg));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Validity stress suite
// ---------------------------------------------------------------------------

struct StressCase {
  std::string truth_name;
  double bandwidth_factor = 1.0;  // h = factor * h0(n, d)
};

struct StressResult {
  std::string truth_name;
  double bandwidth = 0.0;
  double bandwidth_factor = 1.0;
  double conformal_coverage = 0.0;
  double outer_coverage = 0.0;
  double threshold = 0.0;  // 1 - alpha - 3 sqrt(alpha(1-alpha)/R)
  bool pass = false;
};

struct StressConfig {
  std::size_t n = 200;
  double alpha = 0.1;
  std::size_t repetitions = 2000;
  KernelFamily kernel = KernelFamily::epanechnikov;
  std::uint64_t seed = 1;
  int threads = 0;
  std::vector<StressCase> cases = {
      {"heavy-tailed", 1.0 / 20.0}, {"heavy-tailed", 20.0},
      {"near-discrete", 1.0 / 20.0}, {"near-discrete", 20.0},
      {"skewed", 1.0 / 20.0},       {"skewed", 20.0},
  };
};

//! Coverage of the conformal region and the outer sandwich set under
//! adversarial truths and deliberately terrible bandwidths. Oracle losses
//! are skipped: these truths have no well-behaved contour.
inline std::vector<StressResult> run_validity_stress(const StressConfig& sc) {
  std::vector<StressResult> results;
  const double threshold =
      1.0 - sc.alpha -
      3.0 * std::sqrt(sc.alpha * (1.0 - sc.alpha) /
                      static_cast<double>(sc.repetitions));
  for (std::size_t c = 0; c < sc.cases.size(); ++c) {
    const auto& kase = sc.cases[c];
    ExperimentConfig cfg(mixture_preset(kase.truth_name));
    cfg.n = sc.n;
    cfg.alpha = sc.alpha;
    cfg.repetitions = sc.repetitions;
    cfg.estimators = {Estimator::conformal, Estimator::sandwich_outer};
    cfg.kernel = sc.kernel;
    cfg.bandwidth.kind = BandwidthPolicyKind::fixed;
    cfg.bandwidth.fixed_h =
        kase.bandwidth_factor * a2_bandwidth(sc.n, cfg.truth.dim());
    cfg.volume.enabled = false;
    cfg.measure_losses = false;
    cfg.seed = derive_seed(sc.seed, 200, c);
    cfg.threads = sc.threads;
    const auto report = run_coverage_experiment(cfg);

    StressResult res;
    res.truth_name = kase.truth_name;
    res.bandwidth = cfg.bandwidth.fixed_h;
    res.bandwidth_factor = kase.bandwidth_factor;
    res.conformal_coverage = report.results[0].coverage.mean;
    res.outer_coverage = report.results[1].coverage.mean;
    res.threshold = threshold;
    res.pass = res.conformal_coverage >= threshold &&
               res.outer_coverage >= threshold;
    results.push_back(res);
  }
  return results;
}

// ---------------------------------------------------------------------------
// Report serialization
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json json_number(double x) {
  if (std::isfinite(x)) return x;
  return nullptr;
}

inline nlohmann::json moments_json(const Moments& m) {
  return {{"mean", json_number(m.mean)}, {"se", json_number(m.se)}};
}

}  // namespace detail

inline nlohmann::json report_to_json(const ExperimentReport& report) {
  nlohmann::json results;
  for (const auto& s : report.results) {
    results[to_string(s.estimator)] = {
        {"coverage", detail::moments_json(s.coverage)},
        {"volume", detail::moments_json(s.volume)},
        {"sym_diff", detail::moments_json(s.sym_diff)},
        {"excess", detail::moments_json(s.excess)}};
  }
  return {{"config", report.config_echo},
          {"oracle", {{"cutoff", detail::json_number(report.oracle_cutoff)},
                      {"volume", detail::json_number(report.oracle_volume)}}},
          {"clipped_repetitions", report.clipped_repetitions},
          {"results", results}};
}

inline std::string format_17g(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

//! Flat CSV, one row per estimator.
inline std::string report_to_csv(const ExperimentReport& report) {
  std::ostringstream os;
  os << "estimator,coverage_mean,coverage_se,volume_mean,volume_se,"
        "sym_diff_mean,sym_diff_se,excess_mean,excess_se\n";
  for (const auto& s : report.results) {
    os << to_string(s.estimator) << ',' << format_17g(s.coverage.mean) << ','
       << format_17g(s.coverage.se) << ',' << format_17g(s.volume.mean) << ','
       << format_17g(s.volume.se) << ',' << format_17g(s.sym_diff.mean) << ','
       << format_17g(s.sym_diff.se) << ',' << format_17g(s.excess.mean) << ','
       << format_17g(s.excess.se) << '\n';
  }
  return os.str();
}

//! Audit log, one row per (repetition, estimator).
inline std::string per_rep_csv(const ExperimentReport& report,
                               const std::vector<Estimator>& estimators) {
  std::ostringstream os;
  os << "rep,seed,bandwidth,estimator,coverage,volume,sym_diff,excess\n";
  for (std::size_t r = 0; r < report.per_rep.size(); ++r) {
    const auto& rep = report.per_rep[r];
    for (std::size_t e = 0; e < estimators.size(); ++e) {
      os << r << ',' << rep.seed << ',' << format_17g(rep.bandwidth) << ','
         << to_string(estimators[e]) << ',' << format_17g(rep.coverage[e])
         << ',' << format_17g(rep.volume[e]) << ','
         << format_17g(rep.sym_diff[e]) << ',' << format_17g(rep.excess[e])
         << '\n';
    }
  }
  return os.str();
}

}  // namespace confpred
