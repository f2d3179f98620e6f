// confpred: conformal prediction regions with kernel density scores.
//
// Subcommands: region (build region files from a CSV sample), member
// (p-values and membership for query points), simulate (Monte-Carlo
// experiments from a config file), tune (data-driven bandwidth selection).
//
// Exit codes: 0 success, 2 input/config error, 3 numerical-degeneracy abort.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "confpred/confpred.hpp"

using nlohmann::json;
using namespace confpred;

namespace {

int env_default_threads() {
  if (const char* v = std::getenv("CONFPRED_THREADS")) {
    const int t = std::atoi(v);
    if (t > 0) return t;
  }
  return 0;  // hardware
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::invalid_argument("cannot write file: " + path);
  out << content;
}

Dataset load_dataset(const std::string& path, bool header, std::size_t min_n) {
  const auto rows = read_numeric_csv_file(path, header);
  if (rows.size() < min_n)
    throw std::invalid_argument(path + ": need at least " +
                                std::to_string(min_n) + " data rows, got " +
                                std::to_string(rows.size()));
  return Dataset::from_rows(rows);
}

std::size_t resolve_grid_size(std::size_t requested, const std::string& tuner) {
  if (requested != 0) return requested;
  // Bonferroni gets conservative fast with many candidates; default m is
  // capped at 10 while split tuning uses the full 20-point grid.
  return tuner == "bonferroni" ? 10 : 20;
}

Grid tuning_grid(const Dataset& data, double h_max, std::size_t resolution) {
  std::vector<double> lo, hi;
  data.bounds(lo, hi);
  std::vector<std::size_t> counts(lo.size(), resolution);
  for (std::size_t j = 0; j < lo.size(); ++j) {
    lo[j] -= h_max;
    hi[j] += h_max;
    const double width = (hi[j] - lo[j]) / static_cast<double>(resolution - 2);
    lo[j] -= width;
    hi[j] += width;
  }
  return Grid::make(std::move(lo), std::move(hi), std::move(counts));
}

json cutoff_json(double t, bool degenerate) {
  if (degenerate) return nullptr;
  return t;
}

json make_region_bundle(const ConformalModel& model, const Grid& grid,
                        const SandwichMasks& masks, json resolved_config) {
  const auto& est = model.estimate();
  const auto& cut = model.cutoffs();
  json points = json::array();
  for (std::size_t i = 0; i < est.n(); ++i) {
    auto p = est.data().point(i);
    points.push_back(std::vector<double>(p.begin(), p.end()));
  }
  json summary = {
      {"n", est.n()},
      {"dim", est.dim()},
      {"alpha", model.alpha()},
      {"alpha_tilde", model.alpha_tilde()},
      {"i_cut", model.cut_index()},
      {"bandwidth", est.bandwidth()},
      {"kernel", std::string(to_string(est.kernel().family))},
      {"t_minus", cutoff_json(cut.t_minus, cut.inner_degenerate)},
      {"t_plus", cutoff_json(cut.t_plus, cut.outer_degenerate)},
      {"degenerate_inner", cut.inner_degenerate},
      {"degenerate_outer", cut.outer_degenerate},
      {"volumes",
       {{"conformal", volume(masks.conformal)},
        {"inner", volume(masks.inner)},
        {"outer", volume(masks.outer)}}}};
  return {{"format", "confpred-regions/1"},
          {"config", std::move(resolved_config)},
          {"summary", std::move(summary)},
          {"model",
           {{"points", std::move(points)},
            {"bandwidth", est.bandwidth()},
            {"kernel", std::string(to_string(est.kernel().family))},
            {"alpha", model.alpha()}}},
          {"regions",
           {{"conformal", region_to_json(masks.conformal)},
            {"inner", region_to_json(masks.inner)},
            {"outer", region_to_json(masks.outer)}}}};
}

ConformalModel model_from_bundle(const json& bundle) {
  const auto& m = bundle.at("model");
  std::vector<std::vector<double>> rows;
  for (const auto& p : m.at("points"))
    rows.push_back(p.get<std::vector<double>>());
  Dataset data = Dataset::from_rows(rows);
  const int dim = data.dim;
  const auto family =
      kernel_family_from_string(m.at("kernel").get<std::string>());
  DensityEstimate est(std::move(data), product_kernel(family, dim),
                      m.at("bandwidth").get<double>());
  return ConformalModel(std::move(est), m.at("alpha").get<double>());
}

void print_region_summary(const json& bundle) {
  const auto& s = bundle.at("summary");
  auto num = [](const json& v) {
    return v.is_null() ? std::string("-inf (degenerate)")
                       : format_17g(v.get<double>());
  };
  std::printf("n=%zu d=%d alpha=%s alpha_tilde=%s i_cut=%zu h=%s\n",
              s.at("n").get<std::size_t>(), s.at("dim").get<int>(),
              format_17g(s.at("alpha").get<double>()).c_str(),
              format_17g(s.at("alpha_tilde").get<double>()).c_str(),
              s.at("i_cut").get<std::size_t>(),
              format_17g(s.at("bandwidth").get<double>()).c_str());
  std::printf("t_minus=%s t_plus=%s\n", num(s.at("t_minus")).c_str(),
              num(s.at("t_plus")).c_str());
  const auto& v = s.at("volumes");
  std::printf("volume inner=%s conformal=%s outer=%s\n",
              format_17g(v.at("inner").get<double>()).c_str(),
              format_17g(v.at("conformal").get<double>()).c_str(),
              format_17g(v.at("outer").get<double>()).c_str());
}

struct RegionArgs {
  std::string data_path;
  double alpha = 0.1;
  double bandwidth = 0.0;
  bool has_bandwidth = false;
  std::string tune;
  std::string kernel = "epanechnikov";
  std::size_t grid_res = 0;
  std::size_t grid_size = 0;
  double grid_span = 8.0;
  std::size_t tune_res = 64;
  std::uint64_t seed = 1;
  bool header = false;
  std::string out;
  int threads = env_default_threads();
};

int cmd_region(const RegionArgs& args) {
  if (args.has_bandwidth == !args.tune.empty())
    throw std::invalid_argument(
        "need exactly one of --bandwidth or --tune {split,bonferroni}");
  const Dataset data = load_dataset(args.data_path, args.header, 2);
  const auto family = kernel_family_from_string(args.kernel);
  const auto kernel = product_kernel(family, data.dim);

  json resolved = {{"command", "region"},      {"data", args.data_path},
                   {"alpha", args.alpha},      {"kernel", args.kernel},
                   {"grid_res", args.grid_res}, {"seed", args.seed},
                   {"threads", args.threads}};

  std::optional<ConformalModel> model;
  if (args.has_bandwidth) {
    resolved["bandwidth"] = args.bandwidth;
    model.emplace(DensityEstimate(data, kernel, args.bandwidth), args.alpha);
  } else {
    const std::size_t m = resolve_grid_size(args.grid_size, args.tune);
    const auto bwgrid =
        default_bandwidth_grid(data.n, data.dim, 1.0, m, 1.0, args.grid_span);
    const Grid tgrid =
        tuning_grid(data, bwgrid.candidates.back(), args.tune_res);
    auto build = [&](const Dataset& d, double h, double level) {
      return ConformalModel(DensityEstimate(d, kernel, h), level);
    };
    auto vol_of = [&](const ConformalModel& mm) {
      return volume(rasterize_sandwich(mm, tgrid, args.threads).conformal);
    };
    resolved["tune"] = args.tune;
    resolved["grid_size"] = m;
    resolved["grid_span"] = args.grid_span;
    resolved["tune_res"] = args.tune_res;
    if (args.tune == "split") {
      auto tuned =
          tune_split(data, bwgrid, args.alpha, build, vol_of, args.seed);
      resolved["chosen_h"] = tuned.chosen_h;
      model.emplace(std::move(tuned.region));
    } else if (args.tune == "bonferroni") {
      auto tuned = tune_bonferroni(data, bwgrid, args.alpha, build, vol_of);
      resolved["chosen_h"] = tuned.chosen_h;
      model.emplace(std::move(tuned.region));
    } else {
      throw std::invalid_argument("unknown tuner: " + args.tune);
    }
  }

  if (model->cut_index() == 0)
    std::fprintf(stderr,
                 "warning: floor((n+1)*alpha) = 0; the conformal region is "
                 "all of R^d\n");

  const Grid grid = default_grid(model->estimate(), args.grid_res);
  const auto masks = rasterize_sandwich(*model, grid, args.threads);
  const json bundle = make_region_bundle(*model, grid, masks, resolved);
  write_text(args.out, bundle.dump(2) + "\n");
  print_region_summary(bundle);
  return 0;
}

struct MemberArgs {
  std::string region_path;
  std::string data_path;
  double alpha = 0.1;
  double bandwidth = 0.0;
  bool has_bandwidth = false;
  std::string kernel = "epanechnikov";
  std::string query_path;
  bool header = false;
  std::string out = "-";
};

int cmd_member(const MemberArgs& args) {
  std::optional<ConformalModel> model;
  if (!args.region_path.empty()) {
    std::ifstream in(args.region_path);
    if (!in)
      throw std::invalid_argument("cannot open file: " + args.region_path);
    json bundle;
    try {
      in >> bundle;
    } catch (const json::parse_error& e) {
      throw std::invalid_argument("region parse error: " +
                                  std::string(e.what()));
    }
    model.emplace(model_from_bundle(bundle));
  } else if (!args.data_path.empty()) {
    if (!args.has_bandwidth)
      throw std::invalid_argument("--bandwidth is required with data input");
    const Dataset data = load_dataset(args.data_path, args.header, 2);
    model.emplace(
        DensityEstimate(data,
                        product_kernel(kernel_family_from_string(args.kernel),
                                       data.dim),
                        args.bandwidth),
        args.alpha);
  } else {
    throw std::invalid_argument("need --region or a data CSV");
  }

  const auto queries = read_numeric_csv_file(args.query_path, args.header);
  std::ostringstream os;
  os << "pvalue,conformal,inner,outer\n";
  const auto& est = model->estimate();
  const auto& cut = model->cutoffs();
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (static_cast<int>(queries[i].size()) != est.dim())
      throw std::invalid_argument(
          "query row " + std::to_string(i + 1) + " has dimension " +
          std::to_string(queries[i].size()) + ", model has " +
          std::to_string(est.dim()));
    const std::span<const double> y(queries[i]);
    const double raw = est.kernel_sum(y);
    os << format_17g(model->pvalue(y)) << ',' << (model->member(y) ? 1 : 0)
       << ',' << (raw >= cut.raw_t_minus ? 1 : 0) << ','
       << (raw >= cut.raw_t_plus ? 1 : 0) << '\n';
  }
  if (args.out == "-")
    std::cout << os.str();
  else
    write_text(args.out, os.str());
  return 0;
}

struct SimulateArgs {
  std::string config_path;
  std::string out_prefix = "report";
  std::string per_rep_log;
  std::int64_t repetitions = -1;
  std::int64_t seed = -1;
  int threads = -1;
};

void apply_overrides(ExperimentConfig& cfg, const SimulateArgs& args) {
  if (args.repetitions > 0)
    cfg.repetitions = static_cast<std::size_t>(args.repetitions);
  if (args.seed >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed);
  if (args.threads > 0) cfg.threads = args.threads;
  if (cfg.threads == 0) cfg.threads = env_default_threads();
}

void print_report_lines(const ExperimentReport& report) {
  for (const auto& s : report.results) {
    std::printf("%-15s coverage %.4f +- %.4f", to_string(s.estimator).c_str(),
                s.coverage.mean, s.coverage.se);
    if (std::isfinite(s.volume.mean))
      std::printf("  volume %.4f +- %.4f", s.volume.mean, s.volume.se);
    if (std::isfinite(s.excess.mean))
      std::printf("  excess %.4f +- %.4f", s.excess.mean, s.excess.se);
    std::printf("\n");
  }
  std::fprintf(stderr, "wall time: %.1f s\n", report.wall_seconds);
}

int cmd_simulate(const SimulateArgs& args) {
  std::ifstream in(args.config_path);
  if (!in)
    throw std::invalid_argument("cannot open file: " + args.config_path);
  json cfg_json;
  try {
    in >> cfg_json;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config parse error: " +
                                std::string(e.what()));
  }
  const std::string mode = cfg_json.value("mode", "coverage");
  json body = cfg_json;
  body.erase("mode");

  if (mode == "coverage") {
    ExperimentConfig cfg = experiment_config_from_json(body);
    apply_overrides(cfg, args);
    const auto report = run_coverage_experiment(cfg);
    write_text(args.out_prefix + ".json",
               report_to_json(report).dump(2) + "\n");
    write_text(args.out_prefix + ".csv", report_to_csv(report));
    if (!args.per_rep_log.empty())
      write_text(args.per_rep_log, per_rep_csv(report, cfg.estimators));
    print_report_lines(report);
    return 0;
  }
  if (mode == "rate") {
    if (!body.contains("n_list"))
      throw std::invalid_argument("config: rate mode requires key 'n_list'");
    const auto n_list = body.at("n_list").get<std::vector<std::size_t>>();
    body.erase("n_list");
    ExperimentConfig base = experiment_config_from_json(body);
    apply_overrides(base, args);
    const auto rate = run_rate_experiment(base, n_list);

    json rows = json::array();
    std::ostringstream csv;
    csv << "n,estimator,sym_diff_mean,sym_diff_se,excess_mean,excess_se\n";
    for (const auto& [n, report] : rate.rows) {
      rows.push_back({{"n", n}, {"report", report_to_json(report)}});
      for (const auto& s : report.results) {
        csv << n << ',' << to_string(s.estimator) << ','
            << format_17g(s.sym_diff.mean) << ',' << format_17g(s.sym_diff.se)
            << ',' << format_17g(s.excess.mean) << ','
            << format_17g(s.excess.se) << '\n';
      }
    }
    const double ratio = rate.excess_ratio(Estimator::conformal);
    const json doc = {{"mode", "rate"},
                      {"rows", rows},
                      {"excess_ratio_conformal", ratio}};
    write_text(args.out_prefix + ".json", doc.dump(2) + "\n");
    write_text(args.out_prefix + ".csv", csv.str());
    std::printf("excess-loss ratio (n=%zu over n=%zu, conformal): %s\n",
                rate.rows.front().first, rate.rows.back().first,
                format_17g(ratio).c_str());
    return 0;
  }
  if (mode == "stress") {
    detail::require_keys(
        body, {"n", "alpha", "repetitions", "kernel", "seed", "threads",
               "cases"},
        "");
    StressConfig sc;
    if (body.contains("n")) sc.n = body.at("n").get<std::size_t>();
    if (body.contains("alpha")) sc.alpha = body.at("alpha").get<double>();
    if (body.contains("repetitions"))
      sc.repetitions = body.at("repetitions").get<std::size_t>();
    if (body.contains("kernel"))
      sc.kernel =
          kernel_family_from_string(body.at("kernel").get<std::string>());
    if (body.contains("seed")) sc.seed = body.at("seed").get<std::uint64_t>();
    if (body.contains("threads")) sc.threads = body.at("threads").get<int>();
    if (body.contains("cases")) {
      sc.cases.clear();
      for (const auto& c : body.at("cases")) {
        detail::require_keys(c, {"truth", "bandwidth_factor"}, "cases.");
        sc.cases.push_back({c.at("truth").get<std::string>(),
                            c.at("bandwidth_factor").get<double>()});
      }
    }
    if (args.repetitions > 0)
      sc.repetitions = static_cast<std::size_t>(args.repetitions);
    if (args.seed >= 0) sc.seed = static_cast<std::uint64_t>(args.seed);
    if (args.threads > 0) sc.threads = args.threads;

    const auto results = run_validity_stress(sc);
    json rows = json::array();
    std::ostringstream csv;
    csv << "truth,bandwidth_factor,bandwidth,conformal_coverage,"
           "outer_coverage,threshold,pass\n";
    for (const auto& r : results) {
      rows.push_back({{"truth", r.truth_name},
                      {"bandwidth_factor", r.bandwidth_factor},
                      {"bandwidth", r.bandwidth},
                      {"conformal_coverage", r.conformal_coverage},
                      {"outer_coverage", r.outer_coverage},
                      {"threshold", r.threshold},
                      {"pass", r.pass}});
      csv << r.truth_name << ',' << format_17g(r.bandwidth_factor) << ','
          << format_17g(r.bandwidth) << ','
          << format_17g(r.conformal_coverage) << ','
          << format_17g(r.outer_coverage) << ',' << format_17g(r.threshold)
          << ',' << (r.pass ? 1 : 0) << '\n';
      std::printf("%-14s h=%-10.4g conformal %.4f outer %.4f (>= %.4f) %s\n",
                  r.truth_name.c_str(), r.bandwidth, r.conformal_coverage,
                  r.outer_coverage, r.threshold, r.pass ? "ok" : "FAIL");
    }
    const json doc = {{"mode", "stress"}, {"rows", rows}};
    write_text(args.out_prefix + ".json", doc.dump(2) + "\n");
    write_text(args.out_prefix + ".csv", csv.str());
    return 0;
  }
  throw std::invalid_argument("config: unknown mode '" + mode + "'");
}

struct TuneArgs {
  std::string data_path;
  std::string tuner;
  double alpha = 0.1;
  std::string kernel = "epanechnikov";
  std::size_t grid_size = 0;
  double grid_span = 8.0;
  std::size_t tune_res = 64;
  std::size_t grid_res = 0;
  std::uint64_t seed = 1;
  bool header = false;
  std::string out = "tune";
  int threads = env_default_threads();
};

int cmd_tune(const TuneArgs& args) {
  const Dataset data = load_dataset(args.data_path, args.header, 2);
  const auto family = kernel_family_from_string(args.kernel);
  const auto kernel = product_kernel(family, data.dim);
  const std::size_t m = resolve_grid_size(args.grid_size, args.tuner);
  const auto bwgrid =
      default_bandwidth_grid(data.n, data.dim, 1.0, m, 1.0, args.grid_span);
  const Grid tgrid =
      tuning_grid(data, bwgrid.candidates.back(), args.tune_res);

  auto build = [&](const Dataset& d, double h, double level) {
    return ConformalModel(DensityEstimate(d, kernel, h), level);
  };
  auto vol_of = [&](const ConformalModel& mm) {
    return volume(rasterize_sandwich(mm, tgrid, args.threads).conformal);
  };

  json resolved = {{"command", "tune"},         {"data", args.data_path},
                   {"tuner", args.tuner},       {"alpha", args.alpha},
                   {"kernel", args.kernel},     {"grid_size", m},
                   {"grid_span", args.grid_span},
                   {"tune_res", args.tune_res}, {"seed", args.seed},
                   {"threads", args.threads}};

  std::optional<ConformalModel> model;
  double chosen_h = 0.0;
  std::vector<std::pair<double, double>> curve;
  if (args.tuner == "split") {
    auto tuned =
        tune_split(data, bwgrid, args.alpha, build, vol_of, args.seed);
    chosen_h = tuned.chosen_h;
    curve = std::move(tuned.curve);
    model.emplace(std::move(tuned.region));
  } else if (args.tuner == "bonferroni") {
    auto tuned = tune_bonferroni(data, bwgrid, args.alpha, build, vol_of);
    chosen_h = tuned.chosen_h;
    curve = std::move(tuned.curve);
    model.emplace(std::move(tuned.region));
  } else {
    throw std::invalid_argument("unknown tuner: " + args.tuner);
  }
  resolved["chosen_h"] = chosen_h;

  std::ostringstream curve_csv;
  curve_csv << "bandwidth,volume\n";
  for (const auto& [h, v] : curve)
    curve_csv << format_17g(h) << ',' << format_17g(v) << '\n';
  write_text(args.out + "_curve.csv", curve_csv.str());

  const Grid grid = default_grid(model->estimate(), args.grid_res);
  const auto masks = rasterize_sandwich(*model, grid, args.threads);
  const json bundle = make_region_bundle(*model, grid, masks, resolved);
  write_text(args.out + "_region.json", bundle.dump(2) + "\n");

  std::printf("chosen bandwidth: %s\n", format_17g(chosen_h).c_str());
  print_region_summary(bundle);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conformal prediction regions with kernel density scores"};
  app.require_subcommand(1);

  RegionArgs region;
  auto* region_cmd =
      app.add_subcommand("region", "build region files from a CSV sample");
  region_cmd->add_option("data", region.data_path, "CSV of n rows, d columns")
      ->required();
  region_cmd->add_option("--alpha", region.alpha, "miscoverage level");
  auto* bw = region_cmd->add_option("--bandwidth", region.bandwidth,
                                    "fixed kernel bandwidth");
  region_cmd->add_option("--tune", region.tune, "tuner: split or bonferroni");
  region_cmd->add_option("--kernel", region.kernel, "kernel family");
  region_cmd->add_option("--grid-res", region.grid_res,
                         "cells per dimension for the output masks");
  region_cmd->add_option("--grid-size", region.grid_size,
                         "bandwidth candidates (0 = tuner default)");
  region_cmd->add_option("--grid-span", region.grid_span,
                         "candidate span factor around h0");
  region_cmd->add_option("--tune-res", region.tune_res,
                         "cells per dimension for candidate volumes");
  region_cmd->add_option("--seed", region.seed, "random seed");
  region_cmd->add_flag("--header", region.header, "CSV has a header row");
  region_cmd->add_option("--out", region.out, "output JSON path")->required();
  region_cmd->add_option("--threads", region.threads, "worker threads");

  MemberArgs member;
  auto* member_cmd = app.add_subcommand(
      "member", "p-values and membership flags for query points");
  member_cmd->add_option("--region", member.region_path,
                         "region JSON from the region/tune commands");
  member_cmd->add_option("data", member.data_path,
                         "CSV sample (alternative to --region)");
  member_cmd->add_option("--alpha", member.alpha, "miscoverage level");
  auto* mbw = member_cmd->add_option("--bandwidth", member.bandwidth,
                                     "kernel bandwidth");
  member_cmd->add_option("--kernel", member.kernel, "kernel family");
  member_cmd->add_option("--query", member.query_path, "CSV of query points")
      ->required();
  member_cmd->add_flag("--header", member.header, "CSVs have header rows");
  member_cmd->add_option("--out", member.out, "output CSV path (- = stdout)");

  SimulateArgs simulate;
  auto* simulate_cmd = app.add_subcommand(
      "simulate", "run a Monte-Carlo experiment from a config file");
  simulate_cmd->add_option("--config", simulate.config_path, "config JSON")
      ->required();
  simulate_cmd->add_option("--out", simulate.out_prefix,
                           "output prefix (.json/.csv)");
  simulate_cmd->add_option("--per-rep-log", simulate.per_rep_log,
                           "write the per-repetition audit CSV here");
  simulate_cmd->add_option("--repetitions", simulate.repetitions,
                           "override repetitions");
  simulate_cmd->add_option("--seed", simulate.seed, "override master seed");
  simulate_cmd->add_option("--threads", simulate.threads, "worker threads");

  TuneArgs tune;
  auto* tune_cmd =
      app.add_subcommand("tune", "data-driven bandwidth selection");
  tune_cmd->add_option("data", tune.data_path, "CSV of n rows, d columns")
      ->required();
  tune_cmd->add_option("--tuner", tune.tuner, "split or bonferroni")
      ->required();
  tune_cmd->add_option("--alpha", tune.alpha, "miscoverage level");
  tune_cmd->add_option("--kernel", tune.kernel, "kernel family");
  tune_cmd->add_option("--grid-size", tune.grid_size,
                       "bandwidth candidates (0 = tuner default)");
  tune_cmd->add_option("--grid-span", tune.grid_span,
                       "candidate span factor around h0");
  tune_cmd->add_option("--tune-res", tune.tune_res,
                       "cells per dimension for candidate volumes");
  tune_cmd->add_option("--grid-res", tune.grid_res,
                       "cells per dimension for the final region");
  tune_cmd->add_option("--seed", tune.seed, "split seed");
  tune_cmd->add_flag("--header", tune.header, "CSV has a header row");
  tune_cmd->add_option("--out", tune.out, "output prefix");
  tune_cmd->add_option("--threads", tune.threads, "worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (app.got_subcommand(region_cmd)) {
      region.has_bandwidth = bw->count() > 0;
      return cmd_region(region);
    }
    if (app.got_subcommand(member_cmd)) {
      member.has_bandwidth = mbw->count() > 0;
      return cmd_member(member);
    }
    if (app.got_subcommand(simulate_cmd)) return cmd_simulate(simulate);
    if (app.got_subcommand(tune_cmd)) return cmd_tune(tune);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::domain_error& e) {
    std::fprintf(stderr, "numerical degeneracy: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
