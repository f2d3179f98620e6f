#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "confpred/dataset.hpp"
#include "confpred/random.hpp"

namespace confpred {

//! Theory-default bandwidth h0 = c (log n / n)^(1/(2 beta + d)).
inline double a2_bandwidth(std::size_t n, int dim, double beta = 1.0,
                           double scale = 1.0) {
  if (n < 2) throw std::invalid_argument("a2_bandwidth: need n >= 2");
  if (dim <= 0) throw std::invalid_argument("a2_bandwidth: dim must be >= 1");
  const double nn = static_cast<double>(n);
  return scale * std::pow(std::log(nn) / nn, 1.0 / (2.0 * beta + dim));
}

//! Sorted candidate bandwidths.
struct BandwidthGrid {
  std::vector<double> candidates;  // strictly increasing, all > 0
};

//! Geometric grid of m points spanning [h0/span, h0*span] around the
//! theory default h0.
inline BandwidthGrid default_bandwidth_grid(std::size_t n, int dim,
                                            double beta = 1.0,
                                            std::size_t m = 20,
                                            double scale = 1.0,
                                            double span = 8.0) {
  if (m < 1) throw std::invalid_argument("bandwidth grid: need m >= 1");
  if (!(span >= 1.0)) throw std::invalid_argument("bandwidth grid: span >= 1");
  const double h0 = a2_bandwidth(n, dim, beta, scale);
  BandwidthGrid grid;
  if (m == 1 || span == 1.0) {
    grid.candidates = {h0};
    return grid;
  }
  const double lo = h0 / span;
  const double ratio = std::pow(span * span, 1.0 / static_cast<double>(m - 1));
  grid.candidates.reserve(m);
  for (std::size_t i = 0; i < m; ++i)
    grid.candidates.push_back(lo * std::pow(ratio, static_cast<double>(i)));
  return grid;
}

template <class Region>
struct TuneResult {
  double chosen_h = 0.0;
  Region region;
  std::vector<std::pair<double, double>> curve;  // (h, volume) per candidate
};

//! Per-candidate (h, volume) curve at level 1-alpha; the data behind the
//! bandwidth-vs-measure plots.
template <class Builder, class VolumeFn>
std::vector<std::pair<double, double>> volume_vs_bandwidth(
    const Dataset& data, const BandwidthGrid& grid, double alpha,
    Builder&& build, VolumeFn&& vol) {
  std::vector<std::pair<double, double>> curve;
  curve.reserve(grid.candidates.size());
  for (double h : grid.candidates) {
    auto region = build(data, h, alpha);
    curve.emplace_back(h, vol(region));
  }
  return curve;
}

//! Algorithm with Bonferroni correction: every candidate region is built
//! at level 1 - alpha/m on the full sample and the smallest one wins, so
//! the winner keeps finite-sample 1-alpha validity. Ties break toward the
//! smaller bandwidth.
template <class Builder, class VolumeFn>
auto tune_bonferroni(const Dataset& data, const BandwidthGrid& grid,
                     double alpha, Builder&& build, VolumeFn&& vol) {
  using Region = decltype(build(data, grid.candidates.front(), alpha));
  if (grid.candidates.empty())
    throw std::invalid_argument("tune: empty bandwidth grid");
  const double level = alpha / static_cast<double>(grid.candidates.size());
  std::optional<Region> best_region;
  double best_volume = std::numeric_limits<double>::infinity();
  double best_h = 0.0;
  std::vector<std::pair<double, double>> curve;
  for (double h : grid.candidates) {
    Region region = build(data, h, level);
    const double v = vol(region);
    curve.emplace_back(h, v);
    if (!best_region || v < best_volume) {
      best_volume = v;
      best_h = h;
      best_region.emplace(std::move(region));
    }
  }
  return TuneResult<Region>{best_h, std::move(*best_region),
                            std::move(curve)};
}

//! Random equal split; the first half gets the extra point when n is odd.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
split_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  shuffle(idx, rng);
  const std::size_t first = (n + 1) / 2;
  std::vector<std::size_t> a(idx.begin(), idx.begin() + first);
  std::vector<std::size_t> b(idx.begin() + first, idx.end());
  return {std::move(a), std::move(b)};
}

//! Algorithm with sample splitting: candidates are compared at level
//! 1-alpha on the first half, and only after the winner h_hat is fixed is
//! the final region built, at level 1-alpha, on the second half. Validity
//! follows because h_hat is independent of the second half.
template <class Builder, class VolumeFn>
auto tune_split(const Dataset& data, const BandwidthGrid& grid, double alpha,
                Builder&& build, VolumeFn&& vol, std::uint64_t seed) {
  using Region = decltype(build(data, grid.candidates.front(), alpha));
  if (data.n < 4)
    throw std::invalid_argument("tune_split: sample splitting needs n >= 4");
  if (grid.candidates.empty())
    throw std::invalid_argument("tune: empty bandwidth grid");
  auto [first_idx, second_idx] = split_indices(data.n, seed);
  const Dataset selection = data.subset(first_idx);
  const Dataset holdout = data.subset(second_idx);

  double best_volume = std::numeric_limits<double>::infinity();
  double best_h = 0.0;
  bool have_best = false;
  std::vector<std::pair<double, double>> curve;
  for (double h : grid.candidates) {
    const double v = vol(build(selection, h, alpha));
    curve.emplace_back(h, v);
    if (!have_best || v < best_volume) {
      best_volume = v;
      best_h = h;
      have_best = true;
    }
  }
  return TuneResult<Region>{best_h, build(holdout, best_h, alpha),
                            std::move(curve)};
}

}  // namespace confpred
