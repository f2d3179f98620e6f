#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "confpred/parallel.hpp"
#include "confpred/random.hpp"

namespace confpred {

//! Rectangular grid: per-dimension bounds and cell counts. Cells are
//! addressed by a flat row-major index with the last axis fastest;
//! membership is always evaluated at cell centers.
struct Grid {
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<std::size_t> counts;

  static Grid make(std::vector<double> lower, std::vector<double> upper,
                   std::vector<std::size_t> counts) {
    if (lower.empty() || lower.size() != upper.size() ||
        lower.size() != counts.size())
      throw std::invalid_argument("grid: inconsistent dimensions");
    for (std::size_t j = 0; j < lower.size(); ++j) {
      if (!std::isfinite(lower[j]) || !std::isfinite(upper[j]))
        throw std::invalid_argument("grid: non-finite bounds");
      if (!(lower[j] < upper[j]))
        throw std::invalid_argument("grid: lower must be < upper");
      if (counts[j] == 0) throw std::invalid_argument("grid: zero cell count");
    }
    Grid g;
    g.lower = std::move(lower);
    g.upper = std::move(upper);
    g.counts = std::move(counts);
    return g;
  }

  int dim() const { return static_cast<int>(lower.size()); }

  std::size_t cell_count() const {
    std::size_t total = 1;
    for (std::size_t c : counts) total *= c;
    return total;
  }

  double cell_width(int axis) const {
    return (upper[axis] - lower[axis]) / static_cast<double>(counts[axis]);
  }

  double cell_volume() const {
    double v = 1.0;
    for (int j = 0; j < dim(); ++j) v *= cell_width(j);
    return v;
  }

  double box_volume() const {
    double v = 1.0;
    for (int j = 0; j < dim(); ++j) v *= upper[j] - lower[j];
    return v;
  }

  //! Center coordinates of the cell at flat index `flat`, written to out.
  void center(std::size_t flat, double* out) const {
    for (int j = dim() - 1; j >= 0; --j) {
      const std::size_t idx = flat % counts[j];
      flat /= counts[j];
      out[j] = lower[j] + (static_cast<double>(idx) + 0.5) * cell_width(j);
    }
  }

  bool contains(std::span<const double> p) const {
    for (int j = 0; j < dim(); ++j)
      if (!(p[j] >= lower[j] && p[j] < upper[j])) return false;
    return true;
  }

  //! Flat index of the cell containing p; requires contains(p).
  std::size_t flat_index_of(std::span<const double> p) const {
    std::size_t flat = 0;
    for (int j = 0; j < dim(); ++j) {
      auto idx = static_cast<std::size_t>((p[j] - lower[j]) / cell_width(j));
      if (idx >= counts[j]) idx = counts[j] - 1;  // guard the upper edge
      flat = flat * counts[j] + idx;
    }
    return flat;
  }

  bool operator==(const Grid& o) const {
    return lower == o.lower && upper == o.upper && counts == o.counts;
  }
};

//! A region as a membership bit per grid cell.
struct GridRegion {
  Grid grid;
  std::vector<std::uint8_t> mask;  // one byte per cell, 0 or 1

  std::size_t count_set() const {
    std::size_t c = 0;
    for (auto b : mask) c += b;
    return c;
  }
};

//! Evaluate `pred` at every cell center.
template <class Pred>
GridRegion rasterize(const Grid& grid, Pred&& pred, int threads = 1) {
  GridRegion region;
  region.grid = grid;
  region.mask.assign(grid.cell_count(), 0);
  const int dim = grid.dim();
  parallel_for(region.mask.size(), threads,
               [&](std::size_t begin, std::size_t end) {
                 std::vector<double> point(dim);
                 for (std::size_t cell = begin; cell < end; ++cell) {
                   grid.center(cell, point.data());
                   region.mask[cell] =
                       pred(std::span<const double>(point)) ? 1 : 0;
                 }
               });
  return region;
}

inline double volume(const GridRegion& r) {
  return static_cast<double>(r.count_set()) * r.grid.cell_volume();
}

namespace detail {
inline void require_same_grid(const GridRegion& a, const GridRegion& b) {
  if (!(a.grid == b.grid))
    throw std::invalid_argument("regions live on different grids");
}
}  // namespace detail

//! mu(a xor b); satisfies mu(a^b) = mu(a) + mu(b) - 2 mu(a&b).
inline double symmetric_difference_volume(const GridRegion& a,
                                          const GridRegion& b) {
  detail::require_same_grid(a, b);
  std::size_t c = 0;
  for (std::size_t i = 0; i < a.mask.size(); ++i)
    c += static_cast<std::size_t>(a.mask[i] ^ b.mask[i]);
  return static_cast<double>(c) * a.grid.cell_volume();
}

inline double intersection_volume(const GridRegion& a, const GridRegion& b) {
  detail::require_same_grid(a, b);
  std::size_t c = 0;
  for (std::size_t i = 0; i < a.mask.size(); ++i)
    c += static_cast<std::size_t>(a.mask[i] & b.mask[i]);
  return static_cast<double>(c) * a.grid.cell_volume();
}

//! mu(c) - mu(oracle); signed, negative for undercovering regions.
inline double excess_loss(const GridRegion& c, const GridRegion& oracle) {
  detail::require_same_grid(c, oracle);
  return volume(c) - volume(oracle);
}

//! Cellwise a implies b.
inline bool subset_of(const GridRegion& a, const GridRegion& b) {
  detail::require_same_grid(a, b);
  for (std::size_t i = 0; i < a.mask.size(); ++i)
    if (a.mask[i] && !b.mask[i]) return false;
  return true;
}

//! True if any set cell sits on the outer face of the grid.
inline bool touches_boundary(const GridRegion& r) {
  const int dim = r.grid.dim();
  std::vector<std::size_t> idx(dim);
  for (std::size_t cell = 0; cell < r.mask.size(); ++cell) {
    if (!r.mask[cell]) continue;
    std::size_t rest = cell;
    for (int j = dim - 1; j >= 0; --j) {
      idx[j] = rest % r.grid.counts[j];
      rest /= r.grid.counts[j];
    }
    for (int j = 0; j < dim; ++j)
      if (idx[j] == 0 || idx[j] + 1 == r.grid.counts[j]) return true;
  }
  return false;
}

struct McVolume {
  double estimate = 0.0;
  double standard_error = 0.0;
  std::size_t samples = 0;
};

//! Monte-Carlo volume of {pred} inside the box [lower, upper].
//! Deterministic given the seed.
template <class Pred>
McVolume mc_volume(Pred&& pred, std::span<const double> lower,
                   std::span<const double> upper, std::size_t samples,
                   std::uint64_t seed) {
  if (samples < 100)
    throw std::invalid_argument("mc_volume: need at least 100 samples");
  if (lower.size() != upper.size() || lower.empty())
    throw std::invalid_argument("mc_volume: inconsistent bounds");
  const int dim = static_cast<int>(lower.size());
  double box = 1.0;
  for (int j = 0; j < dim; ++j) box *= upper[j] - lower[j];

  Rng rng(seed);
  std::vector<double> point(dim);
  std::size_t hits = 0;
  for (std::size_t s = 0; s < samples; ++s) {
    for (int j = 0; j < dim; ++j) point[j] = rng.uniform(lower[j], upper[j]);
    if (pred(std::span<const double>(point))) ++hits;
  }
  const double p = static_cast<double>(hits) / static_cast<double>(samples);
  McVolume out;
  out.estimate = box * p;
  out.standard_error =
      box * std::sqrt(p * (1.0 - p) / static_cast<double>(samples));
  out.samples = samples;
  return out;
}

//! Grid/region JSON: bounds, counts, and a run-length encoded mask
//! (alternating run lengths, starting with an unset run; flat row-major
//! order, last axis fastest). Byte-exact round trip.
inline nlohmann::json grid_to_json(const Grid& g) {
  nlohmann::json bounds = nlohmann::json::array();
  for (int j = 0; j < g.dim(); ++j)
    bounds.push_back({g.lower[j], g.upper[j]});
  return {{"bounds", bounds}, {"counts", g.counts}};
}

inline Grid grid_from_json(const nlohmann::json& j) {
  std::vector<double> lo, hi;
  for (const auto& b : j.at("bounds")) {
    lo.push_back(b.at(0).get<double>());
    hi.push_back(b.at(1).get<double>());
  }
  return Grid::make(std::move(lo), std::move(hi),
                    j.at("counts").get<std::vector<std::size_t>>());
}

inline nlohmann::json region_to_json(const GridRegion& r) {
  std::vector<std::size_t> runs;
  std::uint8_t current = 0;
  std::size_t len = 0;
  for (auto b : r.mask) {
    if (b == current) {
      ++len;
    } else {
      runs.push_back(len);
      current = b;
      len = 1;
    }
  }
  runs.push_back(len);
  nlohmann::json j = grid_to_json(r.grid);
  j["mask_rle"] = runs;
  return j;
}

inline GridRegion region_from_json(const nlohmann::json& j) {
  GridRegion r;
  r.grid = grid_from_json(j);
  r.mask.reserve(r.grid.cell_count());
  std::uint8_t current = 0;
  for (const auto& run : j.at("mask_rle")) {
    r.mask.insert(r.mask.end(), run.get<std::size_t>(), current);
    current ^= 1;
  }
  if (r.mask.size() != r.grid.cell_count())
    throw std::invalid_argument("region: mask length does not match grid");
  return r;
}

}  // namespace confpred
