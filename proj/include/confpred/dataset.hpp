#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace confpred {

//! An ordered sample of n points in R^d, stored row-major.
//!
//! Ordering matters: summation order in the density module is fixed to data
//! order so that repeated evaluations are bit-identical.
struct Dataset {
  std::vector<double> values;  // n * dim, row-major
  std::size_t n = 0;
  int dim = 0;

  static Dataset from_flat(std::vector<double> flat, std::size_t n, int dim) {
    if (dim <= 0) throw std::invalid_argument("dataset: dim must be >= 1");
    if (n == 0) throw std::invalid_argument("dataset: need at least one point");
    if (flat.size() != n * static_cast<std::size_t>(dim))
      throw std::invalid_argument("dataset: size mismatch");
    for (double v : flat)
      if (!std::isfinite(v))
        throw std::invalid_argument("dataset: non-finite value");
    Dataset d;
    d.values = std::move(flat);
    d.n = n;
    d.dim = dim;
    return d;
  }

  static Dataset from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty())
      throw std::invalid_argument("dataset: need at least one point");
    const std::size_t dim = rows.front().size();
    if (dim == 0) throw std::invalid_argument("dataset: dim must be >= 1");
    std::vector<double> flat;
    flat.reserve(rows.size() * dim);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != dim)
        throw std::invalid_argument("dataset: ragged row " + std::to_string(i));
      flat.insert(flat.end(), rows[i].begin(), rows[i].end());
    }
    return from_flat(std::move(flat), rows.size(), static_cast<int>(dim));
  }

  std::span<const double> point(std::size_t i) const {
    return {values.data() + i * static_cast<std::size_t>(dim),
            static_cast<std::size_t>(dim)};
  }

  Dataset subset(std::span<const std::size_t> idx) const {
    std::vector<double> flat;
    flat.reserve(idx.size() * static_cast<std::size_t>(dim));
    for (std::size_t i : idx) {
      auto p = point(i);
      flat.insert(flat.end(), p.begin(), p.end());
    }
    return from_flat(std::move(flat), idx.size(), dim);
  }

  //! Componentwise [min, max] over the sample.
  void bounds(std::vector<double>& lo, std::vector<double>& hi) const {
    lo.assign(static_cast<std::size_t>(dim), 0.0);
    hi.assign(static_cast<std::size_t>(dim), 0.0);
    for (int j = 0; j < dim; ++j) {
      lo[j] = hi[j] = values[static_cast<std::size_t>(j)];
    }
    for (std::size_t i = 1; i < n; ++i) {
      auto p = point(i);
      for (int j = 0; j < dim; ++j) {
        if (p[j] < lo[j]) lo[j] = p[j];
        if (p[j] > hi[j]) hi[j] = p[j];
      }
    }
  }
};

}  // namespace confpred
