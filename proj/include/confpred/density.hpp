#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "confpred/dataset.hpp"
#include "confpred/grid.hpp"
#include "confpred/kernels.hpp"

namespace confpred {

//! Kernel density estimator p_hat(u) = (1/(n h^d)) sum_i K((u - Y_i)/h).
//!
//! Immutable after construction; concurrent queries are safe. Summation is
//! in data order and the normalizing denominators n*h^d and (n+1)*h^d are
//! computed once, so repeated evaluations are bit-identical and the
//! augmented identity below holds exactly, not just to rounding.
class DensityEstimate {
public:
  DensityEstimate(Dataset data, KernelSpec kernel, double bandwidth)
      : data_(std::move(data)), kernel_(kernel), h_(bandwidth) {
    if (!(bandwidth > 0.0) || !std::isfinite(bandwidth))
      throw std::invalid_argument("density: bandwidth must be finite and > 0");
    if (kernel_.dim != data_.dim)
      throw std::invalid_argument("density: kernel/data dimension mismatch");
    inv_h_ = 1.0 / h_;
    h_pow_d_ = 1.0;
    for (int j = 0; j < data_.dim; ++j) h_pow_d_ *= h_;
    norm_denom_ = static_cast<double>(data_.n) * h_pow_d_;
    aug_denom_ = static_cast<double>(data_.n + 1) * h_pow_d_;
    aug_weight_ = static_cast<double>(data_.n) /
                  static_cast<double>(data_.n + 1);
  }

  const Dataset& data() const { return data_; }
  const KernelSpec& kernel() const { return kernel_; }
  double bandwidth() const { return h_; }
  std::size_t n() const { return data_.n; }
  int dim() const { return data_.dim; }
  double h_pow_d() const { return h_pow_d_; }
  //! n * h^d, the KDE normalizer (single shared double).
  double norm_denom() const { return norm_denom_; }
  //! (n+1) * h^d, the augmented-term denominator.
  double aug_denom() const { return aug_denom_; }
  //! n / (n+1), the augmented-estimator weight.
  double aug_weight() const { return aug_weight_; }

  //! K((u - center)/h) with the scaled difference computed as (u-c)*(1/h).
  //! This is the exact kernel term used inside every sum in this class.
  double kernel_term(std::span<const double> center,
                     std::span<const double> u) const {
    return detail::eval_dispatch(kernel_.family, data_.dim, [&](int j) {
      return (u[j] - center[j]) * inv_h_;
    });
  }

  //! p_hat(u). Cost O(n d). Throws on dimension mismatch / non-finite input.
  double eval(std::span<const double> u) const {
    check_query(u);
    return eval_unchecked(u.data());
  }

  //! Augmented estimator p_hat^y(u) =
  //!   (n/(n+1)) p_hat(u) + K((u-y)/h) / ((n+1) h^d),
  //! evaluated with exactly that expression (aug_weight, kernel_term and
  //! aug_denom), so the identity against eval() holds with zero tolerance.
  double augmented_eval(std::span<const double> y,
                        std::span<const double> u) const {
    check_query(y);
    check_query(u);
    return aug_weight_ * eval_unchecked(u.data()) +
           kernel_term(y, u) / aug_denom_;
  }

  //! Componentwise data range expanded by h on each side; contains the
  //! support of p_hat.
  void support_box(std::vector<double>& lo, std::vector<double>& hi) const {
    data_.bounds(lo, hi);
    for (int j = 0; j < data_.dim; ++j) {
      lo[j] -= h_;
      hi[j] += h_;
    }
  }

  //! Raw kernel sum S(u) = sum_i K((u - Y_i)/h), so p_hat(u) = S(u)/(n h^d).
  //!
  //! The conformal module compares conformity scores in these units: the
  //! comparison is the augmented-density comparison rescaled by the
  //! positive constant (n+1)h^d, which keeps the exact score ties produced
  //! by isolated sample points exact in floating point as well (sums of
  //! kernel values, no per-term divisions to break them).
  double kernel_sum(std::span<const double> u) const {
    check_query(u);
    return kernel_sum_unchecked(u.data());
  }

  // Hot-path variants; callers guarantee valid finite input of dimension d.
  double kernel_sum_unchecked(const double* u) const {
    double sum = 0.0;
    const double* p = data_.values.data();
    const int d = data_.dim;
    for (std::size_t i = 0; i < data_.n; ++i, p += d) {
      sum += detail::eval_dispatch(kernel_.family, d, [&](int j) {
        return (u[j] - p[j]) * inv_h_;
      });
    }
    return sum;
  }

  double eval_unchecked(const double* u) const {
    return kernel_sum_unchecked(u) / norm_denom_;
  }

  //! Same sum, but also stores each kernel term into `terms` (length n).
  double kernel_sum_storing_terms(const double* u, double* terms) const {
    double sum = 0.0;
    const double* p = data_.values.data();
    const int d = data_.dim;
    for (std::size_t i = 0; i < data_.n; ++i, p += d) {
      const double kv = detail::eval_dispatch(kernel_.family, d, [&](int j) {
        return (u[j] - p[j]) * inv_h_;
      });
      terms[i] = kv;
      sum += kv;
    }
    return sum;
  }

private:
  void check_query(std::span<const double> u) const {
    if (static_cast<int>(u.size()) != data_.dim)
      throw std::invalid_argument("density: query dimension mismatch");
    for (double x : u)
      if (!std::isfinite(x))
        throw std::invalid_argument("density: non-finite query");
  }

  Dataset data_;
  KernelSpec kernel_;
  double h_;
  double inv_h_ = 0.0;
  double h_pow_d_ = 1.0;
  double norm_denom_ = 1.0;
  double aug_denom_ = 1.0;
  double aug_weight_ = 0.5;
};

struct NormalizationCheck {
  double integral = 0.0;      // midpoint quadrature of p_hat over the grid
  bool covers_support = false;  // grid box contains the KDE support box
};

//! Quadrature integral of p_hat over the grid; flags grids that truncate
//! the support (integral < 1 in that case).
inline NormalizationCheck kde_normalization_check(const DensityEstimate& est,
                                                  const Grid& grid,
                                                  int threads = 1) {
  if (grid.dim() != est.dim())
    throw std::invalid_argument("normalization: grid dimension mismatch");
  std::vector<double> lo, hi;
  est.support_box(lo, hi);
  NormalizationCheck out;
  out.covers_support = true;
  for (int j = 0; j < grid.dim(); ++j)
    if (grid.lower[j] > lo[j] || grid.upper[j] < hi[j])
      out.covers_support = false;

  const std::size_t cells = grid.cell_count();
  std::vector<double> values(cells, 0.0);
  parallel_for(cells, threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> point(grid.dim());
    for (std::size_t c = begin; c < end; ++c) {
      grid.center(c, point.data());
      values[c] = est.eval_unchecked(point.data());
    }
  });
  double total = 0.0;  // fixed-order reduction, independent of threading
  for (double v : values) total += v;
  out.integral = total * grid.cell_volume();
  return out;
}

}  // namespace confpred
