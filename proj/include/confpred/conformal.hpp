#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "confpred/density.hpp"
#include "confpred/grid.hpp"

namespace confpred {

//! Discretized level floor((n+1) alpha) / (n+1).
inline double alpha_tilde(std::size_t n, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("alpha must be in (0,1)");
  const double m = static_cast<double>(n + 1);
  return std::floor(m * alpha) / m;
}

//! i_cut = floor((n+1) alpha); always in {0,...,n} for alpha in (0,1).
inline std::size_t conformal_cut_index(std::size_t n, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("alpha must be in (0,1)");
  return static_cast<std::size_t>(
      std::floor(static_cast<double>(n + 1) * alpha));
}

//! Plug-in level-set cutoffs bracketing the conformal region.
//!
//! t_minus is the i_cut-th smallest conformity score; {p_hat >= t_minus}
//! is contained in the conformal region. t_plus is the (i_cut-1)-th
//! smallest score minus psi_K/(n h^d); {p_hat >= t_plus} contains the
//! conformal region. A -inf cutoff marks a degenerate (whole-space) side:
//! i_cut = 0 degenerates both, i_cut = 1 degenerates the outer side (the
//! region is then all of R^d, since the self-comparison alone puts every
//! point at p-value 1/(n+1) = alpha_tilde).
//!
//! The raw_* fields are the same cutoffs in kernel-sum units (density
//! times n h^d); membership tests and masks use these, so that the exact
//! score ties produced by isolated sample points stay exact.
struct SandwichCutoffs {
  double t_minus = -std::numeric_limits<double>::infinity();
  double t_plus = -std::numeric_limits<double>::infinity();
  double raw_t_minus = -std::numeric_limits<double>::infinity();
  double raw_t_plus = -std::numeric_limits<double>::infinity();
  bool inner_degenerate = true;
  bool outer_degenerate = true;
};

//! True iff p_hat(y) >= t (the upper level set L_n(t), non-strict).
inline bool levelset_member(const DensityEstimate& est, double t,
                            std::span<const double> y) {
  return est.eval(y) >= t;
}

//! Conformal prediction region with a kernel density conformity score.
//!
//! Built once from (estimate, alpha): conformity scores p_hat(Y_i) are
//! computed and sorted at construction, after which concurrent membership
//! queries are safe. Membership of y tests whether at least i_cut of the
//! n+1 augmented scores fall at or below the query's own score.
//!
//! All score comparisons are carried out in kernel-sum units: the
//! definitional comparison p_hat^y(Y_i) <= p_hat^y(y) is multiplied
//! through by (n+1)h^d, giving
//!   S(Y_i) + K((Y_i-y)/h)  <=  S(y) + K(0),
//! with S the raw kernel sum over the sample. This is algebraically
//! identical and numerically strictly better behaved: score ties between
//! isolated sample points and far-away queries are exact equalities of
//! sums and stay exact in floating point, which the finite-sample
//! validity of the rank test depends on.
class ConformalModel {
public:
  ConformalModel(DensityEstimate est, double alpha)
      : est_(std::move(est)), alpha_(alpha) {
    if (!(alpha > 0.0 && alpha < 1.0))
      throw std::invalid_argument("conformal: alpha must be in (0,1)");
    const std::size_t n = est_.n();
    i_cut_ = conformal_cut_index(n, alpha);
    alpha_tilde_ = static_cast<double>(i_cut_) / static_cast<double>(n + 1);

    raw_scores_.resize(n);
    scores_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      raw_scores_[i] =
          est_.kernel_sum_unchecked(est_.data().point(i).data());
      scores_[i] = raw_scores_[i] / est_.norm_denom();
    }
    sorted_raw_scores_ = raw_scores_;
    std::sort(sorted_raw_scores_.begin(), sorted_raw_scores_.end());
    sorted_scores_.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      sorted_scores_[i] = sorted_raw_scores_[i] / est_.norm_denom();

    if (i_cut_ >= 1) {
      cutoffs_.raw_t_minus = sorted_raw_scores_[i_cut_ - 1];
      cutoffs_.t_minus = cutoffs_.raw_t_minus / est_.norm_denom();
      cutoffs_.inner_degenerate = false;
    }
    if (i_cut_ >= 2) {
      // psi_K/(n h^d) in kernel-sum units is just psi_K
      cutoffs_.raw_t_plus =
          sorted_raw_scores_[i_cut_ - 2] - est_.kernel().oscillation;
      cutoffs_.t_plus = cutoffs_.raw_t_plus / est_.norm_denom();
      cutoffs_.outer_degenerate = false;
    }

    // Indicator count for any query with zero density (all kernel terms
    // vanish); reused for far-field grid cells. Exact: an isolated point
    // has raw score exactly K(0) and ties exactly.
    zero_density_count_ = 1;
    const double self0 = raw_self_score(0.0);
    for (std::size_t i = 0; i < n; ++i)
      if (indicator(raw_scores_[i], self0, 0.0)) ++zero_density_count_;
  }

  const DensityEstimate& estimate() const { return est_; }
  double alpha() const { return alpha_; }
  double alpha_tilde() const { return alpha_tilde_; }
  std::size_t cut_index() const { return i_cut_; }
  //! Conformity scores p_hat(Y_i), in data order.
  std::span<const double> scores() const { return scores_; }
  //! The same scores in ascending order.
  std::span<const double> sorted_scores() const { return sorted_scores_; }
  //! Raw kernel sums S(Y_i) = n h^d p_hat(Y_i), data order and sorted.
  std::span<const double> raw_scores() const { return raw_scores_; }
  std::span<const double> sorted_raw_scores() const {
    return sorted_raw_scores_;
  }
  const SandwichCutoffs& cutoffs() const { return cutoffs_; }
  std::size_t zero_density_count() const { return zero_density_count_; }

  //! (n+1) pi(y) as an integer count in [1, n+1].
  //!
  //! The O(n) path: cached raw scores plus one fresh kernel pass. It
  //! evaluates exactly the expressions of the definitional O(n^2) path
  //! (pvalue_count_direct), so the two agree to exact indicator counts.
  std::size_t pvalue_count(std::span<const double> y) const {
    check_query(y);
    std::vector<double> terms(est_.n());
    return count_with_buffer(y.data(), terms.data());
  }

  //! Definitional count: every augmented score recomputed from scratch as
  //! the kernel sum over the augmented sample (data order, query last).
  std::size_t pvalue_count_direct(std::span<const double> y) const {
    check_query(y);
    const double self =
        est_.kernel_sum_unchecked(y.data()) + est_.kernel_term(y, y);
    std::size_t count = 1;
    for (std::size_t i = 0; i < est_.n(); ++i) {
      auto point = est_.data().point(i);
      const double augmented = est_.kernel_sum_unchecked(point.data()) +
                               est_.kernel_term(y, point);
      if (augmented <= self) ++count;
    }
    return count;
  }

  //! pi(y) = count / (n+1), in {1/(n+1), ..., 1}.
  double pvalue(std::span<const double> y) const {
    return static_cast<double>(pvalue_count(y)) /
           static_cast<double>(est_.n() + 1);
  }

  double pvalue_direct(std::span<const double> y) const {
    return static_cast<double>(pvalue_count_direct(y)) /
           static_cast<double>(est_.n() + 1);
  }

  //! y in C_hat^(alpha), i.e. pi(y) >= alpha_tilde. Count form: the two
  //! comparisons are equivalent because both sides are integer multiples
  //! of 1/(n+1). For i_cut = 0 every y is a member.
  bool member(std::span<const double> y) const {
    return pvalue_count(y) >= i_cut_;
  }

  // Internal hot path: caller provides a scratch buffer of length n and a
  // valid finite query of dimension d.
  std::size_t count_with_buffer(const double* y, double* terms) const {
    const double raw = est_.kernel_sum_storing_terms(y, terms);
    const double self = raw_self_score(raw);
    std::size_t count = 1;
    for (std::size_t i = 0; i < est_.n(); ++i)
      if (indicator(raw_scores_[i], self, terms[i])) ++count;
    return count;
  }

  //! The query's own augmented score in kernel-sum units.
  double raw_self_score(double raw_kernel_sum) const {
    return raw_kernel_sum + est_.kernel().peak;
  }

  //! One augmented-score comparison, S(Y_i) + K_i <= S(y) + K(0), with
  //! the cached raw score and the fresh kernel term supplied by the
  //! caller. Shared by every caller so the rounding pattern is identical
  //! everywhere (builds also keep FP contraction off).
  bool indicator(double raw_score, double raw_self, double kterm) const {
    return raw_score + kterm <= raw_self;
  }

private:
  void check_query(std::span<const double> y) const {
    if (static_cast<int>(y.size()) != est_.dim())
      throw std::invalid_argument("conformal: query dimension mismatch");
    for (double x : y)
      if (!std::isfinite(x))
        throw std::invalid_argument("conformal: non-finite query");
  }

  DensityEstimate est_;
  double alpha_;
  double alpha_tilde_ = 0.0;
  std::size_t i_cut_ = 0;
  std::vector<double> raw_scores_;
  std::vector<double> scores_;
  std::vector<double> sorted_raw_scores_;
  std::vector<double> sorted_scores_;
  SandwichCutoffs cutoffs_;
  std::size_t zero_density_count_ = 1;
};

//! The three region masks of one model on a shared grid.
struct SandwichMasks {
  GridRegion inner;      // L_n^- = {p_hat >= t_minus}
  GridRegion conformal;  // C_hat^(alpha)
  GridRegion outer;      // L_n^+ = {p_hat >= t_plus}
};

//! Rasterize L_n^-, C_hat and L_n^+ in one pass over the cells, sharing
//! the per-cell kernel terms. Cells with zero density reuse the
//! precomputed far-field count; cells inside L_n^- are members by the
//! sandwich argument, which holds exactly in floating point for this
//! implementation's expressions (monotone rounding of sums).
inline SandwichMasks rasterize_sandwich(const ConformalModel& model,
                                        const Grid& grid, int threads = 1) {
  const DensityEstimate& est = model.estimate();
  if (grid.dim() != est.dim())
    throw std::invalid_argument("rasterize: grid dimension mismatch");
  SandwichMasks out;
  out.inner.grid = grid;
  out.conformal.grid = grid;
  out.outer.grid = grid;
  const std::size_t cells = grid.cell_count();
  out.inner.mask.assign(cells, 0);
  out.conformal.mask.assign(cells, 0);
  out.outer.mask.assign(cells, 0);

  const SandwichCutoffs& cut = model.cutoffs();
  const std::size_t i_cut = model.cut_index();

  parallel_for(cells, threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> point(est.dim());
    std::vector<double> terms(est.n());
    for (std::size_t c = begin; c < end; ++c) {
      grid.center(c, point.data());
      const double raw =
          est.kernel_sum_storing_terms(point.data(), terms.data());
      out.inner.mask[c] = raw >= cut.raw_t_minus ? 1 : 0;
      out.outer.mask[c] = raw >= cut.raw_t_plus ? 1 : 0;
      bool member;
      if (raw == 0.0) {
        member = model.zero_density_count() >= i_cut;
      } else if (raw >= cut.raw_t_minus) {
        member = true;
      } else {
        const double self = model.raw_self_score(raw);
        std::size_t count = 1;
        for (std::size_t i = 0; i < est.n(); ++i)
          if (model.indicator(model.raw_scores()[i], self, terms[i]))
            ++count;
        member = count >= i_cut;
      }
      out.conformal.mask[c] = member ? 1 : 0;
    }
  });
  return out;
}

//! Default rasterization grid for an estimate: the KDE support box plus
//! one cell of padding per side. Default resolution is 200 cells per
//! dimension for d <= 2 and 64 for d = 3; for d >= 4 use mc_volume.
inline Grid default_grid(const DensityEstimate& est,
                         std::size_t cells_per_dim = 0) {
  const int d = est.dim();
  if (cells_per_dim == 0) {
    if (d <= 2) cells_per_dim = 200;
    else if (d == 3) cells_per_dim = 64;
    else
      throw std::invalid_argument(
          "default_grid: no grid default for d >= 4, use mc_volume");
  }
  if (cells_per_dim < 3)
    throw std::invalid_argument("default_grid: need at least 3 cells per dim");
  std::vector<double> lo, hi;
  est.support_box(lo, hi);
  std::vector<std::size_t> counts(static_cast<std::size_t>(d), cells_per_dim);
  for (int j = 0; j < d; ++j) {
    const double width =
        (hi[j] - lo[j]) / static_cast<double>(cells_per_dim - 2);
    lo[j] -= width;
    hi[j] += width;
  }
  return Grid::make(std::move(lo), std::move(hi), std::move(counts));
}

}  // namespace confpred
