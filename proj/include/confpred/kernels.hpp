#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

namespace confpred {

//! Product kernel families, all compactly supported on [-1,1]^d,
//! nonnegative, integrating to 1, and peaked at the origin.
enum class KernelFamily { epanechnikov, biweight, triweight, uniform_box };

inline std::string_view to_string(KernelFamily f) {
  switch (f) {
    case KernelFamily::epanechnikov: return "epanechnikov";
    case KernelFamily::biweight: return "biweight";
    case KernelFamily::triweight: return "triweight";
    case KernelFamily::uniform_box: return "uniform-box";
  }
  return "epanechnikov";
}

inline KernelFamily kernel_family_from_string(std::string_view name) {
  if (name == "epanechnikov") return KernelFamily::epanechnikov;
  if (name == "biweight") return KernelFamily::biweight;
  if (name == "triweight") return KernelFamily::triweight;
  if (name == "uniform-box" || name == "box" || name == "uniform")
    return KernelFamily::uniform_box;
  throw std::invalid_argument("unknown kernel family: " + std::string(name));
}

namespace detail {

// Univariate factors. The peak constants are all dyadic rationals; together
// with round-to-nearest this guarantees eval(u) <= peak exactly in floating
// point, which the sandwich arithmetic relies on.
inline double univariate_peak(KernelFamily f) {
  switch (f) {
    case KernelFamily::epanechnikov: return 0.75;
    case KernelFamily::biweight: return 15.0 / 16.0;
    case KernelFamily::triweight: return 35.0 / 32.0;
    case KernelFamily::uniform_box: return 0.5;
  }
  return 0.75;
}

template <KernelFamily F>
inline double univariate_factor(double t) {
  if constexpr (F == KernelFamily::uniform_box) {
    return 0.5;
  } else {
    const double w = 1.0 - t * t;
    if constexpr (F == KernelFamily::epanechnikov) return 0.75 * w;
    if constexpr (F == KernelFamily::biweight) return (15.0 / 16.0) * (w * w);
    if constexpr (F == KernelFamily::triweight)
      return (35.0 / 32.0) * ((w * w) * w);
  }
}

// Product over coordinates supplied by `coord`; zero as soon as any
// coordinate leaves [-1,1]. Left-fold order matches the peak computation.
template <KernelFamily F, class CoordFn>
inline double eval_product(int dim, CoordFn coord) {
  double acc = 1.0;
  for (int j = 0; j < dim; ++j) {
    const double t = coord(j);
    if (!(t >= -1.0 && t <= 1.0)) return 0.0;
    acc *= univariate_factor<F>(t);
  }
  return acc;
}

template <class CoordFn>
inline double eval_dispatch(KernelFamily f, int dim, CoordFn coord) {
  switch (f) {
    case KernelFamily::epanechnikov:
      return eval_product<KernelFamily::epanechnikov>(dim, coord);
    case KernelFamily::biweight:
      return eval_product<KernelFamily::biweight>(dim, coord);
    case KernelFamily::triweight:
      return eval_product<KernelFamily::triweight>(dim, coord);
    case KernelFamily::uniform_box:
      return eval_product<KernelFamily::uniform_box>(dim, coord);
  }
  return 0.0;
}

}  // namespace detail

//! A d-fold product kernel with its derived constants.
//!
//! peak is K(0) = ||K||_inf; oscillation is psi_K = sup |K(u) - K(u')|,
//! which equals K(0) for these nonnegative families because K vanishes
//! outside the support. Both are closed-form, not numeric sups.
struct KernelSpec {
  KernelFamily family = KernelFamily::epanechnikov;
  int dim = 1;
  double peak = 0.75;
  double oscillation = 0.75;
  static constexpr double support_radius = 1.0;

  //! K(u); exactly 0 whenever any coordinate exceeds 1 in absolute value.
  //! Throws on dimension mismatch or non-finite input.
  double eval(std::span<const double> u) const {
    if (static_cast<int>(u.size()) != dim)
      throw std::invalid_argument("kernel eval: dimension mismatch");
    for (double x : u)
      if (!std::isfinite(x))
        throw std::invalid_argument("kernel eval: non-finite input");
    return detail::eval_dispatch(family, dim, [&](int j) { return u[j]; });
  }
};

//! d-fold product of a univariate family.
inline KernelSpec product_kernel(KernelFamily family, int dim) {
  if (dim <= 0) throw std::invalid_argument("product_kernel: dim must be >= 1");
  KernelSpec k;
  k.family = family;
  k.dim = dim;
  double peak = 1.0;
  for (int j = 0; j < dim; ++j) peak *= detail::univariate_peak(family);
  k.peak = peak;
  k.oscillation = peak;
  return k;
}

//! One moment condition of the beta-validity check.
struct MomentCheck {
  std::vector<int> index;  // multi-index s
  double value;            // integral of u^s K(u) over [-1,1]^d
  bool pass;               // |value| <= tol
};

//! Result of checking the kernel conditions up to order beta.
struct BetaValidation {
  double beta = 0.0;
  double tol = 0.0;
  double normalization = 0.0;  // integral of K over [-1,1]^d
  bool normalization_pass = false;
  std::vector<MomentCheck> moments;  // all s with 1 <= |s| <= floor(beta)

  bool pass() const {
    if (!normalization_pass) return false;
    for (const auto& m : moments)
      if (!m.pass) return false;
    return true;
  }
};

namespace detail {

inline void enumerate_multi_indices(int dim, int remaining, int min_total,
                                    std::vector<int>& current,
                                    std::vector<std::vector<int>>& out) {
  if (static_cast<int>(current.size()) == dim) {
    int total = 0;
    for (int s : current) total += s;
    if (total >= min_total) out.push_back(current);
    return;
  }
  for (int s = 0; s <= remaining; ++s) {
    current.push_back(s);
    enumerate_multi_indices(dim, remaining - s, min_total, current, out);
    current.pop_back();
  }
}

}  // namespace detail

//! Numerically checks the vanishing-moment conditions: integral of u^s K(u)
//! must be 0 for all 1 <= |s| <= floor(beta), and K must integrate to 1.
//!
//! Tensor-product Gauss-Legendre on [-1,1]^d; exact for these polynomial
//! kernels. The symmetric nonnegative families pass beta = 1 and fail the
//! |s| = 2 moments.
inline BetaValidation validate_beta(const KernelSpec& k, double beta,
                                    double tol) {
  if (tol <= 0.0) throw std::invalid_argument("validate_beta: tol must be > 0");
  using quad = boost::math::quadrature::gauss<double, 30>;
  const auto& half_nodes = quad::abscissa();  // nonnegative half
  const auto& half_weights = quad::weights();

  std::vector<double> nodes, weights;
  for (std::size_t i = half_nodes.size(); i-- > 0;) {
    if (half_nodes[i] > 0.0) {
      nodes.push_back(-half_nodes[i]);
      weights.push_back(half_weights[i]);
    }
  }
  for (std::size_t i = 0; i < half_nodes.size(); ++i) {
    nodes.push_back(half_nodes[i]);
    weights.push_back(half_weights[i]);
  }

  const int dim = k.dim;
  const std::size_t per_dim = nodes.size();
  std::size_t total = 1;
  for (int j = 0; j < dim; ++j) total *= per_dim;

  int max_order = static_cast<int>(std::floor(beta));
  if (max_order < 0) max_order = 0;

  std::vector<std::vector<int>> indices;
  if (max_order >= 1) {
    std::vector<int> scratch;
    detail::enumerate_multi_indices(dim, max_order, 1, scratch, indices);
  }

  BetaValidation report;
  report.beta = beta;
  report.tol = tol;
  report.moments.reserve(indices.size());
  for (const auto& s : indices)
    report.moments.push_back(MomentCheck{s, 0.0, false});

  std::vector<double> point(dim);
  std::vector<std::size_t> digit(dim, 0);
  for (std::size_t cell = 0; cell < total; ++cell) {
    std::size_t rest = cell;
    double w = 1.0;
    for (int j = dim - 1; j >= 0; --j) {
      digit[j] = rest % per_dim;
      rest /= per_dim;
      point[j] = nodes[digit[j]];
      w *= weights[digit[j]];
    }
    const double kv =
        detail::eval_dispatch(k.family, dim, [&](int j) { return point[j]; });
    report.normalization += w * kv;
    for (std::size_t m = 0; m < indices.size(); ++m) {
      double mono = 1.0;
      for (int j = 0; j < dim; ++j)
        for (int p = 0; p < indices[m][j]; ++p) mono *= point[j];
      report.moments[m].value += w * kv * mono;
    }
  }

  report.normalization_pass = std::fabs(report.normalization - 1.0) <= tol;
  for (auto& m : report.moments) m.pass = std::fabs(m.value) <= tol;
  return report;
}

}  // namespace confpred
