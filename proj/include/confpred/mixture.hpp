#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <json.hpp>

#include "confpred/dataset.hpp"
#include "confpred/grid.hpp"
#include "confpred/random.hpp"

namespace confpred {

struct MixtureComponent {
  double weight = 1.0;
  std::vector<double> mean;
  std::vector<double> cov;  // row-major d x d, symmetric positive-definite
};

//! Gaussian mixture: ground truth density for experiments and the oracle
//! region benchmark. Weights must sum to 1 within 1e-12 and every
//! covariance must be symmetric positive-definite.
class MixtureDensity {
public:
  MixtureDensity(std::vector<MixtureComponent> components, int dim)
      : dim_(dim), components_(std::move(components)) {
    if (dim <= 0) throw std::invalid_argument("mixture: dim must be >= 1");
    if (components_.empty())
      throw std::invalid_argument("mixture: need at least one component");
    const auto d = static_cast<std::size_t>(dim);
    double weight_sum = 0.0;
    for (const auto& c : components_) {
      if (!(c.weight > 0.0))
        throw std::invalid_argument("mixture: weights must be > 0");
      if (c.mean.size() != d || c.cov.size() != d * d)
        throw std::invalid_argument("mixture: component dimension mismatch");
      weight_sum += c.weight;
    }
    if (std::fabs(weight_sum - 1.0) > 1e-12)
      throw std::invalid_argument("mixture: weights must sum to 1");

    const double log_two_pi = std::log(2.0 * 3.14159265358979323846);
    double cum = 0.0;
    for (const auto& c : components_) {
      Eigen::MatrixXd cov(dim, dim);
      for (int r = 0; r < dim; ++r)
        for (int s = 0; s < dim; ++s) cov(r, s) = c.cov[r * d + s];
      if (!cov.isApprox(cov.transpose(), 1e-12))
        throw std::invalid_argument("mixture: covariance not symmetric");
      Eigen::LLT<Eigen::MatrixXd> llt(cov);
      if (llt.info() != Eigen::Success)
        throw std::invalid_argument("mixture: covariance not positive-definite");
      Eigen::MatrixXd L = llt.matrixL();
      double log_det_half = 0.0;
      for (int r = 0; r < dim; ++r) log_det_half += std::log(L(r, r));
      chol_.push_back(std::move(L));
      log_norm_.push_back(-0.5 * dim * log_two_pi - log_det_half);
      Eigen::VectorXd mu(dim);
      for (int r = 0; r < dim; ++r) mu(r) = c.mean[r];
      means_.push_back(std::move(mu));
      cum += c.weight;
      cum_weights_.push_back(cum);
    }
    cum_weights_.back() = 1.0;
  }

  int dim() const { return dim_; }
  const std::vector<MixtureComponent>& components() const {
    return components_;
  }

  double pdf(std::span<const double> y) const {
    if (static_cast<int>(y.size()) != dim_)
      throw std::invalid_argument("mixture pdf: dimension mismatch");
    Eigen::VectorXd v(dim_);
    for (int j = 0; j < dim_; ++j) v(j) = y[j];
    double total = 0.0;
    for (std::size_t k = 0; k < components_.size(); ++k) {
      const Eigen::VectorXd diff = v - means_[k];
      const Eigen::VectorXd z =
          chol_[k].triangularView<Eigen::Lower>().solve(diff);
      total +=
          components_[k].weight * std::exp(log_norm_[k] - 0.5 * z.squaredNorm());
    }
    return total;
  }

  //! One draw; writes dim() coordinates to out.
  void sample(Rng& rng, double* out) const {
    const double u = rng.uniform01();
    std::size_t k = 0;
    while (k + 1 < cum_weights_.size() && u >= cum_weights_[k]) ++k;
    Eigen::VectorXd z(dim_);
    for (int j = 0; j < dim_; ++j) z(j) = rng.normal();
    const Eigen::VectorXd y = means_[k] + chol_[k] * z;
    for (int j = 0; j < dim_; ++j) out[j] = y(j);
  }

  Dataset sample_dataset(Rng& rng, std::size_t n) const {
    std::vector<double> flat(n * static_cast<std::size_t>(dim_));
    for (std::size_t i = 0; i < n; ++i)
      sample(rng, flat.data() + i * static_cast<std::size_t>(dim_));
    return Dataset::from_flat(std::move(flat), n, dim_);
  }

private:
  int dim_;
  std::vector<MixtureComponent> components_;
  std::vector<Eigen::MatrixXd> chol_;
  std::vector<Eigen::VectorXd> means_;
  std::vector<double> log_norm_;
  std::vector<double> cum_weights_;
};

inline MixtureDensity mixture_from_json(const nlohmann::json& j) {
  const int dim = j.at("dim").get<int>();
  std::vector<MixtureComponent> comps;
  for (const auto& cj : j.at("components")) {
    MixtureComponent c;
    c.weight = cj.at("weight").get<double>();
    c.mean = cj.at("mean").get<std::vector<double>>();
    for (const auto& row : cj.at("cov"))
      for (const auto& v : row) c.cov.push_back(v.get<double>());
    comps.push_back(std::move(c));
  }
  return MixtureDensity(std::move(comps), dim);
}

inline nlohmann::json mixture_to_json(const MixtureDensity& m) {
  nlohmann::json comps = nlohmann::json::array();
  const auto d = static_cast<std::size_t>(m.dim());
  for (const auto& c : m.components()) {
    nlohmann::json cov = nlohmann::json::array();
    for (std::size_t r = 0; r < d; ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (std::size_t s = 0; s < d; ++s) row.push_back(c.cov[r * d + s]);
      cov.push_back(row);
    }
    comps.push_back({{"weight", c.weight}, {"mean", c.mean}, {"cov", cov}});
  }
  return {{"dim", m.dim()}, {"components", comps}};
}

struct CutoffEstimate {
  double cutoff = 0.0;
  double standard_error = 0.0;
};

//! Empirical alpha-quantile of a vector of density values, with the
//! plateau ("atom") check: if more than 0.1% of the values tie with the
//! quantile to 1e-12, the density has a flat contour at the cutoff and the
//! oracle construction is rejected. Exposed separately for testing.
inline CutoffEstimate density_quantile_with_atom_check(
    std::vector<double> values, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("quantile: alpha must be in (0,1)");
  if (values.empty()) throw std::invalid_argument("quantile: no values");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  std::size_t k = static_cast<std::size_t>(
      std::ceil(alpha * static_cast<double>(n)));
  k = std::min(std::max<std::size_t>(k, 1), n);
  CutoffEstimate out;
  out.cutoff = values[k - 1];

  const double tie_tol = 1e-12 * std::max(1.0, std::fabs(out.cutoff));
  std::size_t ties = 0;
  for (double v : values)
    if (std::fabs(v - out.cutoff) <= tie_tol) ++ties;
  if (static_cast<double>(ties) > 1e-3 * static_cast<double>(n))
    throw std::domain_error(
        "oracle cutoff: density has an atom/plateau at the cutoff level");

  const auto delta = static_cast<std::size_t>(std::max(
      1.0, std::round(std::sqrt(alpha * (1.0 - alpha) *
                                static_cast<double>(n)))));
  const std::size_t lo = k > delta ? k - delta : 1;
  const std::size_t hi = std::min(n, k + delta);
  out.standard_error = (values[hi - 1] - values[lo - 1]) / 2.0;
  return out;
}

//! Monte-Carlo inverse of G(t) = P(p(Y) <= t): draws mc_samples points
//! from the mixture and returns the empirical alpha-quantile of their
//! density values. Deterministic given the seed.
inline CutoffEstimate oracle_cutoff(const MixtureDensity& m, double alpha,
                                    std::size_t mc_samples,
                                    std::uint64_t seed) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("oracle_cutoff: alpha must be in (0,1)");
  if (mc_samples < 10000)
    throw std::invalid_argument("oracle_cutoff: need at least 10^4 samples");
  Rng rng(seed);
  std::vector<double> point(m.dim());
  std::vector<double> values(mc_samples);
  for (std::size_t i = 0; i < mc_samples; ++i) {
    m.sample(rng, point.data());
    values[i] = m.pdf(point);
  }
  return density_quantile_with_atom_check(std::move(values), alpha);
}

//! The ideal region C^(alpha) = {y : p(y) >= cutoff}.
struct OracleRegion {
  MixtureDensity density;
  double cutoff = 0.0;
  double alpha = 0.0;

  bool member(std::span<const double> y) const {
    return density.pdf(y) >= cutoff;
  }
};

//! Rasterized oracle region; the grid must contain it strictly (a region
//! touching the grid boundary raises a grid-too-small error).
inline std::pair<OracleRegion, GridRegion> oracle_region(
    const MixtureDensity& m, double alpha, const Grid& grid,
    std::size_t mc_samples, std::uint64_t seed, int threads = 1) {
  const CutoffEstimate cut = oracle_cutoff(m, alpha, mc_samples, seed);
  OracleRegion oracle{m, cut.cutoff, alpha};
  GridRegion raster = rasterize(
      grid, [&](std::span<const double> y) { return oracle.member(y); },
      threads);
  if (touches_boundary(raster))
    throw std::domain_error(
        "oracle region touches the grid boundary; enlarge the grid");
  return {std::move(oracle), std::move(raster)};
}

struct RegionLosses {
  double sym_diff = 0.0;  // mu(estimate xor oracle)
  double excess = 0.0;    // mu(estimate) - mu(oracle), signed
};

inline RegionLosses loss_against_oracle(const GridRegion& estimate,
                                        const GridRegion& oracle) {
  RegionLosses out;
  out.sym_diff = symmetric_difference_volume(estimate, oracle);
  out.excess = excess_loss(estimate, oracle);
  return out;
}

}  // namespace confpred
