#pragma once

/// Splitting one observed signal into independent synthetic copies.
///
/// - thin_gaussian / thin_gaussian_correlated: m copies, each with the
///   source mean and m times the source covariance; they average back to
///   the source.
/// - thin_poisson: multinomial allocation of each count; copies sum back.
/// - fission_gaussian: the two-piece (Y + Z, Y) split whose conditional law
///   is used for inference when sigma is unknown.

#include "graphfission/graph.hpp"
#include "graphfission/random.hpp"

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace graphfission {

enum class ThinFamily { gaussian, gaussian_correlated, poisson };
enum class Recombine { sum, average };

inline const char* to_string(ThinFamily f) {
  switch (f) {
    case ThinFamily::gaussian: return "gaussian";
    case ThinFamily::gaussian_correlated: return "gaussian_correlated";
    case ThinFamily::poisson: return "poisson";
  }
  return "?";
}

inline const char* to_string(Recombine r) { return r == Recombine::sum ? "sum" : "average"; }

struct ThinnedFamily {
  std::vector<NodeSignal> copies;
  ThinFamily family = ThinFamily::gaussian;
  double sigma = 0.0;  // gaussian only
  std::vector<double> weights;
  Recombine recombine = Recombine::average;

  std::size_t size() const { return copies.size(); }

  Vector recombined() const {
    Vector acc = Vector::Zero(copies.front().values.size());
    for (const auto& c : copies) acc += c.values;
    if (recombine == Recombine::average) acc /= static_cast<double>(copies.size());
    return acc;
  }

  /// Training aggregate for fold `held_out`: the average (gaussian) or sum
  /// (poisson) of the other copies.
  Vector aggregate_without(std::size_t held_out) const {
    Vector acc = Vector::Zero(copies.front().values.size());
    for (std::size_t j = 0; j < copies.size(); ++j)
      if (j != held_out) acc += copies[j].values;
    if (recombine == Recombine::average) acc /= static_cast<double>(copies.size() - 1);
    return acc;
  }
};

struct FissionPair {
  NodeSignal y_sel;
  NodeSignal y_inf;
  double sigma0 = 0.0;

  Vector noise() const { return y_sel.values - y_inf.values; }
};

namespace detail {
inline void require_copies(int m) {
  if (m < 2) throw std::invalid_argument("number of copies must be >= 2, got " + std::to_string(m));
}
}  // namespace detail

/// Per node i, copy j = y_i + sqrt(m) (w_j - mean(w)) with w_j iid N(0, sigma^2),
/// which has covariance sigma^2 (m I - J) across copies.
inline ThinnedFamily thin_gaussian(const NodeSignal& y, double sigma, int m, std::uint64_t seed) {
  if (y.kind != SignalKind::continuous)
    throw std::invalid_argument("gaussian thinning needs a continuous signal");
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
  detail::require_copies(m);
  const auto n = y.values.size();
  ThinnedFamily fam;
  fam.family = ThinFamily::gaussian;
  fam.sigma = sigma;
  fam.weights.assign(static_cast<std::size_t>(m), 1.0 / m);
  fam.recombine = Recombine::average;
  fam.copies.assign(static_cast<std::size_t>(m), NodeSignal{Vector(n), SignalKind::continuous});
  const double scale = std::sqrt(static_cast<double>(m));
  std::vector<double> w(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < n; ++i) {
    Rng rng = substream(seed, stream::thin_gaussian, static_cast<std::uint64_t>(i));
    std::normal_distribution<double> normal(0.0, sigma);
    for (auto& wj : w) wj = normal(rng);
    const double mean = std::accumulate(w.begin(), w.end(), 0.0) / m;
    for (int j = 0; j < m; ++j)
      fam.copies[static_cast<std::size_t>(j)].values[i] = y.values[i] + scale * (w[static_cast<std::size_t>(j)] - mean);
  }
  return fam;
}

/// Sequential scheme for Y ~ N(mu, Sigma). With r copies still to produce
/// from a running remainder V (mean mu, covariance (m/r) Sigma), draw
/// X ~ N(V, (r-1)(m/r) Sigma) and continue with (r V - X)/(r - 1). The last
/// copy is the final remainder.
inline ThinnedFamily thin_gaussian_correlated(const NodeSignal& y, const Matrix& sigma_matrix, int m,
                                              std::uint64_t seed) {
  if (y.kind != SignalKind::continuous)
    throw std::invalid_argument("gaussian thinning needs a continuous signal");
  detail::require_copies(m);
  const auto n = y.values.size();
  if (sigma_matrix.rows() != n || sigma_matrix.cols() != n)
    throw std::invalid_argument("covariance must be n x n");
  if ((sigma_matrix - sigma_matrix.transpose()).cwiseAbs().maxCoeff() >
      1e-12 * std::max(1.0, sigma_matrix.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("covariance is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sigma_matrix);
  const double top = std::max(eig.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
  if (eig.eigenvalues().minCoeff() < -1e-10 * top)
    throw std::invalid_argument("covariance is not positive semidefinite");
  const Matrix root =
      eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();

  ThinnedFamily fam;
  fam.family = ThinFamily::gaussian_correlated;
  fam.weights.assign(static_cast<std::size_t>(m), 1.0 / m);
  fam.recombine = Recombine::average;
  Vector remainder = y.values;
  for (int j = 0; j < m - 1; ++j) {
    const double r = static_cast<double>(m - j);
    const double var_scale = (r - 1.0) * static_cast<double>(m) / r;
    Rng rng = substream(seed, stream::thin_correlated, static_cast<std::uint64_t>(j));
    std::normal_distribution<double> normal;
    Vector w(n);
    for (Eigen::Index i = 0; i < n; ++i) w[i] = normal(rng);
    Vector copy = remainder + std::sqrt(var_scale) * (root * w);
    remainder = (r * remainder - copy) / (r - 1.0);
    fam.copies.push_back({std::move(copy), SignalKind::continuous});
  }
  fam.copies.push_back({remainder, SignalKind::continuous});
  return fam;
}

/// Multinomial(y_i, weights) per node. Empty `weights` means equal split.
inline ThinnedFamily thin_poisson(const NodeSignal& y, int m, std::uint64_t seed,
                                  std::vector<double> weights = {}) {
  if (y.kind != SignalKind::count) throw std::invalid_argument("poisson thinning needs a count signal");
  detail::require_copies(m);
  if (weights.empty()) weights.assign(static_cast<std::size_t>(m), 1.0 / m);
  if (weights.size() != static_cast<std::size_t>(m))
    throw std::invalid_argument("weights must have one entry per copy");
  double total = 0.0;
  for (double w : weights) {
    if (!(w > 0.0)) throw std::invalid_argument("weights must be positive");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("weights must sum to 1");
  const auto n = y.values.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double v = y.values[i];
    if (v < 0.0 || v != std::floor(v))
      throw std::invalid_argument("count signal has non-count entry at node " + std::to_string(i));
  }

  ThinnedFamily fam;
  fam.family = ThinFamily::poisson;
  fam.weights = weights;
  fam.recombine = Recombine::sum;
  fam.copies.assign(static_cast<std::size_t>(m), NodeSignal{Vector(n), SignalKind::count});
  for (Eigen::Index i = 0; i < n; ++i) {
    Rng rng = substream(seed, stream::thin_poisson, static_cast<std::uint64_t>(i));
    auto left = static_cast<long long>(y.values[i]);
    double mass_left = 1.0;
    for (int j = 0; j < m; ++j) {
      long long draw = left;
      if (j < m - 1 && left > 0) {
        const double p = std::clamp(weights[static_cast<std::size_t>(j)] / mass_left, 0.0, 1.0);
        std::binomial_distribution<long long> binom(left, p);
        draw = binom(rng);
      }
      fam.copies[static_cast<std::size_t>(j)].values[i] = static_cast<double>(draw);
      left -= draw;
      mass_left -= weights[static_cast<std::size_t>(j)];
    }
  }
  return fam;
}

/// y_sel = y + z with z iid N(0, sigma0^2); y_inf = y.
inline FissionPair fission_gaussian(const NodeSignal& y, double sigma0, std::uint64_t seed) {
  if (y.kind != SignalKind::continuous)
    throw std::invalid_argument("gaussian fission needs a continuous signal");
  if (!(sigma0 > 0.0)) throw std::invalid_argument("sigma0 must be positive");
  const auto n = y.values.size();
  Vector z(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Rng rng = substream(seed, stream::fission, static_cast<std::uint64_t>(i));
    z[i] = std::normal_distribution<double>(0.0, sigma0)(rng);
  }
  return {{y.values + z, SignalKind::continuous}, y, sigma0};
}

}  // namespace graphfission
