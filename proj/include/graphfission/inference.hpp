#pragma once

/// Post-selection inference after Gaussian fission (y_sel = y + z) and for
/// Poisson-thinned counts.
///
/// With tau = sigma^2 / (sigma^2 + sigma0^2), the statistic
///   f(tau) = (eta^T y - tau eta^T y_sel) / (1 - tau)
/// is normal given y_sel with mean eta^T mu and sd sigma |eta| / sqrt(1 - tau).
/// When sigma is only known to lie in [sigma_low, sigma_high], f is evaluated
/// at both ends and the interval is widened with the sigma_high scale.

#include "graphfission/basis.hpp"
#include "graphfission/cross_validation.hpp"
#include "graphfission/thinning.hpp"
#include "graphfission/trend_filter.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>

namespace graphfission {

/// Inverse standard normal CDF. Acklam's rational approximation followed by
/// one Halley step against erfc, giving ~1e-15 relative accuracy.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("probability must be in (0, 1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
  return x - u / (1.0 + x * u / 2.0);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// z_{alpha/2}: upper alpha/2 point of N(0, 1).
inline double two_sided_critical(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must be in (0, 1)");
  return normal_quantile(1.0 - alpha / 2.0);
}

inline double information_fraction(double sigma, double sigma0) {
  if (!(sigma0 > 0.0)) throw std::invalid_argument("sigma0 must be positive");
  if (!(sigma >= 0.0)) throw std::invalid_argument("sigma must be nonnegative");
  return sigma * sigma / (sigma * sigma + sigma0 * sigma0);
}

/// (eta^T y - tau eta^T y_sel) / (1 - tau).
inline double recentered_statistic(const Vector& y, const Vector& y_sel, const Vector& eta, double tau) {
  return (eta.dot(y) - tau * eta.dot(y_sel)) / (1.0 - tau);
}

/// Standardised pivot. Without `eta_mu` the centred statistic is returned
/// (the caller subtracts a hypothesised eta^T mu scaled the same way).
inline double pivot(const Vector& y, const Vector& y_sel, const Vector& eta, double sigma, double sigma0,
                    std::optional<double> eta_mu = std::nullopt) {
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
  const double norm = eta.norm();
  if (!(norm > 0.0)) throw std::invalid_argument("contrast vector is zero");
  const double tau = information_fraction(sigma, sigma0);
  const double stat = recentered_statistic(y, y_sel, eta, tau) - eta_mu.value_or(0.0);
  return std::sqrt(1.0 - tau) / (sigma * norm) * stat;
}

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
  double center = 0.0;
  double half_width = 0.0;
  double tau = 0.0;

  double length() const { return upper - lower; }
  bool contains(double v) const { return lower <= v && v <= upper; }
};

inline Interval naive_ci(const Vector& y, const Vector& y_sel, const Vector& eta, double sigma_hat, double sigma0,
                         double alpha) {
  const double z = two_sided_critical(alpha);
  Interval out;
  out.tau = information_fraction(sigma_hat, sigma0);
  out.center = recentered_statistic(y, y_sel, eta, out.tau);
  out.half_width = z * eta.norm() * sigma_hat / std::sqrt(1.0 - out.tau);
  out.lower = out.center - out.half_width;
  out.upper = out.center + out.half_width;
  return out;
}

enum class SigmaMethod { cv_one_se, post_selection_ols, zero, sample_sd, supplied };

inline const char* to_string(SigmaMethod m) {
  switch (m) {
    case SigmaMethod::cv_one_se: return "cv_one_se";
    case SigmaMethod::post_selection_ols: return "post_selection_ols";
    case SigmaMethod::zero: return "zero";
    case SigmaMethod::sample_sd: return "sample_sd";
    case SigmaMethod::supplied: return "supplied";
  }
  return "?";
}

struct SigmaBounds {
  double sigma_low = 0.0;
  double sigma_high = 0.0;
  SigmaMethod low_method = SigmaMethod::supplied;
  SigmaMethod high_method = SigmaMethod::supplied;
  bool swapped = false;     // estimates came out in the wrong order
  bool degenerate = false;  // both zero

  static SigmaBounds fixed(double low, double high) {
    if (!(low >= 0.0) || !(high >= low)) throw std::invalid_argument("sigma bounds need 0 <= low <= high");
    SigmaBounds b;
    b.sigma_low = low;
    b.sigma_high = high;
    b.degenerate = high == 0.0;
    return b;
  }
};

struct RobustInterval {
  std::size_t coordinate = 0;
  Vector eta;
  double a1 = 0.0;
  double a2 = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double alpha = 0.1;
  double tau_low = 0.0;
  double tau_high = 0.0;
  double z_crit = 0.0;

  double length() const { return upper - lower; }
  bool contains(double v) const { return lower <= v && v <= upper; }
};

inline RobustInterval robust_ci(const Vector& y, const Vector& y_sel, const Vector& eta, const SigmaBounds& bounds,
                                double sigma0, double alpha, std::size_t coordinate = 0) {
  if (!(bounds.sigma_low >= 0.0) || bounds.sigma_low > bounds.sigma_high)
    throw std::invalid_argument("sigma bounds violated: low > high");
  RobustInterval out;
  out.coordinate = coordinate;
  out.eta = eta;
  out.alpha = alpha;
  out.z_crit = two_sided_critical(alpha);
  out.tau_low = information_fraction(bounds.sigma_low, sigma0);
  out.tau_high = information_fraction(bounds.sigma_high, sigma0);
  const double f_low = recentered_statistic(y, y_sel, eta, out.tau_low);
  const double f_high = recentered_statistic(y, y_sel, eta, out.tau_high);
  out.a1 = std::min(f_low, f_high);
  out.a2 = std::max(f_low, f_high);
  const double w = out.z_crit * eta.norm() * bounds.sigma_high / std::sqrt(1.0 - out.tau_high);
  out.lower = out.a1 - w;
  out.upper = out.a2 + w;
  return out;
}

/// Limiting |A2 - A1| stated for shrinking contrasts:
/// eta^T mu * (d / sigma^2 + d / sigma0^2 - d / (sigma^2 + sigma0^2)), d = sigma_high^2 - sigma_low^2.
inline double ci_length_limit(double eta_mu, double sigma, double sigma_low, double sigma_high, double sigma0) {
  if (!(sigma > 0.0) || !(sigma0 > 0.0)) throw std::invalid_argument("sigma and sigma0 must be positive");
  const double d = sigma_high * sigma_high - sigma_low * sigma_low;
  const double s2 = sigma * sigma;
  const double s02 = sigma0 * sigma0;
  return eta_mu * (d / s2 + d / s02 - d / (s2 + s02));
}

enum class BoundsMode { recipe, fallback };

struct SigmaBoundsSettings {
  BoundsMode mode = BoundsMode::recipe;
  int order = 1;
  int folds = 5;
  std::vector<double> lambda_grid;  // empty: default grid
  std::optional<double> sigma;      // thinning scale for the cv run; estimated when absent
  SolverOptions solver{};
  std::uint64_t seed = 0;
  const LaplacianSpectrum* spectrum = nullptr;
};

/// Bracketing estimates of the noise sd of `y`.
///
/// recipe: graph cv on y. The high estimate is the fixed-lambda residual
/// formula at the one-SE lambda; the low estimate is the residual standard
/// error of regressing y on the basis extracted from the lambda_min fit.
/// fallback: low = 0, high = sample sd.
inline SigmaBounds estimate_sigma_bounds(const Graph& graph, const NodeSignal& y, const SigmaBoundsSettings& s) {
  validate_signal(y, graph);
  if (y.kind != SignalKind::continuous) throw std::invalid_argument("sigma bounds need a continuous signal");
  const auto n = static_cast<double>(y.values.size());
  SigmaBounds out;
  if (s.mode == BoundsMode::fallback) {
    if (n < 2) throw std::invalid_argument("sample sd needs at least two nodes");
    out.low_method = SigmaMethod::zero;
    out.high_method = SigmaMethod::sample_sd;
    out.sigma_low = 0.0;
    out.sigma_high = std::sqrt((y.values.array() - y.values.mean()).square().sum() / (n - 1));
    out.degenerate = out.sigma_high == 0.0;
    return out;
  }
  out.low_method = SigmaMethod::post_selection_ols;
  out.high_method = SigmaMethod::cv_one_se;
  if ((y.values.array() == y.values[0]).all()) {
    out.degenerate = true;
    return out;
  }

  CvSettings cv;
  cv.family = ThinFamily::gaussian;
  cv.folds = s.folds;
  cv.order = s.order;
  cv.lambda_grid = s.lambda_grid;
  cv.sigma = s.sigma;
  cv.solver = s.solver;
  cv.seed = s.seed;
  const CvReport report = graph_cv(graph, y, cv);
  if (report.sigma_hat == 0.0) {
    out.degenerate = true;
    return out;
  }

  SolverOptions opts = s.solver;
  opts.compute_df = true;
  const TrendFit high_fit = solve_l1(graph, y, s.order, report.lambda_1se, opts, nullptr, s.spectrum);
  if (static_cast<double>(high_fit.df) >= n) throw std::runtime_error("sigma bound undefined: df reaches n");
  out.sigma_high = std::sqrt((y.values - high_fit.beta).squaredNorm() / (n - high_fit.df));

  const TrendFit low_fit = solve_l1(graph, y, s.order, report.lambda_min, opts, nullptr, s.spectrum);
  const SelectedBasis basis = construct_basis(low_fit.beta, graph, s.order, s.spectrum);
  const auto p = static_cast<double>(basis.cols());
  if (p >= n) throw std::runtime_error("sigma bound undefined: basis spans all nodes");
  const Projection proj = project_onto_basis(basis, y.values);
  out.sigma_low = std::sqrt((y.values - proj.fitted).squaredNorm() / (n - p));

  if (out.sigma_low > out.sigma_high) {
    std::swap(out.sigma_low, out.sigma_high);
    std::swap(out.low_method, out.high_method);
    out.swapped = true;
  }
  out.degenerate = out.sigma_high == 0.0;
  return out;
}

/// Contrast for coordinate j: row j of the projection onto span(B).
inline Vector projection_contrast(const Matrix& projection, std::size_t j) {
  return projection.row(static_cast<Eigen::Index>(j)).transpose();
}

// ---------------------------------------------------------------------------
// Poisson working model.

/// How the thinning fraction enters the GLM's linear predictor.
/// scaled_natural: eta_i = (1 - tau) b_i^T gamma.
/// log_offset:     eta_i = log(1 - tau) + b_i^T gamma.
enum class GlmOffset { scaled_natural, log_offset };

struct GlmFit {
  Vector gamma_hat;
  Matrix cov_sandwich;
  Matrix basis;
  double tau = 0.5;
  GlmOffset offset = GlmOffset::scaled_natural;
  int iterations = 0;
  double gradient_norm = 0.0;

  Vector linear_predictor() const { return basis * gamma_hat; }
};

namespace detail {

struct GlmTerms {
  double scale;   // d eta / d (b^T gamma)
  double shift;   // additive offset
};

inline GlmTerms glm_terms(double tau, GlmOffset offset) {
  if (offset == GlmOffset::scaled_natural) return {1.0 - tau, 0.0};
  return {1.0, std::log(1.0 - tau)};
}

inline double glm_loglik(const Matrix& b, const Vector& y, const Vector& gamma, const GlmTerms& t) {
  const Vector eta = ((b * gamma) * t.scale).array() + t.shift;
  return y.dot(eta) - eta.array().exp().sum();
}

}  // namespace detail

/// Poisson GLM by damped Newton; sandwich covariance H^-1 M H^-1. `y` may be
/// non-integer (used to compute population targets from expected counts).
inline GlmFit fit_poisson_glm(const Matrix& basis, const Vector& y, double tau,
                              GlmOffset offset = GlmOffset::scaled_natural, int max_iter = 100,
                              double grad_tol = 1e-8) {
  if (basis.rows() != y.size()) throw std::invalid_argument("signal length does not match basis");
  if (!(tau >= 0.0 && tau < 1.0)) throw std::invalid_argument("thinning fraction must be in [0, 1)");
  if ((y.array() < 0.0).any()) throw std::invalid_argument("counts must be nonnegative");
  const double total = y.sum();
  if (!(total > 0.0)) throw std::runtime_error("poisson glm has no finite maximiser: all counts are zero");
  {
    Eigen::ColPivHouseholderQR<Matrix> qr(basis);
    qr.setThreshold(1e-10);
    if (qr.rank() < basis.cols()) throw std::runtime_error("basis is rank deficient");
  }
  const auto t = detail::glm_terms(tau, offset);
  const auto p = basis.cols();

  GlmFit out;
  out.basis = basis;
  out.tau = tau;
  out.offset = offset;
  // Start from the intercept-only solution when possible.
  Vector gamma = Vector::Zero(p);
  {
    const Vector ones = Vector::Ones(basis.rows());
    Eigen::ColPivHouseholderQR<Matrix> qr(basis);
    const Vector coef = qr.solve(ones);
    if ((basis * coef - ones).norm() < 1e-8 * std::sqrt(static_cast<double>(basis.rows())))
      gamma = coef * ((std::log(total / static_cast<double>(y.size())) - t.shift) / t.scale);
  }
  double ll = detail::glm_loglik(basis, y, gamma, t);
  bool converged = false;
  for (int it = 0; it < max_iter; ++it) {
    const Vector mean = (((basis * gamma) * t.scale).array() + t.shift).exp().matrix();
    const Vector grad = t.scale * basis.transpose() * (y - mean);
    out.gradient_norm = grad.cwiseAbs().maxCoeff();
    out.iterations = it;
    if (out.gradient_norm < grad_tol) {
      converged = true;
      break;
    }
    const Matrix hess = t.scale * t.scale * basis.transpose() * mean.asDiagonal() * basis;
    const Vector step = hess.ldlt().solve(grad);
    double size = 1.0;
    bool improved = false;
    for (int h = 0; h < 60; ++h) {
      const Vector cand = gamma + size * step;
      const double cand_ll = detail::glm_loglik(basis, y, cand, t);
      if (std::isfinite(cand_ll) && cand_ll >= ll - 1e-12 * std::abs(ll)) {
        gamma = cand;
        ll = cand_ll;
        improved = true;
        break;
      }
      size /= 2.0;
    }
    if (!improved) break;
  }
  if (!converged) throw std::runtime_error("poisson glm did not converge");
  out.gamma_hat = gamma;

  const Vector mean = (((basis * gamma) * t.scale).array() + t.shift).exp().matrix();
  const Matrix hess = t.scale * t.scale * basis.transpose() * mean.asDiagonal() * basis;
  const Vector r2 = (y - mean).array().square().matrix();
  const Matrix meat = t.scale * t.scale * basis.transpose() * r2.asDiagonal() * basis;
  const Matrix hinv = hess.ldlt().solve(Matrix::Identity(p, p));
  const Matrix sandwich = hinv * meat * hinv;
  out.cov_sandwich = 0.5 * (sandwich + sandwich.transpose());
  return out;
}

/// Wald intervals for each coefficient.
inline std::vector<Interval> coefficient_intervals(const GlmFit& fit, double alpha) {
  const double z = two_sided_critical(alpha);
  std::vector<Interval> out;
  for (Eigen::Index j = 0; j < fit.gamma_hat.size(); ++j) {
    Interval iv;
    iv.center = fit.gamma_hat[j];
    iv.half_width = z * std::sqrt(std::max(0.0, fit.cov_sandwich(j, j)));
    iv.lower = iv.center - iv.half_width;
    iv.upper = iv.center + iv.half_width;
    out.push_back(iv);
  }
  return out;
}

/// Wald intervals for each node's b_i^T gamma.
inline std::vector<Interval> node_intervals(const GlmFit& fit, double alpha) {
  const double z = two_sided_critical(alpha);
  const Matrix bc = fit.basis * fit.cov_sandwich;
  std::vector<Interval> out;
  for (Eigen::Index i = 0; i < fit.basis.rows(); ++i) {
    Interval iv;
    iv.center = fit.basis.row(i).dot(fit.gamma_hat);
    iv.half_width = z * std::sqrt(std::max(0.0, bc.row(i).dot(fit.basis.row(i))));
    iv.lower = iv.center - iv.half_width;
    iv.upper = iv.center + iv.half_width;
    out.push_back(iv);
  }
  return out;
}

struct PoissonInference {
  NodeSignal y_sel;
  NodeSignal y_inf;
  TrendFit selection_fit;
  SelectedBasis basis;
  GlmFit glm;
  std::vector<Interval> coefficients;
  std::vector<Interval> nodes;
};

struct PoissonPipelineSettings {
  int order = 0;
  double lambda = 0.0;
  double alpha = 0.2;
  GlmOffset offset = GlmOffset::scaled_natural;
  SolverOptions solver{};
  std::uint64_t seed = 0;
  const LaplacianSpectrum* spectrum = nullptr;
};

/// Equal two-way Poisson split; select on one half, infer on the other.
inline PoissonInference poisson_ci_pipeline(const Graph& graph, const NodeSignal& y,
                                            const PoissonPipelineSettings& s) {
  validate_signal(y, graph);
  if (y.kind != SignalKind::count) throw std::invalid_argument("poisson pipeline needs a count signal");
  const ThinnedFamily halves = thin_poisson(y, 2, s.seed);
  PoissonInference out;
  out.y_sel = halves.copies[0];
  out.y_inf = halves.copies[1];
  SolverOptions opts = s.solver;
  opts.compute_df = false;
  out.selection_fit = solve_poisson_l1(graph, out.y_sel, s.order, s.lambda, opts, nullptr, s.spectrum);
  out.basis = construct_basis(out.selection_fit.beta, graph, s.order, s.spectrum);
  out.glm = fit_poisson_glm(out.basis.matrix, out.y_inf.values, 0.5, s.offset);
  out.coefficients = coefficient_intervals(out.glm, s.alpha);
  out.nodes = node_intervals(out.glm, s.alpha);
  return out;
}

}  // namespace graphfission
