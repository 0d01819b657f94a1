#pragma once

/// Choosing lambda by cross-validation.
///
/// graph_cv thins the signal into m copies and, for each fold j, fits on the
/// other m - 1 copies and scores on copy j. ordinary_cv is the baseline that
/// holds out random nodes and predicts them from adjacent training nodes.

#include "graphfission/random.hpp"
#include "graphfission/thinning.hpp"
#include "graphfission/trend_filter.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

namespace graphfission {

enum class CvMethod { graph_cv, ordinary_cv };

inline const char* to_string(CvMethod m) { return m == CvMethod::graph_cv ? "graph_cv" : "ordinary_cv"; }

struct CvReport {
  std::vector<double> lambda_grid;  // descending
  Matrix fold_errors;               // folds x grid
  Vector mean_error;
  Vector se_error;
  double lambda_min = 0.0;
  double lambda_1se = 0.0;
  std::size_t index_min = 0;
  std::size_t index_1se = 0;
  CvMethod method = CvMethod::graph_cv;
  double sigma_hat = 0.0;  // thinning scale (graph_cv, gaussian)
};

struct CvSettings {
  ThinFamily family = ThinFamily::gaussian;
  int folds = 5;
  int order = 0;
  PenaltyForm form = PenaltyForm::l1;
  double elastic_ratio = 1.0;        // elastic: lambda2 = elastic_ratio * lambda
  std::vector<double> lambda_grid;   // empty: default_lambda_grid(n)
  std::optional<double> sigma;       // gaussian: noise sd; estimated when absent
  SolverOptions solver{};
  std::uint64_t seed = 0;
};

/// 50 log-spaced values from 1e2 down to 1e-3, times sqrt(log n / n).
inline std::vector<double> default_lambda_grid(std::size_t n, int count = 50) {
  const double nn = static_cast<double>(std::max<std::size_t>(n, 2));
  const double base = std::sqrt(std::log(nn) / nn);
  std::vector<double> grid(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const double t = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
    grid[static_cast<std::size_t>(i)] = base * std::pow(10.0, 2.0 - 5.0 * t);
  }
  return grid;
}

/// Penalised fit for a given penalty form. Poisson loss supports l1 only.
inline TrendFit fit_trend(const Graph& graph, const NodeSignal& y, int k, PenaltyForm form,
                          double lambda, double lambda2, Loss loss, const SolverOptions& opts = {},
                          const AdmmState* warm = nullptr, const LaplacianSpectrum* spectrum = nullptr) {
  if (loss == Loss::poisson) {
    if (form != PenaltyForm::l1) throw std::invalid_argument("poisson loss supports the l1 penalty only");
    return solve_poisson_l1(graph, y, k, lambda, opts, warm, spectrum);
  }
  switch (form) {
    case PenaltyForm::l1: return solve_l1(graph, y, k, lambda, opts, warm, spectrum);
    case PenaltyForm::l2: return solve_l2(graph, y, k, lambda, opts);
    case PenaltyForm::elastic: return solve_elastic(graph, y, k, lambda, lambda2, opts, warm, spectrum);
  }
  throw std::invalid_argument("unknown penalty form");
}

namespace detail {

inline void check_grid(const std::vector<double>& grid) {
  if (grid.empty()) throw std::invalid_argument("lambda grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0)) throw std::invalid_argument("lambda grid values must be >= 0");
    if (i > 0 && !(grid[i] < grid[i - 1])) throw std::invalid_argument("lambda grid must be strictly descending");
  }
}

/// Mean Poisson deviance; 0 log 0 = 0.
inline double poisson_deviance(const Vector& y, const Vector& mean) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double m = std::max(mean[i], 1e-300);
    acc += (y[i] > 0.0 ? y[i] * std::log(y[i] / m) : 0.0) - (y[i] - m);
  }
  return 2.0 * acc / static_cast<double>(y.size());
}

/// Fits along the (descending) grid with warm starts.
template <typename Score>
void sweep_grid(const Graph& graph, const NodeSignal& train, const CvSettings& s, Loss loss,
                const std::vector<double>& grid, Score&& score) {
  SolverOptions opts = s.solver;
  opts.compute_df = false;
  opts.record_objective = false;
  std::optional<AdmmState> warm;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const TrendFit fit = fit_trend(graph, train, s.order, s.form, grid[g], s.elastic_ratio * grid[g], loss,
                                   opts, warm ? &*warm : nullptr);
    if (fit.state.z.size() > 0) warm = fit.state;
    score(g, fit.beta);
  }
}

inline void summarize(CvReport& r) {
  const auto m = r.fold_errors.rows();
  r.mean_error = r.fold_errors.colwise().mean().transpose();
  r.se_error.resize(r.mean_error.size());
  for (Eigen::Index g = 0; g < r.mean_error.size(); ++g) {
    const double var = m > 1 ? (r.fold_errors.col(g).array() - r.mean_error[g]).square().sum() / (m - 1) : 0.0;
    r.se_error[g] = std::sqrt(var / static_cast<double>(m));
  }
  Eigen::Index best = 0;
  for (Eigen::Index g = 1; g < r.mean_error.size(); ++g)
    if (r.mean_error[g] < r.mean_error[best]) best = g;
  const double cutoff = r.mean_error[best] + r.se_error[best];
  Eigen::Index one_se = best;
  // Grid is descending, so the first admissible entry is the largest lambda.
  for (Eigen::Index g = 0; g <= best; ++g)
    if (r.mean_error[g] <= cutoff) {
      one_se = g;
      break;
    }
  r.index_min = static_cast<std::size_t>(best);
  r.index_1se = static_cast<std::size_t>(one_se);
  r.lambda_min = r.lambda_grid[r.index_min];
  r.lambda_1se = r.lambda_grid[r.index_1se];
}

}  // namespace detail

/// Noise scale from a single L1 fit at lambda = sqrt(log n / n):
/// sqrt(|y - beta|^2 / (n - df)).
inline double estimate_sigma_fixed_lambda(const Graph& graph, const NodeSignal& y, int k,
                                          const SolverOptions& opts = {}) {
  if (y.kind != SignalKind::continuous) throw std::invalid_argument("sigma estimate needs a continuous signal");
  const auto n = static_cast<double>(graph.node_count());
  const double lambda = std::sqrt(std::log(std::max(n, 2.0)) / n);
  SolverOptions o = opts;
  o.compute_df = true;
  const TrendFit fit = solve_l1(graph, y, k, lambda, o);
  if (static_cast<double>(fit.df) >= n)
    throw std::runtime_error("sigma estimate undefined: degrees of freedom reach the node count");
  return std::sqrt((y.values - fit.beta).squaredNorm() / (n - fit.df));
}

inline CvReport graph_cv(const Graph& graph, const NodeSignal& y, const CvSettings& s) {
  validate_signal(y, graph);
  if (s.folds < 2) throw std::invalid_argument("graph cv needs at least 2 folds");
  CvReport report;
  report.method = CvMethod::graph_cv;
  report.lambda_grid = s.lambda_grid.empty() ? default_lambda_grid(graph.node_count()) : s.lambda_grid;
  detail::check_grid(report.lambda_grid);
  const auto grid_size = static_cast<Eigen::Index>(report.lambda_grid.size());
  report.fold_errors = Matrix::Zero(s.folds, grid_size);

  ThinnedFamily family;
  Loss loss = Loss::square;
  if (s.family == ThinFamily::poisson) {
    family = thin_poisson(y, s.folds, s.seed);
    loss = Loss::poisson;
  } else if (s.family == ThinFamily::gaussian) {
    double sigma = s.sigma ? *s.sigma : estimate_sigma_fixed_lambda(graph, y, s.order, s.solver);
    report.sigma_hat = sigma;
    // Exact signals still need a valid thinning scale.
    sigma = std::max(sigma, 1e-12 * std::max(1.0, y.values.cwiseAbs().maxCoeff()));
    family = thin_gaussian(y, sigma, s.folds, s.seed);
  } else {
    throw std::invalid_argument("graph cv supports the gaussian and poisson families");
  }

  const double m = static_cast<double>(s.folds);
  for (int j = 0; j < s.folds; ++j) {
    const NodeSignal train{family.aggregate_without(static_cast<std::size_t>(j)), y.kind};
    const Vector& test = family.copies[static_cast<std::size_t>(j)].values;
    detail::sweep_grid(graph, train, s, loss, report.lambda_grid, [&](std::size_t g, const Vector& beta) {
      double err;
      if (loss == Loss::poisson) {
        // Train sums m - 1 copies and the test copy carries 1/m of the rate;
        // both are brought back to the scale of y.
        const Vector rate = beta.array().exp().matrix() * (m / (m - 1.0));
        err = detail::poisson_deviance(test * m, rate);
      } else {
        err = (test - beta).squaredNorm() / static_cast<double>(test.size());
      }
      report.fold_errors(j, static_cast<Eigen::Index>(g)) = err;
    });
  }
  detail::summarize(report);
  return report;
}

/// Random assignment of nodes to m folds of near-equal size.
inline std::vector<int> random_node_folds(std::size_t n, int m, std::uint64_t seed) {
  if (m < 2) throw std::invalid_argument("ordinary cv needs at least 2 folds");
  if (static_cast<std::size_t>(m) > n) throw std::invalid_argument("more folds than nodes");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = substream(seed, stream::cv_folds);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> fold(n);
  for (std::size_t t = 0; t < n; ++t) fold[order[t]] = static_cast<int>(t % static_cast<std::size_t>(m));
  return fold;
}

/// Held-out node prediction: mean of the fitted values at adjacent training
/// nodes, or the mean training fit when no neighbour is in training.
inline CvReport ordinary_cv(const Graph& graph, const NodeSignal& y, const CvSettings& s) {
  validate_signal(y, graph);
  if (y.kind != SignalKind::continuous) throw std::invalid_argument("ordinary cv needs a continuous signal");
  CvReport report;
  report.method = CvMethod::ordinary_cv;
  report.lambda_grid = s.lambda_grid.empty() ? default_lambda_grid(graph.node_count()) : s.lambda_grid;
  detail::check_grid(report.lambda_grid);
  report.fold_errors = Matrix::Zero(s.folds, static_cast<Eigen::Index>(report.lambda_grid.size()));
  const auto n = graph.node_count();
  const std::vector<int> fold = random_node_folds(n, s.folds, s.seed);

  for (int j = 0; j < s.folds; ++j) {
    std::vector<std::size_t> train_nodes, test_nodes;
    std::vector<long> position(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
      if (fold[i] == j) {
        test_nodes.push_back(i);
      } else {
        position[i] = static_cast<long>(train_nodes.size());
        train_nodes.push_back(i);
      }
    }
    const Graph sub = induced_subgraph(graph, train_nodes);
    Vector train_y(static_cast<Eigen::Index>(train_nodes.size()));
    for (std::size_t t = 0; t < train_nodes.size(); ++t)
      train_y[static_cast<Eigen::Index>(t)] = y.values[static_cast<Eigen::Index>(train_nodes[t])];
    detail::sweep_grid(sub, NodeSignal{train_y, SignalKind::continuous}, s, Loss::square, report.lambda_grid,
                       [&](std::size_t g, const Vector& beta) {
                         const double fallback = beta.mean();
                         double acc = 0.0;
                         for (auto i : test_nodes) {
                           double sum = 0.0;
                           int count = 0;
                           for (auto nb : graph.neighbors(i))
                             if (position[nb] >= 0) {
                               sum += beta[position[nb]];
                               ++count;
                             }
                           const double pred = count ? sum / count : fallback;
                           const double r = y.values[static_cast<Eigen::Index>(i)] - pred;
                           acc += r * r;
                         }
                         report.fold_errors(j, static_cast<Eigen::Index>(g)) =
                             acc / static_cast<double>(test_nodes.size());
                       });
  }
  detail::summarize(report);
  return report;
}

}  // namespace graphfission
