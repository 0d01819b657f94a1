#include "graphfission/cross_validation.hpp"
#include "graphfission/trend_filter.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace graphfission;

namespace {

NodeSignal noisy(const Vector& mu, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, sigma);
  Vector y = mu;
  for (auto& v : y) v += nd(rng);
  return {y, SignalKind::continuous};
}

// Piecewise constant on a 10 x 10 grid: left half, top-right, bottom-right.
Vector blocks(const Graph& g) {
  Vector mu(static_cast<Eigen::Index>(g.node_count()));
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    const double r = g.coords()[i][0], c = g.coords()[i][1];
    mu[static_cast<Eigen::Index>(i)] = c < 5 ? 0.0 : (r < 5 ? 3.0 : -2.0);
  }
  return mu;
}

NodeSignal poisson_draw(const Vector& rate, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  NodeSignal y{Vector(rate.size()), SignalKind::count};
  for (Eigen::Index i = 0; i < rate.size(); ++i) y.values[i] = std::poisson_distribution<int>(rate[i])(rng);
  return y;
}

SolverOptions tight() {
  SolverOptions o;
  o.tol = 1e-8;
  return o;
}

}  // namespace

TEST(SolveL2, ZeroLambdaIsIdentity) {
  const Graph g = grid_graph(4, 4);
  const NodeSignal y = noisy(Vector::Zero(16), 1.0, 1);
  EXPECT_LT((solve_l2(g, y, 0, 0.0).beta - y.values).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(SolveL2, HugeLambdaGivesMean) {
  const Graph g = grid_graph(5, 5);
  const NodeSignal y = noisy(Vector::LinSpaced(25, 0, 3), 1.0, 2);
  const Vector b = solve_l2(g, y, 0, 1e6).beta;
  EXPECT_LT((b.array() - y.values.mean()).abs().maxCoeff(), 1e-3);
}

TEST(SolveL2, MatchesDenseSolve) {
  const Graph p = path_graph(3);
  NodeSignal y{(Vector(3) << 1.0, -2.0, 0.5).finished(), SignalKind::continuous};
  const Matrix d = oracle::dense_incidence(p);
  const Vector want = (Matrix::Identity(3, 3) + 3 * 0.1 * d.transpose() * d).ldlt().solve(y.values);
  EXPECT_LT((solve_l2(p, y, 0, 0.1).beta - want).cwiseAbs().maxCoeff(), 1e-10);

  for (std::uint64_t s = 0; s < 20; ++s) {
    const Graph g = oracle::random_connected_graph(30, 20, s);
    const int k = static_cast<int>(s % 4);
    const double lam = 0.01 * static_cast<double>(s + 1);
    const NodeSignal z = noisy(Vector::Zero(30), 1.0, s + 50);
    const Matrix dk = oracle::dense_difference(g, k);
    const Vector ref = (Matrix::Identity(30, 30) + 30 * lam * dk.transpose() * dk).fullPivLu().solve(z.values);
    EXPECT_LT((solve_l2(g, z, k, lam).beta - ref).cwiseAbs().maxCoeff(), 1e-8) << "seed " << s;
  }
}

TEST(SolveL1, ZeroLambdaIsIdentity) {
  const Graph g = grid_graph(4, 4);
  const NodeSignal y = noisy(Vector::Zero(16), 1.0, 3);
  const TrendFit f = solve_l1(g, y, 1, 0.0);
  EXPECT_EQ(f.beta, y.values);
  EXPECT_EQ(kkt_residual(g, y.values, 1, 0.0, f.beta), 0.0);
}

TEST(SolveL1, HugeLambdaIsConstantPerComponent) {
  const Graph g(8, {{0, 1}, {1, 2}, {2, 3}, {4, 5}, {5, 6}, {6, 7}});
  const NodeSignal y = noisy(Vector::LinSpaced(8, -2, 5), 1.0, 4);
  const TrendFit f = solve_l1(g, y, 0, 1e6);
  EXPECT_EQ(f.status, SolverStatus::converged);
  EXPECT_LT((oracle::dense_incidence(g) * f.beta).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_NEAR(f.beta[0], y.values.head(4).mean(), 1e-4);
  EXPECT_NEAR(f.beta[7], y.values.tail(4).mean(), 1e-4);
}

TEST(SolveL1, GridOptimalityAndPerturbations) {
  const Graph g = grid_graph(10, 10);
  const Vector mu = blocks(g);
  const NodeSignal y = noisy(mu, 1.0, 5);
  CvSettings cs;
  cs.lambda_grid = default_lambda_grid(100, 15);
  cs.seed = 3;
  const double lam = graph_cv(g, y, cs).lambda_min;
  const TrendFit f = solve_l1(g, y, 0, lam, tight());
  ASSERT_EQ(f.status, SolverStatus::converged);
  EXPECT_LT(f.kkt_residual, 1e-5);
  EXPECT_LT(kkt_residual(g, y.values, 0, lam, f.beta), 1e-5);
  const SparseMatrix d = difference_operator(g, 0).matrix;
  const PenaltySpec pen = PenaltySpec::l1(0, lam);
  const double best = objective_value(y.values, f.beta, d, pen, Loss::square);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd(0.0, 1e-2);
  for (int rep = 0; rep < 100; ++rep) {
    Vector b = f.beta;
    for (auto& v : b) v += nd(rng);
    EXPECT_GE(objective_value(y.values, b, d, pen, Loss::square), best);
    if (rep < 10) EXPECT_GT(kkt_residual(g, y.values, 0, lam, b), f.kkt_residual);
  }
}

TEST(SolveL1, KktSmallAcrossOrders) {
  const Graph g = grid_graph(8, 8);
  for (int k = 0; k <= 3; ++k) {
    for (double lam : {0.002, 0.02, 0.2}) {
      const NodeSignal y = noisy(Vector::LinSpaced(64, 0, 2), 0.5, 10 + k);
      const TrendFit f = solve_l1(g, y, k, lam, tight());
      if (f.status == SolverStatus::converged) {
        EXPECT_LT(f.kkt_residual, 1e-5) << "k=" << k << " lambda=" << lam;
      }
      EXPECT_LT(kkt_residual(g, y.values, k, lam, f.beta), 1e-5) << "k=" << k << " lambda=" << lam;
    }
  }
}

TEST(SolveL1, MatchesDualOracle) {
  const Graph g = path_graph(12);
  const NodeSignal y = noisy((Vector(12) << 0, 0, 0, 0, 3, 3, 3, 3, 1, 1, 1, 1).finished(), 0.5, 6);
  for (int k : {0, 1}) {
    const Matrix d = oracle::dense_difference(g, k);
    const Vector want = oracle::dual_projected_gradient(d, y.values, 0.05, 0.0, 2000000);
    EXPECT_LT((solve_l1(g, y, k, 0.05, tight()).beta - want).cwiseAbs().maxCoeff(), 1e-5) << "k=" << k;
  }
}

TEST(SolveL1, ScalingHomogeneity) {
  const Graph g = grid_graph(6, 6);
  const NodeSignal y = noisy(blocks(grid_graph(10, 10)).head(36), 1.0, 7);
  SolverOptions o;
  o.tol = 1e-10;
  for (int k : {0, 1}) {
    const Vector base = solve_l1(g, y, k, 0.05, o).beta;
    for (double c : {0.5, 3.0, 40.0}) {
      const NodeSignal cy{c * y.values, SignalKind::continuous};
      const Vector scaled = solve_l1(g, cy, k, 0.05 * c, o).beta;
      EXPECT_LT((scaled - c * base).cwiseAbs().maxCoeff(), 1e-8 * std::max(1.0, c)) << "k=" << k << " c=" << c;
    }
  }
}

TEST(SolveL1, WarmStartDoesNotChangeSolution) {
  const Graph g = grid_graph(8, 8);
  const NodeSignal y = noisy(blocks(grid_graph(10, 10)).head(64), 1.0, 8);
  SolverOptions o;
  o.tol = 1e-8;
  const TrendFit other = solve_l1(g, y, 0, 0.3, o);
  const TrendFit cold = solve_l1(g, y, 0, 0.03, o);
  const TrendFit warm = solve_l1(g, y, 0, 0.03, o, &other.state);
  EXPECT_LT((cold.beta - warm.beta).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(SolveL1, ObjectiveTraceNonIncreasingAfterBurnIn) {
  const Graph g = grid_graph(8, 8);
  const NodeSignal y = noisy(Vector::LinSpaced(64, 0, 4), 1.0, 9);
  SolverOptions o;
  o.record_objective = true;
  for (int k : {0, 1, 2}) {
    const TrendFit f = solve_l1(g, y, k, 0.05, o);
    ASSERT_GT(f.objective_trace.size(), 10u);
    for (std::size_t t = 11; t < f.objective_trace.size(); ++t)
      EXPECT_LE(f.objective_trace[t], f.objective_trace[t - 1] + 1e-10);
  }
}

TEST(SolveL1, NonConvergenceIsReported) {
  const Graph g = grid_graph(8, 8);
  const NodeSignal y = noisy(Vector::Zero(64), 1.0, 10);
  SolverOptions o;
  o.max_iter = 2;
  o.polish = false;
  o.tol = 1e-14;
  const TrendFit f = solve_l1(g, y, 0, 0.05, o);
  EXPECT_EQ(f.status, SolverStatus::max_iterations);
  EXPECT_GT(f.primal_residual + f.dual_residual, 0.0);
}

TEST(SolveL1, RejectsBadInput) {
  const Graph g = path_graph(3);
  EXPECT_THROW(solve_l1(g, {Vector::Zero(4), SignalKind::continuous}, 0, 0.1), std::invalid_argument);
  EXPECT_THROW(solve_l1(g, {Vector::Zero(3), SignalKind::continuous}, 0, -0.1), std::invalid_argument);
  EXPECT_THROW(solve_l1(g, {Vector::Zero(3), SignalKind::continuous}, -1, 0.1), std::invalid_argument);
}

TEST(KktResidual, PerturbationIncreasesResidual) {
  const Graph g = path_graph(20);
  const NodeSignal y = noisy(Vector::LinSpaced(20, 0, 1), 0.3, 11);
  const TrendFit f = solve_l1(g, y, 0, 0.02, tight());
  const double base = kkt_residual(g, y.values, 0, 0.02, f.beta);
  EXPECT_LT(base, 1e-5);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd(0.0, 1e-2);
  for (int rep = 0; rep < 20; ++rep) {
    Vector b = f.beta;
    for (auto& v : b) v += nd(rng);
    EXPECT_GT(kkt_residual(g, y.values, 0, 0.02, b), base);
  }
}

TEST(SolveElastic, Reductions) {
  const Graph g = grid_graph(6, 6);
  const NodeSignal y = noisy(Vector::LinSpaced(36, -1, 2), 0.7, 12);
  const Vector l2 = solve_l2(g, y, 1, 0.03).beta;
  EXPECT_LT((solve_elastic(g, y, 1, 0.0, 0.03).beta - l2).cwiseAbs().maxCoeff(), 1e-6);
  const Vector l1 = solve_l1(g, y, 0, 0.04, tight()).beta;
  EXPECT_LT((solve_elastic(g, y, 0, 0.04, 0.0, tight()).beta - l1).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(SolveElastic, MatchesProjectedGradientOracle) {
  const Graph g = path_graph(5);
  const NodeSignal y{(Vector(5) << 1.0, 1.2, 3.0, 2.8, -0.5).finished(), SignalKind::continuous};
  for (int k : {0, 1}) {
    const Matrix d = oracle::dense_difference(g, k);
    const Vector want = oracle::dual_projected_gradient(d, y.values, 0.1, 0.05, 1000000);
    const TrendFit f = solve_elastic(g, y, k, 0.1, 0.05, tight());
    EXPECT_LT((f.beta - want).cwiseAbs().maxCoeff(), 1e-5) << "k=" << k;
  }
}

TEST(SolvePoisson, ZeroLambdaIsNodewiseMle) {
  const Graph g = path_graph(4);
  const NodeSignal y{(Vector(4) << 3, 1, 7, 2).finished(), SignalKind::count};
  const TrendFit f = solve_poisson_l1(g, y, 0, 0.0);
  EXPECT_LT((f.beta - y.values.array().log().matrix()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_FALSE(f.clipped);
}

TEST(SolvePoisson, HugeLambdaIsPooledMle) {
  const Graph g(6, {{0, 1}, {1, 2}, {3, 4}, {4, 5}});
  const NodeSignal y{(Vector(6) << 3, 5, 4, 10, 12, 8).finished(), SignalKind::count};
  const TrendFit f = solve_poisson_l1(g, y, 0, 1e6);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(f.beta[i], std::log(4.0), 1e-4);
  for (int i = 3; i < 6; ++i) EXPECT_NEAR(f.beta[i], std::log(10.0), 1e-4);
}

TEST(SolvePoisson, MatchesPrimalDualOracle) {
  const Graph g = grid_graph(10, 10);
  const Vector mu = blocks(g);
  const NodeSignal y = poisson_draw((0.3 * mu.array() + 2.0).exp().matrix(), 13);
  const double lam = 0.02;
  const TrendFit f = solve_poisson_l1(g, y, 0, lam, tight());
  const Matrix d = oracle::dense_incidence(g);
  const Vector ref = oracle::poisson_primal_dual(d, y.values, lam, 200000);
  const SparseMatrix ds = difference_operator(g, 0).matrix;
  const PenaltySpec pen = PenaltySpec::l1(0, lam);
  const double got = objective_value(y.values, f.beta, ds, pen, Loss::poisson);
  const double want = objective_value(y.values, ref, ds, pen, Loss::poisson);
  EXPECT_LT(std::abs(got - want), 1e-6);
  EXPECT_LE(got, want + 1e-9);
}

TEST(SolvePoisson, GradientMatchesFiniteDifferences) {
  const Graph g = path_graph(7);
  std::mt19937_64 rng(14);
  std::normal_distribution<double> nd;
  std::poisson_distribution<int> pd(5.0);
  const SparseMatrix d = difference_operator(g, 0).matrix;
  const PenaltySpec pen = PenaltySpec::l1(0, 0.0);
  for (int rep = 0; rep < 100; ++rep) {
    Vector y(7), b(7);
    for (auto& v : y) v = pd(rng);
    for (auto& v : b) v = nd(rng);
    const Vector grad = detail::smooth_gradient(y, b, d, pen, Loss::poisson);
    for (Eigen::Index i = 0; i < 7; ++i) {
      Vector up = b, dn = b;
      up[i] += 1e-6;
      dn[i] -= 1e-6;
      const double fd = (detail::poisson_loss(y, up) - detail::poisson_loss(y, dn)) / 2e-6;
      EXPECT_NEAR(fd, grad[i], 1e-5 * std::max(1.0, std::abs(grad[i])));
    }
  }
}

TEST(SolvePoisson, RejectsContinuousSignal) {
  EXPECT_THROW(solve_poisson_l1(path_graph(2), {Vector::Ones(2), SignalKind::continuous}, 0, 0.1),
               std::invalid_argument);
}

TEST(DegreesOfFreedom, ConstantAndTwoPlateaus) {
  const Graph g = path_graph(6);
  TrendFit f;
  f.penalty.order = 0;
  f.beta = Vector::Constant(6, 2.5);
  EXPECT_EQ(degrees_of_freedom(f, g), 2);
  f.beta << 1, 1, 1, 4, 4, 4;
  EXPECT_EQ(degrees_of_freedom(f, g), 3);
}

TEST(DegreesOfFreedom, ComponentCountOracle) {
  const Graph g = grid_graph(10, 10);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const NodeSignal y = noisy(blocks(g), 1.0, 100 + s);
    const TrendFit f = solve_l1(g, y, 0, 0.02 + 0.01 * static_cast<double>(s), tight());
    const Vector db = oracle::dense_incidence(g) * f.beta;
    std::vector<bool> removed(g.edge_count());
    for (std::size_t r = 0; r < g.edge_count(); ++r) removed[r] = std::abs(db[static_cast<Eigen::Index>(r)]) > 1e-6;
    int count = 0;
    oracle::bfs_components(g, removed, count);
    EXPECT_EQ(f.df, std::min(count + 1, 100)) << "seed " << s;
    EXPECT_GE(f.df, 1);
    EXPECT_LE(f.df, 100);
  }
}
