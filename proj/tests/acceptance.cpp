// Acceptance checks. One line per criterion: "criterion N: PASS|FAIL ...".
#include "graphfission/basis.hpp"
#include "graphfission/inference.hpp"
#include "graphfission/simulation.hpp"
#include "graphfission/thinning.hpp"
#include "graphfission/trend_filter.hpp"
#include "oracles.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <string>

using namespace graphfission;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

Vector normals(Eigen::Index n, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> nd(0.0, sd);
  Vector v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}

double span_residual(const Matrix& b, const Vector& beta) {
  const Matrix q = Eigen::HouseholderQR<Matrix>(b).householderQ() * Matrix::Identity(b.rows(), b.cols());
  return (beta - q * (q.transpose() * beta)).cwiseAbs().maxCoeff();
}

Outcome thinning_reconstruction() {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> rate(0.0, 50.0);
  double worst_gauss = 0.0;
  int poisson_bad = 0;
  const int draws = 10000;
  for (int d = 0; d < draws; ++d) {
    const Eigen::Index n = 10;
    NodeSignal counts{Vector(n), SignalKind::count};
    for (auto& v : counts.values) v = std::poisson_distribution<int>(rate(rng))(rng);
    const auto m = static_cast<int>(2 + d % 4);
    const ThinnedFamily pf = thin_poisson(counts, m, static_cast<std::uint64_t>(d));
    if (pf.recombined() != counts.values) ++poisson_bad;

    const NodeSignal y{normals(n, rng, 10.0), SignalKind::continuous};
    const ThinnedFamily gf = thin_gaussian(y, 2.0, m, static_cast<std::uint64_t>(d));
    const double rel = ((gf.recombined() - y.values).array().abs() / y.values.array().abs().max(1.0)).maxCoeff();
    worst_gauss = std::max(worst_gauss, rel);
  }
  return {poisson_bad == 0 && worst_gauss <= 1e-9,
          fmt("poisson mismatches %d/%d, gaussian max rel error %.2e (tol 1e-9)", poisson_bad, draws, worst_gauss)};
}

Outcome thinning_marginals() {
  const int reps = 100000, m = 3;
  std::mt19937_64 rng(202);
  const NodeSignal y{normals(reps, rng), SignalKind::continuous};
  const ThinnedFamily f = thin_gaussian(y, 1.0, m, 7);
  std::vector<std::vector<double>> c(m);
  double worst_var = 0.0, worst_corr = 0.0;
  for (int j = 0; j < m; ++j) {
    c[j].assign(f.copies[j].values.data(), f.copies[j].values.data() + reps);
    worst_var = std::max(worst_var, std::abs(oracle::variance(c[j]) / m - 1.0));
  }
  for (int a = 0; a < m; ++a)
    for (int b = a + 1; b < m; ++b) worst_corr = std::max(worst_corr, std::abs(oracle::pearson(c[a], c[b])));
  return {worst_var <= 0.05 && worst_corr <= 0.02,
          fmt("max variance rel deviation %.4f (tol 0.05), max |corr| %.4f (tol 0.02)", worst_var, worst_corr)};
}

Outcome basis_span() {
  const Graph g = grid_graph(10, 10);
  const LaplacianSpectrum spectrum(g);
  SolverOptions o;
  o.tol = 1e-8;
  double worst = 0.0;
  int bad = 0;
  for (int k = 0; k <= 2; ++k)
    for (std::uint64_t s = 0; s < 50; ++s) {
      const std::uint64_t seed = 1000 * static_cast<std::uint64_t>(k) + s;
      const Vector mu = generate_trend(g, k, 0.1, 2.0, seed);
      std::mt19937_64 rng(seed);
      const NodeSignal y{mu + normals(100, rng, 0.5), SignalKind::continuous};
      const TrendFit f = solve_l1(g, y, k, 0.005 * static_cast<double>(1 + s % 10), o, nullptr, &spectrum);
      const SelectedBasis b = construct_basis(f.beta, g, k, &spectrum);
      const double r = span_residual(b.matrix, f.beta) / (1.0 + f.beta.cwiseAbs().maxCoeff());
      worst = std::max(worst, r);
      if (r > 1e-6) ++bad;
    }
  return {bad == 0, fmt("150 fits, %d over tolerance, max scaled residual %.2e (tol 1e-6)", bad, worst)};
}

Outcome l2_closed_form() {
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const std::size_t n = 20 + 5 * (s % 5);
    const Graph g = oracle::random_connected_graph(n, n / 2, 300 + s);
    const int k = static_cast<int>(s % 3);
    const double lam = 0.02 * static_cast<double>(s + 1);
    std::mt19937_64 rng(s);
    const NodeSignal y{normals(static_cast<Eigen::Index>(n), rng), SignalKind::continuous};
    const Matrix d = oracle::dense_difference(g, k);
    const auto nn = static_cast<Eigen::Index>(n);
    const Vector ref =
        (Matrix::Identity(nn, nn) + static_cast<double>(n) * lam * d.transpose() * d).fullPivLu().solve(y.values);
    worst = std::max(worst, (solve_l2(g, y, k, lam).beta - ref).cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-8, fmt("20 instances, max abs difference %.2e (tol 1e-8)", worst)};
}

Outcome l1_optimality() {
  double worst_kkt = 0.0;
  int converged = 0, total = 0;
  const Graph grid = grid_graph(10, 10);
  const LaplacianSpectrum spectrum(grid);
  for (int k = 0; k <= 2; ++k)
    for (double lam : {0.001, 0.01, 0.05, 0.2}) {
      for (std::uint64_t s = 0; s < 3; ++s) {
        const Vector mu = generate_trend(grid, k, 0.1, 2.0, 40 + s);
        std::mt19937_64 rng(s);
        const NodeSignal y{mu + normals(100, rng), SignalKind::continuous};
        const TrendFit f = solve_l1(grid, y, k, lam, {}, nullptr, &spectrum);
        ++total;
        if (f.status != SolverStatus::converged) continue;
        ++converged;
        worst_kkt = std::max(worst_kkt, kkt_residual(grid, y.values, k, lam, f.beta));
      }
    }
  std::mt19937_64 rng(9);
  const NodeSignal y{normals(100, rng), SignalKind::continuous};
  bool zero_exact = true;
  for (int k = 0; k <= 2; ++k) zero_exact = zero_exact && solve_l1(grid, y, k, 0.0).beta == y.values;

  const Graph split(10, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {5, 6}, {6, 7}, {7, 8}, {8, 9}, {5, 9}});
  const NodeSignal z{normals(10, rng, 3.0), SignalKind::continuous};
  const Vector big = solve_l1(split, z, 0, 1e6).beta;
  const double spread = std::max(big.head(5).maxCoeff() - big.head(5).minCoeff(),
                                 big.tail(5).maxCoeff() - big.tail(5).minCoeff());
  const double level = std::max(std::abs(big[0] - z.values.head(5).mean()), std::abs(big[9] - z.values.tail(5).mean()));
  return {worst_kkt < 1e-5 && zero_exact && spread <= 1e-4 && level <= 1e-4,
          fmt("%d/%d converged, max kkt %.2e (tol 1e-5); lambda=0 exact: %s; lambda=1e6 spread %.2e, level error "
              "%.2e (tol 1e-4)",
              converged, total, worst_kkt, zero_exact ? "yes" : "no", spread, level)};
}

Vector step_mean(Eigen::Index n) {
  Vector mu(n);
  for (Eigen::Index i = 0; i < n; ++i) mu[i] = i < n / 2 ? 0.0 : 2.0;
  return mu;
}

Outcome pivot_normality() {
  const Graph g = path_graph(20);
  const Vector mu = step_mean(20);
  std::mt19937_64 rng(606);
  SolverOptions o;
  o.compute_df = false;
  std::vector<double> z;
  std::map<Eigen::Index, int> sizes;
  for (int r = 0; r < 10000; ++r) {
    const Vector y = mu + normals(20, rng);
    const Vector ysel = y + normals(20, rng);
    const TrendFit f = solve_l1(g, {ysel, SignalKind::continuous}, 0, 0.1, o);
    const SelectedBasis b = construct_basis(f.beta, g, 0);
    sizes[b.cols()]++;
    const Vector eta = projection_contrast(projection_matrix(b.matrix), 7);
    z.push_back(pivot(y, ysel, eta, 1.0, 1.0, eta.dot(mu)));
  }
  const double ks = oracle::ks_normal(z);
  return {ks < 0.02, fmt("KS %.4f over 1e4 pivots (tol 0.02), %zu distinct basis sizes", ks, sizes.size())};
}

Outcome ci_coverage() {
  SimConfig c;
  c.rows = c.cols = 10;
  c.k = 1;
  c.sigma = 1.0;
  c.alpha = 0.1;
  c.trials = 500;
  c.active_fraction = 0.1;
  c.jump_size = 3.0;
  c.bounds = BoundsMode::recipe;
  c.seed = 7;
  const auto rows = run_ci_experiment(c);
  double robust = 0, naive = 0, nr = 0, nn = 0;
  for (const auto& r : rows) {
    if (r.method == "robust") {
      robust += r.covered;
      ++nr;
    } else {
      naive += r.covered;
      ++nn;
    }
  }
  robust /= nr;
  naive /= nn;
  return {robust >= 0.88 && naive < robust,
          fmt("robust coverage %.4f (need >= 0.88), naive %.4f (need < robust), %d trials", robust, naive, c.trials)};
}

Outcome collapse_identity() {
  std::mt19937_64 rng(808);
  std::uniform_real_distribution<double> u(0.1, 3.0);
  double worst = 0.0;
  for (int r = 0; r < 1000; ++r) {
    const Eigen::Index n = 15;
    const double s = u(rng), s0 = u(rng);
    const Vector y = normals(n, rng, s);
    const Vector ysel = y + normals(n, rng, s0);
    const Vector eta = normals(n, rng);
    const RobustInterval ri = robust_ci(y, ysel, eta, SigmaBounds::fixed(s, s), s0, 0.1);
    const Interval known = naive_ci(y, ysel, eta, s, s0, 0.1);
    worst = std::max({worst, std::abs(ri.lower - known.lower), std::abs(ri.upper - known.upper)});
  }
  return {worst <= 1e-12, fmt("max endpoint difference %.2e over 1000 instances (tol 1e-12)", worst)};
}

Outcome length_limit() {
  const double sigma = 1.0, sigma0 = 1.0, low = 0.9, high = 1.1;
  const SigmaBounds bounds = SigmaBounds::fixed(low, high);
  SolverOptions o;
  o.compute_df = false;
  std::string detail;
  double last_rel = 0.0;
  for (std::size_t side : {10, 20, 30}) {
    const Graph g = grid_graph(side, side);
    const auto n = static_cast<Eigen::Index>(side * side);
    const LaplacianSpectrum spectrum(g);
    const double lam = std::sqrt(std::log(static_cast<double>(n)) / static_cast<double>(n));
    double spread = 0.0, limit = 0.0, eta_norm = 0.0;
    int count = 0;
    const int trials = 20;
    for (int t = 0; t < trials; ++t) {
      const std::uint64_t seed = 9000 + side * 100 + static_cast<std::uint64_t>(t);
      const Vector mu = generate_trend(g, 0, 0.1, 3.0, seed);
      std::mt19937_64 rng(seed);
      const Vector y = mu + normals(n, rng, sigma);
      const Vector ysel = y + normals(n, rng, sigma0);
      const TrendFit f = solve_l1(g, {ysel, SignalKind::continuous}, 0, lam, o, nullptr, &spectrum);
      const Matrix p = projection_matrix(construct_basis(f.beta, g, 0, &spectrum).matrix);
      for (Eigen::Index j = 0; j < n; ++j) {
        const Vector eta = projection_contrast(p, static_cast<std::size_t>(j));
        const RobustInterval r = robust_ci(y, ysel, eta, bounds, sigma0, 0.1, static_cast<std::size_t>(j));
        spread += std::abs(r.a2 - r.a1);
        limit += std::abs(ci_length_limit(eta.dot(mu), sigma, low, high, sigma0));
        eta_norm += eta.norm();
        ++count;
      }
    }
    spread /= count;
    limit /= count;
    eta_norm /= count;
    last_rel = std::abs(spread - limit) / limit;
    detail += fmt("%zux%zu: mean|A2-A1| %.4f vs limit %.4f (rel %.3f, mean |eta| %.3f); ", side, side, spread, limit,
                  last_rel, eta_norm);
  }
  detail += "tol 0.10 at 30x30";
  return {last_rel <= 0.10, detail};
}

Outcome poisson_coverage() {
  SimConfig c;
  c.rows = c.cols = 10;
  c.alpha = 0.2;
  c.trials = 500;
  c.theta_scales = {0.5, 1.0, 2.0};
  c.orders = {0, 1};
  c.seed = 10;
  const auto rows = run_poisson_experiment(c);
  std::map<int, std::pair<double, double>> per_k;
  std::map<std::pair<int, double>, std::array<double, 3>> cell;
  for (const auto& r : rows) {
    per_k[r.k].first += r.covered;
    per_k[r.k].second += 1;
    auto& a = cell[{r.k, r.theta_scale}];
    a[0] += r.covered;
    a[1] += r.length();
    a[2] += 1;
  }
  bool pass = true;
  std::string detail;
  for (const auto& [k, a] : per_k) {
    const double cov = a.first / a.second;
    pass = pass && cov >= 0.78;
    detail += fmt("k=%d coverage %.4f (need >= 0.78) [", k, cov);
    double prev = 0.0;
    for (double s : c.theta_scales) {
      const auto& x = cell[{k, s}];
      const double len = x[1] / x[2];
      pass = pass && len >= prev;
      prev = len;
      detail += fmt(" scale %.1f: cov %.3f width %.4f;", s, x[0] / x[2], len);
    }
    detail += " ] ";
  }
  detail += "width must be nondecreasing in scale";
  return {pass, detail};
}

std::map<std::pair<std::string, std::string>, double> mean_risk(const CvExperiment& e) {
  std::map<std::pair<std::string, std::string>, std::pair<double, int>> acc;
  for (const auto& r : e.rows) {
    auto& a = acc[{r.method, r.rule}];
    a.first += r.oracle_risk;
    a.second += 1;
  }
  std::map<std::pair<std::string, std::string>, double> out;
  for (const auto& [key, a] : acc) out[key] = a.first / a.second;
  return out;
}

Outcome cv_direction() {
  SimConfig c;
  c.rows = c.cols = 10;
  c.k = 0;
  c.trials = 100;
  c.seed = 11;
  c.jump_size = 4.0;
  c.active_fraction = 0.2;
  auto strong = mean_risk(run_cv_experiment(c));
  c.jump_size = 0.5;
  c.active_fraction = 0.02;
  auto weak = mean_risk(run_cv_experiment(c));
  const double sg = strong[{"graph_cv", "min"}], so = strong[{"ordinary_cv", "min"}];
  const double wg = weak[{"graph_cv", "min"}], wo = weak[{"ordinary_cv", "min"}];
  const double agree = std::abs(wg - wo) / std::max(wg, wo);
  return {sg <= so && agree <= 0.20,
          fmt("jump 4: graph %.4f vs ordinary %.4f (one-se rule %.4f vs %.4f); jump 0.5: graph %.4f vs ordinary %.4f, "
              "rel diff %.3f (tol 0.20)",
              sg, so, strong[{"graph_cv", "one_se"}], strong[{"ordinary_cv", "one_se"}], wg, wo, agree)};
}

Outcome misspecification() {
  SimConfig c;
  c.rows = c.cols = 10;
  c.k = 0;
  c.trials = 100;
  c.seed = 12;
  c.jump_size = 2.0;
  c.active_fraction = 0.1;
  c.error_dists = {ErrorDist::gaussian, ErrorDist::student_t, ErrorDist::laplace, ErrorDist::skew_normal};
  const CvExperiment e = run_cv_experiment(c);
  std::map<std::string, const CvCurve*> graph_curves;
  for (const auto& cv : e.curves)
    if (cv.method == "graph_cv") graph_curves[cv.error_dist] = &cv;
  const CvCurve& base = *graph_curves.at("gaussian");
  double worst_cv = 0.0, worst_risk = 0.0;
  std::string detail;
  for (const auto& [name, cv] : graph_curves) {
    if (name == "gaussian") continue;
    double dc = 0.0, dr = 0.0;
    for (std::size_t g = 0; g < base.lambda_grid.size(); ++g) {
      dc = std::max(dc, std::abs(cv->cv_error[g] - base.cv_error[g]) / base.cv_error[g]);
      dr = std::max(dr, std::abs(cv->oracle_risk[g] - base.oracle_risk[g]) / base.oracle_risk[g]);
    }
    worst_cv = std::max(worst_cv, dc);
    worst_risk = std::max(worst_risk, dr);
    detail += fmt("%s: cv curve %.3f, risk curve %.3f; ", name.c_str(), dc, dr);
  }
  detail += "max pointwise rel deviation of cv curves, tol 0.15";
  return {worst_cv <= 0.15, detail};
}

const std::map<int, std::function<Outcome()>>& criteria() {
  static const std::map<int, std::function<Outcome()>> c{
      {1, thinning_reconstruction}, {2, thinning_marginals}, {3, basis_span},      {4, l2_closed_form},
      {5, l1_optimality},           {6, pivot_normality},    {7, ci_coverage},     {8, collapse_identity},
      {9, length_limit},            {10, poisson_coverage},  {11, cv_direction},   {12, misspecification}};
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::vector<int> which;
  app.add_option("-c,--criterion", which, "criterion number(s); default all")->check(CLI::Range(1, 12));
  CLI11_PARSE(app, argc, argv);
  if (which.empty())
    for (const auto& [n, f] : criteria()) which.push_back(n);
  int failed = 0;
  for (int n : which) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria().at(n)();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %d: %s %s (%.1f s)\n", n, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed ? 1 : 0;
}
