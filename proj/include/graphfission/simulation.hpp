#pragma once

/// Simulation harness: synthetic trends on grid graphs, standardised error
/// laws, and the cv / ci / poisson experiments with CSV and plot-data output.

#include "graphfission/cross_validation.hpp"
#include "graphfission/inference.hpp"
#include "graphfission/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

namespace graphfission {

enum class ErrorDist { gaussian, laplace, skew_normal, student_t };

inline const char* to_string(ErrorDist d) {
  switch (d) {
    case ErrorDist::gaussian: return "gaussian";
    case ErrorDist::laplace: return "laplace";
    case ErrorDist::skew_normal: return "skew_normal";
    case ErrorDist::student_t: return "student_t";
  }
  return "?";
}

inline ErrorDist parse_error_dist(const std::string& s) {
  if (s == "gaussian") return ErrorDist::gaussian;
  if (s == "laplace") return ErrorDist::laplace;
  if (s == "skew_normal") return ErrorDist::skew_normal;
  if (s == "student_t" || s == "t5") return ErrorDist::student_t;
  throw std::invalid_argument("unknown error distribution '" + s + "'");
}

inline PenaltyForm parse_penalty(const std::string& s) {
  if (s == "l1") return PenaltyForm::l1;
  if (s == "l2") return PenaltyForm::l2;
  if (s == "elastic") return PenaltyForm::elastic;
  throw std::invalid_argument("unknown penalty '" + s + "'");
}

/// One standardised (mean 0, variance 1) error draw.
/// laplace: scale 1/sqrt(2). skew_normal: location 0, scale 1, shape 5,
/// then centred and scaled. student_t: 5 degrees of freedom times sqrt(3/5).
inline double draw_error(ErrorDist d, Rng& rng) {
  std::normal_distribution<double> normal;
  switch (d) {
    case ErrorDist::gaussian: return normal(rng);
    case ErrorDist::laplace: {
      std::exponential_distribution<double> ex(1.0);
      return (ex(rng) - ex(rng)) / std::sqrt(2.0);
    }
    case ErrorDist::skew_normal: {
      constexpr double shape = 5.0;
      const double delta = shape / std::sqrt(1.0 + shape * shape);
      const double mean = delta * std::sqrt(2.0 / M_PI);
      const double var = 1.0 - 2.0 * delta * delta / M_PI;
      const double u0 = normal(rng);
      const double u1 = normal(rng);
      const double x = delta * std::abs(u0) + std::sqrt(1.0 - delta * delta) * u1;
      return (x - mean) / std::sqrt(var);
    }
    case ErrorDist::student_t: {
      std::student_t_distribution<double> t(5.0);
      return t(rng) * std::sqrt(3.0 / 5.0);
    }
  }
  return 0.0;
}

inline Vector draw_errors(ErrorDist d, std::size_t n, std::uint64_t seed) {
  Rng rng = substream(seed, stream::noise);
  Vector e(static_cast<Eigen::Index>(n));
  for (auto& v : e) v = draw_error(d, rng);
  return e;
}

/// Piecewise polynomial trend. ceil(active_fraction * n) random nodes are
/// active and get independent U[-jump, jump] levels; each connected
/// component of the remaining nodes gets a polynomial of total degree k in
/// the node coordinates (rescaled to [0, 1]) with U[-jump, jump] coefficients.
inline Vector generate_trend(const Graph& graph, int k, double active_fraction, double jump_size,
                             std::uint64_t seed) {
  if (!graph.has_coords()) throw std::invalid_argument("trend generation needs node coordinates");
  if (!(active_fraction >= 0.0 && active_fraction <= 1.0))
    throw std::invalid_argument("active fraction must be in [0, 1]");
  if (k < 0) throw std::invalid_argument("order must be >= 0");
  const std::size_t n = graph.node_count();
  Rng rng = substream(seed, stream::trend);
  std::uniform_real_distribution<double> level(-jump_size, jump_size);

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_active = std::min(n, static_cast<std::size_t>(std::ceil(active_fraction * static_cast<double>(n) - 1e-9)));
  std::vector<std::size_t> active(order.begin(), order.begin() + static_cast<long>(n_active));
  std::sort(active.begin(), active.end());

  // Coordinates scaled to [0, 1] per axis.
  const auto& coords = graph.coords();
  const std::size_t dim = coords.front().size();
  std::vector<double> lo(dim, 0.0), span(dim, 1.0);
  for (std::size_t a = 0; a < dim; ++a) {
    double mn = coords[0][a], mx = coords[0][a];
    for (const auto& c : coords) {
      mn = std::min(mn, c[a]);
      mx = std::max(mx, c[a]);
    }
    lo[a] = mn;
    span[a] = mx > mn ? mx - mn : 1.0;
  }
  // Exponent tuples with total degree <= k.
  std::vector<std::vector<int>> monomials{{}};
  for (std::size_t a = 0; a < dim; ++a) {
    std::vector<std::vector<int>> next;
    for (const auto& m : monomials) {
      int used = 0;
      for (int e : m) used += e;
      for (int e = 0; used + e <= k; ++e) {
        auto ext = m;
        ext.push_back(e);
        next.push_back(std::move(ext));
      }
    }
    monomials = std::move(next);
  }

  Vector mu = Vector::Zero(static_cast<Eigen::Index>(n));
  const Partition parts = components_without_nodes(graph, active);
  for (const auto& members : parts.groups()) {
    std::vector<double> coef(monomials.size());
    for (auto& c : coef) c = level(rng);
    for (auto i : members) {
      double v = 0.0;
      for (std::size_t t = 0; t < monomials.size(); ++t) {
        double term = coef[t];
        for (std::size_t a = 0; a < dim; ++a)
          term *= std::pow((coords[i][a] - lo[a]) / span[a], monomials[t][a]);
        v += term;
      }
      mu[static_cast<Eigen::Index>(i)] = v;
    }
  }
  for (auto i : active) mu[static_cast<Eigen::Index>(i)] = level(rng);
  return mu;
}

struct SimConfig {
  std::size_t rows = 10;
  std::size_t cols = 10;
  int k = 0;
  PenaltyForm penalty = PenaltyForm::l1;
  double active_fraction = 0.2;
  double jump_size = 1.0;
  double sigma = 1.0;
  ErrorDist error_dist = ErrorDist::gaussian;
  int trials = 100;
  int folds = 5;
  double alpha = 0.1;
  std::uint64_t seed = 1;
  double theta_scale = 1.0;

  // Sweeps; an empty list means the scalar field above.
  std::vector<double> jump_sizes;
  std::vector<double> active_fractions;
  std::vector<double> theta_scales;
  std::vector<int> orders;
  std::vector<ErrorDist> error_dists;

  int lambda_count = 20;        // default grid size
  bool estimate_sigma = true;   // graph cv: thinning scale from the fixed-lambda fit
  double sigma0 = 0.0;          // ci: 0 means use the fixed-lambda estimate
  BoundsMode bounds = BoundsMode::recipe;
  double lambda = 0.0;          // poisson: penalty weight, 0 means sqrt(log n / n)
  double base_log_rate = std::log(10.0);  // poisson: log rate added to the trend
  double active_fraction_poisson = 0.05;
  double tol = 1e-6;

  std::vector<double> jumps() const { return jump_sizes.empty() ? std::vector<double>{jump_size} : jump_sizes; }
  std::vector<double> actives() const {
    return active_fractions.empty() ? std::vector<double>{active_fraction} : active_fractions;
  }
  std::vector<double> thetas() const { return theta_scales.empty() ? std::vector<double>{theta_scale} : theta_scales; }
  std::vector<int> ks() const { return orders.empty() ? std::vector<int>{k} : orders; }
  std::vector<ErrorDist> dists() const {
    return error_dists.empty() ? std::vector<ErrorDist>{error_dist} : error_dists;
  }

  void validate() const {
    if (rows < 1 || cols < 1) throw std::invalid_argument("grid dimensions must be >= 1");
    if (trials < 1) throw std::invalid_argument("trials must be >= 1");
    if (folds < 2) throw std::invalid_argument("folds must be >= 2");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must be in (0, 1)");
    if (!(sigma >= 0.0)) throw std::invalid_argument("sigma must be >= 0");
    for (double a : actives())
      if (!(a >= 0.0 && a <= 1.0)) throw std::invalid_argument("active fraction must be in [0, 1]");
    if (lambda_count < 1) throw std::invalid_argument("lambda_count must be >= 1");
  }
};

inline SimConfig sim_config_from_json(const nlohmann::json& j) {
  SimConfig c;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("rows", c.rows);
  get("cols", c.cols);
  get("k", c.k);
  if (j.contains("penalty")) c.penalty = parse_penalty(j.at("penalty").get<std::string>());
  get("active_fraction", c.active_fraction);
  get("jump_size", c.jump_size);
  get("sigma", c.sigma);
  if (j.contains("error_dist")) c.error_dist = parse_error_dist(j.at("error_dist").get<std::string>());
  get("trials", c.trials);
  get("folds", c.folds);
  get("alpha", c.alpha);
  get("seed", c.seed);
  get("theta_scale", c.theta_scale);
  get("jump_sizes", c.jump_sizes);
  get("active_fractions", c.active_fractions);
  get("theta_scales", c.theta_scales);
  get("orders", c.orders);
  if (j.contains("error_dists"))
    for (const auto& s : j.at("error_dists")) c.error_dists.push_back(parse_error_dist(s.get<std::string>()));
  get("lambda_count", c.lambda_count);
  get("estimate_sigma", c.estimate_sigma);
  get("sigma0", c.sigma0);
  if (j.contains("bounds")) {
    const auto b = j.at("bounds").get<std::string>();
    if (b == "recipe") c.bounds = BoundsMode::recipe;
    else if (b == "fallback") c.bounds = BoundsMode::fallback;
    else throw std::invalid_argument("unknown bounds mode '" + b + "'");
  }
  get("lambda", c.lambda);
  get("base_log_rate", c.base_log_rate);
  get("active_fraction_poisson", c.active_fraction_poisson);
  get("tol", c.tol);
  c.validate();
  return c;
}

inline SimConfig read_sim_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("config '" + path + "': " + e.what());
  }
  return sim_config_from_json(j);
}

inline Graph sim_graph(const SimConfig& c) { return grid_graph(c.rows, c.cols); }

/// Seed of trial `t` in sweep cell `cell`.
inline std::uint64_t trial_seed(std::uint64_t seed, std::size_t cell, int t) {
  return derive_seed(seed, stream::trial, (static_cast<std::uint64_t>(cell) << 32) | static_cast<std::uint32_t>(t));
}

// ---------------------------------------------------------------------------
// CV experiment

struct CvRow {
  std::string error_dist;
  double jump = 0.0;
  double active = 0.0;
  int trial = 0;
  std::string method;  // graph_cv | ordinary_cv
  std::string rule;    // min | one_se
  double lambda = 0.0;
  double oracle_risk = 0.0;
  int df = 0;
};

/// Per (error law, jump, active fraction, method): trial-averaged cv error and
/// oracle risk at every grid point.
struct CvCurve {
  std::string error_dist;
  double jump = 0.0;
  double active = 0.0;
  std::string method;
  std::vector<double> lambda_grid;
  std::vector<double> cv_error;
  std::vector<double> oracle_risk;
};

struct CvExperiment {
  std::vector<CvRow> rows;
  std::vector<CvCurve> curves;
};

inline CvExperiment run_cv_experiment(const SimConfig& c) {
  c.validate();
  const Graph graph = sim_graph(c);
  const LaplacianSpectrum spectrum(graph);
  const std::size_t n = graph.node_count();
  const std::vector<double> grid = default_lambda_grid(n, c.lambda_count);
  SolverOptions opts;
  opts.tol = c.tol;
  CvExperiment out;
  std::size_t cell = 0;
  for (double jump : c.jumps()) {
    for (double active : c.actives()) {
      // Trends and noise seeds depend on the cell and trial only, so error
      // laws are compared on paired draws.
      for (ErrorDist dist : c.dists()) {
        CvCurve curves[2];
        for (int m = 0; m < 2; ++m) {
          curves[m] = {to_string(dist), jump, active, m == 0 ? "graph_cv" : "ordinary_cv", grid,
                       std::vector<double>(grid.size(), 0.0), std::vector<double>(grid.size(), 0.0)};
        }
        for (int t = 0; t < c.trials; ++t) {
          const std::uint64_t ts = trial_seed(c.seed, cell, t);
          const Vector mu = generate_trend(graph, c.k, active, jump, ts);
          const NodeSignal y{mu + c.sigma * draw_errors(dist, n, ts), SignalKind::continuous};

          // Oracle risk of the full-data fit along the grid.
          std::vector<Vector> path;
          {
            std::optional<AdmmState> warm;
            SolverOptions o = opts;
            o.compute_df = false;
            for (double lam : grid) {
              TrendFit f = fit_trend(graph, y, c.k, c.penalty, lam, lam, Loss::square, o, warm ? &*warm : nullptr);
              if (f.state.z.size() > 0) warm = f.state;
              path.push_back(f.beta);
            }
          }
          for (std::size_t g = 0; g < grid.size(); ++g) {
            const double risk = (path[g] - mu).squaredNorm() / static_cast<double>(n);
            curves[0].oracle_risk[g] += risk / c.trials;
            curves[1].oracle_risk[g] += risk / c.trials;
          }

          CvSettings cs;
          cs.family = ThinFamily::gaussian;
          cs.folds = c.folds;
          cs.order = c.k;
          cs.form = c.penalty;
          cs.lambda_grid = grid;
          cs.solver = opts;
          cs.seed = derive_seed(ts, stream::cv_folds);
          if (!c.estimate_sigma) cs.sigma = c.sigma;
          const CvReport reports[2] = {graph_cv(graph, y, cs), ordinary_cv(graph, y, cs)};
          for (int m = 0; m < 2; ++m) {
            for (std::size_t g = 0; g < grid.size(); ++g)
              curves[m].cv_error[g] += reports[m].mean_error[static_cast<Eigen::Index>(g)] / c.trials;
            for (int r = 0; r < 2; ++r) {
              const std::size_t idx = r == 0 ? reports[m].index_min : reports[m].index_1se;
              TrendFit fit;
              fit.beta = path[idx];
              fit.penalty.order = c.k;
              CvRow row;
              row.error_dist = to_string(dist);
              row.jump = jump;
              row.active = active;
              row.trial = t;
              row.method = curves[m].method;
              row.rule = r == 0 ? "min" : "one_se";
              row.lambda = grid[idx];
              row.oracle_risk = (path[idx] - mu).squaredNorm() / static_cast<double>(n);
              row.df = c.penalty == PenaltyForm::l2 ? 0 : degrees_of_freedom(fit, graph, &spectrum);
              out.rows.push_back(row);
            }
          }
        }
        out.curves.push_back(std::move(curves[0]));
        out.curves.push_back(std::move(curves[1]));
      }
      ++cell;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// CI experiment

struct CiRow {
  int trial = 0;
  std::size_t coord = 0;
  std::string method;  // robust | naive
  double lower = 0.0;
  double upper = 0.0;
  double eta_mu = 0.0;
  bool covered = false;
  double sigma_low = 0.0;
  double sigma_high = 0.0;
  double sigma0 = 0.0;

  double length() const { return upper - lower; }
};

inline std::vector<CiRow> run_ci_experiment(const SimConfig& c) {
  c.validate();
  const Graph graph = sim_graph(c);
  const LaplacianSpectrum spectrum(graph);
  const std::size_t n = graph.node_count();
  const std::vector<double> grid = default_lambda_grid(n, c.lambda_count);
  SolverOptions opts;
  opts.tol = c.tol;
  std::vector<CiRow> rows;
  for (int t = 0; t < c.trials; ++t) {
    const std::uint64_t ts = trial_seed(c.seed, 0, t);
    const Vector mu = generate_trend(graph, c.k, c.active_fraction, c.jump_size, ts);
    const NodeSignal y{mu + c.sigma * draw_errors(c.error_dist, n, ts), SignalKind::continuous};

    const double sigma_hat = estimate_sigma_fixed_lambda(graph, y, c.k, opts);
    double sigma0 = c.sigma0 > 0.0 ? c.sigma0 : sigma_hat;
    if (!(sigma0 > 0.0)) sigma0 = 1e-8;
    const FissionPair pair = fission_gaussian(y, sigma0, derive_seed(ts, stream::fission));

    CvSettings cs;
    cs.folds = c.folds;
    cs.order = c.k;
    cs.lambda_grid = grid;
    cs.solver = opts;
    cs.seed = derive_seed(ts, stream::cv_folds, 1);
    cs.sigma = std::sqrt(sigma_hat * sigma_hat + sigma0 * sigma0);
    const CvReport report = graph_cv(graph, pair.y_sel, cs);
    SolverOptions fo = opts;
    fo.compute_df = false;
    const TrendFit sel = solve_l1(graph, pair.y_sel, c.k, report.lambda_1se, fo);
    const SelectedBasis basis = construct_basis(sel.beta, graph, c.k, &spectrum);
    const Matrix proj = projection_matrix(basis.matrix);

    SigmaBoundsSettings bs;
    bs.mode = c.bounds;
    bs.order = c.k;
    bs.folds = c.folds;
    bs.lambda_grid = grid;
    bs.sigma = sigma_hat;
    bs.solver = opts;
    bs.seed = derive_seed(ts, stream::cv_folds, 2);
    bs.spectrum = &spectrum;
    const SigmaBounds bounds = estimate_sigma_bounds(graph, y, bs);

    for (std::size_t j = 0; j < n; ++j) {
      const Vector eta = projection_contrast(proj, j);
      const double eta_mu = eta.dot(mu);
      const RobustInterval r = robust_ci(y.values, pair.y_sel.values, eta, bounds, sigma0, c.alpha, j);
      const Interval nv = naive_ci(y.values, pair.y_sel.values, eta, bounds.sigma_low, sigma0, c.alpha);
      rows.push_back({t, j, "robust", r.lower, r.upper, eta_mu, r.contains(eta_mu), bounds.sigma_low,
                      bounds.sigma_high, sigma0});
      rows.push_back({t, j, "naive", nv.lower, nv.upper, eta_mu, nv.contains(eta_mu), bounds.sigma_low,
                      bounds.sigma_high, sigma0});
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Poisson experiment

struct PoissonRow {
  double theta_scale = 0.0;
  int k = 0;
  int trial = 0;
  std::size_t node = 0;
  double lower = 0.0;
  double upper = 0.0;
  double target = 0.0;
  bool covered = false;

  double length() const { return upper - lower; }
};

/// Target for node intervals: B gamma*, where gamma* maximises the expected
/// working-model log-likelihood of the inference half (mean rate / 2).
inline Vector poisson_projection_target(const Matrix& basis, const Vector& rate, double tau, GlmOffset offset) {
  const GlmFit pop = fit_poisson_glm(basis, rate * (1.0 - tau), tau, offset);
  return basis * pop.gamma_hat;
}

inline std::vector<PoissonRow> run_poisson_experiment(const SimConfig& c) {
  c.validate();
  const Graph graph = sim_graph(c);
  const LaplacianSpectrum spectrum(graph);
  const std::size_t n = graph.node_count();
  const double lambda =
      c.lambda > 0.0 ? c.lambda : std::sqrt(std::log(static_cast<double>(n)) / static_cast<double>(n));
  std::vector<PoissonRow> rows;
  std::size_t cell = 0;
  for (double scale : c.thetas()) {
    for (int k : c.ks()) {
      for (int t = 0; t < c.trials; ++t) {
        const std::uint64_t ts = trial_seed(c.seed, cell, t);
        const Vector trend = generate_trend(graph, k, c.active_fraction_poisson, scale, ts);
        const Vector rate = (trend.array() + c.base_log_rate).exp().matrix();
        Rng rng = substream(ts, stream::noise);
        NodeSignal y{Vector(static_cast<Eigen::Index>(n)), SignalKind::count};
        for (std::size_t i = 0; i < n; ++i)
          y.values[static_cast<Eigen::Index>(i)] =
              static_cast<double>(std::poisson_distribution<long long>(rate[static_cast<Eigen::Index>(i)])(rng));

        PoissonPipelineSettings ps;
        ps.order = k;
        ps.lambda = lambda;
        ps.alpha = c.alpha;
        ps.solver.tol = c.tol;
        ps.seed = derive_seed(ts, stream::thin_poisson);
        ps.spectrum = &spectrum;
        const PoissonInference inf = poisson_ci_pipeline(graph, y, ps);
        const Vector target = poisson_projection_target(inf.basis.matrix, rate, 0.5, ps.offset);
        for (std::size_t i = 0; i < n; ++i) {
          const Interval& iv = inf.nodes[i];
          const double tg = target[static_cast<Eigen::Index>(i)];
          rows.push_back({scale, k, t, i, iv.lower, iv.upper, tg, iv.contains(tg)});
        }
      }
      ++cell;
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Output

namespace detail {
inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw FormatError("cannot write '" + p.string() + "'");
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  return out;
}
}  // namespace detail

inline void write_cv_csv(std::ostream& out, const CvExperiment& e) {
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "error_dist,jump,active,trial,method,rule,lambda,oracle_risk,df\n";
  for (const auto& r : e.rows)
    out << r.error_dist << ',' << r.jump << ',' << r.active << ',' << r.trial << ',' << r.method << ','
        << r.rule << ',' << r.lambda << ',' << r.oracle_risk << ',' << r.df << '\n';
}

inline void write_cv_curves_csv(std::ostream& out, const CvExperiment& e) {
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "error_dist,jump,active,method,lambda,cv_error,oracle_risk\n";
  for (const auto& c : e.curves)
    for (std::size_t g = 0; g < c.lambda_grid.size(); ++g)
      out << c.error_dist << ',' << c.jump << ',' << c.active << ',' << c.method << ',' << c.lambda_grid[g]
          << ',' << c.cv_error[g] << ',' << c.oracle_risk[g] << '\n';
}

inline void write_ci_csv(std::ostream& out, const std::vector<CiRow>& rows) {
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "trial,coord,method,lower,upper,eta_mu,covered,length,sigma_low,sigma_high,sigma0\n";
  for (const auto& r : rows)
    out << r.trial << ',' << r.coord << ',' << r.method << ',' << r.lower << ',' << r.upper << ',' << r.eta_mu
        << ',' << (r.covered ? 1 : 0) << ',' << r.length() << ',' << r.sigma_low << ',' << r.sigma_high << ','
        << r.sigma0 << '\n';
}

inline void write_poisson_csv(std::ostream& out, const std::vector<PoissonRow>& rows) {
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "theta_scale,k,trial,node,lower,upper,target,covered,length\n";
  for (const auto& r : rows)
    out << r.theta_scale << ',' << r.k << ',' << r.trial << ',' << r.node << ',' << r.lower << ',' << r.upper << ','
        << r.target << ',' << (r.covered ? 1 : 0) << ',' << r.length() << '\n';
}

/// Series for plotting: x values and one y value per x.
struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Whitespace-separated data file, one block per series (gnuplot `index`).
inline void write_plot_dat(std::ostream& out, const std::vector<PlotSeries>& series, const std::string& xlabel,
                           const std::string& ylabel) {
  out << std::setprecision(10);
  for (std::size_t s = 0; s < series.size(); ++s) {
    if (s) out << "\n\n";
    out << "# " << series[s].name << "\n# " << xlabel << ' ' << ylabel << '\n';
    for (std::size_t i = 0; i < series[s].x.size(); ++i) out << series[s].x[i] << ' ' << series[s].y[i] << '\n';
  }
}

/// Minimal line chart. `log_x` plots log10 of x.
inline void write_plot_svg(std::ostream& out, const std::vector<PlotSeries>& series, const std::string& title,
                           const std::string& xlabel, const std::string& ylabel, bool log_x = false) {
  constexpr double W = 640, H = 420, L = 70, R = 170, T = 40, B = 50;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  auto tx = [&](double x) { return log_x ? std::log10(x) : x; };
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      xmin = std::min(xmin, tx(s.x[i]));
      xmax = std::max(xmax, tx(s.x[i]));
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  if (!(xmax > xmin)) xmax = xmin + 1;
  if (!(ymax > ymin)) ymax = ymin + 1;
  auto px = [&](double x) { return L + (tx(x) - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };
  static const char* colors[] = {"#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666"};
  out << std::setprecision(6);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = xmin + (xmax - xmin) * i / 4.0;
    const double yv = ymin + (ymax - ymin) * i / 4.0;
    const double xpix = L + (W - L - R) * i / 4.0;
    const double ypix = H - B - (H - T - B) * i / 4.0;
    out << "<text x=\"" << xpix << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\" font-size=\"11\">"
        << (log_x ? std::pow(10.0, xv) : xv) << "</text>\n";
    out << "<text x=\"" << L - 6 << "\" y=\"" << ypix + 4 << "\" text-anchor=\"end\" font-size=\"11\">" << yv
        << "</text>\n";
  }
  out << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\" font-size=\"12\">"
      << xlabel << "</text>\n";
  out << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" font-size=\"12\" transform=\"rotate(-90 16 "
      << (T + H - B) / 2 << ")\" text-anchor=\"middle\">" << ylabel << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* col = colors[s % 8];
    out << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < series[s].x.size(); ++i) out << px(series[s].x[i]) << ',' << py(series[s].y[i]) << ' ';
    out << "\"/>\n";
    out << "<text x=\"" << W - R + 10 << "\" y=\"" << T + 16 * (s + 1) << "\" font-size=\"11\" fill=\"" << col
        << "\">" << series[s].name << "</text>\n";
  }
  out << "</svg>\n";
}

namespace detail {
inline void emit_series(const std::filesystem::path& dir, const std::string& stem, const std::vector<PlotSeries>& s,
                        const std::string& title, const std::string& xl, const std::string& yl, bool log_x) {
  auto dat = open_out(dir / (stem + ".dat"));
  write_plot_dat(dat, s, xl, yl);
  auto svg = open_out(dir / (stem + ".svg"));
  write_plot_svg(svg, s, title, xl, yl, log_x);
}

inline std::string fmt(double v) {
  std::ostringstream o;
  o << v;
  return o.str();
}
}  // namespace detail

/// Summary JSON plus plot data (.dat and .svg) for each experiment.
inline nlohmann::json emit_plotdata(const CvExperiment& e, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json summary = nlohmann::json::array();
  std::map<std::tuple<std::string, double, double, std::string, std::string>, std::pair<double, int>> risk;
  for (const auto& r : e.rows) {
    auto& acc = risk[{r.error_dist, r.jump, r.active, r.method, r.rule}];
    acc.first += r.oracle_risk;
    acc.second += 1;
  }
  for (const auto& [key, acc] : risk)
    summary.push_back({{"error_dist", std::get<0>(key)},
                       {"jump", std::get<1>(key)},
                       {"active", std::get<2>(key)},
                       {"method", std::get<3>(key)},
                       {"rule", std::get<4>(key)},
                       {"mean_oracle_risk", acc.first / acc.second},
                       {"trials", acc.second}});
  std::vector<PlotSeries> cv_curves, risk_curves;
  for (const auto& c : e.curves) {
    const std::string name = c.error_dist + " j=" + detail::fmt(c.jump) + " a=" + detail::fmt(c.active) + " " + c.method;
    cv_curves.push_back({name, c.lambda_grid, c.cv_error});
    if (c.method == "graph_cv") risk_curves.push_back({c.error_dist + " j=" + detail::fmt(c.jump) + " a=" + detail::fmt(c.active), c.lambda_grid, c.oracle_risk});
  }
  detail::emit_series(dir, "cv_error", cv_curves, "mean cv error", "lambda", "error", true);
  detail::emit_series(dir, "oracle_risk", risk_curves, "oracle risk of full-data fit", "lambda", "risk", true);
  return summary;
}

inline nlohmann::json emit_plotdata(const std::vector<CiRow>& rows, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::map<std::string, std::vector<double>> cover, length;
  std::map<int, std::pair<double, double>> bounds;
  for (const auto& r : rows) {
    cover[r.method].push_back(r.covered ? 1.0 : 0.0);
    length[r.method].push_back(r.length());
    bounds[r.trial] = {r.sigma_low, r.sigma_high};
  }
  nlohmann::json summary;
  std::vector<PlotSeries> series;
  for (const auto& [m, v] : cover) {
    double cov = 0, len = 0;
    for (double x : v) cov += x;
    for (double x : length[m]) len += x;
    summary[m] = {{"coverage", cov / v.size()}, {"mean_length", len / v.size()}, {"intervals", v.size()}};
  }
  PlotSeries lo{"sigma_low", {}, {}}, hi{"sigma_high", {}, {}};
  for (const auto& [t, b] : bounds) {
    lo.x.push_back(t);
    lo.y.push_back(b.first);
    hi.x.push_back(t);
    hi.y.push_back(b.second);
  }
  series = {lo, hi};
  detail::emit_series(dir, "sigma_bounds", series, "sigma bounds per trial", "trial", "sigma", false);
  std::vector<PlotSeries> cov_series;
  for (const auto& [m, v] : cover) {
    // Running coverage over trials.
    PlotSeries s{m, {}, {}};
    std::map<int, std::pair<double, int>> per_trial;
    for (const auto& r : rows)
      if (r.method == m) {
        per_trial[r.trial].first += r.covered;
        per_trial[r.trial].second += 1;
      }
    double acc = 0;
    int cnt = 0;
    for (const auto& [t, p] : per_trial) {
      acc += p.first;
      cnt += p.second;
      s.x.push_back(t + 1);
      s.y.push_back(acc / cnt);
    }
    cov_series.push_back(std::move(s));
  }
  detail::emit_series(dir, "coverage", cov_series, "running coverage", "trials", "coverage", false);
  return summary;
}

inline nlohmann::json emit_plotdata(const std::vector<PoissonRow>& rows, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::map<std::pair<int, double>, std::array<double, 3>> agg;  // covered, length, count
  for (const auto& r : rows) {
    auto& a = agg[{r.k, r.theta_scale}];
    a[0] += r.covered;
    a[1] += r.length();
    a[2] += 1;
  }
  nlohmann::json summary = nlohmann::json::array();
  std::map<int, PlotSeries> cov, len;
  for (const auto& [key, a] : agg) {
    summary.push_back({{"k", key.first},
                       {"theta_scale", key.second},
                       {"coverage", a[0] / a[2]},
                       {"mean_length", a[1] / a[2]},
                       {"intervals", a[2]}});
    auto& c = cov[key.first];
    c.name = "k=" + std::to_string(key.first);
    c.x.push_back(key.second);
    c.y.push_back(a[0] / a[2]);
    auto& l = len[key.first];
    l.name = c.name;
    l.x.push_back(key.second);
    l.y.push_back(a[1] / a[2]);
  }
  std::vector<PlotSeries> cs, ls;
  for (auto& [k, s] : cov) cs.push_back(s);
  for (auto& [k, s] : len) ls.push_back(s);
  detail::emit_series(dir, "poisson_coverage", cs, "coverage", "theta scale", "coverage", false);
  detail::emit_series(dir, "poisson_length", ls, "mean interval length", "theta scale", "length", false);
  return summary;
}

}  // namespace graphfission
