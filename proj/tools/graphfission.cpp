// Command-line front end: thin, tf, basis, cv, ci, simulate.

#include "graphfission/graphfission.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace gf = graphfission;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GraphInput {
  std::string edges;
  std::string grid;  // "RxC"

  gf::Graph load() const {
    if (!edges.empty() && !grid.empty()) throw std::invalid_argument("give either --graph or --grid, not both");
    if (!edges.empty()) return gf::read_graph(edges);
    if (grid.empty()) throw std::invalid_argument("a graph is required (--graph or --grid)");
    const auto x = grid.find('x');
    if (x == std::string::npos) throw std::invalid_argument("--grid expects RxC, e.g. 10x10");
    return gf::grid_graph(std::stoul(grid.substr(0, x)), std::stoul(grid.substr(x + 1)));
  }
};

void add_graph_options(CLI::App* cmd, GraphInput& g) {
  cmd->add_option("--graph", g.edges, "edge list file");
  cmd->add_option("--grid", g.grid, "grid graph RxC instead of an edge list");
}

void write_json(const std::string& path, const json& j) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw gf::FormatError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

gf::PenaltyForm penalty_of(const std::string& s) { return gf::parse_penalty(s); }

gf::Loss loss_of(const std::string& s) {
  if (s == "square") return gf::Loss::square;
  if (s == "poisson") return gf::Loss::poisson;
  throw std::invalid_argument("unknown loss '" + s + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"graph fission: thinning, trend filtering, cross-validation and inference on graphs"};
  app.require_subcommand(1);

  // thin -------------------------------------------------------------------
  GraphInput thin_graph;
  std::string thin_signal, thin_family = "gaussian", thin_out = ".";
  int thin_m = 2;
  std::optional<double> thin_sigma, thin_sigma0;
  std::uint64_t thin_seed = 0;
  auto* thin = app.add_subcommand("thin", "split a signal into independent copies");
  add_graph_options(thin, thin_graph);
  thin->add_option("--signal", thin_signal, "signal file")->required();
  thin->add_option("--family", thin_family, "gaussian|poisson")->check(CLI::IsMember({"gaussian", "poisson"}));
  thin->add_option("--m", thin_m, "number of copies");
  auto* sigma_opt = thin->add_option("--sigma", thin_sigma, "gaussian noise sd (m-way thinning)");
  thin->add_option("--sigma0", thin_sigma0, "fission noise sd (two-piece split)")->excludes(sigma_opt);
  thin->add_option("--seed", thin_seed, "random seed");
  thin->add_option("--out", thin_out, "output directory");

  // tf ---------------------------------------------------------------------
  GraphInput tf_graph;
  std::string tf_signal, tf_penalty = "l1", tf_loss = "square", tf_out, tf_diag, tf_basis;
  int tf_k = 0, tf_max_iter = 20000;
  double tf_lambda = 0.0, tf_lambda2 = 0.0, tf_tol = 1e-6;
  auto* tf = app.add_subcommand("tf", "fit a graph trend filter");
  add_graph_options(tf, tf_graph);
  tf->add_option("--signal", tf_signal, "signal file")->required();
  tf->add_option("--k", tf_k, "penalty order")->check(CLI::NonNegativeNumber);
  tf->add_option("--penalty", tf_penalty, "l1|l2|elastic")->check(CLI::IsMember({"l1", "l2", "elastic"}));
  tf->add_option("--lambda", tf_lambda, "penalty weight (l1 part for elastic)")->required();
  tf->add_option("--lambda2", tf_lambda2, "squared penalty weight (elastic)");
  tf->add_option("--loss", tf_loss, "square|poisson")->check(CLI::IsMember({"square", "poisson"}));
  tf->add_option("--tol", tf_tol, "solver tolerance");
  tf->add_option("--max-iter", tf_max_iter, "solver iteration cap");
  tf->add_option("--out", tf_out, "fitted signal file (default stdout)");
  tf->add_option("--diagnostics", tf_diag, "diagnostics JSON file (default stdout)");
  tf->add_option("--basis-out", tf_basis, "also write the extracted basis as CSV");

  // basis ------------------------------------------------------------------
  GraphInput basis_graph;
  std::string basis_fit, basis_out;
  int basis_k = 0;
  auto* basis = app.add_subcommand("basis", "extract the basis of an L1 fit");
  add_graph_options(basis, basis_graph);
  basis->add_option("--fit", basis_fit, "fitted signal file")->required();
  basis->add_option("--k", basis_k, "penalty order")->check(CLI::NonNegativeNumber);
  basis->add_option("--out", basis_out, "basis CSV (default stdout)");

  // cv ---------------------------------------------------------------------
  GraphInput cv_graph;
  std::string cv_signal, cv_family = "gaussian", cv_penalty = "l1", cv_method = "graph", cv_out, cv_summary;
  int cv_m = 5, cv_k = 0, cv_grid = 50;
  std::optional<double> cv_sigma;
  std::uint64_t cv_seed = 0;
  auto* cv = app.add_subcommand("cv", "choose lambda by cross-validation");
  add_graph_options(cv, cv_graph);
  cv->add_option("--signal", cv_signal, "signal file")->required();
  cv->add_option("--family", cv_family, "gaussian|poisson")->check(CLI::IsMember({"gaussian", "poisson"}));
  cv->add_option("--method", cv_method, "graph|ordinary")->check(CLI::IsMember({"graph", "ordinary"}));
  cv->add_option("--m", cv_m, "number of folds");
  cv->add_option("--k", cv_k, "penalty order")->check(CLI::NonNegativeNumber);
  cv->add_option("--penalty", cv_penalty, "l1|l2|elastic")->check(CLI::IsMember({"l1", "l2", "elastic"}));
  cv->add_option("--lambda-count", cv_grid, "size of the default lambda grid");
  cv->add_option("--sigma", cv_sigma, "gaussian noise sd (estimated when omitted)");
  cv->add_option("--seed", cv_seed, "random seed");
  cv->add_option("--out", cv_out, "CSV of lambda,fold,error (default stdout)");
  cv->add_option("--summary", cv_summary, "JSON summary file (default stdout)");

  // ci ---------------------------------------------------------------------
  GraphInput ci_graph;
  std::string ci_signal, ci_family = "gaussian", ci_sigma0 = "auto", ci_bounds = "recipe", ci_out, ci_summary;
  int ci_k = 1, ci_m = 5, ci_grid = 20;
  double ci_alpha = 0.1, ci_lambda = 0.0;
  std::uint64_t ci_seed = 0;
  auto* ci = app.add_subcommand("ci", "post-selection confidence intervals per node");
  add_graph_options(ci, ci_graph);
  ci->add_option("--signal", ci_signal, "signal file")->required();
  ci->add_option("--family", ci_family, "gaussian|poisson")->check(CLI::IsMember({"gaussian", "poisson"}));
  ci->add_option("--alpha", ci_alpha, "miscoverage level");
  ci->add_option("--k", ci_k, "penalty order")->check(CLI::NonNegativeNumber);
  ci->add_option("--sigma0", ci_sigma0, "fission noise sd, or auto");
  ci->add_option("--bounds", ci_bounds, "recipe|fallback")->check(CLI::IsMember({"recipe", "fallback"}));
  ci->add_option("--m", ci_m, "cv folds");
  ci->add_option("--lambda-count", ci_grid, "cv grid size");
  ci->add_option("--lambda", ci_lambda, "poisson: selection penalty (default sqrt(log n / n))");
  ci->add_option("--seed", ci_seed, "random seed");
  ci->add_option("--out", ci_out, "CSV of node,fitted,lower,upper (default stdout)");
  ci->add_option("--summary", ci_summary, "JSON summary file (default stdout)");

  // simulate ---------------------------------------------------------------
  std::string sim_experiment, sim_config, sim_out = "sim_out";
  auto* sim = app.add_subcommand("simulate", "run a simulation experiment");
  sim->add_option("--experiment", sim_experiment, "cv|ci|poisson")
      ->required()
      ->check(CLI::IsMember({"cv", "ci", "poisson"}));
  sim->add_option("--config", sim_config, "JSON config");
  sim->add_option("--out", sim_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*thin) {
      const gf::Graph g = thin_graph.load();
      const auto kind = thin_family == "poisson" ? gf::SignalKind::count : gf::SignalKind::continuous;
      const gf::NodeSignal y = gf::read_signal(thin_signal, g.node_count(), kind);
      fs::create_directories(thin_out);
      json manifest;
      if (thin_sigma0) {
        if (thin_family != "gaussian") throw std::invalid_argument("--sigma0 applies to the gaussian family");
        const gf::FissionPair pair = gf::fission_gaussian(y, *thin_sigma0, thin_seed);
        gf::write_signal((fs::path(thin_out) / "y_sel.csv").string(), pair.y_sel.values);
        gf::write_signal((fs::path(thin_out) / "y_inf.csv").string(), pair.y_inf.values);
        manifest = {{"family", "gaussian_fission"},
                    {"sigma0", pair.sigma0},
                    {"files", {"y_sel.csv", "y_inf.csv"}},
                    {"seed", thin_seed}};
      } else {
        gf::ThinnedFamily fam;
        if (thin_family == "poisson") {
          fam = gf::thin_poisson(y, thin_m, thin_seed);
        } else {
          if (!thin_sigma) throw std::invalid_argument("gaussian thinning needs --sigma (or --sigma0 for fission)");
          fam = gf::thin_gaussian(y, *thin_sigma, thin_m, thin_seed);
        }
        json files = json::array();
        for (std::size_t j = 0; j < fam.size(); ++j) {
          const std::string name = "copy_" + std::to_string(j) + ".csv";
          gf::write_signal((fs::path(thin_out) / name).string(), fam.copies[j].values);
          files.push_back(name);
        }
        manifest = {{"family", gf::to_string(fam.family)},
                    {"m", fam.size()},
                    {"weights", fam.weights},
                    {"recombine", gf::to_string(fam.recombine)},
                    {"files", files},
                    {"seed", thin_seed}};
        if (fam.family == gf::ThinFamily::gaussian) manifest["sigma"] = fam.sigma;
      }
      write_json((fs::path(thin_out) / "manifest.json").string(), manifest);
      return 0;
    }

    if (*tf) {
      const gf::Graph g = tf_graph.load();
      const gf::Loss loss = loss_of(tf_loss);
      const auto kind = loss == gf::Loss::poisson ? gf::SignalKind::count : gf::SignalKind::continuous;
      const gf::NodeSignal y = gf::read_signal(tf_signal, g.node_count(), kind);
      gf::SolverOptions opts;
      opts.tol = tf_tol;
      opts.max_iter = tf_max_iter;
      const gf::PenaltyForm form = penalty_of(tf_penalty);
      const gf::TrendFit fit = gf::fit_trend(g, y, tf_k, form, tf_lambda, tf_lambda2, loss, opts);
      if (tf_out.empty()) gf::write_signal(std::cout, fit.beta);
      else gf::write_signal(tf_out, fit.beta);
      json diag = {{"penalty", gf::to_string(form)},
                   {"loss", gf::to_string(loss)},
                   {"k", tf_k},
                   {"lambda", tf_lambda},
                   {"lambda2", tf_lambda2},
                   {"converged", fit.converged()},
                   {"iterations", fit.iterations},
                   {"kkt_residual", fit.kkt_residual},
                   {"df", fit.df},
                   {"objective", fit.objective},
                   {"polished", fit.polished},
                   {"clipped", fit.clipped}};
      write_json(tf_diag, diag);
      if (!tf_basis.empty()) {
        const gf::SelectedBasis b = gf::construct_basis(fit.beta, g, tf_k);
        std::ofstream out(tf_basis);
        if (!out) throw gf::FormatError("cannot write '" + tf_basis + "'");
        gf::write_matrix_csv(out, b.matrix);
      }
      return fit.converged() ? 0 : 3;
    }

    if (*basis) {
      const gf::Graph g = basis_graph.load();
      const gf::NodeSignal fit = gf::read_signal(basis_fit, g.node_count());
      const gf::SelectedBasis b = gf::construct_basis(fit.values, g, basis_k);
      if (basis_out.empty()) {
        gf::write_matrix_csv(std::cout, b.matrix);
      } else {
        std::ofstream out(basis_out);
        if (!out) throw gf::FormatError("cannot write '" + basis_out + "'");
        gf::write_matrix_csv(out, b.matrix);
      }
      return 0;
    }

    if (*cv) {
      const gf::Graph g = cv_graph.load();
      const bool counts = cv_family == "poisson";
      const gf::NodeSignal y =
          gf::read_signal(cv_signal, g.node_count(), counts ? gf::SignalKind::count : gf::SignalKind::continuous);
      gf::CvSettings s;
      s.family = counts ? gf::ThinFamily::poisson : gf::ThinFamily::gaussian;
      s.folds = cv_m;
      s.order = cv_k;
      s.form = penalty_of(cv_penalty);
      s.lambda_grid = gf::default_lambda_grid(g.node_count(), cv_grid);
      s.sigma = cv_sigma;
      s.seed = cv_seed;
      const gf::CvReport r = cv_method == "graph" ? gf::graph_cv(g, y, s) : gf::ordinary_cv(g, y, s);
      std::ostringstream csv;
      csv << std::setprecision(17) << "lambda,fold,error\n";
      for (std::size_t gi = 0; gi < r.lambda_grid.size(); ++gi)
        for (Eigen::Index j = 0; j < r.fold_errors.rows(); ++j)
          csv << r.lambda_grid[gi] << ',' << j << ',' << r.fold_errors(j, static_cast<Eigen::Index>(gi)) << '\n';
      if (cv_out.empty()) {
        std::cout << csv.str();
      } else {
        std::ofstream out(cv_out);
        if (!out) throw gf::FormatError("cannot write '" + cv_out + "'");
        out << csv.str();
      }
      json summary = {{"method", gf::to_string(r.method)},
                      {"lambda_min", r.lambda_min},
                      {"lambda_1se", r.lambda_1se},
                      {"folds", cv_m}};
      if (!counts && cv_method == "graph") summary["sigma_hat"] = r.sigma_hat;
      write_json(cv_summary, summary);
      return 0;
    }

    if (*ci) {
      const gf::Graph g = ci_graph.load();
      const gf::LaplacianSpectrum spectrum(g);
      std::ostringstream csv;
      csv << std::setprecision(17);
      json summary;
      if (ci_family == "poisson") {
        const gf::NodeSignal y = gf::read_signal(ci_signal, g.node_count(), gf::SignalKind::count);
        gf::PoissonPipelineSettings ps;
        ps.order = ci_k;
        const double n = static_cast<double>(g.node_count());
        ps.lambda = ci_lambda > 0.0 ? ci_lambda : std::sqrt(std::log(std::max(n, 2.0)) / n);
        ps.alpha = ci_alpha;
        ps.seed = ci_seed;
        ps.spectrum = &spectrum;
        const gf::PoissonInference inf = gf::poisson_ci_pipeline(g, y, ps);
        csv << "node,fitted,lower,upper\n";
        for (std::size_t i = 0; i < inf.nodes.size(); ++i)
          csv << i << ',' << inf.nodes[i].center << ',' << inf.nodes[i].lower << ',' << inf.nodes[i].upper << '\n';
        json coef = json::array();
        for (const auto& c : inf.coefficients) coef.push_back({{"estimate", c.center}, {"lower", c.lower}, {"upper", c.upper}});
        summary = {{"family", "poisson"},
                   {"lambda", ps.lambda},
                   {"tau", 0.5},
                   {"basis_columns", inf.basis.cols()},
                   {"coefficients", coef}};
      } else {
        const gf::NodeSignal y = gf::read_signal(ci_signal, g.node_count());
        gf::SolverOptions opts;
        const double sigma_hat = gf::estimate_sigma_fixed_lambda(g, y, ci_k, opts);
        const double sigma0 = ci_sigma0 == "auto" ? sigma_hat : std::stod(ci_sigma0);
        if (!(sigma0 > 0.0)) throw std::invalid_argument("sigma0 must be positive (auto estimate was zero)");
        const gf::FissionPair pair = gf::fission_gaussian(y, sigma0, gf::derive_seed(ci_seed, gf::stream::fission));
        const auto grid = gf::default_lambda_grid(g.node_count(), ci_grid);
        gf::CvSettings cs;
        cs.folds = ci_m;
        cs.order = ci_k;
        cs.lambda_grid = grid;
        cs.seed = gf::derive_seed(ci_seed, gf::stream::cv_folds, 1);
        cs.sigma = std::sqrt(sigma_hat * sigma_hat + sigma0 * sigma0);
        const gf::CvReport report = gf::graph_cv(g, pair.y_sel, cs);
        const gf::TrendFit sel = gf::solve_l1(g, pair.y_sel, ci_k, report.lambda_1se, opts, nullptr, &spectrum);
        const gf::SelectedBasis b = gf::construct_basis(sel.beta, g, ci_k, &spectrum);
        const gf::Matrix proj = gf::projection_matrix(b.matrix);
        gf::SigmaBoundsSettings bs;
        bs.mode = ci_bounds == "recipe" ? gf::BoundsMode::recipe : gf::BoundsMode::fallback;
        bs.order = ci_k;
        bs.folds = ci_m;
        bs.lambda_grid = grid;
        bs.sigma = sigma_hat;
        bs.seed = gf::derive_seed(ci_seed, gf::stream::cv_folds, 2);
        bs.spectrum = &spectrum;
        const gf::SigmaBounds bounds = gf::estimate_sigma_bounds(g, y, bs);
        csv << "node,fitted,lower,upper,a1,a2\n";
        double tau_low = 0, tau_high = 0;
        for (std::size_t j = 0; j < g.node_count(); ++j) {
          const gf::RobustInterval r =
              gf::robust_ci(y.values, pair.y_sel.values, gf::projection_contrast(proj, j), bounds, sigma0, ci_alpha, j);
          tau_low = r.tau_low;
          tau_high = r.tau_high;
          csv << j << ',' << 0.5 * (r.a1 + r.a2) << ',' << r.lower << ',' << r.upper << ',' << r.a1 << ',' << r.a2
              << '\n';
        }
        summary = {{"family", "gaussian"},
                   {"sigma_low", bounds.sigma_low},
                   {"sigma_high", bounds.sigma_high},
                   {"low_method", gf::to_string(bounds.low_method)},
                   {"high_method", gf::to_string(bounds.high_method)},
                   {"swapped", bounds.swapped},
                   {"degenerate", bounds.degenerate},
                   {"tau_low", tau_low},
                   {"tau_high", tau_high},
                   {"sigma0", sigma0},
                   {"lambda_1se", report.lambda_1se},
                   {"basis_columns", b.cols()}};
      }
      if (ci_out.empty()) {
        std::cout << csv.str();
      } else {
        std::ofstream out(ci_out);
        if (!out) throw gf::FormatError("cannot write '" + ci_out + "'");
        out << csv.str();
      }
      write_json(ci_summary, summary);
      return 0;
    }

    if (*sim) {
      const gf::SimConfig cfg = sim_config.empty() ? gf::SimConfig{} : gf::read_sim_config(sim_config);
      const fs::path dir(sim_out);
      fs::create_directories(dir);
      json summary;
      if (sim_experiment == "cv") {
        const auto e = gf::run_cv_experiment(cfg);
        std::ofstream rows(dir / "cv_rows.csv"), curves(dir / "cv_curves.csv");
        gf::write_cv_csv(rows, e);
        gf::write_cv_curves_csv(curves, e);
        summary = gf::emit_plotdata(e, dir);
      } else if (sim_experiment == "ci") {
        const auto rows = gf::run_ci_experiment(cfg);
        std::ofstream out(dir / "ci_rows.csv");
        gf::write_ci_csv(out, rows);
        summary = gf::emit_plotdata(rows, dir);
      } else {
        const auto rows = gf::run_poisson_experiment(cfg);
        std::ofstream out(dir / "poisson_rows.csv");
        gf::write_poisson_csv(out, rows);
        summary = gf::emit_plotdata(rows, dir);
      }
      write_json((dir / "summary.json").string(), summary);
      return 0;
    }
  } catch (const gf::FormatError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
