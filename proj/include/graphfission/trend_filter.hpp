#pragma once

/// Graph trend filtering:
///
///   minimize  loss(y, beta) + penalty(D beta),   D = difference_operator(k)
///
/// with loss (1/n)|y - beta|^2 (square) or (1/n) sum(exp(beta) - y beta)
/// (poisson), and penalty lambda |.|_1, lambda |.|_2^2, or their sum.
///
/// The L2 problem is a single SPD solve. The L1 and elastic problems are
/// solved by ADMM on the split D beta = z with residual balancing; once the
/// sign pattern of z settles, a polishing step solves the problem restricted
/// to that pattern exactly and is accepted only if it passes the KKT check.

#include "graphfission/basis.hpp"
#include "graphfission/graph.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace graphfission {

enum class PenaltyForm { l1, l2, elastic };
enum class Loss { square, poisson };

inline const char* to_string(PenaltyForm p) {
  switch (p) {
    case PenaltyForm::l1: return "l1";
    case PenaltyForm::l2: return "l2";
    case PenaltyForm::elastic: return "elastic";
  }
  return "?";
}
inline const char* to_string(Loss l) { return l == Loss::square ? "square" : "poisson"; }

struct PenaltySpec {
  int order = 0;
  PenaltyForm form = PenaltyForm::l1;
  double lambda1 = 0.0;  // weight of |D beta|_1
  double lambda2 = 0.0;  // weight of |D beta|_2^2

  static PenaltySpec l1(int k, double lambda) { return {k, PenaltyForm::l1, lambda, 0.0}; }
  static PenaltySpec l2(int k, double lambda) { return {k, PenaltyForm::l2, 0.0, lambda}; }
  static PenaltySpec elastic(int k, double l1w, double l2w) { return {k, PenaltyForm::elastic, l1w, l2w}; }

  void validate() const {
    if (order < 0) throw std::invalid_argument("penalty order must be >= 0");
    if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw std::invalid_argument("penalty weights must be >= 0");
  }
};

enum class SolverStatus { converged, max_iterations };

struct SolverOptions {
  double tol = 1e-6;
  int max_iter = 20000;
  double rho = 1.0;
  bool polish = true;
  bool compute_df = true;
  bool record_objective = false;
};

/// ADMM iterate, kept so a later solve can warm start from it.
struct AdmmState {
  Vector beta;
  Vector z;
  Vector u;
  double rho = 1.0;
};

struct TrendFit {
  Vector beta;
  PenaltySpec penalty;
  Loss loss = Loss::square;
  SolverStatus status = SolverStatus::converged;
  int iterations = 0;
  double kkt_residual = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double objective = 0.0;
  int df = 0;
  bool polished = false;
  bool clipped = false;  // poisson: an iterate hit the |beta| <= 50 guard
  std::vector<double> objective_trace;
  AdmmState state;

  bool converged() const { return status == SolverStatus::converged; }
};

namespace detail {

inline constexpr double kZeroThreshold = 1e-8;
inline constexpr double kBetaClip = 50.0;

inline double sign(double x) { return (x > 0.0) - (x < 0.0); }

inline Vector soft_threshold(const Vector& v, double t) {
  return v.unaryExpr([t](double x) { return sign(x) * std::max(std::abs(x) - t, 0.0); });
}

inline SparseMatrix select_rows(const SparseMatrix& d, const std::vector<Eigen::Index>& rows) {
  std::vector<Eigen::Triplet<double>> trip;
  const Eigen::SparseMatrix<double, Eigen::RowMajor> rm = d;
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(rm, rows[r]); it; ++it)
      trip.emplace_back(static_cast<Eigen::Index>(r), it.col(), it.value());
  SparseMatrix out(static_cast<Eigen::Index>(rows.size()), d.cols());
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

inline Vector poisson_mean(const Vector& beta) { return beta.array().exp().matrix(); }

inline double square_loss(const Vector& y, const Vector& beta) {
  return (y - beta).squaredNorm() / static_cast<double>(y.size());
}

inline double poisson_loss(const Vector& y, const Vector& beta) {
  return (beta.array().exp() - y.array() * beta.array()).sum() / static_cast<double>(y.size());
}

/// Minimises |g + M u|_2 over the box |u_i| <= 1 and returns the residual.
/// Bounded-variable least squares (Stark-Parker active set), starting from
/// the feasible point u = 0 with every variable free.
inline Vector box_least_squares_residual(const Vector& g, const Matrix& m) {
  const Eigen::Index p = m.cols();
  if (p == 0) return g;
  constexpr double slack = 1e-12;
  Vector u = Vector::Zero(p);
  std::vector<int> bound(static_cast<std::size_t>(p), 0);  // -1 lower, +1 upper, 0 free

  auto solve_free = [&](std::vector<Eigen::Index>& free) {
    Vector rhs = -g;
    for (Eigen::Index j = 0; j < p; ++j)
      if (bound[static_cast<std::size_t>(j)] != 0) rhs -= m.col(j) * u[j];
    Matrix mf(m.rows(), static_cast<Eigen::Index>(free.size()));
    for (std::size_t t = 0; t < free.size(); ++t) mf.col(static_cast<Eigen::Index>(t)) = m.col(free[t]);
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(mf);
    return Vector(cod.solve(rhs));
  };

  const int max_outer = static_cast<int>(3 * p + 50);
  for (int outer = 0; outer < max_outer; ++outer) {
    for (int inner = 0; inner <= p; ++inner) {
      std::vector<Eigen::Index> free;
      for (Eigen::Index j = 0; j < p; ++j)
        if (bound[static_cast<std::size_t>(j)] == 0) free.push_back(j);
      if (free.empty()) break;
      const Vector target = solve_free(free);
      bool inside = true;
      for (Eigen::Index t = 0; t < target.size(); ++t)
        if (std::abs(target[t]) > 1.0 + slack) inside = false;
      if (inside) {
        for (std::size_t t = 0; t < free.size(); ++t)
          u[free[t]] = std::clamp(target[static_cast<Eigen::Index>(t)], -1.0, 1.0);
        break;
      }
      // Walk from u toward the target until the first bound is reached.
      double alpha = 1.0;
      for (std::size_t t = 0; t < free.size(); ++t) {
        const double from = u[free[t]];
        const double to = target[static_cast<Eigen::Index>(t)];
        if (std::abs(to) > 1.0 + slack) {
          const double edge = to > 0.0 ? 1.0 : -1.0;
          alpha = std::min(alpha, (edge - from) / (to - from));
        }
      }
      alpha = std::clamp(alpha, 0.0, 1.0);
      for (std::size_t t = 0; t < free.size(); ++t) {
        const auto j = free[t];
        u[j] += alpha * (target[static_cast<Eigen::Index>(t)] - u[j]);
        if (u[j] >= 1.0 - slack) {
          u[j] = 1.0;
          bound[static_cast<std::size_t>(j)] = 1;
        } else if (u[j] <= -1.0 + slack) {
          u[j] = -1.0;
          bound[static_cast<std::size_t>(j)] = -1;
        }
      }
    }
    // Release the bound variable whose gradient most strongly points inward.
    const Vector descent = -(m.transpose() * (g + m * u));
    Eigen::Index best = -1;
    double best_value = 1e-14 * std::max(1.0, g.cwiseAbs().maxCoeff());
    for (Eigen::Index j = 0; j < p; ++j) {
      const int b = bound[static_cast<std::size_t>(j)];
      const double inward = b == -1 ? descent[j] : (b == 1 ? -descent[j] : 0.0);
      if (inward > best_value) {
        best_value = inward;
        best = j;
      }
    }
    if (best < 0) break;
    bound[static_cast<std::size_t>(best)] = 0;
  }
  return g + m * u;
}

}  // namespace detail

/// Optimality certificate for  smooth(beta) + lambda |D beta|_1  given the
/// smooth part's gradient at beta: the smallest |grad + lambda D^T u|_inf
/// over subgradients u (sign of (D beta)_i on rows above `zero_tol`, a
/// box-constrained least-squares fit on the rest).
inline double kkt_residual(const SparseMatrix& d, const Vector& smooth_grad, double lambda,
                           const Vector& beta, double zero_tol = detail::kZeroThreshold) {
  if (lambda == 0.0 || d.rows() == 0) return smooth_grad.cwiseAbs().maxCoeff();
  const Vector db = d * beta;
  std::vector<Eigen::Index> zero_rows;
  Vector g = smooth_grad;
  Vector signs = Vector::Zero(db.size());
  for (Eigen::Index i = 0; i < db.size(); ++i) {
    if (std::abs(db[i]) > zero_tol) {
      signs[i] = detail::sign(db[i]);
    } else {
      zero_rows.push_back(i);
    }
  }
  g += lambda * (d.transpose() * signs);
  const Matrix m = lambda * Matrix(detail::select_rows(d, zero_rows).transpose());
  return detail::box_least_squares_residual(g, m).cwiseAbs().maxCoeff();
}

/// Square-loss L1 problem on `graph` with order k.
inline double kkt_residual(const Graph& graph, const Vector& y, int k, double lambda, const Vector& beta) {
  const SparseMatrix d = difference_operator(graph, k).matrix;
  const Vector grad = (2.0 / static_cast<double>(y.size())) * (beta - y);
  return kkt_residual(d, grad, lambda, beta);
}

inline double objective_value(const Vector& y, const Vector& beta, const SparseMatrix& d,
                              const PenaltySpec& pen, Loss loss) {
  const Vector db = d * beta;
  const double data = loss == Loss::square ? detail::square_loss(y, beta) : detail::poisson_loss(y, beta);
  return data + pen.lambda1 * db.lpNorm<1>() + pen.lambda2 * db.squaredNorm();
}

namespace detail {

/// Orthonormal basis of null(D restricted to `inactive` rows). For k = 0
/// this is the set of normalised component indicators of the graph with
/// the active edges removed.
inline Matrix restricted_null_space(const Graph& graph, const SparseMatrix& d, int k,
                                    const std::vector<Eigen::Index>& inactive,
                                    const std::vector<Eigen::Index>& active) {
  const auto n = d.cols();
  if (k == 0) {
    std::vector<std::size_t> removed(active.begin(), active.end());
    const Partition p = components_without_edges(graph, removed);
    Matrix nmat = Matrix::Zero(n, p.count);
    for (Eigen::Index i = 0; i < n; ++i) nmat(i, p.label[static_cast<std::size_t>(i)]) = 1.0;
    for (Eigen::Index c = 0; c < nmat.cols(); ++c) nmat.col(c).normalize();
    return nmat;
  }
  if (inactive.empty()) return Matrix::Identity(n, n);
  const Matrix dm = Matrix(select_rows(d, inactive));
  Eigen::BDCSVD<Matrix> svd(dm, Eigen::ComputeFullV);
  const Vector& sv = svd.singularValues();
  const double top = sv.size() > 0 ? sv[0] : 0.0;
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv[i] > 1e-10 * std::max(top, 1e-300)) ++rank;
  return svd.matrixV().rightCols(n - rank);
}

struct SignPattern {
  std::vector<Eigen::Index> active;
  std::vector<Eigen::Index> inactive;
  Vector signs;  // length = rows of D, zero off the active set

  bool operator==(const SignPattern& other) const {
    return active == other.active && signs.size() == other.signs.size() && signs == other.signs;
  }
};

inline SignPattern sign_pattern(const Vector& z) {
  SignPattern p;
  p.signs = Vector::Zero(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (z[i] != 0.0) {
      p.active.push_back(i);
      p.signs[i] = sign(z[i]);
    } else {
      p.inactive.push_back(i);
    }
  }
  return p;
}

/// Square loss restricted to beta in null(D_inactive) with fixed active
/// signs: N^T (I + n lambda2 D^T D) N c = N^T (y - (n lambda1 / 2) D^T s).
inline Vector polish_square(const Graph& graph, const SparseMatrix& d, int k, const Vector& y,
                            const PenaltySpec& pen, const SignPattern& pattern) {
  const auto n = static_cast<double>(y.size());
  const Matrix nmat = restricted_null_space(graph, d, k, pattern.inactive, pattern.active);
  if (nmat.cols() == 0) return Vector::Zero(y.size());
  const Vector rhs = y - (n * pen.lambda1 / 2.0) * (d.transpose() * pattern.signs);
  if (pen.lambda2 == 0.0) return nmat * (nmat.transpose() * rhs);
  const Matrix dn = d * nmat;
  Matrix lhs = Matrix::Identity(nmat.cols(), nmat.cols()) + n * pen.lambda2 * (dn.transpose() * dn);
  return nmat * lhs.llt().solve(nmat.transpose() * rhs);
}

/// Poisson loss restricted the same way, by damped Newton in the null-space
/// coordinates starting from the projection of `start`.
inline std::optional<Vector> polish_poisson(const Graph& graph, const SparseMatrix& d, int k,
                                            const Vector& y, const PenaltySpec& pen,
                                            const SignPattern& pattern, const Vector& start) {
  const auto n = static_cast<double>(y.size());
  const Matrix nmat = restricted_null_space(graph, d, k, pattern.inactive, pattern.active);
  if (nmat.cols() == 0) return std::nullopt;
  const Vector lin = n * pen.lambda1 * (d.transpose() * pattern.signs) - y;  // linear term
  auto f = [&](const Vector& beta) { return beta.array().exp().sum() + lin.dot(beta); };
  Vector c = nmat.transpose() * start;
  Vector beta = nmat * c;
  for (int it = 0; it < 100; ++it) {
    if (beta.cwiseAbs().maxCoeff() > kBetaClip) return std::nullopt;
    const Vector mu = poisson_mean(beta);
    const Vector grad = nmat.transpose() * (mu + lin);
    if (grad.cwiseAbs().maxCoeff() < 1e-13 * std::max(1.0, mu.sum())) break;
    const Matrix hess = nmat.transpose() * mu.asDiagonal() * nmat;
    const Vector step = hess.ldlt().solve(grad);
    const double f0 = f(beta);
    double t = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls) {
      const Vector trial = nmat * (c - t * step);
      if (trial.cwiseAbs().maxCoeff() <= kBetaClip && f(trial) <= f0 - 1e-4 * t * grad.dot(step)) {
        c -= t * step;
        beta = trial;
        moved = true;
        break;
      }
      t *= 0.5;
    }
    if (!moved) break;
  }
  return beta;
}

/// Smooth-part gradient (in the 1/n-scaled objective) at beta.
inline Vector smooth_gradient(const Vector& y, const Vector& beta, const SparseMatrix& d,
                              const PenaltySpec& pen, Loss loss) {
  const double n = static_cast<double>(y.size());
  Vector g = loss == Loss::square ? Vector((2.0 / n) * (beta - y)) : Vector((poisson_mean(beta) - y) / n);
  if (pen.lambda2 != 0.0) g += 2.0 * pen.lambda2 * (d.transpose() * (d * beta));
  return g;
}

class AdmmSolver {
 public:
  AdmmSolver(const Graph& graph, const Vector& y, const PenaltySpec& pen, Loss loss,
             const SolverOptions& opts)
      : graph_(graph), y_(y), pen_(pen), loss_(loss), opts_(opts),
        d_(difference_operator(graph, pen.order).matrix),
        dtd_(SparseMatrix(d_.transpose() * d_)),
        n_(static_cast<double>(y.size())) {}

  TrendFit run(const AdmmState* warm) {
    TrendFit fit;
    fit.penalty = pen_;
    fit.loss = loss_;
    const auto p = d_.rows();
    double rho = opts_.rho;
    Vector beta = y_;
    if (loss_ == Loss::poisson) beta = y_.cwiseMax(0.5).array().log().matrix();
    Vector z = d_ * beta;
    Vector u = Vector::Zero(p);
    if (warm && warm->beta.size() == y_.size() && warm->z.size() == p) {
      beta = warm->beta;
      z = warm->z;
      u = warm->u;
      rho = warm->rho;
    }
    const double c1 = (loss_ == Loss::square ? n_ / 2.0 : n_) * pen_.lambda1;
    const double c2 = (loss_ == Loss::square ? n_ : 2.0 * n_) * pen_.lambda2;
    const double sqrt_p = std::sqrt(std::max<double>(static_cast<double>(p), 1.0));
    const double sqrt_n = std::sqrt(n_);

    factorize(rho + c2);
    SignPattern last_pattern;
    int stable = 0;
    bool polish_tried = false;
    double r_norm = 0.0;
    double s_norm = 0.0;
    double best_objective = std::numeric_limits<double>::infinity();
    Vector best_beta = beta;
    int iter = 0;
    for (; iter < opts_.max_iter; ++iter) {
      const Vector rhs_shift = rho * (d_.transpose() * (z - u));
      if (loss_ == Loss::square) {
        beta = llt_.solve(y_ + rhs_shift);
      } else {
        beta = newton_beta(beta, z, u, rho, c2, fit.clipped);
      }
      const Vector db = d_ * beta;
      const Vector z_old = z;
      z = soft_threshold(db + u, c1 / rho);
      u += db - z;
      r_norm = (db - z).norm() / sqrt_p;
      s_norm = rho * (d_.transpose() * (z - z_old)).norm() / sqrt_n;
      // ADMM iterates are not monotone in the objective; keep the best one.
      const double obj = objective_from(beta, db);
      if (obj < best_objective) {
        best_objective = obj;
        best_beta = beta;
      }
      if (opts_.record_objective) fit.objective_trace.push_back(best_objective);

      if (r_norm < opts_.tol && s_norm < opts_.tol) {
        ++iter;
        break;
      }

      if (opts_.polish) {
        SignPattern pattern = sign_pattern(z);
        if (pattern == last_pattern) {
          ++stable;
        } else {
          stable = 0;
          polish_tried = false;
          last_pattern = std::move(pattern);
        }
        if (stable >= 20 && !polish_tried && r_norm < 1e-2 && s_norm < 1e-2) {
          polish_tried = true;
          if (try_polish(last_pattern, beta, fit)) {
            fit.iterations = iter + 1;
            fit.primal_residual = r_norm;
            fit.dual_residual = s_norm;
            fit.state = {fit.beta, d_ * fit.beta, u, rho};
            return fit;
          }
        }
      }

      if ((iter + 1) % 10 == 0) {
        if (r_norm > 10.0 * s_norm) {
          rho *= 2.0;
          u /= 2.0;
          factorize(rho + c2);
        } else if (s_norm > 10.0 * r_norm) {
          rho /= 2.0;
          u *= 2.0;
          factorize(rho + c2);
        }
      }
    }

    fit.iterations = iter;
    fit.primal_residual = r_norm;
    fit.dual_residual = s_norm;
    const bool residuals_ok = r_norm < opts_.tol && s_norm < opts_.tol;
    fit.status = residuals_ok ? SolverStatus::converged : SolverStatus::max_iterations;
    if (!residuals_ok) beta = best_beta;
    fit.beta = beta;
    fit.state = {beta, z, u, rho};
    if (opts_.polish && try_polish(sign_pattern(z), beta, fit)) {
      fit.status = SolverStatus::converged;
      fit.state = {fit.beta, d_ * fit.beta, u, rho};
      return fit;
    }
    fit.kkt_residual = kkt(beta);
    fit.objective = objective_value(y_, beta, d_, pen_, loss_);
    return fit;
  }

  const SparseMatrix& operator_matrix() const { return d_; }

 private:
  double objective_from(const Vector& beta, const Vector& db) const {
    const double data = loss_ == Loss::square ? square_loss(y_, beta) : poisson_loss(y_, beta);
    return data + pen_.lambda1 * db.lpNorm<1>() + pen_.lambda2 * db.squaredNorm();
  }

  double kkt(const Vector& beta) const {
    return kkt_residual(d_, smooth_gradient(y_, beta, d_, pen_, loss_), pen_.lambda1, beta);
  }

  bool try_polish(const SignPattern& pattern, const Vector& admm_beta, TrendFit& fit) {
    std::optional<Vector> candidate;
    if (loss_ == Loss::square) {
      candidate = polish_square(graph_, d_, pen_.order, y_, pen_, pattern);
    } else {
      candidate = polish_poisson(graph_, d_, pen_.order, y_, pen_, pattern, admm_beta);
    }
    if (!candidate) return false;
    const double res = kkt(*candidate);
    const double accept = std::max(1e-3 * opts_.tol, 1e-12);
    if (!(res <= accept)) return false;
    fit.beta = std::move(*candidate);
    fit.kkt_residual = res;
    fit.objective = objective_value(y_, fit.beta, d_, pen_, loss_);
    fit.status = SolverStatus::converged;
    fit.polished = true;
    return true;
  }

  void factorize(double weight) {
    SparseMatrix system = weight * dtd_;
    if (loss_ == Loss::square) {
      SparseMatrix eye(system.rows(), system.cols());
      eye.setIdentity();
      system += eye;
      llt_.compute(system);
      if (llt_.info() != Eigen::Success) throw std::runtime_error("ADMM system factorization failed");
    }
  }

  /// Inexact beta update for the poisson loss: a few damped Newton steps on
  /// sum(exp(b) - y b) + (c2/2)|D b|^2 + (rho/2)|D b - z + u|^2.
  Vector newton_beta(Vector beta, const Vector& z, const Vector& u, double rho, double c2, bool& clipped) {
    const SparseMatrix quad = (rho + c2) * dtd_;
    const Vector lin = -y_ - rho * (d_.transpose() * (z - u));
    auto f = [&](const Vector& b) {
      return b.array().exp().sum() + lin.dot(b) + 0.5 * b.dot(quad * b);
    };
    if (!poisson_pattern_ready_) {
      SparseMatrix h = quad;
      SparseMatrix eye(h.rows(), h.cols());
      eye.setIdentity();
      h += eye;
      poisson_ldlt_.analyzePattern(h);
      poisson_pattern_ready_ = true;
    }
    for (int step = 0; step < 5; ++step) {
      const Vector mu = poisson_mean(beta);
      const Vector grad = mu + lin + quad * beta;
      if (grad.cwiseAbs().maxCoeff() < 1e-12 * std::max(1.0, mu.cwiseAbs().maxCoeff())) break;
      SparseMatrix h = quad;
      for (Eigen::Index i = 0; i < h.rows(); ++i) h.coeffRef(i, i) += mu[i];
      poisson_ldlt_.factorize(h);
      const Vector delta = poisson_ldlt_.solve(grad);
      const double f0 = f(beta);
      double t = 1.0;
      Vector trial = beta;
      for (int ls = 0; ls < 50; ++ls) {
        trial = beta - t * delta;
        if (f(trial) <= f0 - 1e-4 * t * grad.dot(delta)) break;
        t *= 0.5;
      }
      beta = trial;
      if (beta.cwiseAbs().maxCoeff() > kBetaClip) {
        beta = beta.cwiseMax(-kBetaClip).cwiseMin(kBetaClip);
        clipped = true;
      }
      if ((t * delta).cwiseAbs().maxCoeff() < 1e-12) break;
    }
    return beta;
  }

  const Graph& graph_;
  const Vector& y_;
  PenaltySpec pen_;
  Loss loss_;
  SolverOptions opts_;
  SparseMatrix d_;
  SparseMatrix dtd_;
  double n_;
  Eigen::SimplicialLLT<SparseMatrix> llt_;
  Eigen::SimplicialLDLT<SparseMatrix> poisson_ldlt_;
  bool poisson_pattern_ready_ = false;
};

inline void check_inputs(const Graph& graph, const NodeSignal& y) { validate_signal(y, graph); }

inline void fill_df(TrendFit& fit, const Graph& graph, const SolverOptions& opts,
                    const LaplacianSpectrum* spectrum) {
  if (!opts.compute_df) return;
  const SelectedBasis basis = construct_basis(fit.beta, graph, fit.penalty.order, spectrum);
  fit.df = std::min(basis.unpruned_columns, static_cast<int>(graph.node_count()));
}

}  // namespace detail

/// beta = (I + n lambda D^T D)^{-1} y.
inline TrendFit solve_l2(const Graph& graph, const NodeSignal& y, int k, double lambda,
                         const SolverOptions& opts = {}) {
  detail::check_inputs(graph, y);
  const PenaltySpec pen = PenaltySpec::l2(k, lambda);
  pen.validate();
  const SparseMatrix d = difference_operator(graph, k).matrix;
  const auto n = y.values.size();
  SparseMatrix system = SparseMatrix(d.transpose() * d) * (static_cast<double>(n) * lambda);
  SparseMatrix eye(n, n);
  eye.setIdentity();
  system += eye;
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(system);
  if (ldlt.info() != Eigen::Success) throw std::runtime_error("L2 trend system factorization failed");
  TrendFit fit;
  fit.penalty = pen;
  fit.loss = Loss::square;
  fit.beta = ldlt.solve(y.values);
  // One step of iterative refinement.
  const Vector residual = y.values - system * fit.beta;
  fit.beta += ldlt.solve(residual);
  fit.iterations = 1;
  fit.primal_residual = (y.values - system * fit.beta).norm();
  fit.kkt_residual = detail::smooth_gradient(y.values, fit.beta, d, pen, Loss::square).cwiseAbs().maxCoeff();
  fit.objective = objective_value(y.values, fit.beta, d, pen, Loss::square);
  if (opts.compute_df) {
    // Effective degrees of freedom: trace of the smoother matrix.
    const Matrix smoother = ldlt.solve(Matrix::Identity(n, n));
    fit.df = std::max(1, static_cast<int>(std::lround(smoother.trace())));
  }
  fit.state.beta = fit.beta;
  return fit;
}

/// (1/n)|y - beta|^2 + lambda1 |D beta|_1 + lambda2 |D beta|_2^2.
inline TrendFit solve_elastic(const Graph& graph, const NodeSignal& y, int k, double lambda1,
                              double lambda2, const SolverOptions& opts = {},
                              const AdmmState* warm = nullptr,
                              const LaplacianSpectrum* spectrum = nullptr) {
  detail::check_inputs(graph, y);
  PenaltySpec pen = PenaltySpec::elastic(k, lambda1, lambda2);
  pen.validate();
  if (lambda1 == 0.0) {
    TrendFit fit = solve_l2(graph, y, k, lambda2, opts);
    fit.penalty = pen;
    return fit;
  }
  detail::AdmmSolver solver(graph, y.values, pen, Loss::square, opts);
  TrendFit fit = solver.run(warm);
  detail::fill_df(fit, graph, opts, spectrum);
  return fit;
}

/// (1/n)|y - beta|^2 + lambda |D beta|_1.
inline TrendFit solve_l1(const Graph& graph, const NodeSignal& y, int k, double lambda,
                         const SolverOptions& opts = {}, const AdmmState* warm = nullptr,
                         const LaplacianSpectrum* spectrum = nullptr) {
  detail::check_inputs(graph, y);
  const PenaltySpec pen = PenaltySpec::l1(k, lambda);
  pen.validate();
  TrendFit fit;
  if (lambda == 0.0) {
    fit.penalty = pen;
    fit.beta = y.values;
    fit.state.beta = fit.beta;
    fit.objective = 0.0;
  } else {
    detail::AdmmSolver solver(graph, y.values, pen, Loss::square, opts);
    fit = solver.run(warm);
  }
  detail::fill_df(fit, graph, opts, spectrum);
  return fit;
}

/// (1/n) sum(exp(beta_i) - y_i beta_i) + lambda |D beta|_1 for count data.
inline TrendFit solve_poisson_l1(const Graph& graph, const NodeSignal& y, int k, double lambda,
                                 const SolverOptions& opts = {}, const AdmmState* warm = nullptr,
                                 const LaplacianSpectrum* spectrum = nullptr) {
  detail::check_inputs(graph, y);
  if (y.kind != SignalKind::count) throw std::invalid_argument("poisson loss needs a count signal");
  const PenaltySpec pen = PenaltySpec::l1(k, lambda);
  pen.validate();
  TrendFit fit;
  if (lambda == 0.0) {
    fit.penalty = pen;
    fit.loss = Loss::poisson;
    fit.beta = y.values.unaryExpr([&fit](double v) {
      if (v > 0.0) return std::log(v);
      fit.clipped = true;
      return -detail::kBetaClip;
    });
    const SparseMatrix d = difference_operator(graph, k).matrix;
    fit.kkt_residual = detail::smooth_gradient(y.values, fit.beta, d, pen, Loss::poisson).cwiseAbs().maxCoeff();
    fit.objective = objective_value(y.values, fit.beta, d, pen, Loss::poisson);
    fit.state.beta = fit.beta;
  } else {
    detail::AdmmSolver solver(graph, y.values, pen, Loss::poisson, opts);
    fit = solver.run(warm);
  }
  detail::fill_df(fit, graph, opts, spectrum);
  return fit;
}

/// Intercept plus the number of groups (even k) or active nodes (odd k) of
/// the extracted basis, capped at n.
inline int degrees_of_freedom(const TrendFit& fit, const Graph& graph,
                              const LaplacianSpectrum* spectrum = nullptr) {
  const SelectedBasis basis = construct_basis(fit.beta, graph, fit.penalty.order, spectrum);
  return std::min(basis.unpruned_columns, static_cast<int>(graph.node_count()));
}

}  // namespace graphfission
