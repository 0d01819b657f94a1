#pragma once

/// Basis extraction from an L1 trend fit.
///
/// Even k: nodes are grouped by the distinct values of C = L^{k/2} beta,
/// and each group indicator is mapped through (L^+)^{k/2}.
/// Odd k: the columns of (L^+)^{(k+1)/2} at the nonzero rows of
/// C = L^{(k+1)/2} beta are kept.
/// In both cases the all-ones intercept comes first, and columns that are
/// linearly dependent on earlier ones are dropped (the full set of group
/// indicators always spans the intercept, so the last one goes).

#include "graphfission/graph.hpp"

#include <algorithm>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

namespace graphfission {

struct SelectedBasis {
  Matrix matrix;  // n x p, column 0 is the intercept
  int order = 0;
  std::vector<std::size_t> active_set;  // nodes, odd k only
  std::vector<int> grouping;            // group label per node, even k only
  int group_count = 0;
  // Intercept plus one column per group (even k) or active node (odd k),
  // counted before redundant columns are dropped.
  int unpruned_columns = 1;

  Eigen::Index cols() const { return matrix.cols(); }
};

struct BasisTolerances {
  double group_rel = 1e-6;  // even k: same group iff |C_i - C_j| <= group_rel * max(1, |C|_inf)
  double zero_rel = 1e-8;   // odd k: active iff |C_i| > zero_rel * max(1, |C|_inf)
  double independence = 1e-8;
};

namespace detail {

/// Groups sorted values, splitting wherever consecutive values differ by
/// more than `tol`. Labels follow the smallest node index in each group.
inline std::vector<int> group_by_value(const Vector& c, double tol, int& count) {
  const auto n = static_cast<std::size_t>(c.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return c[a] < c[b]; });
  std::vector<int> raw(n, 0);
  int g = 0;
  for (std::size_t t = 1; t < n; ++t) {
    if (c[order[t]] - c[order[t - 1]] > tol) ++g;
    raw[order[t]] = g;
  }
  std::vector<int> relabel(static_cast<std::size_t>(g + 1), -1);
  std::vector<int> label(n, 0);
  count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = relabel[static_cast<std::size_t>(raw[i])];
    if (r < 0) r = count++;
    label[i] = r;
  }
  return label;
}

/// Keeps columns in the given order when they are not (numerically) in the
/// span of the columns already kept. Modified Gram-Schmidt with
/// reorthogonalisation.
inline std::vector<Eigen::Index> independent_columns(const Matrix& candidates, double tol) {
  std::vector<Eigen::Index> kept;
  Matrix q(candidates.rows(), 0);
  for (Eigen::Index c = 0; c < candidates.cols(); ++c) {
    const double norm = candidates.col(c).norm();
    if (norm == 0.0) continue;
    Vector v = candidates.col(c) / norm;
    for (int pass = 0; pass < 2; ++pass)
      for (Eigen::Index j = 0; j < q.cols(); ++j) v -= q.col(j).dot(v) * q.col(j);
    const double rest = v.norm();
    if (rest > tol) {
      q.conservativeResize(Eigen::NoChange, q.cols() + 1);
      q.col(q.cols() - 1) = v / rest;
      kept.push_back(c);
    }
  }
  return kept;
}

}  // namespace detail

/// `spectrum` may be supplied to reuse a Laplacian eigendecomposition.
inline SelectedBasis construct_basis(const Vector& beta, const Graph& graph, int k,
                                     const LaplacianSpectrum* spectrum = nullptr,
                                     const BasisTolerances& tol = {}) {
  if (k < 0) throw std::invalid_argument("order must be >= 0");
  const auto n = static_cast<Eigen::Index>(graph.node_count());
  if (beta.size() != n) throw std::invalid_argument("fit length does not match graph");

  std::optional<LaplacianSpectrum> owned;
  auto spec = [&]() -> const LaplacianSpectrum& {
    if (spectrum) return *spectrum;
    if (!owned) owned.emplace(graph);
    return *owned;
  };

  SelectedBasis out;
  out.order = k;
  std::vector<Vector> columns;
  columns.push_back(Vector::Ones(n));

  // Disconnected graphs: each component gets its own level.
  const Partition comps = components_without_edges(graph);
  if (comps.count > 1) {
    for (const auto& members : comps.groups()) {
      Vector ind = Vector::Zero(n);
      for (auto i : members) ind[static_cast<Eigen::Index>(i)] = 1.0;
      columns.push_back(std::move(ind));
    }
  }

  if (k % 2 == 0) {
    const Vector c = (k == 0) ? beta : Vector(spec().power(k / 2) * beta);
    const double gtol = tol.group_rel * std::max(1.0, c.cwiseAbs().maxCoeff());
    out.grouping = detail::group_by_value(c, gtol, out.group_count);
    Matrix indicators = Matrix::Zero(n, out.group_count);
    for (Eigen::Index i = 0; i < n; ++i) indicators(i, out.grouping[static_cast<std::size_t>(i)]) = 1.0;
    const Matrix mapped = (k == 0) ? indicators : Matrix(spec().pinv_power(k / 2) * indicators);
    for (Eigen::Index t = 0; t < mapped.cols(); ++t) columns.push_back(mapped.col(t));
    out.unpruned_columns = 1 + out.group_count;
  } else {
    const int p = (k + 1) / 2;
    const Vector c = spec().power(p) * beta;
    const double ztol = tol.zero_rel * std::max(1.0, c.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < n; ++i)
      if (std::abs(c[i]) > ztol) out.active_set.push_back(static_cast<std::size_t>(i));
    if (!out.active_set.empty()) {
      const Matrix pinv = spec().pinv_power(p);
      for (auto i : out.active_set) columns.push_back(pinv.col(static_cast<Eigen::Index>(i)));
    }
    out.unpruned_columns = 1 + static_cast<int>(out.active_set.size());
  }

  Matrix candidates(n, static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) candidates.col(static_cast<Eigen::Index>(j)) = columns[j];
  const auto keep = detail::independent_columns(candidates, tol.independence);
  out.matrix.resize(n, static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) out.matrix.col(static_cast<Eigen::Index>(j)) = candidates.col(keep[j]);
  return out;
}

/// Smallest singular value of the column-normalised basis.
inline double min_normalized_singular_value(const Matrix& b) {
  Matrix normalized = b;
  for (Eigen::Index j = 0; j < b.cols(); ++j) normalized.col(j) /= b.col(j).norm();
  Eigen::JacobiSVD<Matrix> svd(normalized);
  return svd.singularValues().minCoeff();
}

struct Projection {
  Vector gamma;
  Vector fitted;
};

/// Least-squares coefficients of `y` on the basis columns.
inline Projection project_onto_basis(const SelectedBasis& basis, const Vector& y) {
  if (y.size() != basis.matrix.rows()) throw std::invalid_argument("signal length does not match basis");
  Eigen::ColPivHouseholderQR<Matrix> qr(basis.matrix);
  qr.setThreshold(1e-10);
  if (qr.rank() < basis.matrix.cols()) throw std::runtime_error("basis is rank deficient");
  Projection out;
  out.gamma = qr.solve(y);
  out.fitted = basis.matrix * out.gamma;
  return out;
}

/// Orthonormal basis for the column span (thin Q factor).
inline Matrix orthonormal_span(const Matrix& b) {
  Eigen::HouseholderQR<Matrix> qr(b);
  return qr.householderQ() * Matrix::Identity(b.rows(), b.cols());
}

/// B (B^T B)^{-1} B^T.
inline Matrix projection_matrix(const Matrix& b) {
  const Matrix q = orthonormal_span(b);
  return q * q.transpose();
}

}  // namespace graphfission
