#pragma once

// Test-only oracles, kept independent of the implementation paths they check.

#include "partmap/autodiff.hpp"
#include "partmap/mesh.hpp"

#include <Eigen/Dense>

#include <functional>

namespace test_oracles {

// Dense brute-force minimizer of ||C A - B||_F^2 + lambda sum M_ij C_ij^2:
// vectorizes C column-major and solves the full (kt*ks) normal system
// (A A' (x) I + lambda diag(vec M)) vec C = vec(B A').
inline Eigen::MatrixXd brute_force_masked_solve(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                                const Eigen::MatrixXd& M, double lambda) {
  const Eigen::Index ks = A.rows();
  const Eigen::Index kt = B.rows();
  Eigen::MatrixXd G = A * A.transpose();
  Eigen::MatrixXd full = Eigen::MatrixXd::Zero(kt * ks, kt * ks);
  for (Eigen::Index j = 0; j < ks; ++j)
    for (Eigen::Index jp = 0; jp < ks; ++jp)
      for (Eigen::Index i = 0; i < kt; ++i) full(i + kt * j, i + kt * jp) += G(jp, j);
  for (Eigen::Index j = 0; j < ks; ++j)
    for (Eigen::Index i = 0; i < kt; ++i) full(i + kt * j, i + kt * j) += lambda * M(i, j);
  Eigen::MatrixXd RHS = B * A.transpose(); // kt x ks
  Eigen::VectorXd rhs(kt * ks);
  for (Eigen::Index j = 0; j < ks; ++j)
    for (Eigen::Index i = 0; i < kt; ++i) rhs(i + kt * j) = RHS(i, j);
  Eigen::VectorXd x = full.ldlt().solve(rhs);
  Eigen::MatrixXd C(kt, ks);
  for (Eigen::Index j = 0; j < ks; ++j)
    for (Eigen::Index i = 0; i < kt; ++i) C(i, j) = x(i + kt * j);
  return C;
}

inline double masked_objective(const Eigen::MatrixXd& C, const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                               const Eigen::MatrixXd& M, double lambda) {
  return (C * A - B).squaredNorm() + lambda * (M.array() * C.array().square()).sum();
}

// Central finite differences of a scalar-valued function of one matrix input,
// evaluated entry by entry.
inline Eigen::MatrixXd finite_difference(const std::function<double(const Eigen::MatrixXd&)>& f,
                                         const Eigen::MatrixXd& x, double step = 1e-5) {
  Eigen::MatrixXd g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      Eigen::MatrixXd xp = x, xm = x;
      xp(i, j) += step;
      xm(i, j) -= step;
      g(i, j) = (f(xp) - f(xm)) / (2 * step);
    }
  return g;
}

inline double max_rel_error(const Eigen::MatrixXd& got, const Eigen::MatrixXd& want) {
  double scale = std::max(1e-8, want.cwiseAbs().maxCoeff());
  return (got - want).cwiseAbs().maxCoeff() / scale;
}

// Brute-force greedy max-min farthest point sampling, written independently.
inline std::vector<int> brute_force_fps(const Eigen::MatrixXd& pts, int count, int seed) {
  std::vector<int> chosen = {seed};
  while (int(chosen.size()) < count) {
    int best = -1;
    double best_d = -1;
    for (int v = 0; v < pts.rows(); ++v) {
      double d = std::numeric_limits<double>::infinity();
      for (int c : chosen) d = std::min(d, (pts.row(v) - pts.row(c)).squaredNorm());
      if (d > best_d) {
        best_d = d;
        best = v;
      }
    }
    chosen.push_back(best);
  }
  return chosen;
}

// Vertex permutation of a mesh: new vertex perm[i] = old vertex i.
inline partmap::TriMesh permute_mesh(const partmap::TriMesh& mesh, const std::vector<int>& perm) {
  Eigen::MatrixXd v(mesh.n_vertices(), 3);
  for (int i = 0; i < mesh.n_vertices(); ++i) v.row(perm[size_t(i)]) = mesh.vertices.row(i);
  Eigen::MatrixXi f = mesh.faces;
  for (Eigen::Index t = 0; t < f.rows(); ++t)
    for (int c = 0; c < 3; ++c) f(t, c) = perm[size_t(f(t, c))];
  return partmap::make_mesh(v, f);
}

} // namespace test_oracles
