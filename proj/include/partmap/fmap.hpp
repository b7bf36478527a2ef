#pragma once

// Masks, the regularized masked least-squares map solver, ground-truth map
// construction, slant-rank estimation and conversions between functional and
// point-to-point maps.
//
// Orientation convention used throughout: a FunctionalMap C is k_tgt x k_src
// and sends coefficient vectors expressed in the SOURCE basis to the TARGET
// basis, C * a_src ~ b_tgt. A point map from shape P into shape Q induces the
// functional map with source basis on Q and target basis on P.

#include "partmap/pointmap.hpp"
#include "partmap/spectral.hpp"

#include <Eigen/Cholesky>

#include <optional>
#include <string>

namespace partmap {

struct FmapError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FunctionalMap {
  Eigen::MatrixXd C; // k_tgt x k_src
  std::string src_basis_id;
  std::string tgt_basis_id;

  int k_tgt() const { return int(C.rows()); }
  int k_src() const { return int(C.cols()); }
};

enum class MaskKind { Laplacian, Slanted, Resolvent };

struct MaskSpec {
  MaskKind kind = MaskKind::Resolvent;
  double gamma = 0.5; // resolvent exponent
  Eigen::VectorXd lambda_src;
  Eigen::VectorXd lambda_tgt;
};

struct SlantEstimate {
  int r = 1;
};

// Count of partial-shape eigenvalues strictly below the largest retained
// full-shape eigenvalue, clamped to >= 1.
inline SlantEstimate estimate_rank(const Eigen::VectorXd& lambda_partial, const Eigen::VectorXd& lambda_full) {
  if (lambda_partial.size() == 0 || lambda_full.size() == 0) throw FmapError("empty spectrum");
  double lmax = lambda_full.maxCoeff();
  int r = 0;
  for (Eigen::Index i = 0; i < lambda_partial.size(); ++i)
    if (lambda_partial(i) < lmax) ++r;
  return SlantEstimate{std::max(1, r)};
}

inline Eigen::MatrixXd build_mask(const MaskSpec& spec) {
  const Eigen::Index kt = spec.lambda_tgt.size();
  const Eigen::Index ks = spec.lambda_src.size();
  if (kt == 0 || ks == 0) throw FmapError("mask needs both spectra");
  if (spec.gamma <= 0) throw FmapError("resolvent exponent must be positive");
  Eigen::MatrixXd M(kt, ks);

  auto lam = [](double v) { return std::max(v, 0.0); }; // tiny negative kernel values are roundoff

  switch (spec.kind) {
    case MaskKind::Laplacian: {
      for (Eigen::Index i = 0; i < kt; ++i)
        for (Eigen::Index j = 0; j < ks; ++j) {
          double d = lam(spec.lambda_tgt(i)) - lam(spec.lambda_src(j));
          M(i, j) = d * d;
        }
      break;
    }
    case MaskKind::Resolvent: {
      auto re = [&](double l) { return std::pow(lam(l), spec.gamma) / (std::pow(lam(l), 2 * spec.gamma) + 1.0); };
      auto im = [&](double l) { return 1.0 / (std::pow(lam(l), 2 * spec.gamma) + 1.0); };
      for (Eigen::Index i = 0; i < kt; ++i)
        for (Eigen::Index j = 0; j < ks; ++j) {
          double dr = re(spec.lambda_tgt(i)) - re(spec.lambda_src(j));
          double di = im(spec.lambda_tgt(i)) - im(spec.lambda_src(j));
          M(i, j) = dr * dr + di * di;
        }
      break;
    }
    case MaskKind::Slanted: {
      // Squared distance to the line through (1,1) with slope r/k_src in
      // (row, col) index space, normalized by the larger basis size.
      int r = estimate_rank(spec.lambda_tgt, spec.lambda_src).r;
      double slope = double(r) / double(ks);
      double denom = std::sqrt(slope * slope + 1.0);
      double scale = double(std::max(kt, ks));
      for (Eigen::Index i = 0; i < kt; ++i)
        for (Eigen::Index j = 0; j < ks; ++j) {
          double d = (slope * double(j + 1) - double(i + 1) + 1.0 - slope) / denom / scale;
          M(i, j) = d * d;
        }
      break;
    }
  }
  return M;
}

struct FmapSolveInfo {
  bool tikhonov_applied = false;
  double max_rel_residual = 0; // of the per-row normal equations
};

namespace detail {

// Shared by the plain solver and the differentiable layer so the adjoint pass
// factors exactly the same per-row systems (including the Tikhonov floor
// decision) as the forward pass.
class MaskedRowSolver {
public:
  MaskedRowSolver(const Eigen::MatrixXd& A, const Eigen::MatrixXd& mask, double lambda)
      : gram_(A * A.transpose()), mask_(&mask), lambda_(lambda) {
    if (lambda < 0) throw FmapError("solver weight must be non-negative");
    if (mask.cols() != A.rows()) throw FmapError("mask shape does not match bases");
  }

  Eigen::VectorXd solve_row(Eigen::Index row, const Eigen::VectorXd& rhs, bool* floored = nullptr,
                            double* rel_residual = nullptr) const {
    Eigen::MatrixXd S = gram_;
    if (lambda_ > 0) S.diagonal() += lambda_ * mask_->row(row).transpose();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(S);
    bool singular = ldlt.info() != Eigen::Success;
    if (!singular) {
      Eigen::VectorXd d = ldlt.vectorD();
      double dmax = d.cwiseAbs().maxCoeff();
      if (dmax <= 0 || d.minCoeff() <= 1e-12 * dmax) singular = true;
    }
    if (singular) {
      S.diagonal().array() += 1e-10;
      ldlt.compute(S);
      if (floored) *floored = true;
    }
    Eigen::VectorXd c = ldlt.solve(rhs);
    if (rel_residual) {
      double rn = rhs.norm();
      double resid = (S * c - rhs).norm();
      *rel_residual = rn > 0 ? resid / rn : resid;
    }
    return c;
  }

private:
  Eigen::MatrixXd gram_; // A A'
  const Eigen::MatrixXd* mask_;
  double lambda_;
};

} // namespace detail

// Minimizes ||C A - B||_F^2 + lambda * sum_ij mask_ij C_ij^2 row by row:
// each target row i solves (A A' + lambda diag(mask_i)) c_i' = A B_i'.
inline FunctionalMap solve_fmap(const CoeffMatrix& A_src, const CoeffMatrix& B_tgt, const Eigen::MatrixXd& mask,
                                double lambda, FmapSolveInfo* info = nullptr) {
  const Eigen::MatrixXd& A = A_src.coeffs;
  const Eigen::MatrixXd& B = B_tgt.coeffs;
  if (A.cols() != B.cols()) throw FmapError("coefficient matrices must share the feature count");
  const Eigen::Index ks = A.rows();
  const Eigen::Index kt = B.rows();
  if (mask.rows() != kt) throw FmapError("mask shape does not match bases");

  detail::MaskedRowSolver solver(A, mask, lambda);
  Eigen::MatrixXd R = A * B.transpose(); // ks x kt, column i = A B_i'
  FunctionalMap fm;
  fm.C.resize(kt, ks);
  fm.src_basis_id = A_src.basis_id;
  fm.tgt_basis_id = B_tgt.basis_id;

  FmapSolveInfo local;
  for (Eigen::Index i = 0; i < kt; ++i) {
    bool floored = false;
    double resid = 0;
    fm.C.row(i) = solver.solve_row(i, R.col(i), &floored, &resid).transpose();
    local.tikhonov_applied |= floored;
    local.max_rel_residual = std::max(local.max_rel_residual, resid);
  }
  if (info) *info = local;
  return fm;
}

// Functional map induced by a vertex map. gt maps shape P into shape Q;
// basis_tgt must be P's basis and basis_src Q's basis (the functional map
// runs against the point map). C = Phi_P' M_P Pi Phi_Q with Pi(p, q) = 1 iff
// gt sends p to q; unmatched P vertices contribute zero rows.
inline FunctionalMap p2p_to_fmap(const PointMap& gt, const SpectralBasis& basis_src, const SpectralBasis& basis_tgt) {
  if (gt.n_src() != basis_tgt.n()) throw FmapError("point map domain does not match target basis");
  if (gt.n_tgt != basis_src.n()) throw FmapError("point map codomain does not match source basis");
  Eigen::MatrixXd pulled = Eigen::MatrixXd::Zero(basis_tgt.n(), basis_src.k());
  for (int p = 0; p < gt.n_src(); ++p) {
    int q = gt.target_of[size_t(p)];
    if (q >= 0) pulled.row(p) = basis_src.phi.row(q);
  }
  FunctionalMap fm;
  fm.C = basis_tgt.phi.transpose() * (basis_tgt.mass.asDiagonal() * pulled);
  fm.src_basis_id = basis_src.basis_id;
  fm.tgt_basis_id = basis_tgt.basis_id;
  return fm;
}

inline FunctionalMap gt_fmap(const PointMap& gt, const SpectralBasis& basis_src, const SpectralBasis& basis_tgt) {
  return p2p_to_fmap(gt, basis_src, basis_tgt);
}

namespace detail {

// Exact nearest row of `data` for each row of `queries`; ties break to the
// lowest index. The pruned scan accumulates the same sums in the same order
// as the exhaustive one and only skips candidates whose partial distance
// already exceeds the incumbent, so both paths return identical winners.
inline std::vector<int> nearest_rows(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& data, bool pruned) {
  if (queries.cols() != data.cols()) throw FmapError("embedding dimensions differ");
  std::vector<int> out(size_t(queries.rows()), -1);
  const Eigen::Index d = queries.cols();
  for (Eigen::Index q = 0; q < queries.rows(); ++q) {
    double best = std::numeric_limits<double>::infinity();
    int best_idx = -1;
    for (Eigen::Index u = 0; u < data.rows(); ++u) {
      double acc = 0;
      if (pruned) {
        for (Eigen::Index c = 0; c < d; ++c) {
          double diff = queries(q, c) - data(u, c);
          acc += diff * diff;
          if (acc >= best) break;
        }
      } else {
        for (Eigen::Index c = 0; c < d; ++c) {
          double diff = queries(q, c) - data(u, c);
          acc += diff * diff;
        }
      }
      if (acc < best) {
        best = acc;
        best_idx = int(u);
      }
    }
    out[size_t(q)] = best_idx;
  }
  return out;
}

} // namespace detail

// Point map recovered from a functional map by nearest neighbors between the
// target spectral embedding and the mapped source embedding. The returned map
// goes from fmap-target vertices to fmap-source vertices. `overlap`, when
// given, marks target vertices to keep; others become unmatched.
inline PointMap fmap_to_p2p(const FunctionalMap& fmap, const SpectralBasis& basis_src, const SpectralBasis& basis_tgt,
                            const std::vector<char>* overlap = nullptr) {
  if (fmap.k_src() != basis_src.k()) throw FmapError("map columns do not match source basis");
  if (fmap.k_tgt() != basis_tgt.k()) throw FmapError("map rows do not match target basis");
  if (overlap && int(overlap->size()) != basis_tgt.n()) throw FmapError("overlap mask size mismatch");

  Eigen::MatrixXd mapped = basis_src.phi * fmap.C.transpose(); // n_src x k_tgt
  bool large = basis_src.n() >= 5000 || basis_tgt.n() >= 5000;
  std::vector<int> nn = detail::nearest_rows(basis_tgt.phi, mapped, /*pruned=*/large);

  PointMap p2p;
  p2p.n_tgt = basis_src.n();
  p2p.target_of.resize(size_t(basis_tgt.n()));
  for (int v = 0; v < basis_tgt.n(); ++v)
    p2p.target_of[size_t(v)] = (overlap && !(*overlap)[size_t(v)]) ? -1 : nn[size_t(v)];
  return p2p;
}

// ---------------------------------------------------------------------------
// Functional-map text file: first line "k_tgt k_src", then the matrix rows.

inline void save_fmap(std::ostream& out, const FunctionalMap& fmap, const io::ArtifactHeader* header = nullptr) {
  if (header) header->write(out, "functional map");
  out << fmap.k_tgt() << ' ' << fmap.k_src() << '\n';
  io::write_matrix(out, fmap.C);
}

inline void save_fmap(const std::string& path, const FunctionalMap& fmap, const io::ArtifactHeader* header = nullptr) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write fmap file: " + path);
  save_fmap(out, fmap, header);
}

inline FunctionalMap load_fmap(std::istream& in) {
  io::TokenReader tr(in);
  long kt = tr.expect_int("k_tgt");
  long ks = tr.expect_int("k_src");
  if (kt < 1 || ks < 1) throw IoError("bad fmap dimensions");
  FunctionalMap fm;
  fm.C = io::read_matrix(tr, kt, ks, "fmap entry");
  return fm;
}

inline FunctionalMap load_fmap(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open fmap file: " + path);
  return load_fmap(in);
}

} // namespace partmap
