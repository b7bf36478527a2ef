#pragma once

// Truncated generalized eigendecomposition of the cotangent Laplacian and
// spectral projection. Two backends behind one interface: a dense solver for
// desk-scale meshes and shift-invert Lanczos with a sparse factorization for
// larger ones.

#include "partmap/io.hpp"
#include "partmap/mesh.hpp"
#include "partmap/rng.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <string>

namespace partmap {

struct EigenError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SpectralBasis {
  Eigen::MatrixXd phi;    // n x k, columns M-orthonormal
  Eigen::VectorXd lambda; // k, ascending, first ~0 on connected meshes
  Eigen::VectorXd mass;   // n, lumped vertex areas
  std::string basis_id;
  std::uint64_t mesh_hash = 0;

  int n() const { return int(phi.rows()); }
  int k() const { return int(phi.cols()); }

  SpectralBasis truncated(int kk) const {
    if (kk < 1 || kk > k()) throw EigenError("truncation size out of range");
    SpectralBasis b;
    b.phi = phi.leftCols(kk);
    b.lambda = lambda.head(kk);
    b.mass = mass;
    b.mesh_hash = mesh_hash;
    b.basis_id = basis_id + ":k" + std::to_string(kk);
    return b;
  }
};

struct CoeffMatrix {
  Eigen::MatrixXd coeffs; // k x m
  std::string basis_id;
};

enum class EigBackend { Auto, Dense, Lanczos };

namespace detail {

// First entry whose magnitude stands out decides the sign of each column.
inline void fix_eigenvector_signs(Eigen::MatrixXd& phi) {
  for (Eigen::Index j = 0; j < phi.cols(); ++j) {
    double tol = 1e-8 * phi.col(j).cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < phi.rows(); ++i) {
      if (std::abs(phi(i, j)) > tol) {
        if (phi(i, j) < 0) phi.col(j) = -phi.col(j);
        break;
      }
    }
  }
}

inline void dense_eig(const Eigen::SparseMatrix<double>& L, const Eigen::VectorXd& mass, int k,
                      Eigen::MatrixXd& phi, Eigen::VectorXd& lambda) {
  Eigen::MatrixXd Ld = Eigen::MatrixXd(L);
  Eigen::MatrixXd Md = mass.asDiagonal();
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> solver(Ld, Md);
  if (solver.info() != Eigen::Success) throw EigenError("dense generalized eigensolver failed");
  phi = solver.eigenvectors().leftCols(k);
  lambda = solver.eigenvalues().head(k);
}

// Block shift-invert Lanczos in the M-inner product with full
// reorthogonalization and Rayleigh-Ritz extraction on the accumulated Krylov
// basis. The block (width 8) is what lets exactly degenerate clusters --
// symmetric meshes carry multiplicities up to 5 -- be resolved; a
// single-vector Krylov space contains one direction per cluster.
inline void lanczos_eig(const Eigen::SparseMatrix<double>& L, const Eigen::VectorXd& mass, int k,
                        Eigen::MatrixXd& phi, Eigen::VectorXd& lambda) {
  const int n = int(L.rows());
  const double sigma = 1e-4 * (L.diagonal().sum() / mass.sum());
  Eigen::SparseMatrix<double> K = L;
  for (int i = 0; i < n; ++i) K.coeffRef(i, i) += sigma * mass(i);
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> fact(K);
  if (fact.info() != Eigen::Success) throw EigenError("sparse factorization failed in shift-invert");

  const int block = 8;
  const int cap = std::min(n, std::max(4 * k + 96, 256));
  Eigen::MatrixXd V(n, cap);
  int cols = 0;

  Rng rng(0x4c414e43ull); // fixed: deterministic basis
  auto fresh = [&]() {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = rng.normal();
    return v;
  };
  // Twice-repeated M-orthogonalization against everything accepted so far.
  auto orthonormalize = [&](Eigen::VectorXd& w) {
    for (int pass = 0; pass < 2; ++pass)
      for (int i = 0; i < cols; ++i) w -= (w.dot(mass.cwiseProduct(V.col(i)))) * V.col(i);
    double nrm = std::sqrt(std::max(0.0, w.dot(mass.cwiseProduct(w))));
    if (nrm < 1e-10) return false;
    w /= nrm;
    return true;
  };

  for (int b = 0; b < block && cols < cap; ++b) {
    Eigen::VectorXd w = fresh();
    if (orthonormalize(w)) V.col(cols++) = w;
  }

  // Grow the basis sweep by sweep; extract with Rayleigh-Ritz on the pencil
  // (V' L V y = theta y, V' M V = I) and stop once the k pairs meet the
  // residual gate.
  auto extract = [&](Eigen::MatrixXd& vecs, Eigen::VectorXd& vals) {
    Eigen::MatrixXd H = V.leftCols(cols).transpose() * (L * V.leftCols(cols));
    H = 0.5 * (H + H.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> small(H);
    if (small.info() != Eigen::Success) throw EigenError("projected eigensolver failed");
    vecs = V.leftCols(cols) * small.eigenvectors().leftCols(k);
    vals = small.eigenvalues().head(k);
  };
  auto max_residual = [&](const Eigen::MatrixXd& vecs, const Eigen::VectorXd& vals) {
    double worst = 0;
    for (int j = 0; j < k; ++j) {
      double r = (L * vecs.col(j) - vals(j) * mass.cwiseProduct(vecs.col(j))).norm() / (1.0 + std::abs(vals(j)));
      worst = std::max(worst, r);
    }
    return worst;
  };

  const int min_cols = std::min(cap, 2 * k + 16);
  for (;;) {
    int begin = std::max(0, cols - block);
    int end = cols;
    for (int c = begin; c < end && cols < cap; ++c) {
      Eigen::VectorXd w = fact.solve(mass.cwiseProduct(V.col(c)));
      if (!orthonormalize(w)) {
        w = fresh();
        if (!orthonormalize(w)) throw EigenError("shift-invert basis collapsed");
      }
      V.col(cols++) = w;
    }
    if (cols < std::min(min_cols, cap)) continue;
    extract(phi, lambda);
    if (max_residual(phi, lambda) <= 1e-7 || cols >= cap) break;
  }
  if (cols < k) throw EigenError("Krylov basis smaller than the requested basis size");
}

} // namespace detail

struct BasisQuality {
  double max_pair_residual = 0; // ||L phi - lambda M phi|| / (1+|lambda|)
  double max_orth_deviation = 0;      // max |Phi' M Phi - I|
};

inline SpectralBasis compute_basis(const Laplacian& lap, int k, EigBackend backend = EigBackend::Auto,
                                   BasisQuality* quality = nullptr) {
  const int n = int(lap.stiffness.rows());
  if (k < 1 || k > n) throw EigenError("basis size k out of range [1, n]");
  if (backend == EigBackend::Auto) backend = n <= 3000 ? EigBackend::Dense : EigBackend::Lanczos;

  SpectralBasis basis;
  basis.mass = lap.mass;
  if (backend == EigBackend::Dense)
    detail::dense_eig(lap.stiffness, lap.mass, k, basis.phi, basis.lambda);
  else
    detail::lanczos_eig(lap.stiffness, lap.mass, k, basis.phi, basis.lambda);

  // Tiny negative values on the kernel eigenvalue are roundoff.
  for (int i = 0; i < k; ++i)
    if (basis.lambda(i) < 0 && basis.lambda(i) > -1e-8) basis.lambda(i) = std::abs(basis.lambda(i));
  detail::fix_eigenvector_signs(basis.phi);

  double max_resid = 0;
  for (int j = 0; j < k; ++j) {
    double r = (lap.stiffness * basis.phi.col(j) - basis.lambda(j) * lap.mass.cwiseProduct(basis.phi.col(j))).norm() /
               (1.0 + std::abs(basis.lambda(j)));
    max_resid = std::max(max_resid, r);
  }
  if (quality) {
    Eigen::MatrixXd G = basis.phi.transpose() * lap.mass.asDiagonal() * basis.phi;
    quality->max_orth_deviation = (G - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff();
    quality->max_pair_residual = max_resid;
  }
  if (max_resid > 1e-6)
    throw EigenError("eigensolver did not converge: residual " + io::fmt(max_resid) + " exceeds 1e-6");

  std::ostringstream id;
  id << "basis:" << n << ":" << k << ":" << io::hash_hex(io::fnv1a64(basis.lambda.data(), size_t(k) * sizeof(double)));
  basis.basis_id = id.str();
  return basis;
}

inline SpectralBasis compute_basis(const TriMesh& mesh, int k, EigBackend backend = EigBackend::Auto,
                                   BasisQuality* quality = nullptr) {
  SpectralBasis basis = compute_basis(cotan_laplacian(mesh), k, backend, quality);
  basis.mesh_hash = mesh_content_hash(mesh);
  return basis;
}

// coeffs = Phi^T M f. The M-weighted transpose realizes the pseudo-inverse on
// the basis span.
inline CoeffMatrix project(const SpectralBasis& basis, const Eigen::MatrixXd& features) {
  if (features.rows() != basis.n()) throw EigenError("feature row count does not match basis");
  CoeffMatrix c;
  c.coeffs = basis.phi.transpose() * (basis.mass.asDiagonal() * features);
  c.basis_id = basis.basis_id;
  return c;
}

inline Eigen::MatrixXd unproject(const SpectralBasis& basis, const CoeffMatrix& coeffs) {
  if (coeffs.coeffs.rows() != basis.k()) throw EigenError("coefficient row count does not match basis");
  if (!coeffs.basis_id.empty() && coeffs.basis_id != basis.basis_id)
    throw EigenError("coefficient matrix belongs to a different basis");
  return basis.phi * coeffs.coeffs;
}

// Band-limit: reconstruct from the projection, i.e. Phi Phi^T M f.
inline Eigen::MatrixXd bandlimit(const SpectralBasis& basis, const Eigen::MatrixXd& features) {
  return basis.phi * (basis.phi.transpose() * (basis.mass.asDiagonal() * features));
}

// ---------------------------------------------------------------------------
// Basis cache file.

inline void save_basis(std::ostream& out, const SpectralBasis& basis, const io::ArtifactHeader* header = nullptr) {
  if (header) header->write(out, "spectral basis cache");
  out << "# mesh_hash: " << io::hash_hex(basis.mesh_hash) << '\n';
  out << "basis_cache_v1\n";
  out << basis.n() << ' ' << basis.k() << ' ' << io::hash_hex(basis.mesh_hash) << '\n';
  for (int i = 0; i < basis.k(); ++i) out << (i ? " " : "") << io::fmt(basis.lambda(i));
  out << '\n';
  for (int i = 0; i < basis.n(); ++i) out << (i ? " " : "") << io::fmt(basis.mass(i));
  out << '\n';
  io::write_matrix(out, basis.phi);
}

inline void save_basis(const std::string& path, const SpectralBasis& basis, const io::ArtifactHeader* header = nullptr) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write basis cache: " + path);
  save_basis(out, basis, header);
}

inline SpectralBasis load_basis(std::istream& in) {
  io::TokenReader tr(in);
  std::string magic = tr.expect("basis cache magic");
  if (magic != "basis_cache_v1") throw IoError("not a basis cache file");
  long n = tr.expect_int("n");
  long k = tr.expect_int("k");
  std::string hash = tr.expect("mesh hash");
  if (n < 1 || k < 1 || k > n) throw IoError("bad basis cache dimensions");
  SpectralBasis basis;
  basis.mesh_hash = std::stoull(hash, nullptr, 16);
  basis.lambda.resize(k);
  for (long i = 0; i < k; ++i) basis.lambda(i) = tr.expect_double("eigenvalue");
  basis.mass.resize(n);
  for (long i = 0; i < n; ++i) basis.mass(i) = tr.expect_double("mass");
  basis.phi = io::read_matrix(tr, n, k, "basis entry");
  std::ostringstream id;
  id << "basis:" << n << ":" << k << ":" << io::hash_hex(io::fnv1a64(basis.lambda.data(), size_t(k) * sizeof(double)));
  basis.basis_id = id.str();
  return basis;
}

inline SpectralBasis load_basis(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open basis cache: " + path);
  return load_basis(in);
}

} // namespace partmap
