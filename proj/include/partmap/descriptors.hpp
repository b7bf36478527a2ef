#pragma once

// Deterministic per-vertex feature generators: heat / wave kernel signatures
// and the matched-by-construction random features used as a stand-in for a
// learned extractor.

#include "partmap/pointmap.hpp"
#include "partmap/rng.hpp"
#include "partmap/spectral.hpp"

#include <string>
#include <vector>

namespace partmap {

struct FeatureMatrix {
  Eigen::MatrixXd values; // n x m
  std::string kind;       // hks | wks | perfect-oracle | learned-toy | file

  int n() const { return int(values.rows()); }
  int m() const { return int(values.cols()); }

  void validate() const {
    if (m() < 1) throw IoError("feature matrix needs at least one column");
    if (!values.allFinite()) throw IoError("feature matrix contains NaN/Inf");
  }
};

// hks(v, t) = sum_i exp(-lambda_i t) phi_i(v)^2
inline FeatureMatrix heat_kernel_signature(const SpectralBasis& basis, const std::vector<double>& times,
                                           bool area_normalize = false) {
  if (times.empty()) throw IoError("empty HKS time list");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] <= 0) throw IoError("HKS times must be positive");
    if (i && times[i] < times[i - 1]) throw IoError("HKS times must be ascending");
  }
  FeatureMatrix f;
  f.kind = "hks";
  f.values.resize(basis.n(), Eigen::Index(times.size()));
  Eigen::MatrixXd phi2 = basis.phi.cwiseProduct(basis.phi);
  for (std::size_t j = 0; j < times.size(); ++j) {
    Eigen::VectorXd w = (-times[j] * basis.lambda.array()).exp();
    f.values.col(Eigen::Index(j)) = phi2 * w;
    if (area_normalize) {
      double mean = basis.mass.dot(f.values.col(Eigen::Index(j))) / basis.mass.sum();
      if (mean > 0) f.values.col(Eigen::Index(j)) /= mean;
    }
  }
  return f;
}

// 16 scales log-spaced across the resolved spectrum.
inline std::vector<double> default_hks_times(const SpectralBasis& basis, int count = 16) {
  if (basis.k() < 2) throw IoError("HKS needs at least two eigenpairs");
  double l1 = std::max(basis.lambda(1), 1e-12);
  double lk = std::max(basis.lambda(basis.k() - 1), l1 * (1 + 1e-9));
  double tmin = 4.0 * std::log(10.0) / lk;
  double tmax = 4.0 * std::log(10.0) / l1;
  std::vector<double> times(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i)
    times[size_t(i)] = std::exp(std::log(tmin) + (std::log(tmax) - std::log(tmin)) * (count == 1 ? 0.0 : double(i) / (count - 1)));
  return times;
}

// Gaussian windows over log-eigenvalues, per-energy normalized.
inline FeatureMatrix wave_kernel_signature(const SpectralBasis& basis, int n_energies = 128) {
  if (basis.k() < 3) throw IoError("WKS needs at least three eigenpairs");
  if (n_energies < 2) throw IoError("WKS needs at least two energies");
  Eigen::VectorXd loglam(basis.k() - 1);
  for (int i = 1; i < basis.k(); ++i) loglam(i - 1) = std::log(std::max(basis.lambda(i), 1e-12));
  double emin = loglam(0);
  double emax = loglam(basis.k() - 2);
  double sigma = 7.0 * (emax - emin) / n_energies;

  FeatureMatrix f;
  f.kind = "wks";
  f.values.setZero(basis.n(), n_energies);
  Eigen::MatrixXd phi2 = basis.phi.rightCols(basis.k() - 1).cwiseProduct(basis.phi.rightCols(basis.k() - 1));
  for (int j = 0; j < n_energies; ++j) {
    double e = emin + (emax - emin) * double(j) / (n_energies - 1);
    Eigen::VectorXd w = (-(e - loglam.array()).square() / (2.0 * sigma * sigma)).exp();
    double norm = w.sum();
    if (norm > 0) w /= norm;
    f.values.col(j) = phi2 * w;
  }
  return f;
}

struct PerfectFeaturePair {
  FeatureMatrix on_part;
  FeatureMatrix on_full;
};

// Matched-by-construction features: smooth random band-limited functions on
// the full shape, rows copied through gt onto the partial shape. Unmatched
// partial vertices receive fresh random rows, modelling a feature extractor
// that has never seen the other shape. `bandwidth` caps the generating modes
// (default: all of full_basis); `smoothness` damps mode i by
// exp(-lambda_i * t) with t chosen so the last generating mode is scaled by
// `smoothness`.
inline PerfectFeaturePair perfect_features(const SpectralBasis& full_basis, const PointMap& gt, int m,
                                           std::uint64_t seed, int bandwidth = -1, double smoothness = 1e-2) {
  if (m < 1) throw IoError("feature count must be >= 1");
  if (gt.n_tgt != full_basis.n()) throw IoError("point map does not target the full shape");
  gt.validate();
  const int bw = bandwidth < 0 ? full_basis.k() : bandwidth;
  if (bw < 1 || bw > full_basis.k()) throw IoError("bandwidth out of range");

  Rng rng(seed, /*stream=*/0x70657266);
  Eigen::MatrixXd coeff(bw, m);
  for (int i = 0; i < bw; ++i)
    for (int j = 0; j < m; ++j) coeff(i, j) = rng.normal();
  if (smoothness > 0 && smoothness < 1 && bw > 1) {
    double lmax = std::max(full_basis.lambda(bw - 1), 1e-12);
    double t = -std::log(smoothness) / lmax;
    for (int i = 0; i < bw; ++i) coeff.row(i) *= std::exp(-std::max(full_basis.lambda(i), 0.0) * t);
  }

  PerfectFeaturePair out;
  out.on_full.kind = "perfect-oracle";
  out.on_full.values = full_basis.phi.leftCols(bw) * coeff;

  double rms = std::sqrt(out.on_full.values.squaredNorm() / double(out.on_full.values.size()));
  out.on_part.kind = "perfect-oracle";
  out.on_part.values.resize(gt.n_src(), m);
  for (int v = 0; v < gt.n_src(); ++v) {
    int t = gt.target_of[size_t(v)];
    if (t >= 0) {
      out.on_part.values.row(v) = out.on_full.values.row(t);
    } else {
      for (int j = 0; j < m; ++j) out.on_part.values(v, j) = rms * rng.normal();
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Feature text format: whitespace-separated matrix, one row per vertex.

inline void save_features(std::ostream& out, const FeatureMatrix& f, const io::ArtifactHeader* header = nullptr) {
  if (header) header->write(out, "feature matrix " + f.kind);
  io::write_matrix(out, f.values);
}

inline void save_features(const std::string& path, const FeatureMatrix& f, const io::ArtifactHeader* header = nullptr) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write feature file: " + path);
  save_features(out, f, header);
}

inline FeatureMatrix load_features(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ls(line);
    std::vector<double> row;
    double v;
    while (ls >> v) row.push_back(v);
    if (!ls.eof()) throw IoError("bad token in feature file line " + std::to_string(lineno));
    if (row.empty()) continue;
    if (!rows.empty() && row.size() != rows.front().size())
      throw IoError("ragged row in feature file at line " + std::to_string(lineno));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("empty feature file");
  FeatureMatrix f;
  f.kind = "file";
  f.values.resize(Eigen::Index(rows.size()), Eigen::Index(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows.front().size(); ++j) f.values(Eigen::Index(i), Eigen::Index(j)) = rows[i][j];
  f.validate();
  return f;
}

inline FeatureMatrix load_features(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open feature file: " + path);
  return load_features(in);
}

} // namespace partmap
