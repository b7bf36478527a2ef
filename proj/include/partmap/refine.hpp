#pragma once

// Spectral upsampling refinement with slant-rank-capped target dimension, and
// the deterministic overlap-region estimator used when no trained predictor
// is available.

#include "partmap/fmap.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace partmap {

enum class RankRule { SlantCap, Full };

// Iterates { point map at current size -> functional map at the next size },
// growing the source dimension from k_start to k_end in `steps` rounds. With
// RankRule::SlantCap the target (partial-side) row count is capped at the
// slant rank, re-estimated at each truncation.
inline FunctionalMap partial_zoomout(const FunctionalMap& C0, const SpectralBasis& basis_src,
                                     const SpectralBasis& basis_tgt, int steps, int k_start, int k_end,
                                     RankRule rank_rule = RankRule::SlantCap) {
  if (steps < 0) throw FmapError("negative refinement step count");
  if (k_start < 1 || k_start > k_end) throw FmapError("invalid refinement schedule: need 1 <= k_start <= k_end");
  if (k_end > basis_src.k() || k_end > basis_tgt.k())
    throw FmapError("refinement schedule exceeds basis size");
  if (C0.k_src() != k_start || C0.k_tgt() > k_start)
    throw FmapError("initial map is not k_start-truncated");
  if (steps == 0) return C0;

  FunctionalMap C = C0;
  for (int s = 1; s <= steps; ++s) {
    int k_cur = C.k_src();
    PointMap p2p = fmap_to_p2p(C, basis_src.truncated(k_cur), basis_tgt.truncated(C.k_tgt()));
    int k_next = k_start + int(std::lround(double(s) * double(k_end - k_start) / double(steps)));
    k_next = std::min(k_next, k_end);
    int rows_next = k_next;
    if (rank_rule == RankRule::SlantCap) {
      int r = estimate_rank(basis_tgt.lambda.head(k_next), basis_src.lambda.head(k_next)).r;
      rows_next = std::min(k_next, r);
    }
    C = p2p_to_fmap(p2p, basis_src.truncated(k_next), basis_tgt.truncated(rows_next));
  }
  return C;
}

// ---------------------------------------------------------------------------
// Overlap regions.

struct OverlapRegion {
  Eigen::VectorXd prob;    // per vertex, in [0, 1]
  double threshold = 0.5;
  std::string shape_id;

  std::vector<char> as_bool() const {
    std::vector<char> b(static_cast<std::size_t>(prob.size()));
    for (Eigen::Index i = 0; i < prob.size(); ++i) b[size_t(i)] = prob(i) >= threshold;
    return b;
  }
};

namespace detail {

inline double median_of(std::vector<double> v) {
  if (v.empty()) throw FmapError("median of empty set");
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

} // namespace detail

struct OverlapEstimate {
  OverlapRegion on_src; // p2p domain shape
  OverlapRegion on_tgt; // p2p codomain shape
};

// prob(v) = sigmoid(-(d(v) - median) / mad) where d(v) is the feature
// distance between v and its match; vertices failing reverse-nearest-neighbor
// consistency get their probability halved. On the codomain shape the match
// is the feature-space nearest neighbor.
inline OverlapEstimate estimate_overlap_axiomatic(const PointMap& p2p, const Eigen::MatrixXd& feat_src,
                                                  const Eigen::MatrixXd& feat_tgt, double threshold = 0.5) {
  if (int(p2p.target_of.size()) != feat_src.rows()) throw FmapError("source feature rows do not match point map");
  if (p2p.n_tgt != feat_tgt.rows()) throw FmapError("target feature rows do not match point map");
  if (p2p.n_matched() == 0) throw FmapError("empty match set");
  double scale = std::max(feat_src.cwiseAbs().maxCoeff(), feat_tgt.cwiseAbs().maxCoeff());
  if (scale <= 0) throw FmapError("degenerate feature scale: all features are zero");

  const int ns = int(feat_src.rows());
  const int nt = int(feat_tgt.rows());

  // Forward distances on the domain shape.
  std::vector<double> d_src(size_t(ns), std::numeric_limits<double>::infinity());
  std::vector<double> matched_src;
  for (int v = 0; v < ns; ++v) {
    int t = p2p.target_of[size_t(v)];
    if (t >= 0) {
      d_src[size_t(v)] = (feat_src.row(v) - feat_tgt.row(t)).norm();
      matched_src.push_back(d_src[size_t(v)]);
    }
  }

  // Codomain: nearest source feature row per target vertex.
  std::vector<int> nn_tgt = detail::nearest_rows(feat_tgt, feat_src, feat_src.rows() >= 5000);
  std::vector<double> d_tgt(static_cast<std::size_t>(nt));
  std::vector<char> hit = p2p.image_mask();
  std::vector<double> matched_tgt;
  for (int w = 0; w < nt; ++w) {
    d_tgt[size_t(w)] = (feat_tgt.row(w) - feat_src.row(nn_tgt[size_t(w)])).norm();
    if (hit[size_t(w)]) matched_tgt.push_back(d_tgt[size_t(w)]);
  }

  auto robust_scale = [](const std::vector<double>& dists, double center) {
    std::vector<double> dev(dists.size());
    for (std::size_t i = 0; i < dists.size(); ++i) dev[i] = std::abs(dists[i] - center);
    double mad = detail::median_of(dev);
    return std::max(mad, 1e-12 * std::max(1.0, std::abs(center)));
  };

  double mu_s = detail::median_of(matched_src);
  double s_s = robust_scale(matched_src, mu_s);
  double mu_t = matched_tgt.empty() ? mu_s : detail::median_of(matched_tgt);
  double s_t = matched_tgt.empty() ? s_s : robust_scale(matched_tgt, mu_t);

  OverlapEstimate est;
  est.on_src.threshold = est.on_tgt.threshold = threshold;
  est.on_src.prob.resize(ns);
  est.on_tgt.prob.resize(nt);

  // Reverse-nearest-neighbor consistency for domain vertices.
  std::vector<int> nn_src = detail::nearest_rows(feat_src, feat_tgt, feat_tgt.rows() >= 5000);
  for (int v = 0; v < ns; ++v) {
    int t = p2p.target_of[size_t(v)];
    if (t < 0) {
      est.on_src.prob(v) = 0.0;
      continue;
    }
    double p = detail::sigmoid(-(d_src[size_t(v)] - mu_s) / s_s);
    if (nn_src[size_t(v)] != t) p *= 0.5;
    est.on_src.prob(v) = p;
  }
  for (int w = 0; w < nt; ++w) {
    double p = detail::sigmoid(-(d_tgt[size_t(w)] - mu_t) / s_t);
    // Consistent when this vertex's nearest source maps back onto it.
    int back = p2p.target_of[size_t(nn_tgt[size_t(w)])];
    if (back != w) p *= 0.5;
    est.on_tgt.prob(w) = p;
  }
  return est;
}

// Area-weighted intersection over union; both-empty is defined as 1. Set
// `weights` to nullptr for plain vertex counting.
inline double iou(const std::vector<char>& pred, const std::vector<char>& gt, const Eigen::VectorXd* weights = nullptr) {
  if (pred.size() != gt.size()) throw FmapError("IOU regions differ in vertex count");
  if (weights && std::size_t(weights->size()) != pred.size()) throw FmapError("IOU weight size mismatch");
  double inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double w = weights ? (*weights)(Eigen::Index(i)) : 1.0;
    if (pred[i] && gt[i]) inter += w;
    if (pred[i] || gt[i]) uni += w;
  }
  return uni > 0 ? inter / uni : 1.0;
}

inline double iou(const OverlapRegion& pred, const std::vector<char>& gt, const Eigen::VectorXd* weights = nullptr) {
  return iou(pred.as_bool(), gt, weights);
}

// ---------------------------------------------------------------------------
// Overlap file: one probability per line.

inline void save_overlap(std::ostream& out, const OverlapRegion& region, const io::ArtifactHeader* header = nullptr) {
  if (header) header->write(out, "overlap probabilities");
  out << "# threshold: " << io::fmt(region.threshold) << '\n';
  for (Eigen::Index i = 0; i < region.prob.size(); ++i) out << io::fmt(region.prob(i)) << '\n';
}

inline void save_overlap(const std::string& path, const OverlapRegion& region,
                         const io::ArtifactHeader* header = nullptr) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write overlap file: " + path);
  save_overlap(out, region, header);
}

inline OverlapRegion load_overlap(std::istream& in, double threshold = 0.5) {
  io::TokenReader tr(in);
  std::vector<double> vals;
  std::string tok;
  while (tr.next(tok)) vals.push_back(std::stod(tok));
  OverlapRegion region;
  region.threshold = threshold;
  region.prob.resize(Eigen::Index(vals.size()));
  for (std::size_t i = 0; i < vals.size(); ++i) {
    if (vals[i] < 0 || vals[i] > 1) throw IoError("overlap probability outside [0, 1]");
    region.prob(Eigen::Index(i)) = vals[i];
  }
  return region;
}

inline OverlapRegion load_overlap(const std::string& path, double threshold = 0.5) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open overlap file: " + path);
  return load_overlap(in, threshold);
}

} // namespace partmap
