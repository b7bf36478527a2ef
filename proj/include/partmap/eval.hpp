#pragma once

// Correspondence evaluation: cumulative geodesic-error curves normalized by
// the square root of the target surface area, and partiality-binned summary
// tables.

#include "partmap/mesh.hpp"
#include "partmap/pointmap.hpp"

#include <algorithm>
#include <map>
#include <vector>

namespace partmap {

struct ErrorCurve {
  std::vector<double> thresholds; // ascending, normalized units
  std::vector<double> fraction;   // cumulative fraction of matches below
  double mean_error = 0;          // over evaluated vertices with a prediction
  int n_evaluated = 0;            // gt-matched vertices
  int n_unmatched_pred = 0;       // gt-matched but absent from the prediction
};

inline std::vector<double> default_thresholds(int count = 100, double max_value = 0.25) {
  std::vector<double> t(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) t[size_t(i)] = max_value * double(i) / (count - 1);
  return t;
}

// Per-vertex error = geodesic distance on the target between prediction and
// ground truth, divided by sqrt(target area); evaluated only where gt has a
// match. Predictions missing there count against every threshold.
inline ErrorCurve princeton_curve(const PointMap& pred, const PointMap& gt, const TriMesh& tgt_mesh,
                                  const std::vector<double>& thresholds) {
  if (pred.n_src() != gt.n_src()) throw MeshError("prediction and ground truth differ in source vertex count");
  if (pred.n_tgt != gt.n_tgt) throw MeshError("prediction and ground truth differ in target vertex count");
  if (gt.n_tgt != tgt_mesh.n_vertices()) throw MeshError("ground truth does not target the given mesh");
  for (std::size_t i = 0; i + 1 < thresholds.size(); ++i)
    if (thresholds[i + 1] < thresholds[i]) throw MeshError("thresholds must be ascending");
  if (gt.n_matched() == 0) throw MeshError("ground truth has no matched vertices to evaluate");

  const double norm = std::sqrt(tgt_mesh.total_area());
  Adjacency adj = edge_graph(tgt_mesh);

  // One Dijkstra per distinct ground-truth target vertex.
  std::map<int, Eigen::VectorXd> dist_from;
  for (int v = 0; v < gt.n_src(); ++v) {
    int g = gt.target_of[size_t(v)];
    if (g >= 0 && !dist_from.count(g)) dist_from.emplace(g, geodesic_from(adj, g));
  }

  std::vector<double> errors;
  ErrorCurve curve;
  double sum = 0;
  int finite = 0;
  for (int v = 0; v < gt.n_src(); ++v) {
    int g = gt.target_of[size_t(v)];
    if (g < 0) continue;
    ++curve.n_evaluated;
    int p = pred.target_of[size_t(v)];
    if (p < 0) {
      ++curve.n_unmatched_pred;
      errors.push_back(std::numeric_limits<double>::infinity());
      continue;
    }
    double e = dist_from.at(g)(p) / norm;
    errors.push_back(e);
    if (std::isfinite(e)) {
      sum += e;
      ++finite;
    }
  }
  curve.mean_error = finite ? sum / finite : std::numeric_limits<double>::infinity();

  std::sort(errors.begin(), errors.end());
  curve.thresholds = thresholds;
  curve.fraction.resize(thresholds.size());
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    auto it = std::upper_bound(errors.begin(), errors.end(), thresholds[i]);
    curve.fraction[i] = double(it - errors.begin()) / double(errors.size());
  }
  return curve;
}

inline void save_curve(std::ostream& out, const ErrorCurve& curve, const io::ArtifactHeader* header = nullptr) {
  if (header) header->write(out, "error curve");
  out << "# mean_error: " << io::fmt(curve.mean_error) << '\n';
  out << "# evaluated: " << curve.n_evaluated << " unmatched_pred: " << curve.n_unmatched_pred << '\n';
  out << "threshold,fraction\n";
  for (std::size_t i = 0; i < curve.thresholds.size(); ++i)
    out << io::fmt(curve.thresholds[i]) << ',' << io::fmt(curve.fraction[i]) << '\n';
}

struct PartialityBin {
  double lo = 0, hi = 0;
  double mean_error = 0;
  int count = 0;
};

// Contiguous deciles over [0, 1]; bins without samples are omitted (callers
// can tell from the count of returned bins).
inline std::vector<PartialityBin> partiality_binned_error(const std::vector<std::pair<double, double>>& results) {
  std::vector<PartialityBin> bins(10);
  for (int b = 0; b < 10; ++b) {
    bins[size_t(b)].lo = 0.1 * b;
    bins[size_t(b)].hi = 0.1 * (b + 1);
  }
  for (const auto& [partiality, error] : results) {
    int b = std::clamp(int(partiality * 10.0), 0, 9);
    bins[size_t(b)].mean_error += error;
    bins[size_t(b)].count += 1;
  }
  std::vector<PartialityBin> out;
  for (auto& bin : bins)
    if (bin.count > 0) {
      bin.mean_error /= bin.count;
      out.push_back(bin);
    }
  return out;
}

} // namespace partmap
