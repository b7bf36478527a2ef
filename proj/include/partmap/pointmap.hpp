#pragma once

// Partial vertex-to-vertex correspondence. target_of[v] is the matched vertex
// on the other shape or -1. Note that functional maps run in the opposite
// direction: a point map from shape P into shape Q corresponds to a
// functional map whose source basis lives on Q and whose target basis lives
// on P.

#include "partmap/io.hpp"

#include <vector>

namespace partmap {

struct PointMap {
  std::vector<int> target_of; // per source vertex; -1 = unmatched
  int n_tgt = 0;

  int n_src() const { return int(target_of.size()); }

  int n_matched() const {
    int c = 0;
    for (int t : target_of) c += (t >= 0);
    return c;
  }

  bool matched(int v) const { return target_of[size_t(v)] >= 0; }

  void validate() const {
    for (int t : target_of)
      if (t >= n_tgt || t < -1) throw IoError("point map entry out of range");
  }

  static PointMap identity(int n) {
    PointMap m;
    m.n_tgt = n;
    m.target_of.resize(size_t(n));
    for (int i = 0; i < n; ++i) m.target_of[size_t(i)] = i;
    return m;
  }

  // Per-target-vertex indicator of being hit by some source vertex.
  std::vector<char> image_mask() const {
    std::vector<char> mask(size_t(n_tgt), 0);
    for (int t : target_of)
      if (t >= 0) mask[size_t(t)] = 1;
    return mask;
  }
};

// Map file: one line per source vertex, 0-based target index or -1.
inline void save_map(std::ostream& out, const PointMap& map, const io::ArtifactHeader* header = nullptr) {
  if (header) header->write(out, "point map");
  for (int t : map.target_of) out << t << '\n';
}

inline void save_map(const std::string& path, const PointMap& map, const io::ArtifactHeader* header = nullptr) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write map file: " + path);
  save_map(out, map, header);
}

inline PointMap load_map(std::istream& in, int n_tgt = -1) {
  io::TokenReader tr(in);
  PointMap map;
  std::string tok;
  while (tr.next(tok)) {
    long v;
    try {
      v = std::stol(tok);
    } catch (const std::exception&) {
      throw IoError("bad map entry '" + tok + "'");
    }
    if (v < -1) throw IoError("map entry below -1");
    map.target_of.push_back(int(v));
  }
  int max_t = -1;
  for (int t : map.target_of) max_t = std::max(max_t, t);
  map.n_tgt = n_tgt >= 0 ? n_tgt : max_t + 1;
  map.validate();
  return map;
}

inline PointMap load_map(const std::string& path, int n_tgt = -1) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open map file: " + path);
  return load_map(in, n_tgt);
}

} // namespace partmap
