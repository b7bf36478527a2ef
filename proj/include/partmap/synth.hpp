#pragma once

// Analytic base shapes and synthetic partial-pair generation with exact
// ground truth. Base shapes are generated procedurally so the repository
// ships no mesh data: subdivided icosahedron, capsule, and a multi-limb
// quadruped meshed from a union of capsule distance fields.

#include "partmap/mesh.hpp"
#include "partmap/pointmap.hpp"
#include "partmap/rng.hpp"
#include "partmap/toml.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace partmap {

// ---------------------------------------------------------------------------
// Base shapes.

inline TriMesh make_icosphere(int subdivisions = 3, double radius = 1.0) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Eigen::Vector3d> verts = {
      {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
      {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  std::vector<Eigen::Vector3i> faces = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9},  {5, 11, 4},
      {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6},  {3, 6, 8},
      {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (auto& v : verts) v.normalize();

  std::map<std::pair<int, int>, int> midpoint;
  auto mid = [&](int a, int b) {
    auto key = std::minmax(a, b);
    auto it = midpoint.find(key);
    if (it != midpoint.end()) return it->second;
    Eigen::Vector3d m = (verts[size_t(a)] + verts[size_t(b)]).normalized();
    verts.push_back(m);
    int id = int(verts.size()) - 1;
    midpoint.emplace(key, id);
    return id;
  };

  for (int s = 0; s < subdivisions; ++s) {
    std::vector<Eigen::Vector3i> next;
    next.reserve(faces.size() * 4);
    for (const auto& f : faces) {
      int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    faces = std::move(next);
  }

  Eigen::MatrixXd V(verts.size(), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) V.row(Eigen::Index(i)) = radius * verts[i];
  Eigen::MatrixXi F(faces.size(), 3);
  for (std::size_t i = 0; i < faces.size(); ++i) F.row(Eigen::Index(i)) = faces[i];
  return make_mesh(V, F);
}

// Cylinder of the given half-height with hemispherical caps, axis along z.
inline TriMesh make_capsule(double radius = 0.5, double half_height = 0.8, int segments = 28, int rings = 10) {
  std::vector<Eigen::Vector3d> verts;
  std::vector<Eigen::Vector3i> faces;

  // Rings from bottom pole to top pole: cap rings sweep the polar angle,
  // body rings sweep the axis.
  std::vector<std::pair<double, double>> profile; // (z, ring radius)
  for (int i = rings; i >= 1; --i) {
    double a = (M_PI / 2) * double(i) / rings;
    profile.emplace_back(-half_height - radius * std::sin(a), radius * std::cos(a));
  }
  for (int i = 0; i <= rings; ++i)
    profile.emplace_back(-half_height + 2 * half_height * double(i) / rings, radius);
  for (int i = 1; i <= rings; ++i) {
    double a = (M_PI / 2) * double(i) / rings;
    profile.emplace_back(half_height + radius * std::sin(a), radius * std::cos(a));
  }

  int bottom = 0;
  verts.push_back({0, 0, -half_height - radius});
  std::vector<std::vector<int>> ring_ids;
  for (const auto& [z, r] : profile) {
    std::vector<int> ring(static_cast<std::size_t>(segments));
    for (int s = 0; s < segments; ++s) {
      double a = 2 * M_PI * double(s) / segments;
      ring[size_t(s)] = int(verts.size());
      verts.push_back({r * std::cos(a), r * std::sin(a), z});
    }
    ring_ids.push_back(std::move(ring));
  }
  int top = int(verts.size());
  verts.push_back({0, 0, half_height + radius});

  for (int s = 0; s < segments; ++s) {
    int sn = (s + 1) % segments;
    faces.push_back({bottom, ring_ids.front()[size_t(sn)], ring_ids.front()[size_t(s)]});
    faces.push_back({top, ring_ids.back()[size_t(s)], ring_ids.back()[size_t(sn)]});
  }
  for (std::size_t r = 0; r + 1 < ring_ids.size(); ++r)
    for (int s = 0; s < segments; ++s) {
      int sn = (s + 1) % segments;
      int a = ring_ids[r][size_t(s)], b = ring_ids[r][size_t(sn)];
      int c = ring_ids[r + 1][size_t(s)], d = ring_ids[r + 1][size_t(sn)];
      faces.push_back({a, b, d});
      faces.push_back({a, d, c});
    }

  Eigen::MatrixXd V(verts.size(), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) V.row(Eigen::Index(i)) = verts[i];
  Eigen::MatrixXi F(faces.size(), 3);
  for (std::size_t i = 0; i < faces.size(); ++i) F.row(Eigen::Index(i)) = faces[i];
  return make_mesh(V, F);
}

namespace detail {

inline double sdf_capsule(const Eigen::Vector3d& p, const Eigen::Vector3d& a, const Eigen::Vector3d& b, double r) {
  Eigen::Vector3d pa = p - a, ba = b - a;
  double h = std::clamp(pa.dot(ba) / ba.squaredNorm(), 0.0, 1.0);
  return (pa - ba * h).norm() - r;
}

// Marching tetrahedra over a regular grid. Orientation is not made globally
// consistent; the discrete operators only need positive triangle areas.
inline TriMesh march_sdf(const std::function<double(const Eigen::Vector3d&)>& sdf, const Eigen::Vector3d& lo,
                         const Eigen::Vector3d& hi, int resolution) {
  Eigen::Vector3d ext = hi - lo;
  double cell = ext.maxCoeff() / resolution;
  int nx = int(std::ceil(ext.x() / cell)) + 1;
  int ny = int(std::ceil(ext.y() / cell)) + 1;
  int nz = int(std::ceil(ext.z() / cell)) + 1;
  // Nudge the grid off exact surface crossings.
  Eigen::Vector3d origin = lo - Eigen::Vector3d::Constant(0.34567 * cell);

  auto gid = [&](int i, int j, int k) { return (i * (ny + 1) + j) * (nz + 1) + k; };
  std::vector<double> val(static_cast<std::size_t>((nx + 1) * (ny + 1) * (nz + 1)));
  std::vector<Eigen::Vector3d> gp(val.size());
  for (int i = 0; i <= nx; ++i)
    for (int j = 0; j <= ny; ++j)
      for (int k = 0; k <= nz; ++k) {
        Eigen::Vector3d p = origin + cell * Eigen::Vector3d(i, j, k);
        gp[size_t(gid(i, j, k))] = p;
        val[size_t(gid(i, j, k))] = sdf(p);
      }

  std::map<std::pair<int, int>, int> edge_vert;
  std::vector<Eigen::Vector3d> verts;
  std::vector<Eigen::Vector3i> faces;
  auto edge_point = [&](int ga, int gb) {
    auto key = std::minmax(ga, gb);
    auto it = edge_vert.find(key);
    if (it != edge_vert.end()) return it->second;
    double va = val[size_t(ga)], vb = val[size_t(gb)];
    double t = va / (va - vb);
    Eigen::Vector3d p = gp[size_t(ga)] + t * (gp[size_t(gb)] - gp[size_t(ga)]);
    verts.push_back(p);
    int id = int(verts.size()) - 1;
    edge_vert.emplace(key, id);
    return id;
  };

  // Six tetrahedra per cube sharing the main diagonal.
  static const int tets[6][4] = {{0, 1, 2, 6}, {0, 2, 3, 6}, {0, 3, 7, 6},
                                 {0, 7, 4, 6}, {0, 4, 5, 6}, {0, 5, 1, 6}};
  static const int corner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                   {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};

  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j)
      for (int k = 0; k < nz; ++k) {
        int g[8];
        for (int c = 0; c < 8; ++c) g[c] = gid(i + corner[c][0], j + corner[c][1], k + corner[c][2]);
        for (const auto& tet : tets) {
          int inside[4], outside[4];
          int ni = 0, no = 0;
          for (int c = 0; c < 4; ++c) {
            if (val[size_t(g[tet[c]])] < 0)
              inside[ni++] = g[tet[c]];
            else
              outside[no++] = g[tet[c]];
          }
          if (ni == 0 || no == 0) continue;
          if (ni == 1) {
            faces.push_back({edge_point(inside[0], outside[0]), edge_point(inside[0], outside[1]),
                             edge_point(inside[0], outside[2])});
          } else if (ni == 3) {
            faces.push_back({edge_point(outside[0], inside[0]), edge_point(outside[0], inside[1]),
                             edge_point(outside[0], inside[2])});
          } else {
            int q0 = edge_point(inside[0], outside[0]);
            int q1 = edge_point(inside[0], outside[1]);
            int q2 = edge_point(inside[1], outside[1]);
            int q3 = edge_point(inside[1], outside[0]);
            faces.push_back({q0, q1, q2});
            faces.push_back({q0, q2, q3});
          }
        }
      }

  Eigen::MatrixXd V(verts.size(), 3);
  for (std::size_t v = 0; v < verts.size(); ++v) V.row(Eigen::Index(v)) = verts[v];
  Eigen::MatrixXi F(faces.size(), 3);
  for (std::size_t f = 0; f < faces.size(); ++f) F.row(Eigen::Index(f)) = faces[f];
  TriMesh raw = make_mesh(V, F);
  std::vector<char> all(size_t(raw.n_vertices()), 1);
  return largest_component_submesh(raw, all).mesh;
}

} // namespace detail

// Body, four legs, neck and head fused from capsule distance fields.
inline TriMesh make_quadruped(int resolution = 26) {
  struct Limb {
    Eigen::Vector3d a, b;
    double r;
  };
  std::vector<Limb> limbs = {
      {{-0.9, 0, 0.9}, {0.9, 0, 0.9}, 0.42},     // body
      {{-0.75, -0.28, 0.75}, {-0.75, -0.28, 0.0}, 0.16}, // legs
      {{-0.75, 0.28, 0.75}, {-0.75, 0.28, 0.0}, 0.16},
      {{0.75, -0.28, 0.75}, {0.75, -0.28, 0.0}, 0.16},
      {{0.75, 0.28, 0.75}, {0.75, 0.28, 0.0}, 0.16},
      {{0.85, 0, 1.1}, {1.35, 0, 1.55}, 0.18},   // neck
      {{1.35, 0, 1.55}, {1.7, 0, 1.55}, 0.24},   // head
      {{-0.95, 0, 1.0}, {-1.35, 0, 1.3}, 0.09},  // tail
  };
  auto sdf = [limbs](const Eigen::Vector3d& p) {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& l : limbs) d = std::min(d, detail::sdf_capsule(p, l.a, l.b, l.r));
    return d;
  };
  return detail::march_sdf(sdf, {-1.9, -0.75, -0.45}, {2.2, 0.75, 2.1}, resolution);
}

// Named base shapes for the command line: icosphere | capsule | quadruped.
inline TriMesh make_base_shape(const std::string& name) {
  if (name == "icosphere") return make_icosphere(3, 1.0);
  if (name == "capsule") return make_capsule();
  if (name == "quadruped") return make_quadruped();
  throw IoError("unknown base shape: " + name);
}

// ---------------------------------------------------------------------------
// Synthetic pairs.

struct SynthPair {
  TriMesh full; // matching target; for kind "p2p" this is the second partial shape
  TriMesh part; // matching source
  PointMap gt;  // part -> full, exact by construction
  std::vector<char> gt_overlap_on_full;
  double partiality = 0;       // fraction of base area missing from `part`
  double overlap_fraction = 1; // shared area fraction (p2p pairs)
  std::string kind;            // cut | holes | p2p
  std::uint64_t seed = 0;
};

namespace detail {

inline Eigen::Vector3d random_unit(Rng& rng) {
  for (;;) {
    Eigen::Vector3d v(rng.normal(), rng.normal(), rng.normal());
    double n = v.norm();
    if (n > 1e-8) return v / n;
  }
}

// gt = index inclusion into the parent, overlap mask = image of the part.
inline SynthPair pair_from_submesh(const TriMesh& full, const Submesh& sub, const char* kind, std::uint64_t seed) {
  SynthPair pair;
  pair.full = full;
  pair.part = sub.mesh;
  pair.gt.n_tgt = full.n_vertices();
  pair.gt.target_of.assign(sub.orig_vertex.begin(), sub.orig_vertex.end());
  pair.gt_overlap_on_full.assign(size_t(full.n_vertices()), 0);
  for (int v : sub.orig_vertex) pair.gt_overlap_on_full[size_t(v)] = 1;
  pair.partiality = 1.0 - pair.part.total_area() / full.total_area();
  pair.overlap_fraction = pair.part.total_area() / full.total_area();
  pair.kind = kind;
  pair.seed = seed;
  return pair;
}

} // namespace detail

// Removes one side of a random plane, keeping the largest remaining
// component; the plane offset is bisected until the removed-area fraction is
// within +-0.05 of the target.
inline SynthPair gen_cut(const TriMesh& full, std::uint64_t seed, double target_partiality) {
  if (target_partiality < 0.05 || target_partiality > 0.95)
    throw std::invalid_argument("cut partiality must lie in [0.05, 0.95]");
  Rng rng(seed, /*stream=*/0x637574);
  Eigen::Vector3d normal = detail::random_unit(rng);
  Eigen::VectorXd proj = full.vertices * normal;

  double lo = proj.minCoeff(); // keep everything
  double hi = proj.maxCoeff(); // remove everything
  const double full_area = full.total_area();

  Submesh best;
  double best_err = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 50; ++it) {
    double c = 0.5 * (lo + hi);
    std::vector<char> keep(static_cast<std::size_t>(full.n_vertices()));
    for (int v = 0; v < full.n_vertices(); ++v) keep[size_t(v)] = proj(v) >= c ? 0 : 1;
    Submesh sub = largest_component_submesh(full, keep);
    double removed = 1.0 - (sub.mesh.n_vertices() ? sub.mesh.total_area() / full_area : 0.0);
    double err = std::abs(removed - target_partiality);
    if (err < best_err) {
      best_err = err;
      best = sub;
    }
    if (err <= 0.01) break;
    if (removed > target_partiality)
      lo = c;
    else
      hi = c;
  }
  if (best_err > 0.05)
    throw MeshError("cut generator could not reach target partiality (best error " + io::fmt(best_err) + ")");
  return detail::pair_from_submesh(full, best, "cut", seed);
}

// Multi-source breadth-first erosion: vertices are consumed in BFS order from
// the random seeds; the prefix length is bisected to hit the area target.
inline SynthPair gen_holes(const TriMesh& full, std::uint64_t seed, int n_seeds, double target_partiality) {
  if (target_partiality < 0.05 || target_partiality > 0.95)
    throw std::invalid_argument("holes partiality must lie in [0.05, 0.95]");
  if (n_seeds < 1) throw std::invalid_argument("need at least one erosion seed");
  const int n = full.n_vertices();
  Rng rng(seed, /*stream=*/0x686f6c65);

  std::vector<int> seeds;
  std::vector<char> is_seed(size_t(n), 0);
  while (int(seeds.size()) < std::min(n_seeds, n)) {
    int v = rng.index(n);
    if (!is_seed[size_t(v)]) {
      is_seed[size_t(v)] = 1;
      seeds.push_back(v);
    }
  }

  Adjacency adj = edge_graph(full);
  std::vector<int> order;
  order.reserve(size_t(n));
  std::vector<char> visited(size_t(n), 0);
  std::queue<int> queue;
  for (int s : seeds) {
    visited[size_t(s)] = 1;
    queue.push(s);
  }
  while (!queue.empty()) {
    int v = queue.front();
    queue.pop();
    order.push_back(v);
    for (const auto& [w, unused] : adj[size_t(v)])
      if (!visited[size_t(w)]) {
        visited[size_t(w)] = 1;
        queue.push(w);
      }
  }

  const double full_area = full.total_area();
  auto removed_fraction = [&](int prefix, Submesh* out) {
    std::vector<char> keep(size_t(n), 1);
    for (int i = 0; i < prefix && i < int(order.size()); ++i) keep[size_t(order[size_t(i)])] = 0;
    Submesh sub = largest_component_submesh(full, keep);
    if (out) *out = sub;
    return 1.0 - (sub.mesh.n_vertices() ? sub.mesh.total_area() / full_area : 0.0);
  };

  int lo = 0, hi = int(order.size());
  Submesh best;
  double best_err = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 50 && lo < hi; ++it) {
    int mid = (lo + hi) / 2;
    Submesh sub;
    double removed = removed_fraction(mid, &sub);
    double err = std::abs(removed - target_partiality);
    if (err < best_err) {
      best_err = err;
      best = sub;
    }
    if (err <= 0.01) break;
    if (removed > target_partiality)
      hi = mid;
    else
      lo = mid + 1;
  }
  if (best_err > 0.05)
    throw MeshError("holes generator could not reach target partiality (best error " + io::fmt(best_err) + ")");
  return detail::pair_from_submesh(full, best, "holes", seed);
}

// Two overlapping plane cuts of the same base shape. The returned pair maps
// `part` (first cut) into `full` (second cut); gt is defined exactly on the
// shared region. Overlap is measured as shared area over base area and must
// land within +-0.1 of the request, which itself must lie in [0.1, 0.9].
inline SynthPair gen_p2p(const TriMesh& base, std::uint64_t seed, double overlap_fraction) {
  if (overlap_fraction < 0.1 || overlap_fraction > 0.9)
    throw std::invalid_argument("requested overlap must lie in [0.1, 0.9]");
  Rng rng(seed, /*stream=*/0x703270);
  Eigen::Vector3d n1 = detail::random_unit(rng);
  // Second plane: roughly opposite, perturbed by up to ~15 degrees.
  Eigen::Vector3d perp = detail::random_unit(rng);
  perp = (perp - perp.dot(n1) * n1).normalized();
  double tilt = rng.uniform(0.0, 0.26);
  Eigen::Vector3d n2 = -(std::cos(tilt) * n1 + std::sin(tilt) * perp);

  const double base_area = base.total_area();
  auto cut_side = [&](const Eigen::Vector3d& nrm, double c) {
    std::vector<char> keep(static_cast<std::size_t>(base.n_vertices()));
    Eigen::VectorXd proj = base.vertices * nrm;
    for (int v = 0; v < base.n_vertices(); ++v) keep[size_t(v)] = proj(v) < c ? 1 : 0;
    return largest_component_submesh(base, keep);
  };

  // First part keeps (1 + overlap) / 2 of the area.
  double target1 = (1.0 + overlap_fraction) / 2.0;
  Eigen::VectorXd proj1 = base.vertices * n1;
  double lo = proj1.minCoeff(), hi = proj1.maxCoeff();
  Submesh part1;
  for (int it = 0; it < 50; ++it) {
    double c = 0.5 * (lo + hi);
    part1 = cut_side(n1, c);
    double kept = part1.mesh.n_vertices() ? part1.mesh.total_area() / base_area : 0.0;
    if (std::abs(kept - target1) <= 0.01) break;
    if (kept > target1)
      hi = c;
    else
      lo = c;
  }

  std::vector<char> in1(size_t(base.n_vertices()), 0);
  for (int v : part1.orig_vertex) in1[size_t(v)] = 1;

  // Second cut: bisect its offset until the shared area hits the request.
  Eigen::VectorXd proj2 = base.vertices * n2;
  lo = proj2.minCoeff();
  hi = proj2.maxCoeff();
  Submesh part2;
  double best_err = std::numeric_limits<double>::infinity();
  Submesh best2;
  for (int it = 0; it < 60; ++it) {
    double c = 0.5 * (lo + hi);
    part2 = cut_side(n2, c);
    double shared = 0;
    for (int v : part2.orig_vertex)
      if (in1[size_t(v)]) shared += base.vertex_mass(v);
    double frac = shared / base_area;
    double err = std::abs(frac - overlap_fraction);
    if (err < best_err) {
      best_err = err;
      best2 = part2;
    }
    if (err <= 0.01) break;
    if (frac > overlap_fraction)
      hi = c;
    else
      lo = c;
  }
  part2 = best2;
  if (best_err > 0.1)
    throw MeshError("partial-to-partial generator missed the overlap target (best error " + io::fmt(best_err) + ")");

  std::vector<int> base_to_part2(size_t(base.n_vertices()), -1);
  for (std::size_t i = 0; i < part2.orig_vertex.size(); ++i) base_to_part2[size_t(part2.orig_vertex[i])] = int(i);

  SynthPair pair;
  pair.full = part2.mesh;
  pair.part = part1.mesh;
  pair.gt.n_tgt = part2.mesh.n_vertices();
  pair.gt.target_of.resize(part1.orig_vertex.size());
  double shared = 0;
  for (std::size_t i = 0; i < part1.orig_vertex.size(); ++i) {
    int t = base_to_part2[size_t(part1.orig_vertex[i])];
    pair.gt.target_of[i] = t;
    if (t >= 0) shared += base.vertex_mass(part1.orig_vertex[i]);
  }
  pair.gt_overlap_on_full = pair.gt.image_mask();
  pair.partiality = 1.0 - pair.part.total_area() / base_area;
  pair.overlap_fraction = shared / base_area;
  pair.kind = "p2p";
  pair.seed = seed;
  return pair;
}

// ---------------------------------------------------------------------------
// Dataset directory layout: pair_XXXX/{full.off, part.off, gt.map, meta.toml}

inline void save_pair(const std::string& dir, const SynthPair& pair, const io::ArtifactHeader* header = nullptr) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  save_mesh(dir + "/full.off", pair.full, header);
  save_mesh(dir + "/part.off", pair.part, header);
  save_map(dir + "/gt.map", pair.gt, header);
  toml::Table meta;
  meta.set_string("kind", pair.kind);
  meta.set_int("seed", std::int64_t(pair.seed));
  meta.set_double("partiality", pair.partiality);
  meta.set_double("overlap_fraction", pair.overlap_fraction);
  meta.set_int("n_full", pair.full.n_vertices());
  meta.set_int("n_part", pair.part.n_vertices());
  std::ofstream out(dir + "/meta.toml");
  if (!out) throw IoError("cannot write pair metadata: " + dir);
  if (header) header->write(out, "pair metadata");
  toml::write(out, meta);
}

inline SynthPair load_pair(const std::string& dir) {
  SynthPair pair;
  pair.full = load_mesh(dir + "/full.off");
  pair.part = load_mesh(dir + "/part.off");
  pair.gt = load_map(dir + "/gt.map", pair.full.n_vertices());
  if (pair.gt.n_src() != pair.part.n_vertices()) throw IoError("gt.map does not match part.off in " + dir);
  toml::Table meta = toml::parse_file(dir + "/meta.toml");
  meta.require_known_keys({"kind", "seed", "partiality", "overlap_fraction", "n_full", "n_part"});
  pair.kind = meta.get_string("kind", "cut");
  pair.seed = std::uint64_t(meta.get_int("seed", 0));
  pair.partiality = meta.get_double("partiality", 0.0);
  pair.overlap_fraction = meta.get_double("overlap_fraction", 1.0);
  pair.gt_overlap_on_full = pair.gt.image_mask();
  return pair;
}

} // namespace partmap
