#pragma once

// Triangle-mesh core: representation, ASCII OFF/PLY round trip, cotangent
// stiffness + lumped mass, edge-graph geodesics, farthest point sampling.

#include "partmap/io.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <limits>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

namespace partmap {

struct MeshError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Immutable after construction via make_mesh / load_mesh.
struct TriMesh {
  Eigen::MatrixXd vertices;    // n x 3 positions, model units
  Eigen::MatrixXi faces;       // f x 3 vertex indices
  Eigen::VectorXd vertex_mass; // n, one-third triangle-area lumping

  int n_vertices() const { return int(vertices.rows()); }
  int n_faces() const { return int(faces.rows()); }
  double total_area() const { return vertex_mass.sum(); }
};

struct MeshOptions {
  bool drop_degenerate = true; // else degenerate faces are a hard error
  double degenerate_rel_tol = 1e-12; // area threshold as fraction of bbox diag^2
};

struct MeshReport {
  int dropped_faces = 0;
  int dropped_vertices = 0; // isolated after face drops
  std::vector<std::string> warnings;
  // Populated when vertices were dropped: new index -> original index.
  std::vector<int> orig_vertex;
};

inline double triangle_area(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

inline TriMesh make_mesh(const Eigen::MatrixXd& vertices, const Eigen::MatrixXi& faces,
                         const MeshOptions& opt = {}, MeshReport* report = nullptr) {
  const int n = int(vertices.rows());
  if (vertices.cols() != 3) throw MeshError("vertices must be n x 3");
  if (faces.cols() != 3 && faces.rows() > 0) throw MeshError("faces must be f x 3");

  for (Eigen::Index f = 0; f < faces.rows(); ++f)
    for (int c = 0; c < 3; ++c)
      if (faces(f, c) < 0 || faces(f, c) >= n)
        throw MeshError("face " + std::to_string(f) + " references vertex " + std::to_string(faces(f, c)) +
                        " outside [0, " + std::to_string(n) + ")");

  double bbox_diag2 = 0.0;
  if (n > 0) {
    Eigen::Vector3d lo = vertices.colwise().minCoeff();
    Eigen::Vector3d hi = vertices.colwise().maxCoeff();
    bbox_diag2 = (hi - lo).squaredNorm();
  }
  const double area_tol = opt.degenerate_rel_tol * std::max(bbox_diag2, 1e-300);

  std::vector<int> kept_faces;
  kept_faces.reserve(size_t(faces.rows()));
  int dropped = 0;
  for (Eigen::Index f = 0; f < faces.rows(); ++f) {
    double area = triangle_area(vertices.row(faces(f, 0)), vertices.row(faces(f, 1)), vertices.row(faces(f, 2)));
    bool degenerate = area <= area_tol || faces(f, 0) == faces(f, 1) || faces(f, 1) == faces(f, 2) ||
                      faces(f, 0) == faces(f, 2);
    if (degenerate) {
      if (!opt.drop_degenerate) throw MeshError("degenerate face " + std::to_string(f));
      ++dropped;
      continue;
    }
    kept_faces.push_back(int(f));
  }
  if (dropped && report) {
    report->dropped_faces = dropped;
    report->warnings.push_back("dropped " + std::to_string(dropped) + " degenerate face(s)");
  }

  Eigen::MatrixXi kept(int(kept_faces.size()), 3);
  for (std::size_t i = 0; i < kept_faces.size(); ++i) kept.row(Eigen::Index(i)) = faces.row(kept_faces[i]);

  // Vertices untouched by any face would carry zero mass; drop them.
  std::vector<char> used(size_t(n), 0);
  for (Eigen::Index f = 0; f < kept.rows(); ++f)
    for (int c = 0; c < 3; ++c) used[size_t(kept(f, c))] = 1;
  int n_used = 0;
  for (char u : used) n_used += u;

  TriMesh mesh;
  if (n_used == n) {
    mesh.vertices = vertices;
    mesh.faces = kept;
  } else {
    std::vector<int> remap(size_t(n), -1);
    mesh.vertices.resize(n_used, 3);
    std::vector<int> orig;
    orig.reserve(size_t(n_used));
    int next = 0;
    for (int v = 0; v < n; ++v)
      if (used[size_t(v)]) {
        remap[size_t(v)] = next;
        mesh.vertices.row(next) = vertices.row(v);
        orig.push_back(v);
        ++next;
      }
    mesh.faces.resize(kept.rows(), 3);
    for (Eigen::Index f = 0; f < kept.rows(); ++f)
      for (int c = 0; c < 3; ++c) mesh.faces(f, c) = remap[size_t(kept(f, c))];
    if (report) {
      report->dropped_vertices = n - n_used;
      report->warnings.push_back("dropped " + std::to_string(n - n_used) + " isolated vertex(es)");
      report->orig_vertex = std::move(orig);
    }
  }

  mesh.vertex_mass = Eigen::VectorXd::Zero(mesh.vertices.rows());
  for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f) {
    double a3 = triangle_area(mesh.vertices.row(mesh.faces(f, 0)), mesh.vertices.row(mesh.faces(f, 1)),
                              mesh.vertices.row(mesh.faces(f, 2))) /
                3.0;
    for (int c = 0; c < 3; ++c) mesh.vertex_mass(mesh.faces(f, c)) += a3;
  }
  if (mesh.vertices.rows() > 0 && mesh.vertex_mass.minCoeff() <= 0.0)
    throw MeshError("non-positive vertex mass after validation");
  return mesh;
}

// ---------------------------------------------------------------------------
// File formats: ASCII OFF and ASCII PLY.

inline void save_mesh_off(std::ostream& out, const TriMesh& mesh, const io::ArtifactHeader* header = nullptr) {
  out << "OFF\n";
  if (header) header->write(out, "triangle mesh");
  out << mesh.n_vertices() << ' ' << mesh.n_faces() << " 0\n";
  for (int v = 0; v < mesh.n_vertices(); ++v)
    out << io::fmt(mesh.vertices(v, 0)) << ' ' << io::fmt(mesh.vertices(v, 1)) << ' ' << io::fmt(mesh.vertices(v, 2))
        << '\n';
  for (int f = 0; f < mesh.n_faces(); ++f)
    out << "3 " << mesh.faces(f, 0) << ' ' << mesh.faces(f, 1) << ' ' << mesh.faces(f, 2) << '\n';
}

inline void save_mesh_ply(std::ostream& out, const TriMesh& mesh, const io::ArtifactHeader* header = nullptr) {
  out << "ply\nformat ascii 1.0\n";
  if (header) {
    std::ostringstream hs;
    header->write(hs, "triangle mesh");
    std::istringstream lines(hs.str());
    std::string line;
    while (std::getline(lines, line)) out << "comment " << (line.size() > 2 ? line.substr(2) : line) << '\n';
  }
  out << "element vertex " << mesh.n_vertices() << '\n';
  out << "property double x\nproperty double y\nproperty double z\n";
  out << "element face " << mesh.n_faces() << '\n';
  out << "property list uchar int vertex_indices\nend_header\n";
  for (int v = 0; v < mesh.n_vertices(); ++v)
    out << io::fmt(mesh.vertices(v, 0)) << ' ' << io::fmt(mesh.vertices(v, 1)) << ' ' << io::fmt(mesh.vertices(v, 2))
        << '\n';
  for (int f = 0; f < mesh.n_faces(); ++f)
    out << "3 " << mesh.faces(f, 0) << ' ' << mesh.faces(f, 1) << ' ' << mesh.faces(f, 2) << '\n';
}

inline void save_mesh(const std::string& path, const TriMesh& mesh, const io::ArtifactHeader* header = nullptr) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write mesh file: " + path);
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".ply")
    save_mesh_ply(out, mesh, header);
  else
    save_mesh_off(out, mesh, header);
}

inline TriMesh load_mesh_off(std::istream& in, const MeshOptions& opt = {}, MeshReport* report = nullptr) {
  io::TokenReader tr(in);
  std::string magic = tr.expect("OFF header");
  if (magic != "OFF") throw IoError("not an OFF file (header '" + magic + "')");
  long nv = tr.expect_int("vertex count");
  long nf = tr.expect_int("face count");
  tr.expect_int("edge count");
  if (nv < 0 || nf < 0) throw IoError("negative counts in OFF header");
  Eigen::MatrixXd v(nv, 3);
  for (long i = 0; i < nv; ++i)
    for (int c = 0; c < 3; ++c) v(i, c) = tr.expect_double("vertex coordinate");
  Eigen::MatrixXi f(nf, 3);
  for (long i = 0; i < nf; ++i) {
    long arity = tr.expect_int("face arity");
    if (arity != 3) throw IoError("only triangle faces are supported (got arity " + std::to_string(arity) + ")");
    for (int c = 0; c < 3; ++c) f(i, c) = int(tr.expect_int("face index"));
  }
  return make_mesh(v, f, opt, report);
}

inline TriMesh load_mesh_ply(std::istream& in, const MeshOptions& opt = {}, MeshReport* report = nullptr) {
  std::string line;
  long nv = -1, nf = -1;
  bool ascii = false;
  if (!std::getline(in, line) || line.substr(0, 3) != "ply") throw IoError("not a PLY file");
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string kind;
      ls >> kind;
      ascii = (kind == "ascii");
    } else if (word == "element") {
      std::string what;
      long count;
      ls >> what >> count;
      if (what == "vertex") nv = count;
      if (what == "face") nf = count;
    } else if (word == "end_header") {
      break;
    }
  }
  if (!ascii) throw IoError("only ASCII PLY is supported");
  if (nv < 0 || nf < 0) throw IoError("PLY header missing vertex/face counts");
  io::TokenReader tr(in);
  Eigen::MatrixXd v(nv, 3);
  for (long i = 0; i < nv; ++i)
    for (int c = 0; c < 3; ++c) v(i, c) = tr.expect_double("vertex coordinate");
  Eigen::MatrixXi f(nf, 3);
  for (long i = 0; i < nf; ++i) {
    long arity = tr.expect_int("face arity");
    if (arity != 3) throw IoError("only triangle faces are supported");
    for (int c = 0; c < 3; ++c) f(i, c) = int(tr.expect_int("face index"));
  }
  return make_mesh(v, f, opt, report);
}

inline TriMesh load_mesh(const std::string& path, const MeshOptions& opt = {}, MeshReport* report = nullptr) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open mesh file: " + path);
  // Detect by content: the first non-comment token decides.
  std::streampos start = in.tellg();
  io::TokenReader probe(in);
  std::string magic = probe.expect("mesh header");
  in.clear();
  in.seekg(start);
  if (magic == "OFF") return load_mesh_off(in, opt, report);
  if (magic == "ply") return load_mesh_ply(in, opt, report);
  throw IoError("unrecognized mesh format in " + path + " (header '" + magic + "')");
}

// Hash of the geometry itself (not the file bytes), so a cache can be matched
// against a mesh regardless of formatting.
inline std::uint64_t mesh_content_hash(const TriMesh& mesh) {
  std::ostringstream ss;
  ss << mesh.n_vertices() << ' ' << mesh.n_faces() << '\n';
  for (int v = 0; v < mesh.n_vertices(); ++v)
    ss << io::fmt(mesh.vertices(v, 0)) << ' ' << io::fmt(mesh.vertices(v, 1)) << ' ' << io::fmt(mesh.vertices(v, 2))
       << '\n';
  for (int f = 0; f < mesh.n_faces(); ++f)
    ss << mesh.faces(f, 0) << ' ' << mesh.faces(f, 1) << ' ' << mesh.faces(f, 2) << '\n';
  return io::fnv1a64(ss.str());
}

// ---------------------------------------------------------------------------
// Discrete operators.

struct Laplacian {
  Eigen::SparseMatrix<double> stiffness; // symmetric, rows sum to zero
  Eigen::VectorXd mass;                  // lumped, = mesh.vertex_mass
};

// Cotangent stiffness with one-third-area lumped mass. Negative cotangent
// weights are kept unless clamp_negative is set.
inline Laplacian cotan_laplacian(const TriMesh& mesh, bool clamp_negative = false) {
  const int n = mesh.n_vertices();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(size_t(mesh.n_faces()) * 12);
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  std::vector<Eigen::Triplet<double>> off;
  off.reserve(size_t(mesh.n_faces()) * 6);

  for (int f = 0; f < mesh.n_faces(); ++f) {
    int idx[3] = {mesh.faces(f, 0), mesh.faces(f, 1), mesh.faces(f, 2)};
    Eigen::Vector3d p[3] = {mesh.vertices.row(idx[0]), mesh.vertices.row(idx[1]), mesh.vertices.row(idx[2])};
    for (int c = 0; c < 3; ++c) {
      // Angle at corner c is opposite edge (c+1, c+2).
      int i = idx[(c + 1) % 3], j = idx[(c + 2) % 3];
      Eigen::Vector3d u = p[(c + 1) % 3] - p[c];
      Eigen::Vector3d v = p[(c + 2) % 3] - p[c];
      double w = 0.5 * u.dot(v) / u.cross(v).norm();
      if (clamp_negative && w < 0.0) w = 0.0;
      off.emplace_back(i, j, -w);
      off.emplace_back(j, i, -w);
      diag(i) += w;
      diag(j) += w;
    }
  }
  for (int i = 0; i < n; ++i) off.emplace_back(i, i, diag(i));

  Laplacian lap;
  lap.stiffness.resize(n, n);
  lap.stiffness.setFromTriplets(off.begin(), off.end());
  lap.mass = mesh.vertex_mass;
  return lap;
}

// ---------------------------------------------------------------------------
// Edge graph, geodesics, components.

using Adjacency = std::vector<std::vector<std::pair<int, double>>>; // (neighbor, edge length)

inline Adjacency edge_graph(const TriMesh& mesh) {
  Adjacency adj(static_cast<std::size_t>(mesh.n_vertices()));
  auto add = [&](int a, int b) {
    double len = (mesh.vertices.row(a) - mesh.vertices.row(b)).norm();
    for (const auto& [nbr, unused] : adj[size_t(a)])
      if (nbr == b) return;
    adj[size_t(a)].emplace_back(b, len);
    adj[size_t(b)].emplace_back(a, len);
  };
  for (int f = 0; f < mesh.n_faces(); ++f) {
    add(mesh.faces(f, 0), mesh.faces(f, 1));
    add(mesh.faces(f, 1), mesh.faces(f, 2));
    add(mesh.faces(f, 2), mesh.faces(f, 0));
  }
  return adj;
}

// Dijkstra distances over the edge graph weighted by Euclidean edge length.
// An upper-bound approximation of surface geodesics; unreachable vertices get
// +inf.
inline Eigen::VectorXd geodesic_from(const Adjacency& adj, int source) {
  const int n = int(adj.size());
  if (source < 0 || source >= n) throw MeshError("geodesic source out of range");
  Eigen::VectorXd dist = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
  dist(source) = 0.0;
  heap.emplace(0.0, source);
  while (!heap.empty()) {
    auto [d, v] = heap.top();
    heap.pop();
    if (d > dist(v)) continue;
    for (const auto& [w, len] : adj[size_t(v)]) {
      double nd = d + len;
      if (nd < dist(w)) {
        dist(w) = nd;
        heap.emplace(nd, w);
      }
    }
  }
  return dist;
}

inline Eigen::VectorXd geodesic_from(const TriMesh& mesh, int source) {
  return geodesic_from(edge_graph(mesh), source);
}

// Component id per vertex, ids dense starting at 0; returns component count.
inline int connected_components(const TriMesh& mesh, std::vector<int>& comp) {
  const int n = mesh.n_vertices();
  Adjacency adj = edge_graph(mesh);
  comp.assign(size_t(n), -1);
  int n_comp = 0;
  std::vector<int> stack;
  for (int s = 0; s < n; ++s) {
    if (comp[size_t(s)] >= 0) continue;
    stack.push_back(s);
    comp[size_t(s)] = n_comp;
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      for (const auto& [w, unused] : adj[size_t(v)])
        if (comp[size_t(w)] < 0) {
          comp[size_t(w)] = n_comp;
          stack.push_back(w);
        }
    }
    ++n_comp;
  }
  return n_comp;
}

struct Submesh {
  TriMesh mesh;
  std::vector<int> orig_vertex; // new index -> index in the parent mesh
};

// Keeps the flagged vertices and all faces whose three corners survive;
// vertices left without any face are dropped as well.
inline Submesh extract_submesh(const TriMesh& parent, const std::vector<char>& keep) {
  if (int(keep.size()) != parent.n_vertices()) throw MeshError("keep mask size mismatch");
  std::vector<Eigen::Vector3i> faces;
  for (int f = 0; f < parent.n_faces(); ++f) {
    int a = parent.faces(f, 0), b = parent.faces(f, 1), c = parent.faces(f, 2);
    if (keep[size_t(a)] && keep[size_t(b)] && keep[size_t(c)]) faces.emplace_back(a, b, c);
  }
  std::vector<int> remap(size_t(parent.n_vertices()), -1);
  std::vector<int> orig;
  for (const auto& f : faces)
    for (int c = 0; c < 3; ++c)
      if (remap[size_t(f[c])] < 0) {
        remap[size_t(f[c])] = int(orig.size());
        orig.push_back(f[c]);
      }
  Eigen::MatrixXd v(int(orig.size()), 3);
  for (std::size_t i = 0; i < orig.size(); ++i) v.row(Eigen::Index(i)) = parent.vertices.row(orig[i]);
  Eigen::MatrixXi fm(int(faces.size()), 3);
  for (std::size_t i = 0; i < faces.size(); ++i)
    fm.row(Eigen::Index(i)) = Eigen::Vector3i(remap[size_t(faces[i][0])], remap[size_t(faces[i][1])],
                                              remap[size_t(faces[i][2])]);
  Submesh out;
  out.mesh = make_mesh(v, fm);
  out.orig_vertex = std::move(orig);
  return out;
}

// Largest connected component of the flagged region.
inline Submesh largest_component_submesh(const TriMesh& parent, const std::vector<char>& keep) {
  Submesh sub = extract_submesh(parent, keep);
  std::vector<int> comp;
  int n_comp = connected_components(sub.mesh, comp);
  if (n_comp <= 1) return sub;
  std::vector<double> comp_area(size_t(n_comp), 0.0);
  for (int v = 0; v < sub.mesh.n_vertices(); ++v) comp_area[size_t(comp[size_t(v)])] += sub.mesh.vertex_mass(v);
  int best = 0;
  for (int c = 1; c < n_comp; ++c)
    if (comp_area[size_t(c)] > comp_area[size_t(best)]) best = c;
  std::vector<char> keep2(size_t(parent.n_vertices()), 0);
  for (int v = 0; v < sub.mesh.n_vertices(); ++v)
    if (comp[size_t(v)] == best) keep2[size_t(sub.orig_vertex[size_t(v)])] = 1;
  return extract_submesh(parent, keep2);
}

// ---------------------------------------------------------------------------
// Farthest point sampling.

struct SampleSet {
  std::vector<int> indices;    // selected vertices, in selection order
  std::vector<int> assignment; // per vertex: nearest selected vertex
};

// Greedy max-min FPS under Euclidean distance. Deterministic: ties break to
// the lowest vertex index, assignment ties keep the earlier sample.
inline SampleSet farthest_point_sample(const TriMesh& mesh, int count, int seed_vertex) {
  const int n = mesh.n_vertices();
  if (count < 1 || count > n) throw MeshError("sample count out of range [1, n]");
  if (seed_vertex < 0 || seed_vertex >= n) throw MeshError("seed vertex out of range");

  SampleSet set;
  set.indices.reserve(size_t(count));
  set.assignment.assign(size_t(n), seed_vertex);
  Eigen::VectorXd best = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());

  int current = seed_vertex;
  for (int s = 0; s < count; ++s) {
    set.indices.push_back(current);
    for (int v = 0; v < n; ++v) {
      double d = (mesh.vertices.row(v) - mesh.vertices.row(current)).squaredNorm();
      if (d < best(v)) {
        best(v) = d;
        set.assignment[size_t(v)] = current;
      }
    }
    if (s + 1 == count) break;
    int far = 0;
    double far_d = -1.0;
    for (int v = 0; v < n; ++v)
      if (best(v) > far_d) {
        far_d = best(v);
        far = v;
      }
    current = far;
  }
  return set;
}

} // namespace partmap
