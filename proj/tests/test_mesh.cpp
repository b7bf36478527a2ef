#include "partmap/mesh.hpp"
#include "partmap/synth.hpp"

#include "oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <sstream>

using namespace partmap;

namespace {

TriMesh single_triangle() {
  Eigen::MatrixXd v(3, 3);
  v << 0, 0, 0, 1, 0, 0, 0, 1, 0;
  Eigen::MatrixXi f(1, 3);
  f << 0, 1, 2;
  return make_mesh(v, f);
}

} // namespace

TEST_CASE("one-third lumping on a single triangle") {
  TriMesh m = single_triangle();
  CHECK(m.total_area() == Catch::Approx(0.5));
  for (int i = 0; i < 3; ++i) CHECK(m.vertex_mass(i) == Catch::Approx(1.0 / 6.0));
}

TEST_CASE("regular tetrahedron OFF loads with the right area") {
  std::string off =
      "OFF\n4 4 0\n"
      "1 1 1\n1 -1 -1\n-1 1 -1\n-1 -1 1\n"
      "3 0 1 2\n3 0 3 1\n3 0 2 3\n3 1 3 2\n";
  std::istringstream in(off);
  TriMesh m = load_mesh_off(in);
  // Edge length 2*sqrt(2); area of a unit-edge tetrahedron is sqrt(3),
  // scaling by (2 sqrt 2)^2 = 8.
  CHECK(m.total_area() == Catch::Approx(std::sqrt(3.0) * 8.0).epsilon(1e-12));

  // Unit-edge version via scaling.
  Eigen::MatrixXd v = m.vertices / (2.0 * std::sqrt(2.0));
  TriMesh unit = make_mesh(v, m.faces);
  CHECK(unit.total_area() == Catch::Approx(std::sqrt(3.0)).epsilon(1e-12));
}

TEST_CASE("out-of-range face index is a validation error") {
  Eigen::MatrixXd v(4, 3);
  v.setRandom();
  Eigen::MatrixXi f(1, 3);
  f << 0, 1, 99;
  CHECK_THROWS_AS(make_mesh(v, f), MeshError);
}

TEST_CASE("degenerate faces are dropped with a report") {
  Eigen::MatrixXd v(4, 3);
  v << 0, 0, 0, 1, 0, 0, 0, 1, 0, 0.5, 0.5, 0;
  Eigen::MatrixXi f(2, 3);
  f << 0, 1, 2, 1, 1, 3; // second face repeats a vertex
  MeshReport report;
  TriMesh m = make_mesh(v, f, {}, &report);
  CHECK(report.dropped_faces == 1);
  CHECK(m.n_faces() == 1);
  MeshOptions strict;
  strict.drop_degenerate = false;
  CHECK_THROWS_AS(make_mesh(v, f, strict), MeshError);
}

TEST_CASE("OFF and PLY writers round trip exactly") {
  TriMesh m = make_icosphere(1, 1.0);
  io::ArtifactHeader header;
  header.version = "test";
  for (bool ply : {false, true}) {
    std::ostringstream out;
    if (ply)
      save_mesh_ply(out, m, &header);
    else
      save_mesh_off(out, m, &header);
    std::istringstream in(out.str());
    TriMesh back = ply ? load_mesh_ply(in) : load_mesh_off(in);
    REQUIRE(back.n_vertices() == m.n_vertices());
    REQUIRE(back.n_faces() == m.n_faces());
    CHECK((back.vertices - m.vertices).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.faces - m.faces).cwiseAbs().maxCoeff() == 0);
  }
}

TEST_CASE("cotangent stiffness basics") {
  SECTION("rows sum to zero and the matrix is symmetric") {
    TriMesh m = make_icosphere(2, 1.0);
    Laplacian lap = cotan_laplacian(m);
    Eigen::VectorXd ones = Eigen::VectorXd::Ones(m.n_vertices());
    CHECK((lap.stiffness * ones).cwiseAbs().maxCoeff() < 1e-10);
    Eigen::MatrixXd dense(lap.stiffness);
    CHECK((dense - dense.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(lap.mass.sum() == Catch::Approx(m.total_area()).epsilon(1e-10));
  }

  SECTION("square split along the diagonal has zero diagonal-edge weight") {
    Eigen::MatrixXd v(4, 3);
    v << 0, 0, 0, 1, 0, 0, 1, 1, 0, 0, 1, 0;
    Eigen::MatrixXi f(2, 3);
    f << 0, 1, 2, 0, 2, 3;
    Laplacian lap = cotan_laplacian(make_mesh(v, f));
    CHECK(Eigen::MatrixXd(lap.stiffness)(0, 2) == Catch::Approx(0.0).margin(1e-14));
  }

  SECTION("equilateral triangle off-diagonals are -1/(2 sqrt 3)") {
    Eigen::MatrixXd v(3, 3);
    v << 0, 0, 0, 1, 0, 0, 0.5, std::sqrt(3.0) / 2.0, 0;
    Eigen::MatrixXi f(1, 3);
    f << 0, 1, 2;
    Eigen::MatrixXd dense(cotan_laplacian(make_mesh(v, f)).stiffness);
    CHECK(dense(0, 1) == Catch::Approx(-1.0 / (2.0 * std::sqrt(3.0))).epsilon(1e-12));
    CHECK(dense(1, 2) == Catch::Approx(-1.0 / (2.0 * std::sqrt(3.0))).epsilon(1e-12));
  }

  SECTION("clamping zeroes negative weights") {
    // Obtuse triangle produces a negative cotangent.
    Eigen::MatrixXd v(3, 3);
    v << 0, 0, 0, 4, 0, 0, 2, 0.3, 0;
    Eigen::MatrixXi f(1, 3);
    f << 0, 1, 2;
    TriMesh m = make_mesh(v, f);
    Eigen::MatrixXd kept(cotan_laplacian(m, false).stiffness);
    Eigen::MatrixXd clamped(cotan_laplacian(m, true).stiffness);
    CHECK(kept(0, 1) > 0.0); // negative weight w -> off-diagonal -w > 0
    CHECK(clamped(0, 1) == 0.0);
  }
}

TEST_CASE("geodesic distances on the edge graph") {
  SECTION("source distance is zero; straight path sums edges") {
    Eigen::MatrixXd v(4, 3);
    v << 0, 0, 0, 1, 0, 0, 2, 0, 0, 1, 1, 0;
    Eigen::MatrixXi f(2, 3);
    f << 0, 1, 3, 1, 2, 3;
    TriMesh m = make_mesh(v, f);
    Eigen::VectorXd d = geodesic_from(m, 0);
    CHECK(d(0) == 0.0);
    CHECK(d(2) == Catch::Approx(2.0).epsilon(1e-12));
  }

  SECTION("antipodal icosphere distance overestimates pi*r by at most 15%") {
    TriMesh m = make_icosphere(3, 1.0);
    // Antipode of vertex 0 is the vertex closest to its negation.
    Eigen::Vector3d anti = -m.vertices.row(0).transpose();
    int best = 0;
    double best_d = 1e9;
    for (int v = 0; v < m.n_vertices(); ++v) {
      double dd = (m.vertices.row(v).transpose() - anti).norm();
      if (dd < best_d) {
        best_d = dd;
        best = v;
      }
    }
    double d = geodesic_from(m, 0)(best);
    CHECK(d >= M_PI);
    CHECK(d <= 1.15 * M_PI);
  }

  SECTION("graph metric is symmetric on a small mesh") {
    TriMesh m = make_icosphere(1, 1.0); // 42 vertices
    Adjacency adj = edge_graph(m);
    std::vector<Eigen::VectorXd> all;
    for (int v = 0; v < m.n_vertices(); ++v) all.push_back(geodesic_from(adj, v));
    for (int u = 0; u < m.n_vertices(); ++u)
      for (int v = 0; v < m.n_vertices(); ++v) CHECK(std::abs(all[size_t(u)](v) - all[size_t(v)](u)) < 1e-10);
  }

  SECTION("disconnected component yields infinite distance") {
    Eigen::MatrixXd v(6, 3);
    v << 0, 0, 0, 1, 0, 0, 0, 1, 0, 5, 5, 5, 6, 5, 5, 5, 6, 5;
    Eigen::MatrixXi f(2, 3);
    f << 0, 1, 2, 3, 4, 5;
    Eigen::VectorXd d = geodesic_from(make_mesh(v, f), 0);
    CHECK(std::isinf(d(3)));
  }
}

TEST_CASE("farthest point sampling") {
  SECTION("collinear points pick the extremes") {
    Eigen::MatrixXd v(4, 3);
    v << 0, 0, 0, 1, 0, 0, 2, 0, 0, 3, 0, 0;
    Eigen::MatrixXi f(2, 3);
    f << 0, 1, 2, 1, 2, 3; // degenerate faces would be dropped; lift slightly
    Eigen::MatrixXd v2 = v;
    v2(1, 1) = 0.01;
    v2(2, 1) = -0.01;
    TriMesh m = make_mesh(v2, f);
    SampleSet s = farthest_point_sample(m, 2, 0);
    std::vector<int> expected = test_oracles::brute_force_fps(m.vertices, 2, 0);
    CHECK(s.indices == expected);
    CHECK(s.indices == std::vector<int>{0, 3});
  }

  SECTION("count n returns everything with identity assignment") {
    TriMesh m = make_icosphere(1, 1.0);
    SampleSet s = farthest_point_sample(m, m.n_vertices(), 0);
    CHECK(int(s.indices.size()) == m.n_vertices());
    std::vector<int> sorted = s.indices;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < m.n_vertices(); ++i) {
      CHECK(sorted[size_t(i)] == i);
      CHECK(s.assignment[size_t(i)] == i);
    }
  }

  SECTION("count 1 assigns all vertices to the seed") {
    TriMesh m = make_icosphere(1, 1.0);
    SampleSet s = farthest_point_sample(m, 1, 7);
    CHECK(s.indices == std::vector<int>{7});
    for (int a : s.assignment) CHECK(a == 7);
  }

  SECTION("matches the brute-force oracle and is deterministic") {
    TriMesh m = make_icosphere(2, 1.0);
    SampleSet a = farthest_point_sample(m, 24, 3);
    SampleSet b = farthest_point_sample(m, 24, 3);
    CHECK(a.indices == b.indices);
    CHECK(a.assignment == b.assignment);
    CHECK(a.indices == test_oracles::brute_force_fps(m.vertices, 24, 3));
    std::vector<int> sorted = a.indices;
    std::sort(sorted.begin(), sorted.end());
    CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
  }

  SECTION("count out of range throws") {
    TriMesh m = single_triangle();
    CHECK_THROWS_AS(farthest_point_sample(m, 0, 0), MeshError);
    CHECK_THROWS_AS(farthest_point_sample(m, 4, 0), MeshError);
  }
}
