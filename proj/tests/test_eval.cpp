#include "partmap/eval.hpp"
#include "partmap/synth.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace partmap;

namespace {

// Thin strip mesh along the x axis: vertices at (i, 0, 0) and (i, h, 0).
TriMesh strip_mesh(int segments, double h = 0.5) {
  Eigen::MatrixXd v(2 * (segments + 1), 3);
  for (int i = 0; i <= segments; ++i) {
    v.row(2 * i) << double(i), 0, 0;
    v.row(2 * i + 1) << double(i), h, 0;
  }
  Eigen::MatrixXi f(2 * segments, 3);
  for (int i = 0; i < segments; ++i) {
    f.row(2 * i) << 2 * i, 2 * i + 2, 2 * i + 1;
    f.row(2 * i + 1) << 2 * i + 1, 2 * i + 2, 2 * i + 3;
  }
  return make_mesh(v, f);
}

} // namespace

TEST_CASE("perfect prediction gives zero error and a full curve at zero") {
  TriMesh m = make_icosphere(1, 1.0);
  PointMap id = PointMap::identity(m.n_vertices());
  ErrorCurve curve = princeton_curve(id, id, m, default_thresholds());
  CHECK(curve.mean_error == 0.0);
  CHECK(curve.fraction.front() == 1.0);
  CHECK(curve.fraction.back() == 1.0);
}

TEST_CASE("constant prediction mean equals the average graph distance") {
  TriMesh m = strip_mesh(6);
  const int target = 4;
  PointMap pred;
  pred.n_tgt = m.n_vertices();
  pred.target_of.assign(size_t(m.n_vertices()), target);
  PointMap gt = PointMap::identity(m.n_vertices());

  // Independent expectation: average Dijkstra distance to the target vertex,
  // normalized by sqrt(area).
  Eigen::VectorXd d = geodesic_from(m, target);
  double expected = d.sum() / m.n_vertices() / std::sqrt(m.total_area());

  ErrorCurve curve = princeton_curve(pred, gt, m, default_thresholds(100, 50.0));
  CHECK(curve.mean_error == Catch::Approx(expected).epsilon(1e-10));
}

TEST_CASE("curves are monotone and reach one when thresholds cover the range") {
  TriMesh m = make_icosphere(2, 1.0);
  Rng rng(31);
  PointMap pred;
  pred.n_tgt = m.n_vertices();
  pred.target_of.resize(size_t(m.n_vertices()));
  for (int v = 0; v < m.n_vertices(); ++v) pred.target_of[size_t(v)] = rng.index(m.n_vertices());
  PointMap gt = PointMap::identity(m.n_vertices());
  ErrorCurve curve = princeton_curve(pred, gt, m, default_thresholds(100, 100.0));
  for (std::size_t i = 1; i < curve.fraction.size(); ++i) CHECK(curve.fraction[i] >= curve.fraction[i - 1]);
  CHECK(curve.fraction.back() == 1.0);
  for (double f : curve.fraction) {
    CHECK(f >= 0.0);
    CHECK(f <= 1.0);
  }
}

TEST_CASE("normalized errors are invariant to uniform target scaling") {
  TriMesh m = make_icosphere(2, 1.0);
  Rng rng(37);
  PointMap pred;
  pred.n_tgt = m.n_vertices();
  pred.target_of.resize(size_t(m.n_vertices()));
  for (int v = 0; v < m.n_vertices(); ++v) pred.target_of[size_t(v)] = rng.index(m.n_vertices());
  PointMap gt = PointMap::identity(m.n_vertices());

  ErrorCurve base = princeton_curve(pred, gt, m, default_thresholds());
  for (double s : {2.0, 0.5}) {
    TriMesh scaled = make_mesh(s * m.vertices, m.faces);
    ErrorCurve sc = princeton_curve(pred, gt, scaled, default_thresholds());
    CHECK(std::abs(sc.mean_error - base.mean_error) < 1e-10);
    for (std::size_t i = 0; i < sc.fraction.size(); ++i) CHECK(sc.fraction[i] == base.fraction[i]);
  }
}

TEST_CASE("evaluation is restricted to gt-matched vertices") {
  TriMesh m = make_icosphere(1, 1.0);
  PointMap gt = PointMap::identity(m.n_vertices());
  gt.target_of[0] = -1;
  gt.target_of[1] = -1;
  PointMap pred = PointMap::identity(m.n_vertices());
  pred.target_of[2] = -1; // gt-matched but missing from the prediction
  ErrorCurve curve = princeton_curve(pred, gt, m, default_thresholds());
  CHECK(curve.n_evaluated == m.n_vertices() - 2);
  CHECK(curve.n_unmatched_pred == 1);
  CHECK(curve.fraction.back() == Catch::Approx(double(m.n_vertices() - 3) / (m.n_vertices() - 2)));

  PointMap none = gt;
  none.target_of.assign(size_t(m.n_vertices()), -1);
  CHECK_THROWS_AS(princeton_curve(pred, none, m, default_thresholds()), MeshError);
}

TEST_CASE("partiality bins are contiguous deciles with empty bins omitted") {
  std::vector<std::pair<double, double>> results = {{0.15, 1.0}, {0.18, 3.0}, {0.55, 2.0}};
  auto bins = partiality_binned_error(results);
  REQUIRE(bins.size() == 2);
  CHECK(bins[0].lo == Catch::Approx(0.1));
  CHECK(bins[0].hi == Catch::Approx(0.2));
  CHECK(bins[0].mean_error == Catch::Approx(2.0));
  CHECK(bins[0].count == 2);
  CHECK(bins[1].lo == Catch::Approx(0.5));
  CHECK(bins[1].count == 1);

  auto single = partiality_binned_error({{0.42, 7.0}});
  REQUIRE(single.size() == 1);
  CHECK(single[0].mean_error == 7.0);
}
