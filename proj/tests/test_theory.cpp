#include "partmap/theory.hpp"
#include "partmap/synth.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace partmap;

TEST_CASE("projection onto the matched subset is idempotent") {
  PointMap map;
  map.n_tgt = 10;
  map.target_of = {0, -1, 3, -1, 7};
  ProjectionMatrix p = ProjectionMatrix::from_pointmap(map);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 4);
  Eigen::MatrixXd once = p.apply(x);
  Eigen::MatrixXd twice = p.apply(once);
  CHECK((once - twice).cwiseAbs().maxCoeff() == 0.0);
  CHECK(once.row(1).cwiseAbs().maxCoeff() == 0.0);
  CHECK((once.row(0) - x.row(0)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("identical shapes transport exactly") {
  TriMesh m = make_icosphere(2, 1.0);
  PointMap id = PointMap::identity(m.n_vertices());
  TransportReport rep = check_partial_to_full(m, m, id, 24, 3, 24);
  CHECK(rep.rho <= 1e-6);
  CHECK(rep.all_matched);
}

TEST_CASE("cut pairs transport within truncation error; random features do not") {
  SynthPair pair = gen_cut(make_icosphere(3, 1.0), 5, 0.4);
  TransportReport rep = check_partial_to_full(pair.full, pair.part, pair.gt, 60, 7, 60);
  CHECK(rep.rho <= 0.05);
  CHECK(rep.rho_control >= 10.0 * rep.rho);
}

TEST_CASE("partial-to-partial needs the matched-subset projection") {
  TriMesh base = make_icosphere(3, 1.0);
  SynthPair pair = gen_p2p(base, 8, 0.5);
  TransportReport rep = check_partial_to_partial(pair.part, pair.full, pair.gt, 60, 7, 60);
  CHECK_FALSE(rep.all_matched);
  CHECK(rep.rho <= 0.05);
  CHECK(rep.rho_noproj >= 5.0 * rep.rho);
}

TEST_CASE("full overlap collapses both residuals") {
  SynthPair pair = gen_cut(make_icosphere(2, 1.0), 4, 0.35);
  // Treated as partial-to-partial with everything matched: P is the identity.
  TransportReport rep = check_partial_to_partial(pair.part, pair.full, pair.gt, 24, 3, 24);
  CHECK(rep.all_matched);
  CHECK(std::abs(rep.rho - rep.rho_noproj) < 1e-10);
}

TEST_CASE("empty overlap reports a degenerate zero map") {
  TriMesh m = make_icosphere(1, 1.0);
  PointMap none;
  none.n_tgt = m.n_vertices();
  none.target_of.assign(size_t(m.n_vertices()), -1);
  TransportReport rep = check_partial_to_partial(m, m, none, 8, 3, 12);
  CHECK(rep.degenerate);
  CHECK(rep.rho <= 1e-8); // C = 0, so C b = 0
}

TEST_CASE("a feature supported off the part is invisible on the part") {
  // Build a cut pair and a smooth function on the full shape supported only
  // away from the part: its part coefficients vanish while its full
  // coefficients do not.
  SynthPair pair = gen_cut(make_icosphere(2, 1.0), 6, 0.4);
  int k = 30;
  SpectralBasis bf = compute_basis(pair.full, k);
  SpectralBasis bp = compute_basis(pair.part, k);

  std::vector<char> off_part(size_t(pair.full.n_vertices()), 1);
  for (int t : pair.gt.target_of)
    if (t >= 0) off_part[size_t(t)] = 0;

  // Indicator of the removed region: exactly zero on the part.
  Eigen::MatrixXd indicator = Eigen::MatrixXd::Zero(pair.full.n_vertices(), 1);
  for (int v = 0; v < pair.full.n_vertices(); ++v) indicator(v, 0) = off_part[size_t(v)] ? 1.0 : 0.0;

  // Restriction to the part through the ground truth is identically zero.
  Eigen::MatrixXd f_part(pair.part.n_vertices(), 1);
  for (int v = 0; v < pair.part.n_vertices(); ++v) f_part(v, 0) = indicator(pair.gt.target_of[size_t(v)], 0);
  CHECK(f_part.cwiseAbs().maxCoeff() == 0.0);

  Eigen::VectorXd a = project(bf, indicator).coeffs.col(0);
  Eigen::VectorXd b = project(bp, f_part).coeffs.col(0);
  double d_scale = std::sqrt(indicator.col(0).dot(bf.mass.cwiseProduct(indicator.col(0))));
  CHECK(b.cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.norm() > 0.1 * d_scale);
}
