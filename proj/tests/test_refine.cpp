#include "partmap/refine.hpp"
#include "partmap/descriptors.hpp"
#include "partmap/eval.hpp"
#include "partmap/synth.hpp"

#include "oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <numeric>
#include <sstream>

using namespace partmap;

TEST_CASE("zoomout schedule handling") {
  TriMesh m = make_icosphere(2, 1.0);
  SpectralBasis basis = compute_basis(m, 40);
  FunctionalMap c0;
  c0.C = Eigen::MatrixXd::Identity(20, 20);

  SECTION("zero steps returns the input unchanged") {
    FunctionalMap out = partial_zoomout(c0, basis, basis, 0, 20, 40);
    CHECK((out.C - c0.C).cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("invalid schedules throw") {
    CHECK_THROWS_AS(partial_zoomout(c0, basis, basis, 2, 20, 50), FmapError); // beyond basis
    CHECK_THROWS_AS(partial_zoomout(c0, basis, basis, 2, 30, 20), FmapError); // k_start > k_end
    CHECK_THROWS_AS(partial_zoomout(c0, basis, basis, -1, 20, 40), FmapError);
  }

  SECTION("row count is capped by the slant rank") {
    SynthPair pair = gen_cut(make_icosphere(2, 1.0), 6, 0.4);
    SpectralBasis bp = compute_basis(pair.part, 40);
    SpectralBasis bf = compute_basis(pair.full, 40);
    FunctionalMap init = gt_fmap(pair.gt, bf.truncated(20), bp.truncated(20));
    FunctionalMap out = partial_zoomout(init, bf, bp, 4, 20, 40, RankRule::SlantCap);
    int r = estimate_rank(bp.lambda.head(40), bf.lambda.head(40)).r;
    CHECK(out.k_src() == 40);
    CHECK(out.k_tgt() == std::min(40, r));
  }
}

TEST_CASE("zoomout round trip is idempotent at fixed size on an isometric pair") {
  TriMesh m = make_icosphere(2, 1.0);
  std::vector<int> perm(static_cast<std::size_t>(m.n_vertices()));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(17);
  for (int i = m.n_vertices() - 1; i > 0; --i) std::swap(perm[size_t(i)], perm[size_t(rng.index(i + 1))]);
  TriMesh pm = test_oracles::permute_mesh(m, perm);
  SpectralBasis b0 = compute_basis(m, 24);
  SpectralBasis b1 = compute_basis(pm, 24);
  PointMap gt;
  gt.n_tgt = m.n_vertices();
  gt.target_of.assign(perm.begin(), perm.end());

  FunctionalMap c = gt_fmap(gt, b1, b0);
  // One fixed-size round trip reaches a fixed point of the iteration.
  FunctionalMap c1 = partial_zoomout(c, b1, b0, 1, 24, 24, RankRule::Full);
  FunctionalMap c2 = partial_zoomout(c1, b1, b0, 1, 24, 24, RankRule::Full);
  CHECK((c2.C - c1.C).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("upsampling a noisy identity does not hurt on the identical shape") {
  TriMesh m = make_icosphere(2, 1.0);
  SpectralBasis basis = compute_basis(m, 40);
  Rng rng(23);
  FunctionalMap noisy;
  noisy.C = Eigen::MatrixXd::Identity(20, 20);
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 20; ++j) noisy.C(i, j) += 0.1 * rng.normal();

  PointMap gt = PointMap::identity(m.n_vertices());
  PointMap before = fmap_to_p2p(noisy, basis.truncated(20), basis.truncated(20));
  FunctionalMap refined = partial_zoomout(noisy, basis, basis, 8, 20, 40, RankRule::Full);
  PointMap after = fmap_to_p2p(refined, basis.truncated(refined.k_src()), basis.truncated(refined.k_tgt()));

  ErrorCurve eb = princeton_curve(before, gt, m, default_thresholds());
  ErrorCurve ea = princeton_curve(after, gt, m, default_thresholds());
  CHECK(ea.mean_error <= eb.mean_error);
}

TEST_CASE("axiomatic overlap estimation") {
  SECTION("identical shapes with identical features fill the whole shape") {
    TriMesh m = make_icosphere(1, 1.0);
    SpectralBasis basis = compute_basis(m, 10);
    FeatureMatrix f = heat_kernel_signature(basis, default_hks_times(basis, 4));
    PointMap id = PointMap::identity(m.n_vertices());
    OverlapEstimate est = estimate_overlap_axiomatic(id, f.values, f.values);
    for (int v = 0; v < m.n_vertices(); ++v) {
      CHECK(est.on_src.prob(v) == Catch::Approx(0.5));
      CHECK(est.on_tgt.prob(v) == Catch::Approx(0.5));
    }
    CHECK(iou(est.on_src, std::vector<char>(size_t(m.n_vertices()), 1)) == 1.0);
  }

  SECTION("probabilities stay in [0,1] for wild feature scales") {
    TriMesh m = make_icosphere(1, 1.0);
    PointMap id = PointMap::identity(m.n_vertices());
    Rng rng(3);
    Eigen::MatrixXd fa(m.n_vertices(), 4), fb(m.n_vertices(), 4);
    for (int v = 0; v < m.n_vertices(); ++v)
      for (int j = 0; j < 4; ++j) {
        fa(v, j) = 1e8 * rng.normal();
        fb(v, j) = 1e8 * rng.normal();
      }
    OverlapEstimate est = estimate_overlap_axiomatic(id, fa, fb);
    CHECK(est.on_src.prob.minCoeff() >= 0.0);
    CHECK(est.on_src.prob.maxCoeff() <= 1.0);
    CHECK(est.on_tgt.prob.minCoeff() >= 0.0);
    CHECK(est.on_tgt.prob.maxCoeff() <= 1.0);
  }

  SECTION("all-zero features are a degenerate-scale error") {
    TriMesh m = make_icosphere(1, 1.0);
    PointMap id = PointMap::identity(m.n_vertices());
    Eigen::MatrixXd z = Eigen::MatrixXd::Zero(m.n_vertices(), 3);
    CHECK_THROWS_AS(estimate_overlap_axiomatic(id, z, z), FmapError);
  }

  SECTION("empty match set is an error") {
    PointMap empty;
    empty.n_tgt = 5;
    empty.target_of.assign(5, -1);
    Eigen::MatrixXd f = Eigen::MatrixXd::Ones(5, 2);
    CHECK_THROWS_AS(estimate_overlap_axiomatic(empty, f, f), FmapError);
  }

  SECTION("cut pair with matched features recovers the region") {
    SynthPair pair = gen_cut(make_icosphere(2, 1.0), 13, 0.4);
    SpectralBasis bf = compute_basis(pair.full, 30);
    PerfectFeaturePair feats = perfect_features(bf, pair.gt, 24, 5);
    OverlapEstimate est = estimate_overlap_axiomatic(pair.gt, feats.on_part.values, feats.on_full.values);
    double score = iou(est.on_tgt, pair.gt_overlap_on_full, &pair.full.vertex_mass);
    CHECK(score >= 0.8);
  }
}

TEST_CASE("intersection over union identities") {
  Eigen::VectorXd w(4);
  w << 1, 2, 3, 4;
  std::vector<char> a = {1, 1, 0, 0};
  std::vector<char> empty = {0, 0, 0, 0};
  CHECK(iou(a, a, &w) == 1.0);
  CHECK(iou(a, empty, &w) == 0.0);
  CHECK(iou(empty, empty, &w) == 1.0); // both empty defined as 1
  std::vector<char> b = {1, 0, 0, 0};  // weight 1 of a's total 3
  CHECK(iou(b, a, &w) == Catch::Approx(1.0 / 3.0));
  CHECK(iou(a, b, &w) == Catch::Approx(1.0 / 3.0)); // symmetric
  // Count mode: half of gt by count.
  std::vector<char> gt = {1, 1, 1, 1};
  std::vector<char> half = {1, 1, 0, 0};
  CHECK(iou(half, gt) == 0.5);
  CHECK_THROWS_AS(iou(a, std::vector<char>{1, 0}), FmapError);
}

TEST_CASE("overlap file round trip") {
  OverlapRegion region;
  region.prob.resize(5);
  region.prob << 0.0, 0.25, 0.5, 0.75, 1.0;
  std::ostringstream out;
  save_overlap(out, region);
  std::istringstream in(out.str());
  OverlapRegion back = load_overlap(in);
  CHECK((back.prob - region.prob).cwiseAbs().maxCoeff() == 0.0);
  std::istringstream bad("0.5\n1.5\n");
  CHECK_THROWS_AS(load_overlap(bad), IoError);
}
