#include "partmap/descriptors.hpp"
#include "partmap/synth.hpp"

#include "oracles.hpp"

#include <Eigen/Geometry>
#include <catch2/catch_amalgamated.hpp>

#include <numeric>
#include <sstream>

using namespace partmap;

TEST_CASE("heat kernel signature limits") {
  TriMesh m = make_icosphere(2, 1.0);
  SpectralBasis basis = compute_basis(m, 30);

  SECTION("small times approach the truncated squared-eigenfunction sum") {
    FeatureMatrix f = heat_kernel_signature(basis, {1e-9});
    Eigen::VectorXd plancherel = basis.phi.cwiseProduct(basis.phi).rowwise().sum();
    CHECK(test_oracles::max_rel_error(f.values, plancherel) < 1e-6);
    CHECK(f.values.minCoeff() > 0.0);
  }

  SECTION("large times keep only the kernel term") {
    double t = 50.0 / std::max(basis.lambda(1), 1e-12);
    FeatureMatrix f = heat_kernel_signature(basis, {t});
    double expected = 1.0 / m.total_area();
    double spread = (f.values.col(0).maxCoeff() - f.values.col(0).minCoeff()) / f.values.col(0).mean();
    CHECK(spread < 1e-3);
    CHECK(f.values.col(0).mean() == Catch::Approx(expected).epsilon(1e-3));
  }

  SECTION("empty or invalid time lists throw") {
    CHECK_THROWS_AS(heat_kernel_signature(basis, {}), IoError);
    CHECK_THROWS_AS(heat_kernel_signature(basis, {-1.0}), IoError);
    CHECK_THROWS_AS(heat_kernel_signature(basis, {2.0, 1.0}), IoError);
  }
}

TEST_CASE("signatures are intrinsic") {
  // Deterministic bumps kill the icosahedral symmetry so the spectrum is
  // simple and eigenvectors are pinned by the sign convention; symmetric
  // meshes have exactly degenerate blocks whose basis is arbitrary.
  TriMesh ico = make_icosphere(2, 1.0);
  Eigen::MatrixXd v = ico.vertices;
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    double r = 1.0 + 0.25 * std::sin(3.0 * v(i, 0) + 1.0) * std::cos(2.0 * v(i, 1)) + 0.15 * std::sin(5.0 * v(i, 2));
    v.row(i) *= r;
  }
  TriMesh m = make_mesh(v, ico.faces);
  const int n = m.n_vertices();

  // Deterministic permutation.
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(11);
  for (int i = n - 1; i > 0; --i) std::swap(perm[size_t(i)], perm[size_t(rng.index(i + 1))]);
  TriMesh pm = test_oracles::permute_mesh(m, perm);

  // Rigid motion on top.
  Eigen::Matrix3d rot = Eigen::AngleAxisd(0.7, Eigen::Vector3d(1, 2, 3).normalized()).toRotationMatrix();
  Eigen::MatrixXd moved = pm.vertices * rot.transpose();
  moved.rowwise() += Eigen::RowVector3d(0.3, -0.2, 1.0);
  TriMesh rm = make_mesh(moved, pm.faces);

  SpectralBasis b0 = compute_basis(m, 24);
  SpectralBasis b1 = compute_basis(rm, 24);
  std::vector<double> times = default_hks_times(b0);

  FeatureMatrix h0 = heat_kernel_signature(b0, times);
  FeatureMatrix h1 = heat_kernel_signature(b1, times);
  for (int v = 0; v < n; ++v)
    CHECK((h0.values.row(v) - h1.values.row(perm[size_t(v)])).cwiseAbs().maxCoeff() <
          1e-8 * h0.values.cwiseAbs().maxCoeff());

  FeatureMatrix w0 = wave_kernel_signature(b0, 32);
  FeatureMatrix w1 = wave_kernel_signature(b1, 32);
  for (int v = 0; v < n; ++v)
    CHECK((w0.values.row(v) - w1.values.row(perm[size_t(v)])).cwiseAbs().maxCoeff() <
          1e-8 * w0.values.cwiseAbs().maxCoeff());
}

TEST_CASE("matched-by-construction features") {
  TriMesh full = make_icosphere(2, 1.0);
  SynthPair pair = gen_cut(full, 3, 0.35);
  SpectralBasis basis = compute_basis(pair.full, 30);

  SECTION("matched rows are exact copies") {
    PerfectFeaturePair f = perfect_features(basis, pair.gt, 12, 7);
    for (int v = 0; v < pair.gt.n_src(); ++v) {
      int t = pair.gt.target_of[size_t(v)];
      REQUIRE(t >= 0);
      CHECK((f.on_part.values.row(v) - f.on_full.values.row(t)).cwiseAbs().maxCoeff() == 0.0);
    }
  }

  SECTION("single constant function copies the constant") {
    // Bandwidth 1 keeps only the kernel mode, which is constant.
    PerfectFeaturePair f = perfect_features(basis, pair.gt, 1, 7, 1, 0.0);
    double c = f.on_full.values(0, 0);
    for (int v = 0; v < pair.gt.n_src(); ++v) CHECK(f.on_part.values(v, 0) == Catch::Approx(c).epsilon(1e-9));
  }

  SECTION("unmatched vertices get fresh rows") {
    SynthPair pp = gen_p2p(full, 5, 0.5);
    SpectralBasis by = compute_basis(pp.full, 30);
    PerfectFeaturePair f = perfect_features(by, pp.gt, 8, 7);
    int unmatched = 0;
    for (int v = 0; v < pp.gt.n_src(); ++v)
      if (!pp.gt.matched(v)) {
        ++unmatched;
        CHECK(f.on_part.values.row(v).cwiseAbs().maxCoeff() > 0.0);
      }
    CHECK(unmatched > 0);
  }

  SECTION("out-of-range ground truth throws") {
    PointMap bad = pair.gt;
    bad.target_of[0] = pair.full.n_vertices() + 5;
    CHECK_THROWS_AS(perfect_features(basis, bad, 4, 7), IoError);
  }
}

TEST_CASE("feature file round trip and error paths") {
  SECTION("save then load is exact") {
    Rng rng(13);
    FeatureMatrix f;
    f.kind = "file";
    f.values.resize(7, 5);
    for (int i = 0; i < 7; ++i)
      for (int j = 0; j < 5; ++j) f.values(i, j) = rng.normal() * std::pow(10.0, rng.index(6) - 3);
    std::ostringstream out;
    save_features(out, f);
    std::istringstream in(out.str());
    FeatureMatrix back = load_features(in);
    CHECK((back.values - f.values).cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("ragged rows are rejected") {
    std::istringstream in("1 2 3\n4 5\n");
    CHECK_THROWS_AS(load_features(in), IoError);
  }

  SECTION("empty files are rejected") {
    std::istringstream in("# only a comment\n");
    CHECK_THROWS_AS(load_features(in), IoError);
  }
}
