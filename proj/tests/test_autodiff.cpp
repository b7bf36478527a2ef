#include "partmap/autodiff.hpp"

#include "partmap/rng.hpp"

#include "oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace partmap;
using ad::Tape;
using ad::Value;
using Mat = Eigen::MatrixXd;

namespace {

Mat random_mat(Rng& rng, int r, int c, double scale = 1.0) {
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = scale * rng.normal();
  return m;
}

// Finite-difference check of a scalar graph against the tape gradient for one
// input; the graph builder receives the tape and the staged input.
void check_gradient(const Mat& x0, const std::function<Value(Tape&, Value)>& build, double tol = 1e-4,
                    double step = 1e-5) {
  Tape t;
  Value x = t.param(x0);
  Value y = build(t, x);
  REQUIRE(t.rows(y) == 1);
  REQUIRE(t.cols(y) == 1);
  t.backward(y);
  Mat analytic = t.grad(x);

  Mat numeric = test_oracles::finite_difference(
      [&](const Mat& xv) {
        Tape tt;
        Value xx = tt.constant(xv);
        return tt.val(build(tt, xx))(0, 0);
      },
      x0, step);
  CHECK(test_oracles::max_rel_error(analytic, numeric) <= tol);
}

} // namespace

TEST_CASE("elementwise and reduction gradients match finite differences") {
  Rng rng(71);
  Mat x = random_mat(rng, 4, 3);

  check_gradient(x, [](Tape& t, Value v) { return t.sum_all(t.mul(v, v)); });
  check_gradient(x, [](Tape& t, Value v) { return t.frob_sq(v); });
  check_gradient(x, [](Tape& t, Value v) { return t.mean_all(t.relu(v)); }, 2e-4);
  check_gradient(x, [](Tape& t, Value v) { return t.sum_all(t.sigmoid(v)); });
  check_gradient(x, [](Tape& t, Value v) { return t.sum_all(t.exp_(t.scale(v, 0.3))); });
  Mat positive = x.array().abs() + 0.5;
  check_gradient(positive, [](Tape& t, Value v) { return t.sum_all(t.log_(v)); });
  check_gradient(x, [](Tape& t, Value v) { return t.sum_all(t.clamp(v, -0.4, 0.4)); }, 2e-4);
  check_gradient(x, [](Tape& t, Value v) {
    Value w = t.constant(Mat::Ones(4, 3) * 0.7);
    return t.frob_sq(t.add(t.sub(v, w), t.mul(v, w)));
  });
}

TEST_CASE("linear algebra gradients match finite differences") {
  Rng rng(72);
  Mat x = random_mat(rng, 4, 3);
  Mat w = random_mat(rng, 3, 5);

  Mat bias0 = random_mat(rng, 1, 5);
  check_gradient(x, [&](Tape& t, Value v) { return t.frob_sq(t.matmul(v, t.constant(w))); });
  check_gradient(w, [&](Tape& t, Value v) { return t.frob_sq(t.matmul(t.constant(x), v)); });
  check_gradient(x, [](Tape& t, Value v) { return t.frob_sq(t.transpose(v)); });
  check_gradient(x, [&](Tape& t, Value v) { return t.frob_sq(t.linear(v, t.constant(w), t.constant(bias0))); });
  Mat bias = random_mat(rng, 1, 5);
  check_gradient(bias, [&](Tape& t, Value v) { return t.frob_sq(t.linear(t.constant(x), t.constant(w), v)); });

  Eigen::SparseMatrix<double> sp(6, 4);
  std::vector<Eigen::Triplet<double>> trips = {{0, 1, 0.5}, {2, 3, -1.0}, {5, 0, 2.0}, {3, 1, 0.25}};
  sp.setFromTriplets(trips.begin(), trips.end());
  check_gradient(x, [&](Tape& t, Value v) { return t.frob_sq(t.sparse_apply(sp, v)); });

  check_gradient(x, [](Tape& t, Value v) { return t.frob_sq(t.concat_cols(v, t.scale(v, 2.0))); });
  check_gradient(x, [](Tape& t, Value v) { return t.frob_sq(t.slice_cols(v, 1, 2)); });
  check_gradient(x, [](Tape& t, Value v) { return t.frob_sq(t.gather_rows(v, {2, 0, 2, 3})); });
  check_gradient(x, [](Tape& t, Value v) { return t.sum_all(t.pick(v, {0, 1, 3}, {2, 0, 1})); });
}

TEST_CASE("softmax, logsumexp and instance norm gradients") {
  Rng rng(73);
  Mat x = random_mat(rng, 5, 4);
  Mat shaper = random_mat(rng, 5, 4);
  check_gradient(x, [&](Tape& t, Value v) {
    Value sm = t.row_softmax(v);
    return t.frob_sq(t.mul(sm, t.constant(shaper)));
  });
  check_gradient(x, [](Tape& t, Value v) { return t.sum_all(t.logsumexp_rows(v)); });
  check_gradient(x, [](Tape& t, Value v) { return t.frob_sq(t.instance_norm(v)); }, 2e-4);
}

TEST_CASE("softmax rows sum to one") {
  Rng rng(74);
  Tape t;
  Value x = t.constant(random_mat(rng, 7, 9, 3.0));
  Value y = t.row_softmax(x);
  Eigen::VectorXd sums = t.val(y).rowwise().sum();
  for (int i = 0; i < 7; ++i) CHECK(std::abs(sums(i) - 1.0) < 1e-12);
}

TEST_CASE("map-layer gradients pass finite differences through the solve") {
  Rng rng(75);
  const int ks = 4, kt = 3, m = 6;
  Mat A0 = random_mat(rng, ks, m);
  Mat B0 = random_mat(rng, kt, m);
  Mat M = random_mat(rng, kt, ks).array().abs();
  Mat W = random_mat(rng, kt, ks); // fixed cotangent shaper
  const double lambda = 1.5;

  // d ||C||^2-ish scalar wrt A.
  check_gradient(
      A0,
      [&](Tape& t, Value a) {
        Value b = t.constant(B0);
        Value c = t.fmap_solve(a, b, M, lambda);
        return t.frob_sq(t.mul(c, t.constant(W)));
      },
      1e-5);
  // ... and wrt B.
  check_gradient(
      B0,
      [&](Tape& t, Value b) {
        Value a = t.constant(A0);
        Value c = t.fmap_solve(a, b, M, lambda);
        return t.frob_sq(t.mul(c, t.constant(W)));
      },
      1e-5);
}

TEST_CASE("map layer under a dominating penalty shrinks to zero with vanishing gradient") {
  Rng rng(76);
  Mat A0 = random_mat(rng, 3, 5);
  Mat B0 = random_mat(rng, 3, 5);
  Mat M = Mat::Ones(3, 3);
  Tape t;
  Value a = t.param(A0);
  Value c = t.fmap_solve(a, t.constant(B0), M, 1e12);
  CHECK(t.val(c).cwiseAbs().maxCoeff() < 1e-9);
  t.backward(t.frob_sq(c));
  CHECK(t.grad(a).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("tape rejects malformed graphs") {
  Tape t;
  Value a = t.param(Mat::Ones(2, 2));
  Value b = t.param(Mat::Ones(3, 2));
  CHECK_THROWS_AS(t.add(a, b), ad::AdError);
  CHECK_THROWS_AS(t.matmul(a, b), ad::AdError);
  CHECK_THROWS_AS(t.backward(a), ad::AdError); // not a scalar
  CHECK_THROWS_AS(t.gather_rows(a, {5}), ad::AdError);
  Mat neg = -Mat::Ones(2, 2);
  Value n = t.constant(neg);
  CHECK_THROWS_AS(t.log_(n), ad::AdError);
}

TEST_CASE("gradients accumulate across shared subexpressions") {
  // f(x) = sum(x*x) + sum(x) uses x twice; gradient must be 2x + 1.
  Rng rng(77);
  Mat x0 = random_mat(rng, 3, 3);
  Tape t;
  Value x = t.param(x0);
  Value y = t.add(t.sum_all(t.mul(x, x)), t.sum_all(x));
  t.backward(y);
  Mat expected = 2.0 * x0 + Mat::Ones(3, 3);
  CHECK(test_oracles::max_rel_error(t.grad(x), expected) < 1e-12);
}
