#pragma once

// Reverse-mode differentiation tape over dense matrices. Nodes are recorded
// in topological order (parents strictly precede children); one backward pass
// from a scalar root accumulates exact gradients for every leaf that was
// registered with requires_grad.
//
// The masked least-squares map layer participates through an adjoint rule:
// the backward pass solves the transposed per-row systems against the
// incoming cotangent instead of differentiating factorization internals. The
// mask is treated as a constant by the API (it is not a tape value).

#include "partmap/fmap.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

namespace partmap::ad {

using Mat = Eigen::MatrixXd;

struct AdError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Value {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Tape {
public:
  Value input(Mat v, bool requires_grad) {
    nodes_.push_back(Node{std::move(v), requires_grad, nullptr});
    return Value{int(nodes_.size()) - 1};
  }
  Value param(Mat v) { return input(std::move(v), true); }
  Value constant(Mat v) { return input(std::move(v), false); }

  const Mat& val(Value v) const { return node(v).primal; }
  Eigen::Index rows(Value v) const { return val(v).rows(); }
  Eigen::Index cols(Value v) const { return val(v).cols(); }
  std::size_t size() const { return nodes_.size(); }

  void clear() {
    nodes_.clear();
    grads_.clear();
  }

  // Gradient of the last backward() root with respect to v; zero if v was
  // never reached.
  Mat grad(Value v) const {
    const Node& n = node(v);
    if (int(grads_.size()) > v.id && grads_[size_t(v.id)].size() > 0) return grads_[size_t(v.id)];
    return Mat::Zero(n.primal.rows(), n.primal.cols());
  }

  void backward(Value root) {
    const Node& r = node(root);
    if (r.primal.rows() != 1 || r.primal.cols() != 1) throw AdError("backward root must be a 1x1 scalar");
    grads_.assign(nodes_.size(), Mat());
    accum(root.id, Mat::Ones(1, 1));
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[size_t(i)];
      if (!n.requires_grad || !n.backward) continue;
      if (grads_[size_t(i)].size() == 0) continue;
      n.backward(*this, grads_[size_t(i)]);
    }
  }

  // ---- elementwise and scalar ----

  Value add(Value a, Value b) {
    check_same_shape(a, b);
    return make(val(a) + val(b), {a, b}, [a, b](Tape& t, const Mat& g) {
      t.accum_if(a, g);
      t.accum_if(b, g);
    });
  }

  Value sub(Value a, Value b) {
    check_same_shape(a, b);
    return make(val(a) - val(b), {a, b}, [a, b](Tape& t, const Mat& g) {
      t.accum_if(a, g);
      t.accum_if(b, -g);
    });
  }

  Value mul(Value a, Value b) {
    check_same_shape(a, b);
    return make(val(a).cwiseProduct(val(b)), {a, b}, [a, b](Tape& t, const Mat& g) {
      t.accum_if(a, g.cwiseProduct(t.val(b)));
      t.accum_if(b, g.cwiseProduct(t.val(a)));
    });
  }

  Value scale(Value a, double c) {
    return make(c * val(a), {a}, [a, c](Tape& t, const Mat& g) { t.accum_if(a, c * g); });
  }

  Value relu(Value a) {
    Mat y = val(a).cwiseMax(0.0);
    return make(std::move(y), {a}, [a](Tape& t, const Mat& g) {
      t.accum_if(a, (t.val(a).array() > 0.0).select(g, Mat::Zero(g.rows(), g.cols())));
    });
  }

  Value sigmoid(Value a) {
    Mat y = (1.0 / (1.0 + (-val(a).array()).exp())).matrix();
    Value out = make(std::move(y), {a}, nullptr);
    node(out).backward = [a, out](Tape& t, const Mat& g) {
      const Mat& yv = t.val(out);
      t.accum_if(a, (g.array() * yv.array() * (1.0 - yv.array())).matrix());
    };
    return out;
  }

  Value exp_(Value a) {
    Value out = make(val(a).array().exp().matrix(), {a}, nullptr);
    node(out).backward = [a, out](Tape& t, const Mat& g) { t.accum_if(a, g.cwiseProduct(t.val(out))); };
    return out;
  }

  Value log_(Value a) {
    if ((val(a).array() <= 0.0).any()) throw AdError("log of non-positive value");
    return make(val(a).array().log().matrix(), {a},
                [a](Tape& t, const Mat& g) { t.accum_if(a, g.cwiseQuotient(t.val(a))); });
  }

  // Pass-through gradient inside the interval, zero outside.
  Value clamp(Value a, double lo, double hi) {
    Mat y = val(a).cwiseMax(lo).cwiseMin(hi);
    return make(std::move(y), {a}, [a, lo, hi](Tape& t, const Mat& g) {
      const Mat& x = t.val(a);
      Mat gx = g;
      for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.cols(); ++j)
          if (x(i, j) < lo || x(i, j) > hi) gx(i, j) = 0.0;
      t.accum_if(a, gx);
    });
  }

  // ---- linear algebra ----

  Value matmul(Value a, Value b) {
    if (cols(a) != rows(b)) throw AdError("matmul shape mismatch");
    return make(val(a) * val(b), {a, b}, [a, b](Tape& t, const Mat& g) {
      t.accum_if(a, g * t.val(b).transpose());
      t.accum_if(b, t.val(a).transpose() * g);
    });
  }

  Value transpose(Value a) {
    return make(val(a).transpose(), {a}, [a](Tape& t, const Mat& g) { t.accum_if(a, g.transpose()); });
  }

  // x W + 1 b with b a 1 x cols row vector.
  Value linear(Value x, Value w, Value b) {
    if (rows(b) != 1 || cols(b) != cols(w)) throw AdError("bias must be 1 x out_dim");
    Mat y = val(x) * val(w);
    y.rowwise() += val(b).row(0);
    return make(std::move(y), {x, w, b}, [x, w, b](Tape& t, const Mat& g) {
      t.accum_if(x, g * t.val(w).transpose());
      t.accum_if(w, t.val(x).transpose() * g);
      t.accum_if(b, g.colwise().sum());
    });
  }

  // Fixed sparse linear map applied from the left: W x.
  Value sparse_apply(const Eigen::SparseMatrix<double>& w, Value x) {
    if (w.cols() != rows(x)) throw AdError("sparse map shape mismatch");
    Eigen::SparseMatrix<double> wt = w.transpose();
    return make(w * val(x), {x}, [x, wt](Tape& t, const Mat& g) { t.accum_if(x, wt * g); });
  }

  Value concat_cols(Value a, Value b) {
    if (rows(a) != rows(b)) throw AdError("concat row mismatch");
    Mat y(rows(a), cols(a) + cols(b));
    y << val(a), val(b);
    Eigen::Index ca = cols(a);
    return make(std::move(y), {a, b}, [a, b, ca](Tape& t, const Mat& g) {
      t.accum_if(a, g.leftCols(ca));
      t.accum_if(b, g.rightCols(g.cols() - ca));
    });
  }

  Value slice_cols(Value a, Eigen::Index start, Eigen::Index len) {
    if (start < 0 || start + len > cols(a)) throw AdError("column slice out of range");
    return make(val(a).middleCols(start, len), {a}, [a, start, len](Tape& t, const Mat& g) {
      Mat gx = Mat::Zero(t.rows(a), t.cols(a));
      gx.middleCols(start, len) = g;
      t.accum_if(a, gx);
    });
  }

  Value gather_rows(Value a, std::vector<int> idx) {
    for (int i : idx)
      if (i < 0 || i >= rows(a)) throw AdError("gather index out of range");
    Mat y(Eigen::Index(idx.size()), cols(a));
    for (std::size_t i = 0; i < idx.size(); ++i) y.row(Eigen::Index(i)) = val(a).row(idx[i]);
    return make(std::move(y), {a}, [a, idx](Tape& t, const Mat& g) {
      Mat gx = Mat::Zero(t.rows(a), t.cols(a));
      for (std::size_t i = 0; i < idx.size(); ++i) gx.row(idx[i]) += g.row(Eigen::Index(i));
      t.accum_if(a, gx);
    });
  }

  // Entries a(r_i, c_i) as a column vector.
  Value pick(Value a, std::vector<int> rows_idx, std::vector<int> cols_idx) {
    if (rows_idx.size() != cols_idx.size()) throw AdError("pick index lists differ in length");
    Mat y(Eigen::Index(rows_idx.size()), 1);
    for (std::size_t i = 0; i < rows_idx.size(); ++i) {
      if (rows_idx[i] < 0 || rows_idx[i] >= rows(a) || cols_idx[i] < 0 || cols_idx[i] >= cols(a))
        throw AdError("pick index out of range");
      y(Eigen::Index(i), 0) = val(a)(rows_idx[i], cols_idx[i]);
    }
    return make(std::move(y), {a}, [a, rows_idx, cols_idx](Tape& t, const Mat& g) {
      Mat gx = Mat::Zero(t.rows(a), t.cols(a));
      for (std::size_t i = 0; i < rows_idx.size(); ++i) gx(rows_idx[i], cols_idx[i]) += g(Eigen::Index(i), 0);
      t.accum_if(a, gx);
    });
  }

  // ---- reductions and normalizations ----

  Value sum_all(Value a) {
    return make(Mat::Constant(1, 1, val(a).sum()), {a}, [a](Tape& t, const Mat& g) {
      t.accum_if(a, Mat::Constant(t.rows(a), t.cols(a), g(0, 0)));
    });
  }

  Value mean_all(Value a) {
    double n = double(val(a).size());
    return make(Mat::Constant(1, 1, val(a).sum() / n), {a}, [a, n](Tape& t, const Mat& g) {
      t.accum_if(a, Mat::Constant(t.rows(a), t.cols(a), g(0, 0) / n));
    });
  }

  Value frob_sq(Value a) {
    return make(Mat::Constant(1, 1, val(a).squaredNorm()), {a},
                [a](Tape& t, const Mat& g) { t.accum_if(a, 2.0 * g(0, 0) * t.val(a)); });
  }

  Value row_softmax(Value a) {
    Mat y = val(a);
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      Eigen::ArrayXd row = y.row(i).array();
      row -= row.maxCoeff();
      row = row.exp();
      y.row(i) = (row / row.sum()).matrix();
    }
    Value out = make(std::move(y), {a}, nullptr);
    node(out).backward = [a, out](Tape& t, const Mat& g) {
      const Mat& yv = t.val(out);
      Mat gx(yv.rows(), yv.cols());
      for (Eigen::Index i = 0; i < yv.rows(); ++i) {
        double dot = g.row(i).dot(yv.row(i));
        gx.row(i) = (yv.row(i).array() * (g.row(i).array() - dot)).matrix();
      }
      t.accum_if(a, gx);
    };
    return out;
  }

  // Stable log(sum(exp(row))) as an n x 1 column.
  Value logsumexp_rows(Value a) {
    const Mat& x = val(a);
    Mat y(x.rows(), 1);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      double m = x.row(i).maxCoeff();
      y(i, 0) = m + std::log((x.row(i).array() - m).exp().sum());
    }
    Value out = make(std::move(y), {a}, nullptr);
    node(out).backward = [a, out](Tape& t, const Mat& g) {
      const Mat& x = t.val(a);
      const Mat& yv = t.val(out);
      Mat gx(x.rows(), x.cols());
      for (Eigen::Index i = 0; i < x.rows(); ++i)
        gx.row(i) = g(i, 0) * (x.row(i).array() - yv(i, 0)).exp().matrix();
      t.accum_if(a, gx);
    };
    return out;
  }

  // Per-column standardization over rows (the sample axis).
  Value instance_norm(Value a, double eps = 1e-5) {
    const Mat& x = val(a);
    Eigen::Index n = x.rows();
    if (n < 1) throw AdError("instance norm over empty sample set");
    Eigen::RowVectorXd mu = x.colwise().mean();
    Eigen::RowVectorXd var = ((x.rowwise() - mu).array().square().colwise().sum() / double(n)).matrix();
    Eigen::RowVectorXd istd = (var.array() + eps).rsqrt().matrix();
    Mat y = (x.rowwise() - mu).array().rowwise() * istd.array();
    Value out = make(std::move(y), {a}, nullptr);
    node(out).backward = [a, out, istd, n](Tape& t, const Mat& g) {
      const Mat& yv = t.val(out);
      Eigen::RowVectorXd gmean = g.colwise().mean();
      Eigen::RowVectorXd gymean = (g.cwiseProduct(yv)).colwise().mean();
      Mat gx(g.rows(), g.cols());
      for (Eigen::Index i = 0; i < g.rows(); ++i)
        gx.row(i) =
            ((g.row(i) - gmean - yv.row(i).cwiseProduct(gymean)).array() * istd.array()).matrix();
      t.accum_if(a, gx);
    };
    return out;
  }

  // ---- the differentiable map layer ----

  // Forward equals solve_fmap on (A, B); backward solves the same symmetric
  // per-row systems against the cotangent. The mask carries no gradient.
  Value fmap_solve(Value a, Value b, Eigen::MatrixXd mask, double lambda) {
    const Mat& A = val(a);
    const Mat& B = val(b);
    if (A.cols() != B.cols()) throw AdError("coefficient matrices must share the feature count");
    if (mask.rows() != B.rows() || mask.cols() != A.rows()) throw AdError("mask shape does not match coefficients");

    auto mask_ptr = std::make_shared<Eigen::MatrixXd>(std::move(mask));
    detail::MaskedRowSolver solver(A, *mask_ptr, lambda);
    Mat R = A * B.transpose();
    Mat C(B.rows(), A.rows());
    for (Eigen::Index i = 0; i < B.rows(); ++i) C.row(i) = solver.solve_row(i, R.col(i)).transpose();

    Value out = make(std::move(C), {a, b}, nullptr);
    node(out).backward = [a, b, out, mask_ptr, lambda](Tape& t, const Mat& g) {
      const Mat& A = t.val(a);
      const Mat& B = t.val(b);
      const Mat& C = t.val(out);
      detail::MaskedRowSolver solver(A, *mask_ptr, lambda);
      Mat gA = Mat::Zero(A.rows(), A.cols());
      Mat gB = Mat::Zero(B.rows(), B.cols());
      for (Eigen::Index i = 0; i < B.rows(); ++i) {
        Eigen::VectorXd u = solver.solve_row(i, g.row(i).transpose());
        Eigen::RowVectorXd utA = u.transpose() * A;
        Eigen::RowVectorXd ctA = C.row(i) * A;
        gB.row(i) = utA;
        gA += u * B.row(i) - u * ctA - C.row(i).transpose() * utA;
      }
      t.accum_if(a, gA);
      t.accum_if(b, gB);
    };
    return out;
  }

private:
  struct Node {
    Mat primal;
    bool requires_grad;
    std::function<void(Tape&, const Mat&)> backward;
  };

  Node& node(Value v) {
    if (!v.valid() || v.id >= int(nodes_.size())) throw AdError("invalid tape value");
    return nodes_[size_t(v.id)];
  }
  const Node& node(Value v) const {
    if (!v.valid() || v.id >= int(nodes_.size())) throw AdError("invalid tape value");
    return nodes_[size_t(v.id)];
  }

  void check_same_shape(Value a, Value b) const {
    if (rows(a) != rows(b) || cols(a) != cols(b)) throw AdError("shape mismatch");
  }

  Value make(Mat primal, std::initializer_list<Value> parents, std::function<void(Tape&, const Mat&)> backward) {
    bool rg = false;
    for (Value p : parents) rg = rg || node(p).requires_grad;
    nodes_.push_back(Node{std::move(primal), rg, rg ? std::move(backward) : nullptr});
    return Value{int(nodes_.size()) - 1};
  }

  void accum(int id, const Mat& g) {
    if (grads_[size_t(id)].size() == 0)
      grads_[size_t(id)] = g;
    else
      grads_[size_t(id)] += g;
  }

  void accum_if(Value v, const Mat& g) {
    if (node(v).requires_grad) accum(v.id, g);
  }

  std::vector<Node> nodes_;
  std::vector<Mat> grads_;

  friend class TapeTestAccess;
};

} // namespace partmap::ad
