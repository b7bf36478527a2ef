#pragma once

// Desk-scale differentiable replica of the learned matching pipeline: a
// per-point MLP encoder, cross-attention feature refinement over farthest
// point samples, an overlap head, the differentiable masked map layer, the
// training losses and a deterministic single-threaded trainer.

#include "partmap/autodiff.hpp"
#include "partmap/descriptors.hpp"
#include "partmap/refine.hpp"
#include "partmap/rng.hpp"
#include "partmap/synth.hpp"

#include <map>
#include <string>
#include <vector>

namespace partmap {

struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ToyNetConfig {
  int input_dim = 3;     // raw positions
  int hidden_width = 64; // encoder MLP width, three layers
  int feature_dim = 32;  // descriptor width m
  int heads = 4;
  int fps_count = 128;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  bool nearest_interp = false; // default: inverse-distance over 3 nearest samples

  int head_dim() const {
    if (heads < 1 || feature_dim % heads != 0) throw TrainError("head count must divide the feature width");
    return feature_dim / heads;
  }
};

struct LossConfig {
  double lambda_spec = 1.0;
  double lambda_nce = 1.0;
  double lambda_over = 1.0;
  double tau = 0.07;
  double alpha_bij = 1.0;
  double alpha_orth = 1.0;
  bool unsupervised = false;

  void validate() const {
    if (lambda_spec < 0 || lambda_nce < 0 || lambda_over < 0 || tau <= 0 || alpha_bij < 0 || alpha_orth < 0)
      throw TrainError("loss weights must be non-negative and tau positive");
  }
};

using ParamMap = std::map<std::string, Eigen::MatrixXd>; // ordered: deterministic iteration

// ---------------------------------------------------------------------------
// Parameters.

namespace toy_detail {

inline Eigen::MatrixXd he_init(Rng rng, Eigen::Index in, Eigen::Index out) {
  Eigen::MatrixXd w(in, out);
  double s = std::sqrt(2.0 / double(in));
  for (Eigen::Index i = 0; i < in; ++i)
    for (Eigen::Index j = 0; j < out; ++j) w(i, j) = s * rng.normal();
  return w;
}

} // namespace toy_detail

inline ParamMap init_toy_params(const ToyNetConfig& cfg) {
  cfg.head_dim(); // validates
  const int H = cfg.hidden_width;
  const int F = cfg.feature_dim;
  ParamMap p;
  Rng root(cfg.seed, /*stream=*/0x696e6974);
  auto mat = [&](const std::string& name, int in, int out) {
    p[name] = toy_detail::he_init(root.fork(io::fnv1a64(name)), in, out);
  };
  auto bias = [&](const std::string& name, int out) { p[name] = Eigen::MatrixXd::Zero(1, out); };

  mat("enc.w1", cfg.input_dim, H);
  bias("enc.b1", H);
  mat("enc.w2", H, H);
  bias("enc.b2", H);
  mat("enc.w3", H, F);
  bias("enc.b3", F);

  mat("attn.wq", F, F);
  bias("attn.bq", F);
  mat("attn.wk", F, F);
  bias("attn.bk", F);
  mat("attn.wv", F, F);
  bias("attn.bv", F);
  mat("attn.mlp.w1", 2 * F, 2 * F);
  bias("attn.mlp.b1", 2 * F);
  mat("attn.mlp.w2", 2 * F, 2 * F);
  bias("attn.mlp.b2", 2 * F);
  mat("attn.mlp.w3", 2 * F, F);
  bias("attn.mlp.b3", F);

  mat("over.w1", F, H);
  bias("over.b1", H);
  mat("over.w2", H, 1);
  bias("over.b2", 1);
  return p;
}

struct TapeParams {
  std::map<std::string, ad::Value> values;

  ad::Value at(const std::string& name) const {
    auto it = values.find(name);
    if (it == values.end()) throw TrainError("unknown parameter tensor: " + name);
    return it->second;
  }
};

inline TapeParams stage_params(ad::Tape& tape, const ParamMap& params) {
  TapeParams tp;
  for (const auto& [name, mat] : params) tp.values[name] = tape.param(mat);
  return tp;
}

// ---------------------------------------------------------------------------
// Network blocks. All operate on tape values so gradients flow end to end.

inline ad::Value toy_encoder(ad::Tape& t, const TapeParams& p, ad::Value positions) {
  ad::Value h1 = t.relu(t.linear(positions, p.at("enc.w1"), p.at("enc.b1")));
  ad::Value h2 = t.relu(t.linear(h1, p.at("enc.w2"), p.at("enc.b2")));
  return t.linear(h2, p.at("enc.w3"), p.at("enc.b3"));
}

struct AttentionMessage {
  ad::Value message; // n_query x F
  // Per-head attention weights of the last head are kept out of the public
  // result; tests exercise the scaled-softmax core directly.
};

// Scaled dot-product attention core: alpha = softmax_j(q_i . k_j / sqrt(d)),
// message_i = sum_j alpha_ij v_j.
inline std::pair<ad::Value, ad::Value> scaled_dot_attention(ad::Tape& t, ad::Value q, ad::Value k, ad::Value v) {
  double d = double(t.cols(q));
  ad::Value logits = t.scale(t.matmul(q, t.transpose(k)), 1.0 / std::sqrt(d));
  ad::Value alpha = t.row_softmax(logits);
  return {alpha, t.matmul(alpha, v)};
}

// Multi-head cross-attention message into the query side.
inline ad::Value attention_message(ad::Tape& t, const TapeParams& p, const ToyNetConfig& cfg, ad::Value query_feat,
                                   ad::Value other_feat) {
  ad::Value q = t.linear(query_feat, p.at("attn.wq"), p.at("attn.bq"));
  ad::Value k = t.linear(other_feat, p.at("attn.wk"), p.at("attn.bk"));
  ad::Value v = t.linear(other_feat, p.at("attn.wv"), p.at("attn.bv"));
  const int d = cfg.head_dim();
  ad::Value message;
  for (int h = 0; h < cfg.heads; ++h) {
    ad::Value qh = t.slice_cols(q, h * d, d);
    ad::Value kh = t.slice_cols(k, h * d, d);
    ad::Value vh = t.slice_cols(v, h * d, d);
    ad::Value mh = scaled_dot_attention(t, qh, kh, vh).second;
    message = h == 0 ? mh : t.concat_cols(message, mh);
  }
  return message;
}

// Node update MLP: x + MLP([x || m]), three layers with ReLU and instance
// normalization; returns the residual delta.
inline ad::Value attention_update_delta(ad::Tape& t, const TapeParams& p, ad::Value x, ad::Value message) {
  ad::Value u = t.concat_cols(x, message);
  ad::Value h1 = t.relu(t.instance_norm(t.linear(u, p.at("attn.mlp.w1"), p.at("attn.mlp.b1"))));
  ad::Value h2 = t.relu(t.instance_norm(t.linear(h1, p.at("attn.mlp.w2"), p.at("attn.mlp.b2"))));
  return t.linear(h2, p.at("attn.mlp.w3"), p.at("attn.mlp.b3"));
}

// Interpolation of per-sample values back to all vertices. Inverse-distance
// over the 3 nearest samples by default; rows of sample vertices reduce to
// indicators so the update stays residual-exact there.
inline Eigen::SparseMatrix<double> build_interp_weights(const TriMesh& mesh, const SampleSet& samples,
                                                        bool nearest_only = false) {
  const int n = mesh.n_vertices();
  const int s = int(samples.indices.size());
  std::vector<Eigen::Triplet<double>> trips;
  const int use = nearest_only ? 1 : std::min(3, s);
  for (int v = 0; v < n; ++v) {
    // Distances to all samples; partial-select the closest `use`.
    std::vector<std::pair<double, int>> d(static_cast<std::size_t>(s));
    for (int j = 0; j < s; ++j)
      d[size_t(j)] = {(mesh.vertices.row(v) - mesh.vertices.row(samples.indices[size_t(j)])).norm(), j};
    std::partial_sort(d.begin(), d.begin() + use, d.end());
    if (d[0].first < 1e-12) {
      trips.emplace_back(v, d[0].second, 1.0);
      continue;
    }
    double wsum = 0;
    for (int j = 0; j < use; ++j) wsum += 1.0 / d[size_t(j)].first;
    for (int j = 0; j < use; ++j) trips.emplace_back(v, d[size_t(j)].second, (1.0 / d[size_t(j)].first) / wsum);
  }
  Eigen::SparseMatrix<double> w(n, s);
  w.setFromTriplets(trips.begin(), trips.end());
  return w;
}

struct RefinedFeatures {
  ad::Value on_x; // all vertices of shape X
  ad::Value on_y;
};

// Cross-attention refinement over FPS samples of both shapes; the per-sample
// residual updates are interpolated back and added to the dense features.
inline RefinedFeatures cross_attention_refine(ad::Tape& t, const TapeParams& p, const ToyNetConfig& cfg,
                                              ad::Value feat_x, const SampleSet& fps_x,
                                              const Eigen::SparseMatrix<double>& interp_x, ad::Value feat_y,
                                              const SampleSet& fps_y, const Eigen::SparseMatrix<double>& interp_y) {
  ad::Value fx = t.gather_rows(feat_x, fps_x.indices);
  ad::Value fy = t.gather_rows(feat_y, fps_y.indices);
  ad::Value mx = attention_message(t, p, cfg, fx, fy);
  ad::Value my = attention_message(t, p, cfg, fy, fx);
  ad::Value dx = attention_update_delta(t, p, fx, mx);
  ad::Value dy = attention_update_delta(t, p, fy, my);
  RefinedFeatures out;
  out.on_x = t.add(feat_x, t.sparse_apply(interp_x, dx));
  out.on_y = t.add(feat_y, t.sparse_apply(interp_y, dy));
  return out;
}

// Two-layer MLP with ReLU then a sigmoid, applied independently per point.
inline ad::Value overlap_head(ad::Tape& t, const TapeParams& p, ad::Value features) {
  ad::Value h = t.relu(t.linear(features, p.at("over.w1"), p.at("over.b1")));
  return t.sigmoid(t.linear(h, p.at("over.w2"), p.at("over.b2")));
}

// ---------------------------------------------------------------------------
// Losses.

inline ad::Value loss_spectral(ad::Tape& t, ad::Value c_opt, const Eigen::MatrixXd& c_gt) {
  return t.frob_sq(t.sub(c_opt, t.constant(c_gt)));
}

// Mean over matched pairs of -log softmax of scaled feature dot products;
// the denominator runs over the matched target set.
inline ad::Value loss_nce(ad::Tape& t, ad::Value feat_x, ad::Value feat_y,
                          const std::vector<std::pair<int, int>>& pairs, double tau) {
  if (pairs.empty()) throw TrainError("contrastive loss needs a nonempty pair set");
  std::vector<int> xi(pairs.size()), yi(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    xi[i] = pairs[i].first;
    yi[i] = pairs[i].second;
  }
  ad::Value fx = t.gather_rows(feat_x, xi);
  ad::Value fy = t.gather_rows(feat_y, yi);
  ad::Value logits = t.scale(t.matmul(fx, t.transpose(fy)), 1.0 / tau);
  ad::Value lse = t.logsumexp_rows(logits);
  std::vector<int> iota(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) iota[i] = int(i);
  ad::Value diag = t.pick(logits, iota, iota);
  return t.mean_all(t.sub(lse, diag));
}

// Binary cross entropy with probabilities clamped to [1e-7, 1 - 1e-7].
inline ad::Value binary_cross_entropy(ad::Tape& t, ad::Value prob, const Eigen::VectorXd& labels) {
  if (t.rows(prob) != labels.size() || t.cols(prob) != 1) throw TrainError("BCE shape mismatch");
  ad::Value p = t.clamp(prob, 1e-7, 1.0 - 1e-7);
  Eigen::MatrixXd y = labels;
  Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(labels.size(), 1);
  ad::Value pos = t.mul(t.constant(y), t.log_(p));
  ad::Value neg = t.mul(t.constant(ones - y), t.log_(t.sub(t.constant(ones), p)));
  return t.scale(t.mean_all(t.add(pos, neg)), -1.0);
}

inline ad::Value loss_overlap(ad::Tape& t, ad::Value prob_x, ad::Value prob_y, const Eigen::VectorXd& labels_x,
                              const Eigen::VectorXd& labels_y) {
  ad::Value bx = binary_cross_entropy(t, prob_x, labels_x);
  ad::Value by = binary_cross_entropy(t, prob_y, labels_y);
  return t.scale(t.add(bx, by), 0.5);
}

// Rank-truncated identity target: bijectivity + semi-orthogonality.
inline ad::Value loss_unsupervised(ad::Tape& t, ad::Value c12, ad::Value c21, int r, double alpha_bij = 1.0,
                                   double alpha_orth = 1.0) {
  Eigen::Index k2 = t.rows(c12);
  if (r < 1 || r > int(k2)) throw TrainError("rank target out of range");
  Eigen::MatrixXd ir = Eigen::MatrixXd::Zero(k2, k2);
  for (int i = 0; i < r; ++i) ir(i, i) = 1.0;
  ad::Value target = t.constant(ir);
  ad::Value bij = t.frob_sq(t.sub(t.matmul(c12, c21), target));
  ad::Value orth1 = t.frob_sq(t.sub(t.matmul(c12, t.transpose(c12)), target));
  ad::Value orth2 = t.frob_sq(t.sub(t.matmul(t.transpose(c21), c21), target));
  return t.add(t.scale(bij, alpha_bij), t.scale(t.add(orth1, orth2), alpha_orth));
}

// ---------------------------------------------------------------------------
// Optimizer.

struct AdamState {
  std::map<std::string, Eigen::MatrixXd> m, v;
  long t = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

inline void adam_step(ParamMap& params, const std::map<std::string, Eigen::MatrixXd>& grads, AdamState& state,
                      double lr) {
  state.t += 1;
  double bc1 = 1.0 - std::pow(state.beta1, double(state.t));
  double bc2 = 1.0 - std::pow(state.beta2, double(state.t));
  for (auto& [name, w] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) continue; // parameter unused in this graph
    const Eigen::MatrixXd& g = git->second;
    Eigen::MatrixXd& m = state.m.try_emplace(name, Eigen::MatrixXd::Zero(w.rows(), w.cols())).first->second;
    Eigen::MatrixXd& v = state.v.try_emplace(name, Eigen::MatrixXd::Zero(w.rows(), w.cols())).first->second;
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
    Eigen::MatrixXd mhat = m / bc1;
    Eigen::MatrixXd vhat = v / bc2;
    w -= lr * (mhat.array() / (vhat.array().sqrt() + state.eps)).matrix();
  }
}

// ---------------------------------------------------------------------------
// Training.

struct ToyTrainConfig {
  int steps = 200;
  int basis_k = 20;
  double solver_lambda = 100.0;
  double gamma = 0.5;
  MaskKind mask = MaskKind::Resolvent;
  bool augment = true;
  int nce_max_pairs = 128;
  std::uint64_t seed = 0;
};

struct HistoryRow {
  int step = 0;
  double loss_spec = 0, loss_nce = 0, loss_over = 0, total = 0;
};

struct TrainResult {
  ParamMap params;
  std::vector<HistoryRow> history;
};

inline void save_history_csv(std::ostream& out, const std::vector<HistoryRow>& history,
                             const io::ArtifactHeader* header = nullptr) {
  if (header) header->write(out, "training history");
  out << "step,loss_spec,loss_nce,loss_over,total\n";
  for (const auto& row : history)
    out << row.step << ',' << io::fmt(row.loss_spec) << ',' << io::fmt(row.loss_nce) << ',' << io::fmt(row.loss_over)
        << ',' << io::fmt(row.total) << '\n';
}

// Rotation around the up (z) axis, isotropic scaling in [0.9, 1.1], Gaussian
// position jitter with 0.01 standard deviation.
inline Eigen::MatrixXd augment_positions(const Eigen::MatrixXd& v, Rng& rng) {
  double angle = rng.uniform(0.0, 2.0 * M_PI);
  double s = rng.uniform(0.9, 1.1);
  double ca = std::cos(angle), sa = std::sin(angle);
  Eigen::Matrix3d rot;
  rot << ca, -sa, 0, sa, ca, 0, 0, 0, 1;
  Eigen::MatrixXd out = s * (v * rot.transpose());
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (int c = 0; c < 3; ++c) out(i, c) += rng.normal(0.0, 0.01);
  return out;
}

namespace toy_detail {

// Immutable per-pair precomputation shared across steps.
struct PairData {
  const SynthPair* pair = nullptr;
  SpectralBasis basis_part, basis_full;
  Eigen::MatrixXd proj_part, proj_full; // Phi' M, staged as constants
  Eigen::MatrixXd mask;                 // rows: part spectrum, cols: full spectrum
  Eigen::MatrixXd mask_rev;             // rows: full, cols: part (unsupervised)
  Eigen::MatrixXd c_gt;
  SampleSet fps_part, fps_full;
  Eigen::SparseMatrix<double> interp_part, interp_full;
  std::vector<std::pair<int, int>> nce_pairs;
  Eigen::VectorXd labels_part, labels_full;
  int slant_rank = 1;
};

inline PairData prepare_pair(const SynthPair& pair, const ToyNetConfig& net, const ToyTrainConfig& train,
                             const LossConfig& loss) {
  PairData d;
  d.pair = &pair;
  int k = train.basis_k;
  if (k > pair.part.n_vertices() || k > pair.full.n_vertices())
    throw TrainError("basis size exceeds mesh size in training pair");
  d.basis_part = compute_basis(pair.part, k);
  d.basis_full = compute_basis(pair.full, k);
  d.proj_part = d.basis_part.phi.transpose() * d.basis_part.mass.asDiagonal();
  d.proj_full = d.basis_full.phi.transpose() * d.basis_full.mass.asDiagonal();

  MaskSpec spec;
  spec.kind = train.mask;
  spec.gamma = train.gamma;
  spec.lambda_src = d.basis_full.lambda;
  spec.lambda_tgt = d.basis_part.lambda;
  d.mask = build_mask(spec);
  std::swap(spec.lambda_src, spec.lambda_tgt);
  d.mask_rev = build_mask(spec);
  d.slant_rank = estimate_rank(d.basis_part.lambda, d.basis_full.lambda).r;

  d.c_gt = gt_fmap(pair.gt, d.basis_full, d.basis_part).C;

  int fps_n_part = std::min(net.fps_count, pair.part.n_vertices());
  int fps_n_full = std::min(net.fps_count, pair.full.n_vertices());
  d.fps_part = farthest_point_sample(pair.part, fps_n_part, 0);
  d.fps_full = farthest_point_sample(pair.full, fps_n_full, 0);
  d.interp_part = build_interp_weights(pair.part, d.fps_part, net.nearest_interp);
  d.interp_full = build_interp_weights(pair.full, d.fps_full, net.nearest_interp);

  // Evenly strided subset of matched vertices keeps the contrastive loss
  // cheap and deterministic.
  std::vector<std::pair<int, int>> matched;
  for (int v = 0; v < pair.gt.n_src(); ++v)
    if (pair.gt.target_of[size_t(v)] >= 0) matched.emplace_back(v, pair.gt.target_of[size_t(v)]);
  if (!matched.empty()) {
    int take = std::min<int>(train.nce_max_pairs, int(matched.size()));
    for (int i = 0; i < take; ++i) d.nce_pairs.push_back(matched[size_t(i) * matched.size() / size_t(take)]);
  }

  d.labels_part = Eigen::VectorXd::Zero(pair.part.n_vertices());
  for (int v = 0; v < pair.gt.n_src(); ++v)
    if (pair.gt.target_of[size_t(v)] >= 0) d.labels_part(v) = 1.0;
  d.labels_full = Eigen::VectorXd::Zero(pair.full.n_vertices());
  for (int v = 0; v < pair.full.n_vertices(); ++v)
    if (pair.gt_overlap_on_full[size_t(v)]) d.labels_full(v) = 1.0;
  (void)loss;
  return d;
}

struct StepLosses {
  double spec = 0, nce = 0, over = 0, total = 0;
};

// One forward/backward pass on a single pair; fills `grads` with dLoss/dTheta.
inline StepLosses toy_step(const PairData& d, const ParamMap& params, const ToyNetConfig& net, const LossConfig& loss,
                           const ToyTrainConfig& train, const Eigen::MatrixXd& pos_part,
                           const Eigen::MatrixXd& pos_full, std::map<std::string, Eigen::MatrixXd>* grads,
                           ParamMap* refined_out = nullptr) {
  ad::Tape t;
  TapeParams tp = stage_params(t, params);
  ad::Value fx = toy_encoder(t, tp, t.constant(pos_part));
  ad::Value fy = toy_encoder(t, tp, t.constant(pos_full));

  ad::Value total;
  StepLosses out;
  if (!loss.unsupervised) {
    RefinedFeatures refined =
        cross_attention_refine(t, tp, net, fx, d.fps_part, d.interp_part, fy, d.fps_full, d.interp_full);
    ad::Value prob_part = overlap_head(t, tp, refined.on_x);
    ad::Value prob_full = overlap_head(t, tp, refined.on_y);

    ad::Value coeff_b = t.matmul(t.constant(d.proj_part), refined.on_x); // target side
    ad::Value coeff_a = t.matmul(t.constant(d.proj_full), refined.on_y); // source side
    ad::Value c = t.fmap_solve(coeff_a, coeff_b, d.mask, train.solver_lambda);

    ad::Value l_spec = loss_spectral(t, c, d.c_gt);
    ad::Value l_nce = loss_nce(t, refined.on_x, refined.on_y, d.nce_pairs, loss.tau);
    ad::Value l_over = loss_overlap(t, prob_part, prob_full, d.labels_part, d.labels_full);
    total = t.add(t.add(t.scale(l_spec, loss.lambda_spec), t.scale(l_nce, loss.lambda_nce)),
                  t.scale(l_over, loss.lambda_over));
    out.spec = t.val(l_spec)(0, 0);
    out.nce = t.val(l_nce)(0, 0);
    out.over = t.val(l_over)(0, 0);
    if (refined_out) {
      (*refined_out)["features_part"] = t.val(refined.on_x);
      (*refined_out)["features_full"] = t.val(refined.on_y);
    }
  } else {
    // Structural losses only; refinement and overlap modules are disabled.
    ad::Value coeff_part = t.matmul(t.constant(d.proj_part), fx);
    ad::Value coeff_full = t.matmul(t.constant(d.proj_full), fy);
    ad::Value c12 = t.fmap_solve(coeff_full, coeff_part, d.mask, train.solver_lambda);
    ad::Value c21 = t.fmap_solve(coeff_part, coeff_full, d.mask_rev, train.solver_lambda);
    total = loss_unsupervised(t, c12, c21, d.slant_rank, loss.alpha_bij, loss.alpha_orth);
    if (refined_out) {
      (*refined_out)["features_part"] = t.val(fx);
      (*refined_out)["features_full"] = t.val(fy);
    }
  }
  out.total = t.val(total)(0, 0);

  if (grads) {
    t.backward(total);
    for (const auto& [name, value] : tp.values) {
      Eigen::MatrixXd g = t.grad(value);
      if (g.size() > 0 && g.cwiseAbs().maxCoeff() > 0) (*grads)[name] = std::move(g);
    }
  }
  return out;
}

} // namespace toy_detail

// Deterministic given the seed: identical runs produce bitwise-identical
// histories and parameters. One pair per step, cycling through the dataset.
inline TrainResult train_toy(const std::vector<SynthPair>& pairs, const ToyNetConfig& net, const LossConfig& loss,
                             const ToyTrainConfig& train) {
  if (pairs.empty()) throw TrainError("empty training set");
  loss.validate();
  TrainResult result;
  result.params = init_toy_params(net);
  if (train.steps == 0) return result;

  std::vector<toy_detail::PairData> data;
  data.reserve(pairs.size());
  for (const auto& pair : pairs) data.push_back(toy_detail::prepare_pair(pair, net, train, loss));

  AdamState adam;
  Rng aug_root(train.seed, /*stream=*/0x617567);
  for (int step = 1; step <= train.steps; ++step) {
    const toy_detail::PairData& d = data[size_t((step - 1) % int(data.size()))];
    Rng step_rng = aug_root.fork(std::uint64_t(step));
    Eigen::MatrixXd pos_part = train.augment ? augment_positions(d.pair->part.vertices, step_rng)
                                             : d.pair->part.vertices;
    Eigen::MatrixXd pos_full = train.augment ? augment_positions(d.pair->full.vertices, step_rng)
                                             : d.pair->full.vertices;

    std::map<std::string, Eigen::MatrixXd> grads;
    toy_detail::StepLosses losses = toy_detail::toy_step(d, result.params, net, loss, train, pos_part, pos_full,
                                                         &grads);
    if (!std::isfinite(losses.total))
      throw TrainError("training diverged at step " + std::to_string(step) + " (total loss is not finite)");
    adam_step(result.params, grads, adam, net.learning_rate);
    result.history.push_back({step, losses.spec, losses.nce, losses.over, losses.total});
  }
  return result;
}

// Forward-only feature extraction with frozen parameters (used by matching).
inline std::pair<FeatureMatrix, FeatureMatrix> toy_extract_features(const TriMesh& part, const TriMesh& full,
                                                                    const ParamMap& params, const ToyNetConfig& net) {
  ad::Tape t;
  // Constants: no gradients needed for inference.
  ParamMap frozen = params;
  TapeParams tp;
  for (const auto& [name, mat] : frozen) tp.values[name] = t.constant(mat);

  ad::Value fx = toy_encoder(t, tp, t.constant(part.vertices));
  ad::Value fy = toy_encoder(t, tp, t.constant(full.vertices));
  SampleSet fps_x = farthest_point_sample(part, std::min(net.fps_count, part.n_vertices()), 0);
  SampleSet fps_y = farthest_point_sample(full, std::min(net.fps_count, full.n_vertices()), 0);
  Eigen::SparseMatrix<double> wx = build_interp_weights(part, fps_x, net.nearest_interp);
  Eigen::SparseMatrix<double> wy = build_interp_weights(full, fps_y, net.nearest_interp);
  RefinedFeatures refined = cross_attention_refine(t, tp, net, fx, fps_x, wx, fy, fps_y, wy);

  FeatureMatrix a, b;
  a.kind = b.kind = "learned-toy";
  a.values = t.val(refined.on_x);
  b.values = t.val(refined.on_y);
  return {a, b};
}

// ---------------------------------------------------------------------------
// Checkpoint: text container of named tensors with shapes.

inline void save_checkpoint(std::ostream& out, const ParamMap& params, const io::ArtifactHeader* header = nullptr) {
  if (header) header->write(out, "parameter checkpoint");
  out << "checkpoint_v1 " << params.size() << '\n';
  for (const auto& [name, mat] : params) {
    out << "tensor " << name << ' ' << mat.rows() << ' ' << mat.cols() << '\n';
    io::write_matrix(out, mat);
  }
}

inline void save_checkpoint(const std::string& path, const ParamMap& params,
                            const io::ArtifactHeader* header = nullptr) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  save_checkpoint(out, params, header);
}

inline ParamMap load_checkpoint(std::istream& in) {
  io::TokenReader tr(in);
  std::string magic = tr.expect("checkpoint magic");
  if (magic != "checkpoint_v1") throw IoError("not a checkpoint file");
  long count = tr.expect_int("tensor count");
  ParamMap params;
  for (long i = 0; i < count; ++i) {
    std::string kw = tr.expect("tensor keyword");
    if (kw != "tensor") throw IoError("malformed checkpoint entry");
    std::string name = tr.expect("tensor name");
    long rows = tr.expect_int("rows");
    long cols = tr.expect_int("cols");
    if (rows < 1 || cols < 1) throw IoError("bad tensor shape in checkpoint");
    params[name] = io::read_matrix(tr, rows, cols, "tensor entry");
  }
  return params;
}

inline ParamMap load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  return load_checkpoint(in);
}

// ---------------------------------------------------------------------------
// Feature-magnitude diagnostic: fraction of vertices whose feature norm is at
// or below eps, split by overlap membership, before vs after refinement.

struct FeatureMagnitudeReport {
  double inside_before = 0, inside_after = 0;
  double outside_before = 0, outside_after = 0;
  bool outside_defined = true;
  double eps = 0;
};

inline FeatureMagnitudeReport feature_magnitude_report(const Eigen::MatrixXd& before, const Eigen::MatrixXd& after,
                                                       const std::vector<char>& overlap, double eps = -1.0) {
  if (before.rows() != after.rows() || int(overlap.size()) != before.rows())
    throw TrainError("feature magnitude report inputs disagree on vertex count");
  Eigen::VectorXd nb = before.rowwise().norm();
  Eigen::VectorXd na = after.rowwise().norm();
  if (eps < 0) {
    std::vector<double> norms(nb.data(), nb.data() + nb.size());
    std::sort(norms.begin(), norms.end());
    double median = norms.size() % 2 ? norms[norms.size() / 2]
                                     : 0.5 * (norms[norms.size() / 2 - 1] + norms[norms.size() / 2]);
    eps = 0.05 * median;
  }
  FeatureMagnitudeReport rep;
  rep.eps = eps;
  int n_in = 0, n_out = 0;
  for (Eigen::Index v = 0; v < nb.size(); ++v) {
    if (overlap[size_t(v)]) {
      ++n_in;
      rep.inside_before += nb(v) <= eps;
      rep.inside_after += na(v) <= eps;
    } else {
      ++n_out;
      rep.outside_before += nb(v) <= eps;
      rep.outside_after += na(v) <= eps;
    }
  }
  if (n_in > 0) {
    rep.inside_before /= n_in;
    rep.inside_after /= n_in;
  }
  if (n_out > 0) {
    rep.outside_before /= n_out;
    rep.outside_after /= n_out;
  } else {
    rep.outside_defined = false;
    rep.outside_before = rep.outside_after = std::numeric_limits<double>::quiet_NaN();
  }
  return rep;
}

} // namespace partmap
