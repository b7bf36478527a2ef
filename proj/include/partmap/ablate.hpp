#pragma once

// Ablation harness: sweeps the mask family on the axiomatic matching pipeline
// and the loss-term knockouts on the toy trainer, over the synthetic dataset.
// Reported numbers are mean geodesic errors in normalized units (optionally
// scaled by 100); the interesting output is the ordering between rows.

#include "partmap/descriptors.hpp"
#include "partmap/eval.hpp"
#include "partmap/refine.hpp"
#include "partmap/synth.hpp"
#include "partmap/toynet.hpp"

#include <iomanip>
#include <string>
#include <vector>

namespace partmap {

struct MatchOptions {
  MaskKind mask = MaskKind::Resolvent;
  double gamma = 0.5;
  double lambda = 100.0;
  int k = 60;
};

// Axiomatic matching of one synthetic pair with the given features on
// (part, full); returns the mean normalized geodesic error.
inline ErrorCurve match_pair(const SynthPair& pair, const SpectralBasis& basis_part, const SpectralBasis& basis_full,
                             const Eigen::MatrixXd& feat_part, const Eigen::MatrixXd& feat_full,
                             const MatchOptions& opt, FunctionalMap* fmap_out = nullptr,
                             PointMap* p2p_out = nullptr) {
  MaskSpec spec;
  spec.kind = opt.mask;
  spec.gamma = opt.gamma;
  spec.lambda_src = basis_full.lambda;
  spec.lambda_tgt = basis_part.lambda;
  Eigen::MatrixXd mask = build_mask(spec);

  CoeffMatrix a = project(basis_full, feat_full);
  CoeffMatrix b = project(basis_part, feat_part);
  FunctionalMap c = solve_fmap(a, b, mask, opt.lambda);
  PointMap p2p = fmap_to_p2p(c, basis_full, basis_part);
  if (fmap_out) *fmap_out = c;
  if (p2p_out) *p2p_out = p2p;
  return princeton_curve(p2p, pair.gt, pair.full, default_thresholds());
}

struct AblationRow {
  std::string name;
  double mean_error = 0;
  bool expected_worst = false;
};

struct AblationReport {
  std::vector<AblationRow> mask_rows; // laplacian, slanted, resolvent
  std::vector<AblationRow> loss_rows; // no_spec, no_nce, no_over, total
  bool resolvent_best_or_close = false;
  bool full_loss_beats_no_nce = false;
  bool no_spec_worst = false;
};

struct AblationConfig {
  std::vector<std::string> bases = {"icosphere", "capsule"};
  int pairs_per_base = 2;
  double partiality_lo = 0.2, partiality_hi = 0.5;
  std::uint64_t seed = 1;
  int k = 40;
  double lambda = 100.0;
  double gamma = 0.5;
  bool run_masks = true;
  bool run_losses = true;
  // Toy-training leg.
  int train_steps = 160;
  int train_k = 20;
  int fps_count = 96;
  double paper_unit_scale = 1.0; // set 100 for percentage-style tables
};

inline std::vector<SynthPair> make_ablation_pairs(const AblationConfig& cfg) {
  std::vector<SynthPair> pairs;
  Rng rng(cfg.seed, /*stream=*/0x61626c);
  for (const auto& base_name : cfg.bases) {
    TriMesh base = make_base_shape(base_name);
    for (int i = 0; i < cfg.pairs_per_base; ++i) {
      double part = cfg.partiality_lo + (cfg.partiality_hi - cfg.partiality_lo) * rng.uniform();
      pairs.push_back(gen_cut(base, rng.next_u64(), part));
    }
  }
  return pairs;
}

inline AblationReport ablation_harness(const AblationConfig& cfg) {
  AblationReport report;
  std::vector<SynthPair> pairs = make_ablation_pairs(cfg);

  if (cfg.run_masks) {
    std::vector<SpectralBasis> bp, bf;
    std::vector<FeatureMatrix> fp, ff;
    for (const auto& pair : pairs) {
      bp.push_back(compute_basis(pair.part, cfg.k));
      bf.push_back(compute_basis(pair.full, cfg.k));
      fp.push_back(wave_kernel_signature(bp.back()));
      ff.push_back(wave_kernel_signature(bf.back()));
    }
    for (MaskKind kind : {MaskKind::Laplacian, MaskKind::Slanted, MaskKind::Resolvent}) {
      MatchOptions opt;
      opt.mask = kind;
      opt.gamma = cfg.gamma;
      opt.lambda = cfg.lambda;
      opt.k = cfg.k;
      double sum = 0;
      for (std::size_t i = 0; i < pairs.size(); ++i)
        sum += match_pair(pairs[i], bp[i], bf[i], fp[i].values, ff[i].values, opt).mean_error;
      AblationRow row;
      row.name = kind == MaskKind::Laplacian ? "laplacian" : kind == MaskKind::Slanted ? "slanted" : "resolvent";
      row.mean_error = cfg.paper_unit_scale * sum / double(pairs.size());
      report.mask_rows.push_back(row);
    }
    double lap = report.mask_rows[0].mean_error;
    double sla = report.mask_rows[1].mean_error;
    double res = report.mask_rows[2].mean_error;
    report.resolvent_best_or_close = res <= 1.05 * lap && res <= 1.05 * sla;
  }

  if (cfg.run_losses) {
    struct Knockout {
      std::string name;
      double ls, ln, lo;
      bool expected_worst;
    };
    std::vector<Knockout> knockouts = {
        {"no_spec", 0, 1, 1, true}, {"no_nce", 1, 0, 1, false}, {"no_over", 1, 1, 0, false}, {"total", 1, 1, 1, false}};

    ToyNetConfig net;
    net.seed = cfg.seed;
    net.fps_count = cfg.fps_count;
    ToyTrainConfig train_cfg;
    train_cfg.steps = cfg.train_steps;
    train_cfg.basis_k = cfg.train_k;
    train_cfg.seed = cfg.seed;

    std::vector<SpectralBasis> bp, bf;
    for (const auto& pair : pairs) {
      bp.push_back(compute_basis(pair.part, cfg.train_k));
      bf.push_back(compute_basis(pair.full, cfg.train_k));
    }

    for (const auto& ko : knockouts) {
      LossConfig loss;
      loss.lambda_spec = ko.ls;
      loss.lambda_nce = ko.ln;
      loss.lambda_over = ko.lo;
      TrainResult tr = train_toy(pairs, net, loss, train_cfg);

      MatchOptions opt;
      opt.lambda = cfg.lambda;
      opt.gamma = cfg.gamma;
      opt.k = cfg.train_k;
      double sum = 0;
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        auto [feat_part, feat_full] = toy_extract_features(pairs[i].part, pairs[i].full, tr.params, net);
        sum += match_pair(pairs[i], bp[i], bf[i], feat_part.values, feat_full.values, opt).mean_error;
      }
      AblationRow row;
      row.name = ko.name;
      row.mean_error = cfg.paper_unit_scale * sum / double(pairs.size());
      row.expected_worst = ko.expected_worst;
      report.loss_rows.push_back(row);
    }
    double no_spec = report.loss_rows[0].mean_error;
    double no_nce = report.loss_rows[1].mean_error;
    double no_over = report.loss_rows[2].mean_error;
    double total = report.loss_rows[3].mean_error;
    report.full_loss_beats_no_nce = total <= no_nce;
    report.no_spec_worst = no_spec >= no_nce && no_spec >= no_over && no_spec >= total;
  }
  return report;
}

inline void save_ablation_csv(std::ostream& out, const AblationReport& report,
                              const io::ArtifactHeader* header = nullptr) {
  if (header) header->write(out, "ablation report");
  out << "table,name,mean_error,expected_worst\n";
  for (const auto& row : report.mask_rows)
    out << "mask," << row.name << ',' << io::fmt(row.mean_error) << ",0\n";
  for (const auto& row : report.loss_rows)
    out << "loss," << row.name << ',' << io::fmt(row.mean_error) << ',' << (row.expected_worst ? 1 : 0) << '\n';
}

inline void print_ablation_table(std::ostream& out, const AblationReport& report) {
  auto table = [&](const char* title, const std::vector<AblationRow>& rows) {
    if (rows.empty()) return;
    out << title << '\n';
    for (const auto& row : rows) {
      out << "  " << std::left << std::setw(12) << row.name << std::right << std::setw(12) << std::fixed
          << std::setprecision(4) << row.mean_error;
      if (row.expected_worst) out << "  (expected worst)";
      out << '\n';
    }
  };
  table("mask ablation (mean error)", report.mask_rows);
  table("loss ablation (mean error)", report.loss_rows);
}

} // namespace partmap
