// Command-line front end: synthetic pair generation, basis precomputation,
// matching, refinement, evaluation, toy training, transport verification and
// the ablation harness. Every run is a pure function of its inputs and the
// seed; artifact files carry headers with the tool version, the resolved
// seed and content hashes of the inputs.

#include "partmap/ablate.hpp"
#include "partmap/eval.hpp"
#include "partmap/theory.hpp"
#include "partmap/toynet.hpp"
#include "partmap/version.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace partmap;

namespace {

io::ArtifactHeader make_header(std::uint64_t seed, bool has_seed = true) {
  io::ArtifactHeader h;
  h.version = kVersion;
  h.seed = seed;
  h.has_seed = has_seed;
  return h;
}

TriMesh load_base_shape(const std::string& spec) {
  if (spec.rfind("file:", 0) == 0) return load_mesh(spec.substr(5));
  return make_base_shape(spec);
}

// Basis cache convention: `<mesh path>.basis` unless overridden. A stale or
// foreign cache (hash mismatch) is an error.
SpectralBasis obtain_basis(const std::string& mesh_path, const TriMesh& mesh, int k, const std::string& cache_path,
                           std::uint64_t seed) {
  std::string path = cache_path.empty() ? mesh_path + ".basis" : cache_path;
  std::uint64_t mesh_hash = mesh_content_hash(mesh);
  if (fs::exists(path)) {
    SpectralBasis basis = load_basis(path);
    if (basis.mesh_hash != mesh_hash)
      throw IoError("basis cache " + path + " was computed for a different mesh");
    if (basis.k() < k) throw IoError("basis cache " + path + " has only k=" + std::to_string(basis.k()));
    return basis.k() == k ? basis : basis.truncated(k);
  }
  SpectralBasis basis = compute_basis(mesh, k);
  io::ArtifactHeader header = make_header(seed);
  header.input_hashes["mesh"] = io::hash_hex(mesh_hash);
  save_basis(path, basis, &header);
  return basis;
}

struct FeatureChoice {
  std::string spec = "wks";
};

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> make_features(const FeatureChoice& choice, const TriMesh& src_mesh,
                                                          const TriMesh& tgt_mesh, const SpectralBasis& basis_src,
                                                          const SpectralBasis& basis_tgt, const std::string& gt_path,
                                                          std::uint64_t seed) {
  const std::string& spec = choice.spec;
  if (spec == "wks")
    return {wave_kernel_signature(basis_src).values, wave_kernel_signature(basis_tgt).values};
  if (spec == "hks")
    return {heat_kernel_signature(basis_src, default_hks_times(basis_src)).values,
            heat_kernel_signature(basis_tgt, default_hks_times(basis_tgt)).values};
  if (spec == "perfect") {
    if (gt_path.empty()) throw IoError("--features perfect requires --gt with the ground-truth map");
    PointMap gt = load_map(gt_path, tgt_mesh.n_vertices());
    if (gt.n_src() != src_mesh.n_vertices()) throw IoError("ground-truth map does not match the source mesh");
    PerfectFeaturePair f = perfect_features(basis_tgt, gt, 128, seed);
    return {f.on_part.values, f.on_full.values};
  }
  if (spec.rfind("toy:", 0) == 0) {
    ParamMap params = load_checkpoint(spec.substr(4));
    ToyNetConfig net;
    auto [fs_, ft_] = toy_extract_features(src_mesh, tgt_mesh, params, net);
    return {fs_.values, ft_.values};
  }
  if (spec.rfind("file:", 0) == 0) {
    std::string paths = spec.substr(5);
    std::size_t comma = paths.find(',');
    if (comma == std::string::npos)
      throw IoError("--features file:SRC,TGT needs two comma-separated paths");
    return {load_features(paths.substr(0, comma)).values, load_features(paths.substr(comma + 1)).values};
  }
  throw IoError("unknown feature selector: " + spec);
}

MaskKind parse_mask(const std::string& name) {
  if (name == "laplacian") return MaskKind::Laplacian;
  if (name == "slanted") return MaskKind::Slanted;
  if (name == "resolvent") return MaskKind::Resolvent;
  throw IoError("unknown mask kind: " + name);
}

void write_resolved_config(const std::string& path, const toml::Table& table, std::uint64_t seed) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write resolved config: " + path);
  io::ArtifactHeader header = make_header(seed);
  header.write(out, "resolved run configuration");
  toml::write(out, table);
}

// ---------------------------------------------------------------------------

int cmd_gen(const std::string& kind, const std::string& base_spec, double partiality, double overlap, int holes_seeds,
            std::uint64_t seed, int count, const std::string& out_dir) {
  TriMesh base = load_base_shape(base_spec);
  fs::create_directories(out_dir);
  Rng rng(seed, 0x67656e);
  for (int i = 0; i < count; ++i) {
    std::uint64_t pair_seed = rng.next_u64();
    SynthPair pair;
    if (kind == "cut")
      pair = gen_cut(base, pair_seed, partiality);
    else if (kind == "holes")
      pair = gen_holes(base, pair_seed, holes_seeds, partiality);
    else if (kind == "p2p")
      pair = gen_p2p(base, pair_seed, overlap);
    else
      throw IoError("unknown pair kind: " + kind);
    char name[32];
    std::snprintf(name, sizeof(name), "pair_%04d", i);
    io::ArtifactHeader header = make_header(pair.seed);
    header.input_hashes["base"] = io::hash_hex(mesh_content_hash(base));
    save_pair(out_dir + "/" + name, pair, &header);
    std::cout << name << " kind=" << pair.kind << " n_part=" << pair.part.n_vertices()
              << " n_full=" << pair.full.n_vertices() << " partiality=" << io::fmt(pair.partiality)
              << " overlap=" << io::fmt(pair.overlap_fraction) << "\n";
  }
  toml::Table resolved;
  resolved.set_string("gen.kind", kind);
  resolved.set_string("gen.base", base_spec);
  resolved.set_double("gen.partiality", partiality);
  resolved.set_double("gen.overlap", overlap);
  resolved.set_int("gen.holes_seeds", holes_seeds);
  resolved.set_int("gen.count", count);
  resolved.set_int("gen.seed", std::int64_t(seed));
  write_resolved_config(out_dir + "/gen.config.toml", resolved, seed);
  return 0;
}

int cmd_precompute(const std::string& mesh_path, int k, const std::string& out_path, const std::string& backend) {
  TriMesh mesh = load_mesh(mesh_path);
  EigBackend be = EigBackend::Auto;
  if (backend == "dense")
    be = EigBackend::Dense;
  else if (backend == "lanczos")
    be = EigBackend::Lanczos;
  else if (backend != "auto")
    throw IoError("unknown eigensolver backend: " + backend);
  BasisQuality quality;
  SpectralBasis basis = compute_basis(mesh, k, be, &quality);
  io::ArtifactHeader header = make_header(0, false);
  header.input_hashes["mesh"] = io::hash_hex(basis.mesh_hash);
  save_basis(out_path.empty() ? mesh_path + ".basis" : out_path, basis, &header);
  std::cout << "basis n=" << basis.n() << " k=" << basis.k() << " residual=" << io::fmt(quality.max_pair_residual)
            << " orth=" << io::fmt(quality.max_orth_deviation) << "\n";
  return 0;
}

int cmd_match(const std::string& src_path, const std::string& tgt_path, const FeatureChoice& features,
              const std::string& mask_name, double gamma, double lambda, int k, const std::string& gt_path,
              std::uint64_t seed, const std::string& out_prefix, const std::string& src_cache,
              const std::string& tgt_cache) {
  TriMesh src = load_mesh(src_path);
  TriMesh tgt = load_mesh(tgt_path);
  SpectralBasis basis_src = obtain_basis(src_path, src, k, src_cache, seed);
  SpectralBasis basis_tgt = obtain_basis(tgt_path, tgt, k, tgt_cache, seed);

  auto [feat_src, feat_tgt] = make_features(features, src, tgt, basis_src, basis_tgt, gt_path, seed);

  // The functional map runs against the point map: source basis on the
  // matching target shape, target basis on the matching source shape.
  MaskSpec spec;
  spec.kind = parse_mask(mask_name);
  spec.gamma = gamma;
  spec.lambda_src = basis_tgt.lambda;
  spec.lambda_tgt = basis_src.lambda;
  Eigen::MatrixXd mask = build_mask(spec);

  CoeffMatrix a = project(basis_tgt, feat_tgt);
  CoeffMatrix b = project(basis_src, feat_src);
  FmapSolveInfo info;
  FunctionalMap fmap = solve_fmap(a, b, mask, lambda, &info);
  PointMap p2p = fmap_to_p2p(fmap, basis_tgt, basis_src);
  OverlapEstimate overlap = estimate_overlap_axiomatic(p2p, feat_src, feat_tgt);

  io::ArtifactHeader header = make_header(seed);
  header.input_hashes["src_mesh"] = io::hash_hex(mesh_content_hash(src));
  header.input_hashes["tgt_mesh"] = io::hash_hex(mesh_content_hash(tgt));
  save_fmap(out_prefix + ".fmap", fmap, &header);
  save_map(out_prefix + ".map", p2p, &header);
  save_overlap(out_prefix + ".overlap", overlap.on_tgt, &header);
  save_overlap(out_prefix + ".src.overlap", overlap.on_src, &header);

  toml::Table resolved;
  resolved.set_string("match.src", src_path);
  resolved.set_string("match.tgt", tgt_path);
  resolved.set_string("match.src_cache", src_cache.empty() ? src_path + ".basis" : src_cache);
  resolved.set_string("match.tgt_cache", tgt_cache.empty() ? tgt_path + ".basis" : tgt_cache);
  resolved.set_string("match.features", features.spec);
  resolved.set_string("match.mask", mask_name);
  resolved.set_double("match.gamma", gamma);
  resolved.set_double("match.lambda", lambda);
  resolved.set_int("match.k", k);
  resolved.set_string("match.gt", gt_path);
  resolved.set_int("match.seed", std::int64_t(seed));
  write_resolved_config(out_prefix + ".config.toml", resolved, seed);

  if (info.tikhonov_applied) std::cout << "note: Tikhonov floor applied to a singular normal system\n";
  std::cout << "wrote " << out_prefix << ".fmap/.map/.overlap (k_tgt=" << fmap.k_tgt() << " k_src=" << fmap.k_src()
            << ")\n";
  return 0;
}

int cmd_refine(const std::string& prefix, int steps, int k_end) {
  toml::Table cfg = toml::parse_file(prefix + ".config.toml");
  std::string src_path = cfg.at("match.src").as_string();
  std::string tgt_path = cfg.at("match.tgt").as_string();
  std::uint64_t seed = std::uint64_t(cfg.get_int("match.seed", 0));

  TriMesh src = load_mesh(src_path);
  TriMesh tgt = load_mesh(tgt_path);
  FunctionalMap fmap = load_fmap(prefix + ".fmap");
  int k_start = fmap.k_src();

  SpectralBasis basis_src = obtain_basis(src_path, src, k_end, cfg.get_string("match.src_cache", ""), seed);
  SpectralBasis basis_tgt = obtain_basis(tgt_path, tgt, k_end, cfg.get_string("match.tgt_cache", ""), seed);

  FunctionalMap refined = partial_zoomout(fmap, basis_tgt, basis_src, steps, k_start, k_end);
  PointMap p2p = fmap_to_p2p(refined, basis_tgt.truncated(refined.k_src()), basis_src.truncated(refined.k_tgt()));

  io::ArtifactHeader header = make_header(seed);
  header.input_hashes["src_mesh"] = io::hash_hex(mesh_content_hash(src));
  header.input_hashes["tgt_mesh"] = io::hash_hex(mesh_content_hash(tgt));
  save_fmap(prefix + ".fmap", refined, &header);
  save_map(prefix + ".map", p2p, &header);
  std::cout << "refined to k_tgt=" << refined.k_tgt() << " k_src=" << refined.k_src() << " in " << steps
            << " steps\n";
  return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path, const std::string& tgt_mesh_path,
             const std::string& out_csv, bool paper_units) {
  TriMesh tgt = load_mesh(tgt_mesh_path);
  PointMap gt = load_map(gt_path, tgt.n_vertices());
  PointMap pred = load_map(pred_path, tgt.n_vertices());
  ErrorCurve curve = princeton_curve(pred, gt, tgt, default_thresholds());
  if (!out_csv.empty()) {
    std::ofstream out(out_csv);
    if (!out) throw IoError("cannot write curve: " + out_csv);
    io::ArtifactHeader header = make_header(0, false);
    header.input_hashes["pred"] = io::hash_hex(io::file_hash(pred_path));
    header.input_hashes["gt"] = io::hash_hex(io::file_hash(gt_path));
    header.input_hashes["tgt_mesh"] = io::hash_hex(mesh_content_hash(tgt));
    save_curve(out, curve, &header);
  }
  double scale = paper_units ? 100.0 : 1.0;
  std::cout << "mean_error " << io::fmt(scale * curve.mean_error) << "\n";
  std::cout << "evaluated " << curve.n_evaluated << " unmatched_pred " << curve.n_unmatched_pred << "\n";
  return 0;
}

std::vector<SynthPair> load_dataset_dir(const std::string& dir) {
  std::vector<SynthPair> pairs;
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_directory() && entry.path().filename().string().rfind("pair_", 0) == 0)
      names.push_back(entry.path().string());
  std::sort(names.begin(), names.end());
  for (const auto& name : names) pairs.push_back(load_pair(name));
  if (pairs.empty()) throw IoError("no pair_* directories under " + dir);
  return pairs;
}

int cmd_train_toy(const std::string& config_path, const std::string& out_ckpt) {
  toml::Table cfg = toml::parse_file(config_path);
  cfg.require_known_keys({
      "data.dir", "data.base", "data.kind", "data.count", "data.partiality", "data.seed",
      "net.hidden_width", "net.feature_dim", "net.heads", "net.fps_count", "net.learning_rate", "net.seed",
      "net.nearest_interp",
      "loss.lambda_spec", "loss.lambda_nce", "loss.lambda_over", "loss.tau", "loss.alpha_bij", "loss.alpha_orth",
      "loss.unsupervised",
      "train.steps", "train.basis_k", "train.lambda", "train.gamma", "train.mask", "train.augment", "train.seed",
      "train.nce_max_pairs",
  });

  std::vector<SynthPair> pairs;
  if (cfg.has("data.dir")) {
    pairs = load_dataset_dir(cfg.at("data.dir").as_string());
  } else {
    TriMesh base = load_base_shape(cfg.get_string("data.base", "icosphere"));
    int count = int(cfg.get_int("data.count", 1));
    double partiality = cfg.get_double("data.partiality", 0.4);
    Rng rng(std::uint64_t(cfg.get_int("data.seed", 1)), 0x64617461);
    std::string kind = cfg.get_string("data.kind", "cut");
    for (int i = 0; i < count; ++i) {
      std::uint64_t s = rng.next_u64();
      pairs.push_back(kind == "holes" ? gen_holes(base, s, 4, partiality) : gen_cut(base, s, partiality));
    }
  }

  ToyNetConfig net;
  net.hidden_width = int(cfg.get_int("net.hidden_width", net.hidden_width));
  net.feature_dim = int(cfg.get_int("net.feature_dim", net.feature_dim));
  net.heads = int(cfg.get_int("net.heads", net.heads));
  net.fps_count = int(cfg.get_int("net.fps_count", net.fps_count));
  net.learning_rate = cfg.get_double("net.learning_rate", net.learning_rate);
  net.seed = std::uint64_t(cfg.get_int("net.seed", 0));
  net.nearest_interp = cfg.get_bool("net.nearest_interp", false);

  LossConfig loss;
  loss.lambda_spec = cfg.get_double("loss.lambda_spec", 1.0);
  loss.lambda_nce = cfg.get_double("loss.lambda_nce", 1.0);
  loss.lambda_over = cfg.get_double("loss.lambda_over", 1.0);
  loss.tau = cfg.get_double("loss.tau", 0.07);
  loss.alpha_bij = cfg.get_double("loss.alpha_bij", 1.0);
  loss.alpha_orth = cfg.get_double("loss.alpha_orth", 1.0);
  loss.unsupervised = cfg.get_bool("loss.unsupervised", false);

  ToyTrainConfig train_cfg;
  train_cfg.steps = int(cfg.get_int("train.steps", 200));
  train_cfg.basis_k = int(cfg.get_int("train.basis_k", 20));
  train_cfg.solver_lambda = cfg.get_double("train.lambda", 100.0);
  train_cfg.gamma = cfg.get_double("train.gamma", 0.5);
  train_cfg.mask = parse_mask(cfg.get_string("train.mask", "resolvent"));
  train_cfg.augment = cfg.get_bool("train.augment", true);
  train_cfg.seed = std::uint64_t(cfg.get_int("train.seed", 0));
  train_cfg.nce_max_pairs = int(cfg.get_int("train.nce_max_pairs", 128));

  TrainResult result = train_toy(pairs, net, loss, train_cfg);

  io::ArtifactHeader header = make_header(train_cfg.seed);
  header.input_hashes["config"] = io::hash_hex(io::file_hash(config_path));
  save_checkpoint(out_ckpt, result.params, &header);
  {
    std::ofstream out(out_ckpt + ".history.csv");
    if (!out) throw IoError("cannot write history CSV");
    save_history_csv(out, result.history, &header);
  }
  toml::Table resolved = cfg;
  write_resolved_config(out_ckpt + ".config.toml", resolved, train_cfg.seed);
  if (!result.history.empty())
    std::cout << "final total loss " << io::fmt(result.history.back().total) << " after "
              << result.history.size() << " steps\n";
  std::cout << "wrote " << out_ckpt << " and " << out_ckpt << ".history.csv\n";
  return 0;
}

int cmd_verify_theory(std::uint64_t seed, int k) {
  TriMesh ico = make_icosphere(3, 1.0);
  SynthPair cut = gen_cut(ico, seed, 0.4);
  TransportReport p2f = check_partial_to_full(cut.full, cut.part, cut.gt, 80, seed, k);
  SynthPair p2p_pair = gen_p2p(ico, seed + 1, 0.5);
  TransportReport p2p = check_partial_to_partial(p2p_pair.part, p2p_pair.full, p2p_pair.gt, 80, seed, k);

  bool ok1 = p2f.rho <= 0.05;
  bool ok2 = p2p.rho <= 0.05 && p2p.rho_noproj >= 5.0 * p2p.rho;
  std::cout << "check                    rho        rho_noproj  control    verdict\n";
  std::cout << "partial-to-full          " << std::left << std::setw(11) << io::fmt(p2f.rho) << std::setw(12) << "-"
            << std::setw(11) << io::fmt(p2f.rho_control) << (ok1 ? "PASS" : "FAIL") << "\n";
  std::cout << "partial-to-partial       " << std::setw(11) << io::fmt(p2p.rho) << std::setw(12)
            << io::fmt(p2p.rho_noproj) << std::setw(11) << "-" << (ok2 ? "PASS" : "FAIL") << "\n";
  return ok1 && ok2 ? 0 : 1;
}

int cmd_ablate(const std::string& config_path, const std::string& out_csv) {
  toml::Table cfg = toml::parse_file(config_path);
  cfg.require_known_keys({"ablate.bases", "ablate.pairs_per_base", "ablate.partiality_lo", "ablate.partiality_hi",
                          "ablate.seed", "ablate.k", "ablate.lambda", "ablate.gamma", "ablate.masks", "ablate.losses",
                          "ablate.train_steps", "ablate.train_k", "ablate.fps_count", "ablate.paper_units"});
  AblationConfig ab;
  if (cfg.has("ablate.bases")) {
    ab.bases.clear();
    for (const auto& s : std::get<std::vector<std::string>>(cfg.at("ablate.bases").v)) ab.bases.push_back(s);
  }
  ab.pairs_per_base = int(cfg.get_int("ablate.pairs_per_base", ab.pairs_per_base));
  ab.partiality_lo = cfg.get_double("ablate.partiality_lo", ab.partiality_lo);
  ab.partiality_hi = cfg.get_double("ablate.partiality_hi", ab.partiality_hi);
  ab.seed = std::uint64_t(cfg.get_int("ablate.seed", 1));
  ab.k = int(cfg.get_int("ablate.k", ab.k));
  ab.lambda = cfg.get_double("ablate.lambda", ab.lambda);
  ab.gamma = cfg.get_double("ablate.gamma", ab.gamma);
  ab.run_masks = cfg.get_bool("ablate.masks", true);
  ab.run_losses = cfg.get_bool("ablate.losses", true);
  ab.train_steps = int(cfg.get_int("ablate.train_steps", ab.train_steps));
  ab.train_k = int(cfg.get_int("ablate.train_k", ab.train_k));
  ab.fps_count = int(cfg.get_int("ablate.fps_count", ab.fps_count));
  ab.paper_unit_scale = cfg.get_bool("ablate.paper_units", false) ? 100.0 : 1.0;

  AblationReport report = ablation_harness(ab);
  if (!out_csv.empty()) {
    std::ofstream out(out_csv);
    if (!out) throw IoError("cannot write ablation report: " + out_csv);
    io::ArtifactHeader header = make_header(ab.seed);
    header.input_hashes["config"] = io::hash_hex(io::file_hash(config_path));
    save_ablation_csv(out, report, &header);
  }
  print_ablation_table(std::cout, report);
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"partial shape correspondence via masked spectral maps"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  // gen
  auto* gen = app.add_subcommand("gen", "generate synthetic partial pairs with ground truth");
  std::string gen_kind = "cut", gen_base = "icosphere", gen_out;
  double gen_partiality = 0.4, gen_overlap = 0.5;
  int gen_holes_seeds = 4, gen_count = 1;
  std::uint64_t gen_seed = 1;
  gen->add_option("--kind", gen_kind, "cut|holes|p2p")->capture_default_str();
  gen->add_option("--base", gen_base, "icosphere|capsule|quadruped|file:PATH")->capture_default_str();
  gen->add_option("--partiality", gen_partiality, "target removed-area fraction")->capture_default_str();
  gen->add_option("--overlap", gen_overlap, "target overlap fraction (p2p)")->capture_default_str();
  gen->add_option("--holes-seeds", gen_holes_seeds, "erosion seed count (holes)")->capture_default_str();
  gen->add_option("--seed", gen_seed, "generator seed")->capture_default_str();
  gen->add_option("--count", gen_count, "number of pairs")->capture_default_str();
  gen->add_option("--out", gen_out, "output dataset directory")->required();

  // precompute
  auto* pre = app.add_subcommand("precompute", "compute and cache a spectral basis");
  std::string pre_mesh, pre_out, pre_backend = "auto";
  int pre_k = 60;
  pre->add_option("mesh", pre_mesh, "mesh file (OFF or PLY)")->required();
  pre->add_option("--k", pre_k, "basis size")->capture_default_str();
  pre->add_option("--out", pre_out, "cache path (default MESH.basis)");
  pre->add_option("--backend", pre_backend, "auto|dense|lanczos")->capture_default_str();

  // match
  auto* match = app.add_subcommand("match", "match a source shape into a target shape");
  std::string match_src, match_tgt, match_mask = "resolvent", match_gt, match_out, match_src_cache, match_tgt_cache;
  FeatureChoice match_features;
  double match_gamma = 0.5, match_lambda = 100.0;
  int match_k = 60;
  std::uint64_t match_seed = 1;
  match->add_option("src", match_src, "source mesh (the shape being mapped)")->required();
  match->add_option("tgt", match_tgt, "target mesh")->required();
  match->add_option("--features", match_features.spec, "wks|hks|perfect|toy:CKPT|file:SRC,TGT")->capture_default_str();
  match->add_option("--mask", match_mask, "laplacian|slanted|resolvent")->capture_default_str();
  match->add_option("--gamma", match_gamma, "resolvent exponent")->capture_default_str();
  match->add_option("--lambda", match_lambda, "mask penalty weight")->capture_default_str();
  match->add_option("--k", match_k, "basis size")->capture_default_str();
  match->add_option("--gt", match_gt, "ground-truth map (required for perfect features)");
  match->add_option("--seed", match_seed, "seed for stochastic features")->capture_default_str();
  match->add_option("--out", match_out, "output prefix")->required();
  match->add_option("--src-cache", match_src_cache, "basis cache for src");
  match->add_option("--tgt-cache", match_tgt_cache, "basis cache for tgt");

  // refine
  auto* refine = app.add_subcommand("refine", "spectral upsampling refinement of a match prefix");
  std::string refine_prefix;
  int refine_steps = 8, refine_k_end = 60;
  refine->add_option("prefix", refine_prefix, "match output prefix")->required();
  refine->add_option("--steps", refine_steps, "upsampling rounds")->capture_default_str();
  refine->add_option("--k-end", refine_k_end, "final basis size")->capture_default_str();

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a predicted map against ground truth");
  std::string eval_pred, eval_gt, eval_mesh, eval_out;
  bool eval_paper_units = false;
  eval->add_option("pred", eval_pred, "predicted map file")->required();
  eval->add_option("gt", eval_gt, "ground-truth map file")->required();
  eval->add_option("tgt", eval_mesh, "target mesh file")->required();
  eval->add_option("--out", eval_out, "curve CSV output");
  eval->add_flag("--paper-units", eval_paper_units, "report mean error x100");

  // train-toy
  auto* train = app.add_subcommand("train-toy", "train the toy learned pipeline");
  std::string train_config, train_out;
  train->add_option("config", train_config, "TOML configuration")->required();
  train->add_option("--out", train_out, "checkpoint output path")->required();

  // verify-theory
  auto* verify = app.add_subcommand("verify-theory", "run the feature-transport checks");
  std::uint64_t verify_seed = 1;
  int verify_k = 60;
  verify->add_option("--seed", verify_seed, "seed")->capture_default_str();
  verify->add_option("--k", verify_k, "analysis basis size")->capture_default_str();

  // ablate
  auto* ablate = app.add_subcommand("ablate", "mask and loss ablation tables");
  std::string ablate_config, ablate_out;
  ablate->add_option("config", ablate_config, "TOML configuration")->required();
  ablate->add_option("--out", ablate_out, "report CSV output");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return cmd_gen(gen_kind, gen_base, gen_partiality, gen_overlap, gen_holes_seeds, gen_seed, gen_count, gen_out);
    if (pre->parsed()) return cmd_precompute(pre_mesh, pre_k, pre_out, pre_backend);
    if (match->parsed())
      return cmd_match(match_src, match_tgt, match_features, match_mask, match_gamma, match_lambda, match_k, match_gt,
                       match_seed, match_out, match_src_cache, match_tgt_cache);
    if (refine->parsed()) return cmd_refine(refine_prefix, refine_steps, refine_k_end);
    if (eval->parsed()) return cmd_eval(eval_pred, eval_gt, eval_mesh, eval_out, eval_paper_units);
    if (train->parsed()) return cmd_train_toy(train_config, train_out);
    if (verify->parsed()) return cmd_verify_theory(verify_seed, verify_k);
    if (ablate->parsed()) return cmd_ablate(ablate_config, ablate_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
