#include "cli.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <CLI11.hpp>
#include <json.hpp>

#include "mvad/config.hpp"
#include "mvad/dataset.hpp"
#include "mvad/digest.hpp"
#include "mvad/errors.hpp"
#include "mvad/scoring.hpp"
#include "mvad/simd/kernels.hpp"
#include "mvad/synthetic.hpp"
#include "mvad/trainer.hpp"

#ifndef MVAD_GIT_DESCRIBE
#define MVAD_GIT_DESCRIBE "unknown"
#endif

namespace mvad::cli {
namespace {

namespace fs = std::filesystem;

// Shortest round-trip decimal, always with a decimal point or exponent.
std::string show(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".en") == std::string::npos) s += ".0";
  return s;
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfigError:
      return kExitUsage;
    case ErrorKind::kNumericDivergence:
      return kExitDivergence;
    case ErrorKind::kDegenerateInput:
    case ErrorKind::kDimensionError:
    case ErrorKind::kZeroVector:
    case ErrorKind::kEmptyInput:
    case ErrorKind::kManifestError:
    case ErrorKind::kFormatError:
    case ErrorKind::kInsufficientData:
    case ErrorKind::kBatchTooSmall:
    case ErrorKind::kEmptyBank:
    case ErrorKind::kModelIncomplete:
    case ErrorKind::kSingleClass:
      return kExitData;
    case ErrorKind::kStaleTrace:
      return kExitInternal;
  }
  return kExitInternal;
}

struct RunRecord {
  std::string command;
  std::vector<std::string> args;
  fs::path log_dir;
  std::string config_digest;
  std::optional<std::uint64_t> seed;
};

void append_run_log(const RunRecord& rec, int exit_code, double seconds) {
  if (rec.log_dir.empty() || !fs::is_directory(rec.log_dir)) return;
  nlohmann::json j;
  j["command"] = rec.command;
  j["argv"] = rec.args;
  j["config_digest"] = rec.config_digest.empty() ? nlohmann::json() : nlohmann::json(rec.config_digest);
  j["seed"] = rec.seed ? nlohmann::json(*rec.seed) : nlohmann::json();
  j["wall_time_s"] = seconds;
  j["exit_code"] = exit_code;
  j["git_describe"] = MVAD_GIT_DESCRIBE;
  j["simd"] = std::string(simd::backend_name(simd::active().backend));
  std::ofstream out(rec.log_dir / "run_log.jsonl", std::ios::app | std::ios::binary);
  out << j.dump() << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::kFormatError, "cannot write " + path.string());
  out << text;
}

ProgressFn progress_printer(bool quiet) {
  if (quiet) return {};
  return [](const EpochReport& r) {
    std::fprintf(stderr, "stage %d epoch %zu loss %.6f\n", r.stage, r.epoch, r.loss);
  };
}

TrainConfig resolve_config(const std::string& path, std::optional<std::uint64_t> seed) {
  TrainConfig cfg = path.empty() ? TrainConfig{} : load_train_config(path);
  if (seed) cfg.seed = *seed;
  cfg.validate();
  return cfg;
}

std::vector<Variant> parse_variants(const std::string& text) {
  std::vector<Variant> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!item.empty()) out.push_back(parse_variant(item));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  require(!out.empty(), ErrorKind::kConfigError, "--variants lists no variant");
  return out;
}

std::string csv_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Grid values such as 0.1 + 2 * 0.1 print as 0.30000000000000004 at 17
// digits; 12 significant digits keep the columns readable.
std::string grid_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

std::vector<double> parse_number_list(std::string_view text) {
  auto number = [&](std::string_view s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    require(!s.empty() && res.ec == std::errc() && res.ptr == s.data() + s.size() &&
                std::isfinite(v),
            ErrorKind::kConfigError, "'" + std::string(s) + "' is not a number");
    return v;
  };
  std::vector<double> out;
  if (text.find(':') != std::string_view::npos) {
    const std::size_t c1 = text.find(':');
    const std::size_t c2 = text.find(':', c1 + 1);
    require(c2 != std::string_view::npos && text.find(':', c2 + 1) == std::string_view::npos,
            ErrorKind::kConfigError, "ranges are written begin:end:step");
    const double begin = number(text.substr(0, c1));
    const double end = number(text.substr(c1 + 1, c2 - c1 - 1));
    const double step = number(text.substr(c2 + 1));
    require(step > 0.0 && end >= begin, ErrorKind::kConfigError,
            "range needs step > 0 and end >= begin");
    const auto count = static_cast<std::size_t>(std::floor((end - begin) / step + 1e-9)) + 1;
    require(count <= 100000, ErrorKind::kConfigError, "range has too many points");
    for (std::size_t i = 0; i < count; ++i) out.push_back(begin + static_cast<double>(i) * step);
    return out;
  }
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = text.find(',', start);
    out.push_back(number(text.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                           : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

int run(const std::vector<std::string>& args) {
  const auto t0 = std::chrono::steady_clock::now();
  CLI::App app{"Multi-view anomaly detection over precomputed embedding matrices"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(MVAD_GIT_DESCRIBE));

  RunRecord rec;
  rec.args = args;
  bool quiet = false;
  std::optional<std::uint64_t> seed;

  // generate-synthetic
  auto* gen = app.add_subcommand("generate-synthetic", "Write a synthetic multi-view dataset");
  std::string gen_out;
  SyntheticConfig sc;
  std::string gen_mode = "mixed";
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--views", sc.num_views, "Number of views K")->capture_default_str();
  gen->add_option("--dim", sc.view_dim, "Dimension of every view")->capture_default_str();
  gen->add_option("--n-normal", sc.n_normal, "Normal samples")->capture_default_str();
  gen->add_option("--n-anomaly", sc.n_anomaly, "Anomalous samples")->capture_default_str();
  gen->add_option("--latent-rank", sc.latent_rank, "Shared latent rank r")->capture_default_str();
  gen->add_option("--noise", sc.noise, "Observation noise sigma")->capture_default_str();
  gen->add_option("--mode", gen_mode, "offmanifold | viewswap | mixed")->capture_default_str();
  gen->add_option("--seed", seed, "Seed");

  // train
  auto* train = app.add_subcommand("train", "Fit a model (one-class split when labels exist)");
  std::string manifest, config_path, out_dir, variant_text = "full";
  double train_fraction = 0.70, inject_ratio = 0.0;
  train->add_option("--manifest", manifest, "Dataset manifest")->required();
  train->add_option("--config", config_path, "Training config JSON");
  train->add_option("--out", out_dir, "Model directory")->required();
  train->add_option("--seed", seed, "Seed (overrides the config)");
  train->add_option("--variant", variant_text, "full | no_aa | no_cc | no_ae")->capture_default_str();
  train->add_option("--train-fraction", train_fraction, "Fraction of normals used for training")
      ->capture_default_str();
  train->add_option("--inject-ratio", inject_ratio, "Anomalies injected into training, per train size")
      ->capture_default_str();
  train->add_flag("--quiet", quiet, "No per-epoch loss lines");

  // score
  auto* scorecmd = app.add_subcommand("score", "Score a dataset with a trained model");
  std::string model_dir, scores_out;
  std::optional<double> alpha, beta;
  bool uniform = false;
  scorecmd->add_option("--model", model_dir, "Model directory")->required();
  scorecmd->add_option("--manifest", manifest, "Dataset manifest")->required();
  scorecmd->add_option("--out", scores_out, "scores.csv path")->required();
  scorecmd->add_option("--alpha", alpha, "Reconstruction coefficient (default: model config)");
  scorecmd->add_option("--beta", beta, "Contrastive coefficient (default: model config)");
  scorecmd->add_flag("--uniform-weights", uniform, "Fuse views with weight 1/K");

  // eval
  auto* evalcmd = app.add_subcommand("eval", "AUROC / AUPRC of a scores file");
  std::string scores_in, labels_path, metrics_out;
  evalcmd->add_option("--scores", scores_in, "scores.csv")->required();
  evalcmd->add_option("--labels", labels_path, "Labels file (default: the label column)");
  evalcmd->add_option("--out", metrics_out, "metrics.json path")->required();
  evalcmd->add_option("--variant", variant_text, "Variant recorded in metrics.json")->capture_default_str();
  evalcmd->add_option("--seed", seed, "Seed recorded in metrics.json");

  // ablate
  auto* ablatecmd = app.add_subcommand("ablate", "Multi-seed ablation of the model components");
  std::string variants_text = "full,no_aa,no_cc,no_ae";
  std::size_t n_seeds = 5;
  ablatecmd->add_option("--manifest", manifest, "Labelled dataset manifest")->required();
  ablatecmd->add_option("--config", config_path, "Training config JSON");
  ablatecmd->add_option("--variants", variants_text, "Comma-separated variants")->capture_default_str();
  ablatecmd->add_option("--seeds", n_seeds, "Number of seeds, starting at --seed")->capture_default_str();
  ablatecmd->add_option("--seed", seed, "First seed");
  ablatecmd->add_option("--train-fraction", train_fraction, "Fraction of normals used for training")
      ->capture_default_str();
  ablatecmd->add_option("--out", out_dir, "Output directory")->required();
  ablatecmd->add_flag("--quiet", quiet, "No per-epoch loss lines");

  // robustness
  auto* robust = app.add_subcommand("robustness", "AUROC under training-set contamination");
  std::string ratios_text = "0,0.02,0.04,0.06,0.08,0.10";
  robust->add_option("--manifest", manifest, "Labelled dataset manifest")->required();
  robust->add_option("--config", config_path, "Training config JSON");
  robust->add_option("--ratios", ratios_text, "Injection ratios (list or begin:end:step)")
      ->capture_default_str();
  robust->add_option("--seed", seed, "Seed");
  robust->add_option("--train-fraction", train_fraction, "Fraction of normals used for training")
      ->capture_default_str();
  robust->add_option("--out", out_dir, "Output directory")->required();
  robust->add_flag("--quiet", quiet, "No per-epoch loss lines");

  // sensitivity
  auto* sens = app.add_subcommand("sensitivity", "AUROC over an alpha x beta grid (one fit)");
  std::string alpha_text = "1:10:1", beta_text = "0.1:1.0:0.1";
  sens->add_option("--manifest", manifest, "Labelled dataset manifest")->required();
  sens->add_option("--config", config_path, "Training config JSON");
  sens->add_option("--alpha", alpha_text, "Alpha values (list or begin:end:step)")->capture_default_str();
  sens->add_option("--beta", beta_text, "Beta values (list or begin:end:step)")->capture_default_str();
  sens->add_option("--seed", seed, "Seed");
  sens->add_option("--train-fraction", train_fraction, "Fraction of normals used for training")
      ->capture_default_str();
  sens->add_option("--out", out_dir, "Output directory")->required();
  sens->add_flag("--quiet", quiet, "No per-epoch loss lines");

  // inspect-model
  auto* inspect = app.add_subcommand("inspect-model", "Print a model's architecture and config");
  inspect->add_option("--model", model_dir, "Model directory")->required();

  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  int code = kExitOk;
  try {
    SplitSpec split;
    split.train_fraction_of_normals = train_fraction;
    split.seed = seed.value_or(0);

    if (gen->parsed()) {
      rec.command = "generate-synthetic";
      sc.mode = parse_anomaly_mode(gen_mode);
      sc.seed = seed.value_or(0);
      rec.seed = sc.seed;
      rec.log_dir = gen_out;
      const MultiViewDataset ds = generate_synthetic(sc);
      const fs::path path = save_dataset(ds, gen_out, std::vector<std::string>(sc.num_views, "synthetic"));
      std::cout << "wrote " << path.string() << " (" << ds.num_samples() << " samples, "
                << ds.num_views() << " views)\n";
    } else if (train->parsed()) {
      rec.command = "train";
      const TrainConfig cfg = resolve_config(config_path, seed);
      const Variant variant = parse_variant(variant_text);
      rec.seed = cfg.seed;
      rec.config_digest = config_digest(cfg);
      const MultiViewDataset ds = load_dataset(fs::path(manifest));
      fs::create_directories(out_dir);
      rec.log_dir = out_dir;
      MultiViewDataset train_ds = ds;
      if (ds.labels) {
        split.seed = cfg.seed;
        split.injected_anomaly_ratio = inject_ratio;
        const SplitIndices idx = one_class_split_indices(*ds.labels, split);
        train_ds = ds.subset(idx.train);
        const MultiViewDataset test = ds.subset(idx.test);
        save_dataset(test, fs::path(out_dir) / "test_split");
        std::cerr << "split: " << idx.train.size() << " train (" << idx.injected
                  << " injected anomalies), " << idx.test.size() << " test\n";
      }
      const TrainedModel model = fit(train_ds, cfg, variant, progress_printer(quiet));
      save_model(model, out_dir);
      std::cout << "saved model to " << out_dir << "\n";
    } else if (scorecmd->parsed()) {
      rec.command = "score";
      const TrainedModel model = load_model(model_dir);
      rec.seed = model.config.seed;
      rec.config_digest = config_digest(model.config);
      const MultiViewDataset ds = load_dataset(fs::path(manifest));
      require(ds.view_names == model.view_names, ErrorKind::kDimensionError,
              "manifest views do not match the model's views");
      ScoreOptions opt;
      opt.alpha = alpha;
      opt.beta = beta;
      opt.uniform_weights = uniform;
      const ScoreBreakdown b = score(model, ds, opt);
      const fs::path out = scores_out;
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      rec.log_dir = out.has_parent_path() ? out.parent_path() : fs::path(".");
      write_scores_csv(out, b);
      std::cout << "scored " << b.num_samples() << " samples into " << out.string() << "\n";
    } else if (evalcmd->parsed()) {
      rec.command = "eval";
      rec.seed = seed;
      const ScoreBreakdown b = read_scores_csv(scores_in);
      std::vector<int> labels;
      if (!labels_path.empty()) {
        labels = load_labels(labels_path);
      } else {
        require(b.labels.has_value(), ErrorKind::kFormatError,
                scores_in + " has no label column; pass --labels");
        labels = *b.labels;
      }
      require(labels.size() == b.num_samples(), ErrorKind::kFormatError,
              "labels and scores differ in length");
      MetricReport r = evaluate(b.fused, labels);
      {
        std::ifstream in(scores_in, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        r.scores_digest = fnv1a_hex(ss.str());
      }
      const fs::path out = metrics_out;
      write_text(out, metrics_json(r, variant_name(parse_variant(variant_text)), seed.value_or(0)));
      rec.log_dir = out.has_parent_path() ? out.parent_path() : fs::path(".");
      std::cout << "auroc " << show(r.auroc) << "\nauprc " << show(r.auprc) << "\n";
    } else if (ablatecmd->parsed()) {
      rec.command = "ablate";
      const TrainConfig cfg = resolve_config(config_path, seed);
      rec.seed = cfg.seed;
      rec.config_digest = config_digest(cfg);
      const std::vector<Variant> variants = parse_variants(variants_text);
      require(n_seeds >= 1, ErrorKind::kConfigError, "--seeds must be >= 1");
      std::vector<std::uint64_t> seeds;
      for (std::size_t i = 0; i < n_seeds; ++i) seeds.push_back(cfg.seed + i);
      const MultiViewDataset ds = load_dataset(fs::path(manifest));
      fs::create_directories(out_dir);
      rec.log_dir = out_dir;
      const auto summary = ablate(ds, cfg, variants, seeds, split, progress_printer(quiet));
      std::string csv = "variant,seed,auroc,auprc\n";
      nlohmann::json js = nlohmann::json::array();
      for (const VariantSummary& s : summary) {
        for (const SeedRun& r : s.runs) {
          csv += std::string(variant_name(s.variant)) + "," + std::to_string(r.seed) + "," +
                 csv_number(r.report.auroc) + "," + csv_number(r.report.auprc) + "\n";
        }
        js.push_back({{"variant", variant_name(s.variant)},
                      {"seeds", s.runs.size()},
                      {"auroc_mean", s.auroc_mean},
                      {"auroc_std", s.auroc_std},
                      {"auprc_mean", s.auprc_mean},
                      {"auprc_std", s.auprc_std}});
        std::cout << variant_name(s.variant) << " auroc " << show(s.auroc_mean) << " +- "
                  << show(s.auroc_std) << " auprc " << show(s.auprc_mean) << " +- "
                  << show(s.auprc_std) << "\n";
      }
      write_text(fs::path(out_dir) / "ablation.csv", csv);
      write_text(fs::path(out_dir) / "ablation_summary.json", js.dump(2) + "\n");
    } else if (robust->parsed()) {
      rec.command = "robustness";
      const TrainConfig cfg = resolve_config(config_path, seed);
      rec.seed = cfg.seed;
      rec.config_digest = config_digest(cfg);
      split.seed = cfg.seed;
      const std::vector<double> ratios = parse_number_list(ratios_text);
      const MultiViewDataset ds = load_dataset(fs::path(manifest));
      fs::create_directories(out_dir);
      rec.log_dir = out_dir;
      const auto points = robustness_sweep(ds, cfg, ratios, split, progress_printer(quiet));
      std::string csv = "ratio,injected,auroc,auprc\n";
      for (const RobustnessPoint& p : points) {
        csv += grid_number(p.ratio) + "," + std::to_string(p.injected) + "," +
               csv_number(p.report.auroc) + "," + csv_number(p.report.auprc) + "\n";
        std::cout << "ratio " << grid_number(p.ratio) << " injected " << p.injected << " auroc "
                  << show(p.report.auroc) << "\n";
      }
      write_text(fs::path(out_dir) / "robustness.csv", csv);
    } else if (sens->parsed()) {
      rec.command = "sensitivity";
      const TrainConfig cfg = resolve_config(config_path, seed);
      rec.seed = cfg.seed;
      rec.config_digest = config_digest(cfg);
      split.seed = cfg.seed;
      const std::vector<double> alphas = parse_number_list(alpha_text);
      const std::vector<double> betas = parse_number_list(beta_text);
      const MultiViewDataset ds = load_dataset(fs::path(manifest));
      fs::create_directories(out_dir);
      rec.log_dir = out_dir;
      const auto cells = sensitivity_grid(ds, cfg, alphas, betas, split, progress_printer(quiet));
      std::string csv = "alpha,beta,auroc,auprc\n";
      for (const SensitivityCell& c : cells) {
        csv += grid_number(c.alpha) + "," + grid_number(c.beta) + "," + csv_number(c.auroc) + "," +
               csv_number(c.auprc) + "\n";
      }
      write_text(fs::path(out_dir) / "sensitivity.csv", csv);
      std::cout << "wrote " << cells.size() << " cells to "
                << (fs::path(out_dir) / "sensitivity.csv").string() << "\n";
    } else if (inspect->parsed()) {
      rec.command = "inspect-model";
      rec.log_dir = model_dir;
      const TrainedModel m = load_model(model_dir);
      rec.seed = m.config.seed;
      rec.config_digest = config_digest(m.config);
      std::cout << "variant " << variant_name(m.variant) << "\n";
      std::cout << "views " << m.num_views() << "\n";
      for (std::size_t k = 0; k < m.num_views(); ++k) {
        const ViewAutoencoder& ae = m.autoencoders[k];
        std::cout << "  " << m.view_names[k] << ": " << ae.input_dim();
        for (const DenseLayer& l : ae.encoder) std::cout << " -> " << l.out_dim();
        for (const DenseLayer& l : ae.decoder) std::cout << " -> " << l.out_dim();
        std::cout << "\n";
      }
      std::cout << "aligned dim " << m.allocation.aligned_dim() << ", estimator "
                << m.allocation.aligned_dim() << " -> " << m.allocation.estimator.hidden_dim()
                << " -> 1 (" << (m.allocation.estimator_active ? "trained" : "bypassed, uniform")
                << ")\n";
      std::cout << "reference bank " << m.bank.size() << " rows\n";
      std::cout << "stage 1 epochs " << m.stage1_history.size();
      if (!m.stage1_history.empty()) std::cout << ", final loss " << show(m.stage1_history.back());
      std::cout << "\nstage 2 epochs " << m.stage2_history.size();
      if (!m.stage2_history.empty()) std::cout << ", final loss " << show(m.stage2_history.back());
      std::cout << "\nconfig " << config_digest(m.config) << "\n"
                << train_config_json(m.config) << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    code = exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    code = kExitData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    code = kExitInternal;
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  append_run_log(rec, code, seconds);
  return code;
}

}  // namespace mvad::cli
