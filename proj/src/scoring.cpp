#include "mvad/scoring.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "mvad/digest.hpp"
#include "mvad/errors.hpp"

namespace mvad {
namespace {

constexpr std::size_t kScoreChunk = 1024;

void check_labels(std::span<const double> scores, std::span<const int> labels,
                  std::size_t& n_pos, std::size_t& n_neg) {
  require(scores.size() == labels.size(), ErrorKind::kDimensionError,
          "scores and labels differ in length");
  n_pos = 0;
  n_neg = 0;
  for (int y : labels) {
    require(y == 0 || y == 1, ErrorKind::kFormatError, "labels must be 0 or 1");
    (y == 1 ? n_pos : n_neg) += 1;
  }
  require(n_pos > 0 && n_neg > 0, ErrorKind::kSingleClass,
          "metrics need both normal and anomalous samples");
  for (double s : scores) {
    require(std::isfinite(s), ErrorKind::kFormatError, "scores must be finite");
  }
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

// Splits one CSV record starting at `pos`; advances past its newline.
std::vector<std::string> next_record(const std::string& text, std::size_t& pos,
                                     const std::string& origin) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  while (pos < text.size()) {
    const char c = text[pos++];
    if (quoted) {
      if (c == '"') {
        if (pos < text.size() && text[pos] == '"') {
          fields.back() += '"';
          ++pos;
        } else {
          quoted = false;
        }
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else if (c == '\n') {
      return fields;
    } else if (c != '\r') {
      fields.back() += c;
    }
  }
  require(!quoted, ErrorKind::kFormatError, origin + ": unterminated quoted field");
  return fields;
}

double parse_double(const std::string& s, const std::string& origin, std::size_t line) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  require(res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(v),
          ErrorKind::kFormatError,
          origin + ":" + std::to_string(line) + ": '" + s + "' is not a finite number");
  return v;
}

MetricReport summarize_scores(const ScoreBreakdown& b) {
  require(b.labels.has_value(), ErrorKind::kInsufficientData, "test split has no labels");
  MetricReport r = evaluate(b.fused, *b.labels);
  r.scores_digest = fnv1a_hex(scores_csv(b));
  return r;
}

void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
  mean = 0.0;
  sd = 0.0;
  if (xs.empty()) return;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace

std::vector<double> fuse(const Matrix& rec, const Matrix& con, const Matrix& weights, double alpha,
                         double beta) {
  require(rec.rows() == weights.rows() && con.rows() == weights.rows() &&
              rec.cols() == weights.cols() && con.cols() == weights.cols(),
          ErrorKind::kDimensionError, "score component shapes differ");
  std::vector<double> s(weights.rows(), 0.0);
  for (std::size_t i = 0; i < weights.rows(); ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < weights.cols(); ++k) {
      acc += weights(i, k) * (alpha * rec(i, k) + beta * con(i, k));
    }
    s[i] = acc;
  }
  return s;
}

ScoreBreakdown score(const TrainedModel& model, const MultiViewDataset& ds,
                     const ScoreOptions& options) {
  const std::size_t kv = model.num_views();
  require(kv >= 2 && model.bank.num_views() == kv && model.allocation.num_views() == kv &&
              model.scaler.mins.size() == kv,
          ErrorKind::kModelIncomplete, "model lacks its bank, aligners or scaler");
  ds.validate();
  require(ds.num_views() == kv, ErrorKind::kDimensionError,
          "dataset has " + std::to_string(ds.num_views()) + " views, model expects " +
              std::to_string(kv));
  for (std::size_t k = 0; k < kv; ++k) {
    require(ds.views[k].cols() == model.autoencoders[k].input_dim(), ErrorKind::kDimensionError,
            "view '" + ds.view_names[k] + "' has " + std::to_string(ds.views[k].cols()) +
                " columns, model expects " + std::to_string(model.autoencoders[k].input_dim()));
  }

  ScoreBreakdown out;
  out.view_names = model.view_names;
  out.sample_ids = ds.sample_ids;
  out.labels = ds.labels;
  out.alpha = options.alpha.value_or(model.scoring_alpha());
  out.beta = options.beta.value_or(model.scoring_beta());

  const std::size_t n = ds.num_samples();
  std::vector<Matrix> scaled;
  for (std::size_t k = 0; k < kv; ++k) scaled.push_back(model.scaler.transform(k, ds.views[k]));

  out.rec = Matrix(n, kv);
  std::vector<Matrix> latents(kv, Matrix(n, model.autoencoders.front().latent_dim()));
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += kScoreChunk) {
    const std::size_t end = std::min(n, start + kScoreChunk);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    for (std::size_t k = 0; k < kv; ++k) {
      const Matrix v = scaled[k].select_rows(idx);
      const ForwardTrace t = forward(model.autoencoders[k], v, Mode::kEval);
      const std::vector<double> r = recon_loss(v, t.reconstruction());
      for (std::size_t i = start; i < end; ++i) {
        out.rec(i, k) = r[i - start];
        const auto z = t.latent().row(i - start);
        std::copy(z.begin(), z.end(), latents[k].row(i).begin());
      }
    }
  }

  out.con = out.beta != 0.0
                ? contrastive_score(model.bank, latents, model.config.tau, model.infonce_mode())
                : Matrix(n, kv);

  if (options.uniform_weights || !model.allocation.estimator_active) {
    out.weights = uniform_weights(n, kv);
  } else {
    out.weights = estimate_weights(model.allocation, align(model.allocation, scaled));
  }
  out.fused = fuse(out.rec, out.con, out.weights, out.alpha, out.beta);
  return out;
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  check_labels(scores, labels, n_pos, n_neg);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of midranks (1-based) of the positives.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]] == 1) rank_sum += midrank;
    }
    i = j;
  }
  const double p = static_cast<double>(n_pos);
  const double u = rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(n_neg));
}

double auprc(std::span<const double> scores, std::span<const int> labels) {
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  check_labels(scores, labels, n_pos, n_neg);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double ap = 0.0;
  std::size_t tp = 0;
  std::size_t seen = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    std::size_t group_pos = 0;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]] == 1) ++group_pos;
      ++j;
    }
    tp += group_pos;
    seen += j - i;
    if (group_pos > 0) {
      const double precision = static_cast<double>(tp) / static_cast<double>(seen);
      ap += static_cast<double>(group_pos) / static_cast<double>(n_pos) * precision;
    }
    i = j;
  }
  return ap;
}

MetricReport evaluate(std::span<const double> scores, std::span<const int> labels) {
  MetricReport r;
  r.auroc = auroc(scores, labels);
  r.auprc = auprc(scores, labels);
  for (int y : labels) (y == 1 ? r.n_pos : r.n_neg) += 1;
  return r;
}

std::string scores_csv(const ScoreBreakdown& b) {
  const std::size_t kv = b.view_names.size();
  std::string out = "id";
  if (b.labels) out += ",label";
  out += ",score";
  for (const char* prefix : {"rec_", "con_", "w_"}) {
    for (const std::string& v : b.view_names) out += "," + csv_field(prefix + v);
  }
  out += '\n';
  for (std::size_t i = 0; i < b.num_samples(); ++i) {
    out += csv_field(b.sample_ids[i]);
    if (b.labels) out += (*b.labels)[i] == 1 ? ",1" : ",0";
    out += "," + format_double(b.fused[i]);
    for (const Matrix* m : {&b.rec, &b.con, &b.weights}) {
      for (std::size_t k = 0; k < kv; ++k) out += "," + format_double((*m)(i, k));
    }
    out += '\n';
  }
  return out;
}

void write_scores_csv(const std::filesystem::path& path, const ScoreBreakdown& b) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::kFormatError, "cannot write " + path.string());
  out << scores_csv(b);
}

ScoreBreakdown parse_scores_csv(const std::string& text, const std::string& origin) {
  std::size_t pos = 0;
  const std::vector<std::string> header = next_record(text, pos, origin);
  require(header.size() >= 3 && header[0] == "id", ErrorKind::kFormatError,
          origin + ": header must start with 'id'");
  const bool has_label = header[1] == "label";
  const std::size_t score_col = has_label ? 2 : 1;
  require(header[score_col] == "score", ErrorKind::kFormatError,
          origin + ": missing 'score' column");
  const std::size_t rest = header.size() - score_col - 1;
  require(rest % 3 == 0, ErrorKind::kFormatError,
          origin + ": expected rec_, con_ and w_ columns for every view");
  const std::size_t kv = rest / 3;

  ScoreBreakdown b;
  for (std::size_t k = 0; k < kv; ++k) {
    const std::string& h = header[score_col + 1 + k];
    require(h.rfind("rec_", 0) == 0 && header[score_col + 1 + kv + k] == "con_" + h.substr(4) &&
                header[score_col + 1 + 2 * kv + k] == "w_" + h.substr(4),
            ErrorKind::kFormatError, origin + ": column names do not follow rec_/con_/w_<view>");
    b.view_names.push_back(h.substr(4));
  }
  if (has_label) b.labels.emplace();

  std::vector<double> rec, con, w;
  std::size_t line = 1;
  while (pos < text.size()) {
    ++line;
    const std::vector<std::string> f = next_record(text, pos, origin);
    if (f.size() == 1 && f[0].empty()) continue;
    require(f.size() == header.size(), ErrorKind::kFormatError,
            origin + ":" + std::to_string(line) + ": expected " + std::to_string(header.size()) +
                " fields, got " + std::to_string(f.size()));
    b.sample_ids.push_back(f[0]);
    if (has_label) {
      require(f[1] == "0" || f[1] == "1", ErrorKind::kFormatError,
              origin + ":" + std::to_string(line) + ": label must be 0 or 1");
      b.labels->push_back(f[1] == "1" ? 1 : 0);
    }
    b.fused.push_back(parse_double(f[score_col], origin, line));
    for (std::size_t k = 0; k < kv; ++k) {
      rec.push_back(parse_double(f[score_col + 1 + k], origin, line));
      con.push_back(parse_double(f[score_col + 1 + kv + k], origin, line));
      w.push_back(parse_double(f[score_col + 1 + 2 * kv + k], origin, line));
    }
  }
  const std::size_t n = b.fused.size();
  b.rec = Matrix(n, kv, std::move(rec));
  b.con = Matrix(n, kv, std::move(con));
  b.weights = Matrix(n, kv, std::move(w));
  return b;
}

ScoreBreakdown read_scores_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kFormatError, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scores_csv(ss.str(), path.string());
}

std::string metrics_json(const MetricReport& r, std::string_view variant, std::uint64_t seed) {
  nlohmann::json j;
  j["auroc"] = r.auroc;
  j["auprc"] = r.auprc;
  j["n_pos"] = r.n_pos;
  j["n_neg"] = r.n_neg;
  j["variant"] = std::string(variant);
  j["seed"] = seed;
  j["scores_digest"] = r.scores_digest;
  return j.dump(2) + "\n";
}

std::vector<VariantSummary> ablate(const MultiViewDataset& data, const TrainConfig& cfg,
                                   std::span<const Variant> variants,
                                   std::span<const std::uint64_t> seeds, SplitSpec split,
                                   const ProgressFn& progress) {
  require(!variants.empty() && !seeds.empty(), ErrorKind::kConfigError,
          "ablation needs at least one variant and one seed");
  const bool want_full = std::find(variants.begin(), variants.end(), Variant::kFull) != variants.end();
  std::vector<VariantSummary> out;
  for (Variant v : variants) out.push_back({v, {}, 0, 0, 0, 0});

  for (std::uint64_t seed : seeds) {
    split.seed = seed;
    const auto [train, test] = one_class_split(data, split);
    TrainConfig c = cfg;
    c.seed = seed;
    std::optional<TrainedModel> full;
    if (want_full) full = fit(train, c, Variant::kFull, progress);
    for (VariantSummary& s : out) {
      ScoreBreakdown b;
      if (s.variant == Variant::kFull) {
        b = score(*full, test);
      } else if (s.variant == Variant::kNoAa && full) {
        ScoreOptions opt;
        opt.uniform_weights = true;
        b = score(*full, test, opt);
      } else {
        b = score(fit(train, c, s.variant, progress), test);
      }
      s.runs.push_back({seed, summarize_scores(b)});
    }
  }
  for (VariantSummary& s : out) {
    std::vector<double> roc, pr;
    for (const SeedRun& r : s.runs) {
      roc.push_back(r.report.auroc);
      pr.push_back(r.report.auprc);
    }
    mean_std(roc, s.auroc_mean, s.auroc_std);
    mean_std(pr, s.auprc_mean, s.auprc_std);
  }
  return out;
}

std::vector<RobustnessPoint> robustness_sweep(const MultiViewDataset& data, const TrainConfig& cfg,
                                              std::span<const double> ratios, SplitSpec split,
                                              const ProgressFn& progress) {
  require(data.labels.has_value(), ErrorKind::kInsufficientData,
          "robustness sweep needs labels");
  std::vector<RobustnessPoint> out;
  for (double ratio : ratios) {
    require(ratio >= 0.0 && ratio <= 0.5, ErrorKind::kConfigError,
            "injection ratios must lie in [0, 0.5]");
    split.injected_anomaly_ratio = ratio;
    const SplitIndices idx = one_class_split_indices(*data.labels, split);
    const MultiViewDataset train = data.subset(idx.train);
    const MultiViewDataset test = data.subset(idx.test);
    const TrainedModel model = fit(train, cfg, Variant::kFull, progress);
    out.push_back({ratio, idx.injected, summarize_scores(score(model, test))});
  }
  return out;
}

std::vector<SensitivityCell> sensitivity_grid(const ScoreBreakdown& scored,
                                              std::span<const double> alphas,
                                              std::span<const double> betas) {
  require(scored.labels.has_value(), ErrorKind::kInsufficientData,
          "sensitivity grid needs labels");
  std::vector<SensitivityCell> out;
  for (double a : alphas) {
    for (double b : betas) {
      const std::vector<double> s = fuse(scored.rec, scored.con, scored.weights, a, b);
      out.push_back({a, b, auroc(s, *scored.labels), auprc(s, *scored.labels)});
    }
  }
  return out;
}

std::vector<SensitivityCell> sensitivity_grid(const MultiViewDataset& data, const TrainConfig& cfg,
                                              std::span<const double> alphas,
                                              std::span<const double> betas, SplitSpec split,
                                              const ProgressFn& progress) {
  const auto [train, test] = one_class_split(data, split);
  const TrainedModel model = fit(train, cfg, Variant::kFull, progress);
  ScoreOptions opt;
  opt.alpha = 1.0;
  opt.beta = 1.0;
  return sensitivity_grid(score(model, test, opt), alphas, betas);
}

}  // namespace mvad
