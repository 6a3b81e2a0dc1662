#include "mvad/synthetic.hpp"

#include <cmath>
#include <cstdio>

#include "mvad/errors.hpp"
#include "mvad/rng.hpp"

namespace mvad {
namespace {

std::string numbered(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%06zu", prefix, i);
  return buf;
}

void observe(const Matrix& mixing, std::span<const double> latent, double noise,
             SeededRng& rng, std::span<double> out) {
  for (std::size_t d = 0; d < mixing.rows(); ++d) {
    double v = 0.0;
    const auto a = mixing.row(d);
    for (std::size_t j = 0; j < latent.size(); ++j) v += a[j] * latent[j];
    out[d] = v + noise * rng.normal();
  }
}

}  // namespace

AnomalyMode parse_anomaly_mode(std::string_view text) {
  if (text == "offmanifold") return AnomalyMode::kOffManifold;
  if (text == "viewswap") return AnomalyMode::kViewSwap;
  if (text == "mixed") return AnomalyMode::kMixed;
  fail(ErrorKind::kConfigError,
       "unknown anomaly mode '" + std::string(text) + "' (offmanifold|viewswap|mixed)");
}

std::string_view anomaly_mode_name(AnomalyMode mode) {
  switch (mode) {
    case AnomalyMode::kOffManifold:
      return "offmanifold";
    case AnomalyMode::kViewSwap:
      return "viewswap";
    case AnomalyMode::kMixed:
      return "mixed";
  }
  return "mixed";
}

MultiViewDataset generate_synthetic(const SyntheticConfig& cfg) {
  require(cfg.num_views >= 2, ErrorKind::kConfigError, "synthetic data needs K >= 2 views");
  require(cfg.view_dim >= 1 && cfg.latent_rank >= 1, ErrorKind::kConfigError,
          "view dimension and latent rank must be positive");
  require(cfg.n_normal >= 1, ErrorKind::kConfigError, "n_normal must be positive");
  require(cfg.noise >= 0.0 && std::isfinite(cfg.noise), ErrorKind::kConfigError,
          "noise must be a finite non-negative number");

  const std::size_t k_views = cfg.num_views;
  const std::size_t r = cfg.latent_rank;
  const double mix_scale = 1.0 / std::sqrt(static_cast<double>(r));

  std::vector<Matrix> mixing;
  for (std::size_t k = 0; k < k_views; ++k) {
    SeededRng rng(derive_seed(cfg.seed, "synthetic/mixing", k));
    Matrix a(cfg.view_dim, r);
    for (double& v : a.values()) v = rng.normal() * mix_scale;
    mixing.push_back(std::move(a));
  }

  const std::size_t n = cfg.n_normal + cfg.n_anomaly;
  MultiViewDataset ds;
  for (std::size_t k = 0; k < k_views; ++k) {
    ds.view_names.push_back("view" + std::to_string(k + 1));
    ds.views.emplace_back(n, cfg.view_dim);
  }
  ds.labels = std::vector<int>(n, 0);

  SeededRng latent_rng(derive_seed(cfg.seed, "synthetic/latent"));
  SeededRng noise_rng(derive_seed(cfg.seed, "synthetic/noise"));
  std::vector<double> u(r);

  for (std::size_t i = 0; i < cfg.n_normal; ++i) {
    for (double& x : u) x = latent_rng.normal();
    for (std::size_t k = 0; k < k_views; ++k) {
      observe(mixing[k], u, cfg.noise, noise_rng, ds.views[k].row(i));
    }
    ds.sample_ids.push_back(numbered("n", i));
  }

  std::size_t n_off = 0;
  switch (cfg.mode) {
    case AnomalyMode::kOffManifold:
      n_off = cfg.n_anomaly;
      break;
    case AnomalyMode::kViewSwap:
      n_off = 0;
      break;
    case AnomalyMode::kMixed:
      n_off = cfg.n_anomaly / 2;
      break;
  }
  for (std::size_t a = 0; a < cfg.n_anomaly; ++a) {
    const std::size_t i = cfg.n_normal + a;
    const bool off = a < n_off;
    const double scale = off ? 3.0 : 1.0;
    for (std::size_t k = 0; k < k_views; ++k) {
      for (double& x : u) x = scale * latent_rng.normal();
      observe(mixing[k], u, cfg.noise, noise_rng, ds.views[k].row(i));
    }
    (*ds.labels)[i] = 1;
    ds.sample_ids.push_back(off ? numbered("off", a) : numbered("swap", a));
  }
  return ds;
}

}  // namespace mvad
