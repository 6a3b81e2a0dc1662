#include "mvad/contrastive.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "mvad/errors.hpp"
#include "mvad/rng.hpp"

namespace mvad {
namespace {

std::atomic<std::uint64_t> g_match_prob_evaluations{0};

constexpr std::size_t kScoreChunk = 512;

void count_evaluations(std::uint64_t n) {
  g_match_prob_evaluations.fetch_add(n, std::memory_order_relaxed);
}

Matrix unit_rows(const Matrix& z, std::vector<double>* norms_out) {
  Matrix u(z.rows(), z.cols());
  if (norms_out != nullptr) norms_out->resize(z.rows());
  for (std::size_t r = 0; r < z.rows(); ++r) {
    const double n = norm2(z.row(r));
    if (!std::isfinite(n)) {
      fail(ErrorKind::kNumericDivergence, "latent row " + std::to_string(r) + " is not finite");
    }
    if (!(n >= 1e-12)) {
      fail(ErrorKind::kZeroVector, "latent row " + std::to_string(r) + " is zero");
    }
    const auto src = z.row(r);
    auto dst = u.row(r);
    for (std::size_t c = 0; c < z.cols(); ++c) dst[c] = src[c] / n;
    if (norms_out != nullptr) (*norms_out)[r] = n;
  }
  return u;
}

void check_latents(std::span<const Matrix> latents, double tau) {
  require(latents.size() >= 2, ErrorKind::kDimensionError, "contrastive terms need K >= 2 views");
  require(tau > 0.0 && std::isfinite(tau), ErrorKind::kConfigError, "temperature must be > 0");
  const std::size_t b = latents.front().rows();
  const std::size_t d = latents.front().cols();
  for (const Matrix& z : latents) {
    require(z.rows() == b && z.cols() == d, ErrorKind::kDimensionError,
            "all views must share batch size and latent width");
  }
  require(b >= 2, ErrorKind::kBatchTooSmall, "matching probability needs B >= 2");
}

}  // namespace

double log_match_prob(const MatchBatch& batch, std::size_t j, std::size_t k, std::size_t i,
                      InfoNceMode mode) {
  check_latents(batch.latents, batch.tau);
  const std::size_t b = batch.latents.front().rows();
  require(j != k && j < batch.latents.size() && k < batch.latents.size() && i < b,
          ErrorKind::kDimensionError, "invalid view pair or sample index");
  const Matrix& zj = batch.latents[j];
  const Matrix& zk = batch.latents[k];
  const double pos = cosine_similarity(zj.row(i), zk.row(i)) / batch.tau;
  std::vector<double> terms;
  terms.reserve(2 * b);
  for (std::size_t m = 0; m < b; ++m) {
    if (m != i) terms.push_back(cosine_similarity(zj.row(i), zk.row(m)) / batch.tau);
  }
  for (std::size_t n = 0; n < b; ++n) {
    if (n != i) terms.push_back(cosine_similarity(zj.row(i), zj.row(n)) / batch.tau);
  }
  if (mode == InfoNceMode::kStandard) terms.push_back(pos);
  count_evaluations(1);
  return pos - logsumexp(terms);
}

double match_prob(const MatchBatch& batch, std::size_t j, std::size_t k, std::size_t i,
                  InfoNceMode mode) {
  return std::exp(log_match_prob(batch, j, k, i, mode));
}

ContrastiveCache contrastive_forward(std::span<const Matrix> latents, double tau,
                                     InfoNceMode mode) {
  check_latents(latents, tau);
  const std::size_t kv = latents.size();
  const std::size_t b = latents.front().rows();

  ContrastiveCache cache;
  cache.tau = tau;
  cache.mode = mode;
  cache.norms.resize(kv);
  for (std::size_t k = 0; k < kv; ++k) cache.unit.push_back(unit_rows(latents[k], &cache.norms[k]));
  // Each entry is the same products summed in the same order either way
  // round, so the lower blocks are exact transposes of the upper ones.
  cache.sims.resize(kv * kv);
  for (std::size_t j = 0; j < kv; ++j) {
    for (std::size_t k = j; k < kv; ++k) {
      Matrix s(b, b);
      gemm(simd::Trans::kNo, simd::Trans::kYes, 1.0 / tau, cache.unit[j], cache.unit[k], 0.0, s);
      if (k != j) cache.sims[k * kv + j] = s.transposed();
      cache.sims[j * kv + k] = std::move(s);
    }
  }

  cache.loss = PairTable(kv, b);
  if (tau >= kMinShiftedTau) {
    const double shift = 1.0 / tau;
    cache.exps.resize(kv * kv);
    for (std::size_t j = 0; j < kv; ++j) {
      for (std::size_t k = j; k < kv; ++k) {
        const Matrix& s = cache.sim(j, k);
        Matrix e(b, b);
        const double* src = s.data();
        double* dst = e.data();
        for (std::size_t t = 0; t < s.size(); ++t) dst[t] = std::exp(src[t] - shift);
        if (k != j) cache.exps[k * kv + j] = e.transposed();
        cache.exps[j * kv + k] = std::move(e);
      }
    }
    cache.denom = PairTable(kv, b);
    for (std::size_t j = 0; j < kv; ++j) {
      const Matrix& self = cache.expo(j, j);
      for (std::size_t k = 0; k < kv; ++k) {
        if (j == k) continue;
        const Matrix& cross = cache.expo(j, k);
        for (std::size_t i = 0; i < b; ++i) {
          const auto cr = cross.row(i);
          const auto sr = self.row(i);
          double d = 0.0;
          for (std::size_t m = 0; m < b; ++m) {
            if (m != i) d += cr[m];
          }
          for (std::size_t n = 0; n < b; ++n) {
            if (n != i) d += sr[n];
          }
          if (mode == InfoNceMode::kStandard) d += cr[i];
          cache.denom.at(j, k, i) = d;
          cache.loss.at(j, k, i) = std::log(d) + shift - cache.sim(j, k)(i, i);
        }
      }
    }
  } else {
    std::vector<double> terms;
    terms.reserve(2 * b);
    for (std::size_t j = 0; j < kv; ++j) {
      const Matrix& self = cache.sim(j, j);
      for (std::size_t k = 0; k < kv; ++k) {
        if (j == k) continue;
        const Matrix& cross = cache.sim(j, k);
        for (std::size_t i = 0; i < b; ++i) {
          terms.clear();
          const auto cr = cross.row(i);
          const auto sr = self.row(i);
          for (std::size_t m = 0; m < b; ++m) {
            if (m != i) terms.push_back(cr[m]);
          }
          for (std::size_t n = 0; n < b; ++n) {
            if (n != i) terms.push_back(sr[n]);
          }
          if (mode == InfoNceMode::kStandard) terms.push_back(cr[i]);
          cache.loss.at(j, k, i) = logsumexp(terms) - cr[i];
        }
      }
    }
  }
  count_evaluations(static_cast<std::uint64_t>(kv * (kv - 1) * b));
  return cache;
}

PairTable contrastive_loss(const MatchBatch& batch, InfoNceMode mode) {
  return contrastive_forward(batch.latents, batch.tau, mode).loss;
}

std::vector<Matrix> contrastive_backward(const ContrastiveCache& cache, const PairTable& coeff) {
  const std::size_t kv = cache.unit.size();
  const std::size_t b = kv == 0 ? 0 : cache.unit.front().rows();
  require(coeff.num_views() == kv && coeff.batch() == b, ErrorKind::kDimensionError,
          "coefficient table does not match the contrastive batch");

  // Gradients with respect to each similarity block (already divided by tau).
  std::vector<Matrix> gsim(kv * kv, Matrix(b, b));
  for (std::size_t j = 0; j < kv; ++j) {
    const Matrix& self = cache.sim(j, j);
    Matrix& g_self = gsim[j * kv + j];
    for (std::size_t k = 0; k < kv; ++k) {
      if (j == k) continue;
      const Matrix& cross = cache.sim(j, k);
      Matrix& g_cross = gsim[j * kv + k];
      for (std::size_t i = 0; i < b; ++i) {
        const double c = coeff.at(j, k, i);
        if (c == 0.0) continue;
        auto gc = g_cross.row(i);
        auto gs = g_self.row(i);
        // dLoss/dsim is the softmax weight of each denominator term; the
        // positive also gets -1 from the numerator.
        double pos_weight = 0.0;
        if (cache.shifted()) {
          const double scale = c / cache.denom.at(j, k, i);
          const auto er = cache.expo(j, k).row(i);
          const auto es = cache.expo(j, j).row(i);
          for (std::size_t m = 0; m < b; ++m) {
            if (m != i) gc[m] += scale * er[m];
          }
          for (std::size_t n = 0; n < b; ++n) {
            if (n != i) gs[n] += scale * es[n];
          }
          pos_weight = er[i] / cache.denom.at(j, k, i);
        } else {
          const auto cr = cross.row(i);
          const auto sr = self.row(i);
          // loss = lse - pos, hence lse = loss + pos.
          const double lse = cache.loss.at(j, k, i) + cr[i];
          for (std::size_t m = 0; m < b; ++m) {
            if (m != i) gc[m] += c * std::exp(cr[m] - lse);
          }
          for (std::size_t n = 0; n < b; ++n) {
            if (n != i) gs[n] += c * std::exp(sr[n] - lse);
          }
          pos_weight = std::exp(cr[i] - lse);
        }
        double pos_grad = -1.0;
        if (cache.mode == InfoNceMode::kStandard) pos_grad += pos_weight;
        gc[i] += c * pos_grad;
      }
    }
  }

  const std::size_t d = cache.unit.front().cols();
  std::vector<Matrix> du(kv, Matrix(b, d));
  const double inv_tau = 1.0 / cache.tau;
  // sim(a, c) feeds both du_a and du_c; fold G_ac + G_ca^T so each view
  // needs one product per partner.
  Matrix h(b, b);
  for (std::size_t a = 0; a < kv; ++a) {
    for (std::size_t c = 0; c < kv; ++c) {
      const Matrix& g = gsim[a * kv + c];
      const Matrix& gt = gsim[c * kv + a];
      for (std::size_t r = 0; r < b; ++r) {
        auto hr = h.row(r);
        const auto gr = g.row(r);
        for (std::size_t s = 0; s < b; ++s) hr[s] = gr[s] + gt(s, r);
      }
      gemm(simd::Trans::kNo, simd::Trans::kNo, inv_tau, h, cache.unit[c], 1.0, du[a]);
    }
  }

  // Through u = z / |z|: dz = (du - u (u . du)) / |z|.
  std::vector<Matrix> dz(kv, Matrix(b, d));
  for (std::size_t k = 0; k < kv; ++k) {
    for (std::size_t r = 0; r < b; ++r) {
      const auto u = cache.unit[k].row(r);
      const auto g = du[k].row(r);
      auto out = dz[k].row(r);
      const double proj = dot(u, g);
      const double n = cache.norms[k][r];
      for (std::size_t c = 0; c < d; ++c) out[c] = (g[c] - u[c] * proj) / n;
    }
  }
  return dz;
}

std::uint64_t match_prob_evaluations() {
  return g_match_prob_evaluations.load(std::memory_order_relaxed);
}

ReferenceBank::ReferenceBank(std::vector<Matrix> latents) : latents_(std::move(latents)) {
  require(!latents_.empty(), ErrorKind::kEmptyBank, "reference bank has no views");
  const std::size_t m = latents_.front().rows();
  require(m >= 2, ErrorKind::kEmptyBank, "reference bank needs at least 2 rows");
  for (const Matrix& z : latents_) {
    require(z.rows() == m && z.cols() == latents_.front().cols(), ErrorKind::kEmptyBank,
            "reference bank views are not aligned");
    unit_.push_back(unit_rows(z, nullptr));
  }
}

std::vector<std::size_t> reference_bank_rows(std::size_t n, std::uint64_t seed) {
  SeededRng rng(seed);
  std::vector<std::size_t> perm = rng.permutation(n);
  perm.resize(std::min(n, kReferenceBankSize));
  std::sort(perm.begin(), perm.end());
  return perm;
}

Matrix contrastive_score(const ReferenceBank& bank, std::span<const Matrix> latents, double tau,
                         InfoNceMode mode) {
  require(bank.size() >= 2, ErrorKind::kEmptyBank, "reference bank is empty");
  const std::size_t kv = latents.size();
  require(kv >= 2 && kv == bank.num_views(), ErrorKind::kDimensionError,
          "latent views do not match the reference bank");
  require(tau > 0.0, ErrorKind::kConfigError, "temperature must be > 0");
  const std::size_t n = latents.front().rows();
  const std::size_t m = bank.size();
  for (const Matrix& z : latents) {
    require(z.rows() == n && z.cols() == bank.latents(0).cols(), ErrorKind::kDimensionError,
            "latent shape does not match the reference bank");
  }

  Matrix out(n, kv);
  std::vector<std::size_t> idx;
  std::vector<double> terms;
  terms.reserve(2 * m + 1);
  const double inv_k = 1.0 / static_cast<double>(kv - 1);
  for (std::size_t start = 0; start < n; start += kScoreChunk) {
    const std::size_t end = std::min(n, start + kScoreChunk);
    const std::size_t t = end - start;
    idx.resize(t);
    for (std::size_t r = start; r < end; ++r) idx[r - start] = r;
    std::vector<Matrix> unit;
    for (std::size_t k = 0; k < kv; ++k) unit.push_back(unit_rows(latents[k].select_rows(idx), nullptr));

    for (std::size_t j = 0; j < kv; ++j) {
      // sims[c] = anchor rows of view j against bank view c.
      std::vector<Matrix> sims;
      for (std::size_t c = 0; c < kv; ++c) {
        Matrix s(t, m);
        gemm(simd::Trans::kNo, simd::Trans::kYes, 1.0 / tau, unit[j], bank.unit_[c], 0.0, s);
        sims.push_back(std::move(s));
      }
      for (std::size_t k = 0; k < kv; ++k) {
        if (k == j) continue;
        for (std::size_t r = 0; r < t; ++r) {
          const double pos = dot(unit[j].row(r), unit[k].row(r)) / tau;
          terms.clear();
          const auto cross = sims[k].row(r);
          const auto self = sims[j].row(r);
          terms.insert(terms.end(), cross.begin(), cross.end());
          terms.insert(terms.end(), self.begin(), self.end());
          if (mode == InfoNceMode::kStandard) terms.push_back(pos);
          out(start + r, k) -= (pos - logsumexp(terms)) * inv_k;
        }
      }
    }
  }
  count_evaluations(static_cast<std::uint64_t>(n * kv * (kv - 1)));
  return out;
}

}  // namespace mvad
