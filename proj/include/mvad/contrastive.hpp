#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mvad/linalg.hpp"

namespace mvad {

// kFaithful omits the positive pair from the denominator, so p may exceed 1
// and the loss may go negative. kStandard is the usual InfoNCE.
enum class InfoNceMode { kFaithful, kStandard };

struct MatchBatch {
  std::vector<Matrix> latents;  // K matrices, B x D, shared sample order
  double tau = 0.5;
};

// log p_i^(j,k): anchor z_i^(j), positive z_i^(k), negatives z_m^(k) and
// z_n^(j) for m, n != i. BatchTooSmall if B < 2.
double log_match_prob(const MatchBatch& batch, std::size_t j, std::size_t k, std::size_t i,
                      InfoNceMode mode);
double match_prob(const MatchBatch& batch, std::size_t j, std::size_t k, std::size_t i,
                  InfoNceMode mode);

// Dense K x K x B table over ordered view pairs; the j == k slots stay 0.
class PairTable {
 public:
  PairTable() = default;
  PairTable(std::size_t k, std::size_t b) : k_(k), b_(b), values_(k * k * b, 0.0) {}

  std::size_t num_views() const { return k_; }
  std::size_t batch() const { return b_; }
  double& at(std::size_t j, std::size_t k, std::size_t i) { return values_[(j * k_ + k) * b_ + i]; }
  double at(std::size_t j, std::size_t k, std::size_t i) const {
    return values_[(j * k_ + k) * b_ + i];
  }

 private:
  std::size_t k_ = 0;
  std::size_t b_ = 0;
  std::vector<double> values_;
};

inline constexpr double kMinShiftedTau = 2.0 / 700.0;

struct ContrastiveCache {
  double tau = 0.5;
  InfoNceMode mode = InfoNceMode::kFaithful;
  std::vector<Matrix> unit;                // row-normalised latents per view
  std::vector<std::vector<double>> norms;  // row norms per view
  std::vector<Matrix> sims;                // K*K blocks, unit_j unit_k^T / tau
  // Similarities never exceed 1/tau, so exp(sim - 1/tau) cannot overflow and
  // for tau >= kMinShiftedTau cannot underflow to zero either. When that
  // holds, `exps` caches these K*K blocks and `denom` the shifted
  // denominators; otherwise both stay empty and the exact path is used.
  std::vector<Matrix> exps;
  PairTable denom;
  PairTable loss;                          // -log p_i^(j,k)

  const Matrix& sim(std::size_t j, std::size_t k) const { return sims[j * unit.size() + k]; }
  const Matrix& expo(std::size_t j, std::size_t k) const { return exps[j * unit.size() + k]; }
  bool shifted() const { return !exps.empty(); }
};

// Losses for every ordered pair j != k over one mini-batch.
ContrastiveCache contrastive_forward(std::span<const Matrix> latents, double tau,
                                     InfoNceMode mode);
PairTable contrastive_loss(const MatchBatch& batch, InfoNceMode mode);

// Gradient of sum_{j != k, i} coeff(j,k,i) * loss(j,k,i) with respect to each
// view's raw latents.
std::vector<Matrix> contrastive_backward(const ContrastiveCache& cache, const PairTable& coeff);

// Number of matching probabilities evaluated since process start.
std::uint64_t match_prob_evaluations();

// Fixed set of training latents supplying negatives at inference.
class ReferenceBank {
 public:
  ReferenceBank() = default;
  // EmptyBank unless every view holds the same M >= 2 rows.
  explicit ReferenceBank(std::vector<Matrix> latents);

  std::size_t num_views() const { return latents_.size(); }
  std::size_t size() const { return latents_.empty() ? 0 : latents_.front().rows(); }
  const Matrix& latents(std::size_t k) const { return latents_[k]; }

 private:
  std::vector<Matrix> latents_;
  std::vector<Matrix> unit_;
  friend Matrix contrastive_score(const ReferenceBank&, std::span<const Matrix>, double,
                                  InfoNceMode);
};

// Rows drawn without replacement, min(1024, N) of them, in ascending order.
inline constexpr std::size_t kReferenceBankSize = 1024;
std::vector<std::size_t> reference_bank_rows(std::size_t n, std::uint64_t seed);

// N x K matrix of s_con: -1/(K-1) sum_{j != k} log p^(j,k), each sample
// scored alone against the bank. Rows are independent of each other.
Matrix contrastive_score(const ReferenceBank& bank, std::span<const Matrix> latents, double tau,
                         InfoNceMode mode);

}  // namespace mvad
