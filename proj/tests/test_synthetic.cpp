#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <vector>

#include "mvad/synthetic.hpp"
#include "support.hpp"

namespace mvad {
namespace {

using testing::error_kind_of;

Eigen::MatrixXd rows_of(const Matrix& m, std::size_t begin, std::size_t end) {
  Eigen::MatrixXd out(end - begin, m.cols());
  for (std::size_t r = begin; r < end; ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out(r - begin, c) = m(r, c);
  }
  return out;
}

Eigen::MatrixXd centered(const Eigen::MatrixXd& x) { return x.rowwise() - x.colwise().mean(); }

Eigen::MatrixXd covariance(const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd c = centered(x);
  return c.transpose() * c / static_cast<double>(x.rows() - 1);
}

TEST(Synthetic, SameConfigIsBitIdentical) {
  SyntheticConfig cfg;
  cfg.n_normal = 50;
  cfg.n_anomaly = 7;
  cfg.view_dim = 9;
  cfg.seed = 12;
  const MultiViewDataset a = generate_synthetic(cfg);
  const MultiViewDataset b = generate_synthetic(cfg);
  for (std::size_t k = 0; k < cfg.num_views; ++k) {
    EXPECT_EQ(0, std::memcmp(a.views[k].values().data(), b.views[k].values().data(),
                             a.views[k].size() * sizeof(double)));
  }
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.sample_ids, b.sample_ids);
  cfg.seed = 13;
  EXPECT_NE(generate_synthetic(cfg).views[0], a.views[0]);
}

TEST(Synthetic, LayoutLabelsAndIds) {
  SyntheticConfig cfg;
  cfg.n_normal = 10;
  cfg.n_anomaly = 5;
  cfg.view_dim = 4;
  const MultiViewDataset ds = generate_synthetic(cfg);
  ds.validate();
  ASSERT_EQ(ds.num_views(), 3u);
  ASSERT_EQ(ds.num_samples(), 15u);
  for (std::size_t i = 0; i < 15; ++i) EXPECT_EQ((*ds.labels)[i], i < 10 ? 0 : 1);
  EXPECT_EQ(ds.sample_ids[0], "n000000");
  EXPECT_EQ(ds.sample_ids[10], "off000000");
  EXPECT_EQ(ds.sample_ids[11], "off000001");
  EXPECT_EQ(ds.sample_ids[12], "swap000002");
}

TEST(Synthetic, ViewSwapMarginalsMatchNormals) {
  SyntheticConfig cfg;
  cfg.num_views = 2;
  cfg.view_dim = 6;
  cfg.latent_rank = 4;
  cfg.n_normal = 4000;
  cfg.n_anomaly = 4000;
  cfg.mode = AnomalyMode::kViewSwap;
  cfg.seed = 3;
  const MultiViewDataset ds = generate_synthetic(cfg);
  for (std::size_t k = 0; k < 2; ++k) {
    const Eigen::MatrixXd normal = rows_of(ds.views[k], 0, 4000);
    const Eigen::MatrixXd swap = rows_of(ds.views[k], 4000, 8000);
    const Eigen::MatrixXd cn = covariance(normal);
    const Eigen::MatrixXd cs = covariance(swap);
    for (Eigen::Index c = 0; c < cn.cols(); ++c) {
      // Difference of two means, each with standard error sqrt(var / n).
      const double se = std::sqrt(2.0 * cn(c, c) / 4000.0);
      EXPECT_NEAR(normal.col(c).mean(), swap.col(c).mean(), 5.0 * se);
    }
    EXPECT_LT((cn - cs).norm(), 0.1 * cn.norm());
  }
  // Cross-view covariance survives for normals and vanishes for swaps.
  const Eigen::MatrixXd n1 = centered(rows_of(ds.views[0], 0, 4000));
  const Eigen::MatrixXd n2 = centered(rows_of(ds.views[1], 0, 4000));
  const Eigen::MatrixXd s1 = centered(rows_of(ds.views[0], 4000, 8000));
  const Eigen::MatrixXd s2 = centered(rows_of(ds.views[1], 4000, 8000));
  const double cross_normal = (n1.transpose() * n2).norm() / 3999.0;
  const double cross_swap = (s1.transpose() * s2).norm() / 3999.0;
  EXPECT_GT(cross_normal, 0.5);
  EXPECT_LT(cross_swap, 0.1 * cross_normal);
}

// Latents recovered per view by a rank-r SVD of the normals, then mapped
// from view 0 onto view 1 by least squares fitted on the normals.
TEST(Synthetic, ViewSwapBreaksCrossViewAgreement) {
  for (std::uint64_t seed : {0ULL, 1ULL, 2ULL}) {
    SyntheticConfig cfg;
    cfg.num_views = 2;
    cfg.view_dim = 32;
    cfg.latent_rank = 4;
    cfg.noise = 0.1;
    cfg.n_normal = 1000;
    cfg.n_anomaly = 300;
    cfg.mode = AnomalyMode::kViewSwap;
    cfg.seed = seed;
    const MultiViewDataset ds = generate_synthetic(cfg);
    std::vector<Eigen::MatrixXd> z;
    for (std::size_t k = 0; k < 2; ++k) {
      const Eigen::MatrixXd normal = rows_of(ds.views[k], 0, 1000);
      const Eigen::RowVectorXd mu = normal.colwise().mean();
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(normal.rowwise() - mu, Eigen::ComputeThinV);
      const Eigen::MatrixXd basis = svd.matrixV().leftCols(4);
      z.push_back((rows_of(ds.views[k], 0, 1300).rowwise() - mu) * basis);
    }
    const Eigen::MatrixXd map =
        z[0].topRows(1000).colPivHouseholderQr().solve(z[1].topRows(1000));
    const Eigen::MatrixXd pred = z[0] * map;
    auto mean_cos = [&](Eigen::Index begin, Eigen::Index end) {
      double s = 0.0;
      for (Eigen::Index i = begin; i < end; ++i) {
        s += pred.row(i).dot(z[1].row(i)) / (pred.row(i).norm() * z[1].row(i).norm());
      }
      return s / static_cast<double>(end - begin);
    };
    const double normal_cos = mean_cos(0, 1000);
    const double swap_cos = mean_cos(1000, 1300);
    EXPECT_GT(normal_cos - swap_cos, 0.2) << "seed " << seed;
    EXPECT_GT(normal_cos, 0.9) << "seed " << seed;
  }
}

TEST(Synthetic, OffManifoldNormsAreThreeTimesNormal) {
  SyntheticConfig cfg;
  cfg.view_dim = 16;
  cfg.latent_rank = 8;
  cfg.noise = 0.0;
  cfg.n_normal = 1000;
  cfg.n_anomaly = 1000;
  cfg.mode = AnomalyMode::kOffManifold;
  cfg.seed = 9;
  const MultiViewDataset ds = generate_synthetic(cfg);
  for (const Matrix& v : ds.views) {
    double normal = 0.0, off = 0.0;
    for (std::size_t i = 0; i < 1000; ++i) {
      normal += std::sqrt(rows_of(v, i, i + 1).squaredNorm());
      off += std::sqrt(rows_of(v, 1000 + i, 1001 + i).squaredNorm());
    }
    EXPECT_NEAR(off / normal, 3.0, 0.15);
  }
}

TEST(Synthetic, ZeroNoiseNormalsLieInRankRSubspace) {
  SyntheticConfig cfg;
  cfg.view_dim = 12;
  cfg.latent_rank = 3;
  cfg.noise = 0.0;
  cfg.n_normal = 100;
  cfg.n_anomaly = 0;
  const MultiViewDataset ds = generate_synthetic(cfg);
  for (const Matrix& v : ds.views) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(rows_of(v, 0, 100));
    const auto s = svd.singularValues();
    EXPECT_LT(s(3), 1e-10 * s(0));
  }
}

TEST(Synthetic, ModeNamesAndConfigErrors) {
  for (AnomalyMode m : {AnomalyMode::kOffManifold, AnomalyMode::kViewSwap, AnomalyMode::kMixed}) {
    EXPECT_EQ(parse_anomaly_mode(anomaly_mode_name(m)), m);
  }
  EXPECT_EQ(error_kind_of([] { parse_anomaly_mode("swap"); }), ErrorKind::kConfigError);
  SyntheticConfig cfg;
  cfg.num_views = 1;
  EXPECT_EQ(error_kind_of([&] { generate_synthetic(cfg); }), ErrorKind::kConfigError);
  cfg = {};
  cfg.latent_rank = 0;
  EXPECT_EQ(error_kind_of([&] { generate_synthetic(cfg); }), ErrorKind::kConfigError);
  cfg = {};
  cfg.n_normal = 0;
  EXPECT_EQ(error_kind_of([&] { generate_synthetic(cfg); }), ErrorKind::kConfigError);
  cfg = {};
  cfg.noise = -1.0;
  EXPECT_EQ(error_kind_of([&] { generate_synthetic(cfg); }), ErrorKind::kConfigError);
}

}  // namespace
}  // namespace mvad
