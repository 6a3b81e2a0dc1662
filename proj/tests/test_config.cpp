#include <gtest/gtest.h>

#include <fstream>
#include <string>

#include "mvad/config.hpp"
#include "support.hpp"

namespace mvad {
namespace {

using testing::error_kind_of;
using testing::TempDir;

TEST(TrainConfig, DefaultsAreValid) {
  const TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.hidden_dims, (std::vector<std::size_t>{512, 256}));
  EXPECT_EQ(cfg.latent_dim, 128u);
  EXPECT_TRUE(cfg.faithful_infonce);
  EXPECT_FALSE(cfg.full_batch());
}

TEST(TrainConfig, ParsesEveryFieldAndKeepsDefaults) {
  const TrainConfig cfg = parse_train_config(
      R"({"stage1_epochs": 3, "tau": 0.07, "batch_size": "full", "hidden_dims": [32, 16],
          "faithful_infonce": false, "seed": 18446744073709551615, "weight_decay": 1e-4})",
      "mem");
  EXPECT_EQ(cfg.stage1_epochs, 3u);
  EXPECT_EQ(cfg.tau, 0.07);
  EXPECT_TRUE(cfg.full_batch());
  EXPECT_EQ(cfg.hidden_dims, (std::vector<std::size_t>{32, 16}));
  EXPECT_FALSE(cfg.faithful_infonce);
  EXPECT_EQ(cfg.seed, 18446744073709551615ull);
  EXPECT_EQ(cfg.weight_decay, 1e-4);
  EXPECT_EQ(cfg.stage2_epochs, TrainConfig{}.stage2_epochs);
  EXPECT_EQ(cfg.lambda, TrainConfig{}.lambda);
}

TEST(TrainConfig, JsonRoundTripIsExact) {
  TrainConfig cfg;
  cfg.backbone_lr = 0.1 + 0.2;
  cfg.tau = 1.0 / 3.0;
  cfg.batch_size = 0;
  cfg.seed = 99;
  const TrainConfig back = parse_train_config(train_config_json(cfg), "mem");
  EXPECT_EQ(train_config_json(back), train_config_json(cfg));
  EXPECT_EQ(back.backbone_lr, cfg.backbone_lr);
  EXPECT_EQ(back.tau, cfg.tau);
  EXPECT_EQ(config_digest(back), config_digest(cfg));
}

TEST(TrainConfig, DigestTracksContent) {
  TrainConfig a;
  TrainConfig b;
  EXPECT_EQ(config_digest(a), config_digest(b));
  EXPECT_EQ(config_digest(a).size(), 16u);
  b.lambda = 0.5;
  EXPECT_NE(config_digest(a), config_digest(b));
}

TEST(TrainConfig, RejectsBadInput) {
  const char* bad[] = {
      R"({"stage1_epochs": 0})",       R"({"tau": 0})",          R"({"tau": -1})",
      R"({"lambda": -0.5})",           R"({"batch_size": 1})",   R"({"batch_size": "half"})",
      R"({"batch_size": -3})",         R"({"latent_dim": 2.5})", R"({"hidden_dims": [8, 0]})",
      R"({"backbone_lr": "fast"})",    R"({"epochs": 10})",      R"([1, 2])",
      R"({"faithful_infonce": 1})",    "{not json",              R"({"beta": -1})",
  };
  for (const char* text : bad) {
    EXPECT_EQ(error_kind_of([&] { parse_train_config(text, "mem"); }), ErrorKind::kConfigError)
        << text;
  }
}

TEST(TrainConfig, LoadsFromFile) {
  TempDir dir;
  {
    std::ofstream out(dir / "cfg.json");
    out << R"({"lambda": 0.25})";
  }
  EXPECT_EQ(load_train_config(dir / "cfg.json").lambda, 0.25);
  EXPECT_EQ(error_kind_of([&] { load_train_config(dir / "absent.json"); }),
            ErrorKind::kConfigError);
}

TEST(Variant, ParsesBothSpellings) {
  EXPECT_EQ(parse_variant("full"), Variant::kFull);
  EXPECT_EQ(parse_variant("no_aa"), Variant::kNoAa);
  EXPECT_EQ(parse_variant("no-cc"), Variant::kNoCc);
  EXPECT_EQ(parse_variant("no_ae"), Variant::kNoAe);
  for (Variant v : {Variant::kFull, Variant::kNoAa, Variant::kNoCc, Variant::kNoAe}) {
    EXPECT_EQ(parse_variant(variant_name(v)), v);
  }
  EXPECT_EQ(error_kind_of([] { parse_variant("nocc"); }), ErrorKind::kConfigError);
}

}  // namespace
}  // namespace mvad
