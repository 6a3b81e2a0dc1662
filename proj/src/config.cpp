#include "mvad/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mvad/digest.hpp"
#include "mvad/errors.hpp"

namespace mvad {
namespace {

using nlohmann::json;

template <typename T>
T read_field(const json& j, const char* key, const std::string& origin) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorKind::kConfigError, origin + ": field '" + key + "' has the wrong type");
  }
}

std::size_t read_count(const json& j, const char* key, const std::string& origin) {
  const json& v = j.at(key);
  require(v.is_number_integer() && v.get<long long>() >= 0, ErrorKind::kConfigError,
          origin + ": field '" + key + "' must be a non-negative integer");
  return v.get<std::size_t>();
}

}  // namespace

Variant parse_variant(std::string_view text) {
  std::string s(text);
  for (char& c : s) {
    if (c == '-') c = '_';
  }
  if (s == "full") return Variant::kFull;
  if (s == "no_aa") return Variant::kNoAa;
  if (s == "no_cc") return Variant::kNoCc;
  if (s == "no_ae") return Variant::kNoAe;
  fail(ErrorKind::kConfigError,
       "unknown variant '" + std::string(text) + "' (full|no_aa|no_cc|no_ae)");
}

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::kFull:
      return "full";
    case Variant::kNoAa:
      return "no_aa";
    case Variant::kNoCc:
      return "no_cc";
    case Variant::kNoAe:
      return "no_ae";
  }
  return "full";
}

void TrainConfig::validate() const {
  auto check = [](bool ok, const char* field, const char* rule) {
    require(ok, ErrorKind::kConfigError, std::string("config field '") + field + "' " + rule);
  };
  check(stage1_epochs >= 1, "stage1_epochs", "must be >= 1");
  check(stage2_epochs >= 1, "stage2_epochs", "must be >= 1");
  check(backbone_lr > 0.0 && std::isfinite(backbone_lr), "backbone_lr", "must be > 0");
  check(allocation_lr > 0.0 && std::isfinite(allocation_lr), "allocation_lr", "must be > 0");
  check(lambda >= 0.0 && std::isfinite(lambda), "lambda", "must be >= 0");
  check(tau > 0.0 && std::isfinite(tau), "tau", "must be > 0");
  check(alpha >= 0.0 && std::isfinite(alpha), "alpha", "must be >= 0");
  check(beta >= 0.0 && std::isfinite(beta), "beta", "must be >= 0");
  check(weight_decay >= 0.0 && std::isfinite(weight_decay), "weight_decay", "must be >= 0");
  check(batch_size == 0 || batch_size >= 2, "batch_size", "must be >= 2 or \"full\"");
  for (std::size_t h : hidden_dims) check(h >= 1, "hidden_dims", "entries must be >= 1");
  check(latent_dim >= 1, "latent_dim", "must be >= 1");
  check(pca_dim >= 1, "pca_dim", "must be >= 1");
  check(estimator_hidden >= 1, "estimator_hidden", "must be >= 1");
}

TrainConfig parse_train_config(const std::string& json_text, const std::string& origin) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::kConfigError, origin + ": invalid JSON: " + e.what());
  }
  require(j.is_object(), ErrorKind::kConfigError, origin + ": config must be a JSON object");

  TrainConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "stage1_epochs") {
      cfg.stage1_epochs = read_count(j, "stage1_epochs", origin);
    } else if (key == "stage2_epochs") {
      cfg.stage2_epochs = read_count(j, "stage2_epochs", origin);
    } else if (key == "backbone_lr") {
      cfg.backbone_lr = read_field<double>(j, "backbone_lr", origin);
    } else if (key == "allocation_lr") {
      cfg.allocation_lr = read_field<double>(j, "allocation_lr", origin);
    } else if (key == "batch_size") {
      if (value.is_string()) {
        require(value.get<std::string>() == "full", ErrorKind::kConfigError,
                origin + ": field 'batch_size' must be an integer or \"full\"");
        cfg.batch_size = 0;
      } else {
        cfg.batch_size = read_count(j, "batch_size", origin);
        require(cfg.batch_size >= 2, ErrorKind::kConfigError,
                origin + ": field 'batch_size' must be >= 2 or \"full\"");
      }
    } else if (key == "lambda") {
      cfg.lambda = read_field<double>(j, "lambda", origin);
    } else if (key == "tau") {
      cfg.tau = read_field<double>(j, "tau", origin);
    } else if (key == "alpha") {
      cfg.alpha = read_field<double>(j, "alpha", origin);
    } else if (key == "beta") {
      cfg.beta = read_field<double>(j, "beta", origin);
    } else if (key == "weight_decay") {
      cfg.weight_decay = read_field<double>(j, "weight_decay", origin);
    } else if (key == "seed") {
      cfg.seed = read_field<std::uint64_t>(j, "seed", origin);
    } else if (key == "faithful_infonce") {
      cfg.faithful_infonce = read_field<bool>(j, "faithful_infonce", origin);
    } else if (key == "hidden_dims") {
      cfg.hidden_dims = read_field<std::vector<std::size_t>>(j, "hidden_dims", origin);
    } else if (key == "latent_dim") {
      cfg.latent_dim = read_count(j, "latent_dim", origin);
    } else if (key == "pca_dim") {
      cfg.pca_dim = read_count(j, "pca_dim", origin);
    } else if (key == "estimator_hidden") {
      cfg.estimator_hidden = read_count(j, "estimator_hidden", origin);
    } else {
      fail(ErrorKind::kConfigError, origin + ": unknown config key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kConfigError, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str(), path.string());
}

std::string train_config_json(const TrainConfig& cfg, int indent) {
  json j;
  j["stage1_epochs"] = cfg.stage1_epochs;
  j["stage2_epochs"] = cfg.stage2_epochs;
  j["backbone_lr"] = cfg.backbone_lr;
  j["allocation_lr"] = cfg.allocation_lr;
  if (cfg.full_batch()) {
    j["batch_size"] = "full";
  } else {
    j["batch_size"] = cfg.batch_size;
  }
  j["lambda"] = cfg.lambda;
  j["tau"] = cfg.tau;
  j["alpha"] = cfg.alpha;
  j["beta"] = cfg.beta;
  j["weight_decay"] = cfg.weight_decay;
  j["seed"] = cfg.seed;
  j["faithful_infonce"] = cfg.faithful_infonce;
  j["hidden_dims"] = cfg.hidden_dims;
  j["latent_dim"] = cfg.latent_dim;
  j["pca_dim"] = cfg.pca_dim;
  j["estimator_hidden"] = cfg.estimator_hidden;
  return j.dump(indent);
}

std::string config_digest(const TrainConfig& cfg) {
  return fnv1a_hex(train_config_json(cfg, -1));
}

}  // namespace mvad
