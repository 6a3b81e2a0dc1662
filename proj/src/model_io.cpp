#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mvad/errors.hpp"
#include "mvad/trainer.hpp"

namespace mvad {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kModelFormat = "mvad-model";
constexpr int kModelVersion = 1;

Matrix as_row(std::span<const double> v) {
  return Matrix(1, v.size(), std::vector<double>(v.begin(), v.end()));
}

void put(const fs::path& root, const fs::path& rel, const Matrix& m, json& index) {
  const fs::path full = root / rel;
  fs::create_directories(full.parent_path());
  write_matrix(full, m, MvebPrecision::kFloat64);
  index.push_back(rel.generic_string());
}

Matrix get(const fs::path& root, const fs::path& rel) {
  const fs::path full = root / rel;
  require(fs::exists(full), ErrorKind::kModelIncomplete, "missing model file " + full.string());
  return load_matrix(full);
}

void get_into(const fs::path& root, const fs::path& rel, std::span<double> dst) {
  const Matrix m = get(root, rel);
  require(m.size() == dst.size(), ErrorKind::kModelIncomplete,
          "model file " + (root / rel).string() + " has " + std::to_string(m.size()) +
              " entries, expected " + std::to_string(dst.size()));
  std::copy(m.values().begin(), m.values().end(), dst.begin());
}

std::vector<double> get_vector(const fs::path& root, const fs::path& rel, std::size_t n) {
  std::vector<double> v(n);
  get_into(root, rel, v);
  return v;
}

void put_tensors(const fs::path& root, const fs::path& prefix, std::vector<TensorRef> refs,
                 json& index) {
  for (const TensorRef& t : refs) {
    put(root, prefix / t.layer / (t.name + ".mveb"), as_row(t.data), index);
  }
}

void get_tensors(const fs::path& root, const fs::path& prefix, std::vector<TensorRef> refs) {
  for (const TensorRef& t : refs) get_into(root, prefix / t.layer / (t.name + ".mveb"), t.data);
}

template <typename T>
T meta_field(const json& meta, const char* key) {
  try {
    return meta.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorKind::kModelIncomplete, std::string("meta.json lacks a valid '") + key + "'");
  }
}

}  // namespace

void save_model(const TrainedModel& model, const std::filesystem::path& dir) {
  fs::create_directories(dir);
  TrainedModel m = model;  // views into tensors need mutable access
  json index = json::array();

  json views = json::array();
  for (std::size_t k = 0; k < m.num_views(); ++k) {
    const std::string& name = m.view_names[k];
    const fs::path v(name);
    views.push_back({{"name", name}, {"dim", m.autoencoders[k].input_dim()}});
    put_tensors(dir, v, parameter_views(m.autoencoders[k]), index);
    put_tensors(dir, v, buffer_views(m.autoencoders[k]), index);
    put(dir, v / "scaler" / "min.mveb", as_row(m.scaler.mins[k]), index);
    put(dir, v / "scaler" / "max.mveb", as_row(m.scaler.maxs[k]), index);
    const PcaModel& pca = m.allocation.aligners[k];
    put(dir, v / "pca" / "mean.mveb", as_row(pca.mean), index);
    put(dir, v / "pca" / "components.mveb", pca.components, index);
    put(dir, v / "pca" / "explained_variance.mveb", as_row(pca.explained_variance), index);
    put(dir, v / "bank" / "latents.mveb", m.bank.latents(k), index);
  }
  put_tensors(dir, "_allocation", parameter_views(m.allocation.estimator), index);

  const AutoencoderShape shape = m.autoencoders.front().shape();
  json meta;
  meta["format"] = kModelFormat;
  meta["version"] = kModelVersion;
  meta["variant"] = std::string(variant_name(m.variant));
  meta["views"] = views;
  meta["config"] = json::parse(train_config_json(m.config));
  meta["seeds"] = {{"run", m.config.seed}};
  meta["architecture"] = {{"hidden_dims", shape.hidden_dims},
                          {"latent_dim", shape.latent_dim},
                          {"aligned_dim", m.allocation.aligned_dim()},
                          {"estimator_hidden", m.allocation.estimator.hidden_dim()}};
  meta["bank"] = {{"rows", m.bank.size()}};
  meta["estimator_active"] = m.allocation.estimator_active;
  meta["loss_history"] = {{"stage1", m.stage1_history}, {"stage2", m.stage2_history}};
  meta["tensors"] = index;

  std::ofstream out(dir / "meta.json", std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::kFormatError,
          "cannot write " + (dir / "meta.json").string());
  out << meta.dump(2) << '\n';
}

TrainedModel load_model(const std::filesystem::path& dir) {
  const fs::path meta_path = dir / "meta.json";
  require(fs::exists(meta_path), ErrorKind::kModelIncomplete,
          "model directory " + dir.string() + " has no meta.json");
  json meta;
  {
    std::ifstream in(meta_path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    try {
      meta = json::parse(ss.str());
    } catch (const json::parse_error& e) {
      fail(ErrorKind::kFormatError, meta_path.string() + ": " + e.what());
    }
  }
  require(meta_field<std::string>(meta, "format") == kModelFormat &&
              meta_field<int>(meta, "version") == kModelVersion,
          ErrorKind::kFormatError, meta_path.string() + " is not a supported model");

  TrainedModel m;
  m.variant = parse_variant(meta_field<std::string>(meta, "variant"));
  m.config = parse_train_config(meta.at("config").dump(), meta_path.string());
  const json arch = meta_field<json>(meta, "architecture");
  const auto hidden = meta_field<std::vector<std::size_t>>(arch, "hidden_dims");
  const auto latent = meta_field<std::size_t>(arch, "latent_dim");
  const auto aligned_dim = meta_field<std::size_t>(arch, "aligned_dim");
  const auto est_hidden = meta_field<std::size_t>(arch, "estimator_hidden");

  const json views = meta_field<json>(meta, "views");
  require(views.is_array() && views.size() >= 2, ErrorKind::kModelIncomplete,
          "meta.json must list at least 2 views");
  std::vector<Matrix> bank;
  for (const json& v : views) {
    const auto name = meta_field<std::string>(v, "name");
    const auto dim = meta_field<std::size_t>(v, "dim");
    const fs::path p(name);
    m.view_names.push_back(name);

    AutoencoderShape shape;
    shape.input_dim = dim;
    shape.hidden_dims = hidden;
    shape.latent_dim = latent;
    ViewAutoencoder ae = make_autoencoder(name, shape, 0);
    get_tensors(dir, p, parameter_views(ae));
    get_tensors(dir, p, buffer_views(ae));
    m.autoencoders.push_back(std::move(ae));

    m.scaler.mins.push_back(get_vector(dir, p / "scaler" / "min.mveb", dim));
    m.scaler.maxs.push_back(get_vector(dir, p / "scaler" / "max.mveb", dim));

    PcaModel pca;
    pca.mean = get_vector(dir, p / "pca" / "mean.mveb", dim);
    pca.components = get(dir, p / "pca" / "components.mveb");
    require(pca.components.rows() == dim && pca.components.cols() == aligned_dim,
            ErrorKind::kModelIncomplete, "PCA components of view '" + name + "' have the wrong shape");
    pca.explained_variance = get_vector(dir, p / "pca" / "explained_variance.mveb", aligned_dim);
    m.allocation.aligners.push_back(std::move(pca));

    Matrix z = get(dir, p / "bank" / "latents.mveb");
    require(z.cols() == latent, ErrorKind::kModelIncomplete,
            "bank latents of view '" + name + "' have the wrong width");
    bank.push_back(std::move(z));
  }
  m.bank = ReferenceBank(std::move(bank));
  m.allocation.estimator = zero_estimator(aligned_dim, est_hidden);
  get_tensors(dir, "_allocation", parameter_views(m.allocation.estimator));
  m.allocation.estimator_active = meta_field<bool>(meta, "estimator_active");

  const json history = meta_field<json>(meta, "loss_history");
  m.stage1_history = meta_field<std::vector<double>>(history, "stage1");
  m.stage2_history = meta_field<std::vector<double>>(history, "stage2");
  return m;
}

}  // namespace mvad
