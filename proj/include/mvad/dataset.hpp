#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mvad/linalg.hpp"

namespace mvad {

struct ViewSpec {
  std::string name;
  std::size_t dim = 0;
  std::string path;          // relative to the manifest directory
  std::string source_model;  // free text, e.g. the embedding model name
};

struct Manifest {
  std::vector<ViewSpec> views;
  std::optional<std::string> labels_path;
  std::optional<std::string> ids_path;
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::string& relative) const {
    return base_dir / relative;
  }
};

// K views sharing one sample order.
struct MultiViewDataset {
  std::vector<std::string> view_names;
  std::vector<Matrix> views;
  std::optional<std::vector<int>> labels;  // 0 = normal, 1 = anomaly
  std::vector<std::string> sample_ids;

  std::size_t num_views() const { return views.size(); }
  std::size_t num_samples() const { return views.empty() ? 0 : views.front().rows(); }

  // Shared N across views, matching ids/labels, labels in {0,1}.
  void validate() const;
  MultiViewDataset subset(std::span<const std::size_t> indices) const;
};

// ---------------------------------------------------------------------------
// Matrix files. MVEB layout (little-endian, no padding, no trailer):
//   0..3   "MVEB"
//   4..7   u32 version: 1 = float32 payload, 2 = float64 payload
//   8..15  u64 rows
//   16..23 u64 cols
//   24..   rows*cols floats, row-major
// Version 1 is the canonical embedding format; model parameters are written
// as version 2 so persisted models reload bit-exactly.
// ---------------------------------------------------------------------------

enum class MvebPrecision : std::uint32_t { kFloat32 = 1, kFloat64 = 2 };

void write_matrix(const std::filesystem::path& path, const Matrix& m,
                  MvebPrecision precision = MvebPrecision::kFloat32);
Matrix load_matrix(const std::filesystem::path& path);
// rows/cols without reading the payload (CSV files are parsed in full).
std::pair<std::size_t, std::size_t> matrix_shape(const std::filesystem::path& path);

Matrix parse_csv_matrix(const std::string& text, const std::string& origin);

std::vector<int> load_labels(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, const std::vector<int>& labels);
std::vector<std::string> load_ids(const std::filesystem::path& path);
void write_ids(const std::filesystem::path& path, const std::vector<std::string>& ids);

Manifest load_manifest(const std::filesystem::path& path);
MultiViewDataset load_dataset(const Manifest& manifest);
MultiViewDataset load_dataset(const std::filesystem::path& manifest_path);

// Writes manifest.json, one MVEB file per view, labels.txt (if present) and
// ids.txt into `dir`. Returns the manifest path.
std::filesystem::path save_dataset(const MultiViewDataset& ds, const std::filesystem::path& dir,
                                   const std::vector<std::string>& source_models = {});

// ---------------------------------------------------------------------------
// Min-max scaling to [0, 1], fit on training data only.
// ---------------------------------------------------------------------------

struct MinMaxScaler {
  std::vector<std::vector<double>> mins;  // per view, per dimension
  std::vector<std::vector<double>> maxs;

  Matrix transform(std::size_t view, const Matrix& x) const;
};

MinMaxScaler fit_scaler(const MultiViewDataset& train);
MultiViewDataset apply_scaler(const MinMaxScaler& scaler, const MultiViewDataset& ds);

// ---------------------------------------------------------------------------
// One-class split with optional contamination of the training set.
// ---------------------------------------------------------------------------

struct SplitSpec {
  double train_fraction_of_normals = 0.70;
  std::uint64_t seed = 0;
  double injected_anomaly_ratio = 0.0;
};

struct SplitIndices {
  std::vector<std::size_t> train;  // ascending
  std::vector<std::size_t> test;   // ascending
  std::size_t injected = 0;
};

SplitIndices one_class_split_indices(const std::vector<int>& labels, const SplitSpec& spec);
std::pair<MultiViewDataset, MultiViewDataset> one_class_split(const MultiViewDataset& ds,
                                                              const SplitSpec& spec);

}  // namespace mvad
