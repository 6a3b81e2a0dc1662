#include "mvad/dataset.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mvad/errors.hpp"
#include "mvad/rng.hpp"

namespace mvad {
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr char kMagic[4] = {'M', 'V', 'E', 'B'};
constexpr std::size_t kHeaderBytes = 24;

template <typename T>
T from_le(const unsigned char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    std::reverse(b, b + sizeof(T));
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

template <typename T>
void append_le(std::string& out, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  out.append(reinterpret_cast<const char*>(b), sizeof(T));
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kFormatError, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::kFormatError, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorKind::kFormatError, "short write to " + path.string());
}

bool has_magic(const std::string& bytes) {
  return bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) == 0;
}

bool looks_like_csv(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".csv";
}

struct MvebHeader {
  std::uint32_t version;
  std::uint64_t rows;
  std::uint64_t cols;
};

MvebHeader parse_header(const std::string& bytes, const std::string& origin) {
  require(bytes.size() >= kHeaderBytes, ErrorKind::kFormatError,
          origin + ": truncated MVEB header");
  require(has_magic(bytes), ErrorKind::kFormatError, origin + ": bad magic");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  MvebHeader h{from_le<std::uint32_t>(p + 4), from_le<std::uint64_t>(p + 8),
               from_le<std::uint64_t>(p + 16)};
  require(h.version == 1 || h.version == 2, ErrorKind::kFormatError,
          origin + ": unsupported MVEB version " + std::to_string(h.version));
  return h;
}

Matrix parse_mveb(const std::string& bytes, const std::string& origin) {
  const MvebHeader h = parse_header(bytes, origin);
  const std::size_t width = h.version == 1 ? 4 : 8;
  require(h.cols == 0 || h.rows <= (~std::uint64_t{0}) / h.cols / width, ErrorKind::kFormatError,
          origin + ": implausible shape");
  const std::uint64_t count = h.rows * h.cols;
  const std::uint64_t expected = kHeaderBytes + count * width;
  require(bytes.size() >= expected, ErrorKind::kFormatError,
          origin + ": truncated payload (" + std::to_string(bytes.size()) + " of " +
              std::to_string(expected) + " bytes)");
  require(bytes.size() == expected, ErrorKind::kFormatError, origin + ": trailing bytes");

  std::vector<double> data(count);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + kHeaderBytes;
  for (std::uint64_t i = 0; i < count; ++i) {
    const double v = h.version == 1 ? static_cast<double>(from_le<float>(p + i * 4))
                                    : from_le<double>(p + i * 8);
    require(std::isfinite(v), ErrorKind::kFormatError,
            origin + ": non-finite entry at index " + std::to_string(i));
    data[i] = v;
  }
  return Matrix(h.rows, h.cols, std::move(data));
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string::size_type start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    lines.emplace_back(text.substr(start, end - start));
    start = end + 1;
  }
  return lines;
}

void check_view_name(const std::string& name) {
  require(!name.empty(), ErrorKind::kManifestError, "empty view name");
  require(name.front() != '_' && name.front() != '.', ErrorKind::kManifestError,
          "view name '" + name + "' must not start with '_' or '.'");
  for (char c : name) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
    require(ok, ErrorKind::kManifestError,
            "view name '" + name + "' may only contain [A-Za-z0-9_.-]");
  }
}

}  // namespace

void MultiViewDataset::validate() const {
  require(view_names.size() == views.size(), ErrorKind::kDimensionError,
          "view names and matrices disagree");
  const std::size_t n = num_samples();
  for (std::size_t k = 0; k < views.size(); ++k) {
    require(views[k].rows() == n, ErrorKind::kDimensionError,
            "view '" + view_names[k] + "' has " + std::to_string(views[k].rows()) +
                " rows, expected " + std::to_string(n));
  }
  require(sample_ids.size() == n, ErrorKind::kDimensionError, "sample id count mismatch");
  if (labels) {
    require(labels->size() == n, ErrorKind::kDimensionError, "label count mismatch");
    for (int y : *labels) {
      require(y == 0 || y == 1, ErrorKind::kFormatError, "labels must be 0 or 1");
    }
  }
}

MultiViewDataset MultiViewDataset::subset(std::span<const std::size_t> indices) const {
  MultiViewDataset out;
  out.view_names = view_names;
  for (const Matrix& v : views) out.views.push_back(v.select_rows(indices));
  if (labels) {
    std::vector<int> sub;
    sub.reserve(indices.size());
    for (std::size_t i : indices) sub.push_back((*labels)[i]);
    out.labels = std::move(sub);
  }
  for (std::size_t i : indices) out.sample_ids.push_back(sample_ids[i]);
  return out;
}

// ---------------------------------------------------------------------------

void write_matrix(const fs::path& path, const Matrix& m, MvebPrecision precision) {
  std::string bytes;
  const std::size_t width = precision == MvebPrecision::kFloat32 ? 4 : 8;
  bytes.reserve(kHeaderBytes + m.size() * width);
  bytes.append(kMagic, 4);
  append_le<std::uint32_t>(bytes, static_cast<std::uint32_t>(precision));
  append_le<std::uint64_t>(bytes, m.rows());
  append_le<std::uint64_t>(bytes, m.cols());
  for (double v : m.values()) {
    if (precision == MvebPrecision::kFloat32) {
      append_le<float>(bytes, static_cast<float>(v));
    } else {
      append_le<double>(bytes, v);
    }
  }
  write_file(path, bytes);
}

Matrix parse_csv_matrix(const std::string& text, const std::string& origin) {
  std::vector<double> data;
  std::size_t cols = 0;
  std::size_t rows = 0;
  for (const std::string& raw : split_lines(text)) {
    const std::string_view line = trim(raw);
    if (line.empty()) continue;
    std::size_t row_cols = 0;
    std::string_view rest = line;
    while (true) {
      const auto comma = rest.find(',');
      const std::string_view cell = trim(rest.substr(0, comma));
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      require(ec == std::errc() && ptr == cell.data() + cell.size() && !cell.empty(),
              ErrorKind::kFormatError,
              origin + ": non-numeric CSV cell '" + std::string(cell) + "' on row " +
                  std::to_string(rows + 1));
      require(std::isfinite(v), ErrorKind::kFormatError,
              origin + ": non-finite CSV cell on row " + std::to_string(rows + 1));
      data.push_back(v);
      ++row_cols;
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (rows == 0) cols = row_cols;
    require(row_cols == cols, ErrorKind::kFormatError,
            origin + ": row " + std::to_string(rows + 1) + " has " + std::to_string(row_cols) +
                " cells, expected " + std::to_string(cols));
    ++rows;
  }
  return Matrix(rows, cols, std::move(data));
}

Matrix load_matrix(const fs::path& path) {
  const std::string bytes = read_file(path);
  if (!looks_like_csv(path) && (has_magic(bytes) || path.extension() == ".mveb")) {
    return parse_mveb(bytes, path.string());
  }
  return parse_csv_matrix(bytes, path.string());
}

std::pair<std::size_t, std::size_t> matrix_shape(const fs::path& path) {
  if (looks_like_csv(path)) {
    const Matrix m = load_matrix(path);
    return {m.rows(), m.cols()};
  }
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kFormatError, "cannot open " + path.string());
  std::string header(kHeaderBytes, '\0');
  in.read(header.data(), kHeaderBytes);
  header.resize(static_cast<std::size_t>(in.gcount()));
  if (!has_magic(header) && path.extension() != ".mveb") {
    const Matrix m = load_matrix(path);
    return {m.rows(), m.cols()};
  }
  const MvebHeader h = parse_header(header, path.string());
  return {h.rows, h.cols};
}

std::vector<int> load_labels(const fs::path& path) {
  const std::string text = read_file(path);
  std::vector<int> labels;
  std::size_t line_no = 0;
  for (const std::string& raw : split_lines(text)) {
    ++line_no;
    const std::string_view line = trim(raw);
    require(line == "0" || line == "1", ErrorKind::kFormatError,
            path.string() + ": line " + std::to_string(line_no) + " is not \"0\" or \"1\"");
    labels.push_back(line == "1" ? 1 : 0);
  }
  return labels;
}

void write_labels(const fs::path& path, const std::vector<int>& labels) {
  std::string out;
  out.reserve(labels.size() * 2);
  for (int y : labels) {
    out += (y != 0 ? '1' : '0');
    out += '\n';
  }
  write_file(path, out);
}

std::vector<std::string> load_ids(const fs::path& path) {
  const std::string text = read_file(path);
  std::vector<std::string> ids = split_lines(text);
  for (std::string& id : ids) {
    if (!id.empty() && id.back() == '\r') id.pop_back();
  }
  return ids;
}

void write_ids(const fs::path& path, const std::vector<std::string>& ids) {
  std::string out;
  for (const std::string& id : ids) {
    out += id;
    out += '\n';
  }
  write_file(path, out);
}

// ---------------------------------------------------------------------------

Manifest load_manifest(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    fail(ErrorKind::kManifestError, path.string() + ": invalid JSON: " + e.what());
  } catch (const Error&) {
    fail(ErrorKind::kManifestError, "cannot read manifest " + path.string());
  }
  require(doc.is_object(), ErrorKind::kManifestError, path.string() + ": not a JSON object");
  require(doc.contains("views") && doc["views"].is_array(), ErrorKind::kManifestError,
          path.string() + ": missing field 'views'");

  Manifest m;
  m.base_dir = path.parent_path();
  std::set<std::string> names;
  std::size_t index = 0;
  for (const auto& v : doc["views"]) {
    const std::string where = path.string() + ": views[" + std::to_string(index++) + "]";
    require(v.is_object(), ErrorKind::kManifestError, where + " is not an object");
    for (const char* field : {"name", "dim", "path"}) {
      require(v.contains(field), ErrorKind::kManifestError,
              where + ": missing field '" + field + "'");
    }
    require(v["name"].is_string() && v["path"].is_string(), ErrorKind::kManifestError,
            where + ": 'name' and 'path' must be strings");
    require(v["dim"].is_number_integer() && v["dim"].get<long long>() >= 1,
            ErrorKind::kManifestError, where + ": 'dim' must be a positive integer");
    ViewSpec spec;
    spec.name = v["name"].get<std::string>();
    spec.dim = v["dim"].get<std::size_t>();
    spec.path = v["path"].get<std::string>();
    if (v.contains("source_model") && v["source_model"].is_string()) {
      spec.source_model = v["source_model"].get<std::string>();
    }
    check_view_name(spec.name);
    require(names.insert(spec.name).second, ErrorKind::kManifestError,
            where + ": duplicate view name '" + spec.name + "'");
    m.views.push_back(std::move(spec));
  }
  require(m.views.size() >= 2, ErrorKind::kManifestError,
          path.string() + ": multi-view detection requires K >= 2 views, found " +
              std::to_string(m.views.size()));

  for (const char* key : {"labels", "ids"}) {
    if (doc.contains(key) && !doc[key].is_null()) {
      require(doc[key].is_string(), ErrorKind::kManifestError,
              path.string() + ": '" + key + "' must be a string or null");
      (std::string(key) == "labels" ? m.labels_path : m.ids_path) = doc[key].get<std::string>();
    }
  }

  for (const ViewSpec& v : m.views) {
    const fs::path file = m.resolve(v.path);
    require(fs::exists(file), ErrorKind::kManifestError,
            "view '" + v.name + "': file not found: " + file.string());
    const auto [rows, cols] = matrix_shape(file);
    (void)rows;
    require(cols == v.dim, ErrorKind::kManifestError,
            "view '" + v.name + "': declared dim " + std::to_string(v.dim) +
                " but file has " + std::to_string(cols) + " columns");
  }
  return m;
}

MultiViewDataset load_dataset(const Manifest& manifest) {
  MultiViewDataset ds;
  for (const ViewSpec& v : manifest.views) {
    ds.view_names.push_back(v.name);
    ds.views.push_back(load_matrix(manifest.resolve(v.path)));
  }
  const std::size_t n = ds.num_samples();
  for (std::size_t k = 0; k < ds.views.size(); ++k) {
    require(ds.views[k].rows() == n, ErrorKind::kManifestError,
            "view '" + ds.view_names[k] + "' has " + std::to_string(ds.views[k].rows()) +
                " rows, first view has " + std::to_string(n));
  }
  if (manifest.labels_path) {
    ds.labels = load_labels(manifest.resolve(*manifest.labels_path));
    require(ds.labels->size() == n, ErrorKind::kManifestError,
            "labels file has " + std::to_string(ds.labels->size()) + " lines, expected " +
                std::to_string(n));
  }
  if (manifest.ids_path) {
    ds.sample_ids = load_ids(manifest.resolve(*manifest.ids_path));
    require(ds.sample_ids.size() == n, ErrorKind::kManifestError,
            "ids file has " + std::to_string(ds.sample_ids.size()) + " lines, expected " +
                std::to_string(n));
  } else {
    for (std::size_t i = 0; i < n; ++i) ds.sample_ids.push_back(std::to_string(i));
  }
  ds.validate();
  return ds;
}

MultiViewDataset load_dataset(const fs::path& manifest_path) {
  return load_dataset(load_manifest(manifest_path));
}

fs::path save_dataset(const MultiViewDataset& ds, const fs::path& dir,
                      const std::vector<std::string>& source_models) {
  ds.validate();
  fs::create_directories(dir);
  json doc;
  doc["views"] = json::array();
  for (std::size_t k = 0; k < ds.num_views(); ++k) {
    const std::string file = ds.view_names[k] + ".mveb";
    write_matrix(dir / file, ds.views[k]);
    json v;
    v["name"] = ds.view_names[k];
    v["dim"] = ds.views[k].cols();
    v["path"] = file;
    v["source_model"] = k < source_models.size() ? source_models[k] : std::string("unknown");
    doc["views"].push_back(v);
  }
  if (ds.labels) {
    write_labels(dir / "labels.txt", *ds.labels);
    doc["labels"] = "labels.txt";
  } else {
    doc["labels"] = nullptr;
  }
  write_ids(dir / "ids.txt", ds.sample_ids);
  doc["ids"] = "ids.txt";
  const fs::path manifest = dir / "manifest.json";
  write_file(manifest, doc.dump(2) + "\n");
  return manifest;
}

// ---------------------------------------------------------------------------

Matrix MinMaxScaler::transform(std::size_t view, const Matrix& x) const {
  require(view < mins.size(), ErrorKind::kDimensionError, "scaler has no such view");
  const auto& lo = mins[view];
  const auto& hi = maxs[view];
  require(x.cols() == lo.size(), ErrorKind::kDimensionError,
          "scaler expects " + std::to_string(lo.size()) + " columns, got " +
              std::to_string(x.cols()));
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto src = x.row(r);
    auto dst = out.row(r);
    for (std::size_t c = 0; c < x.cols(); ++c) {
      const double span = hi[c] - lo[c];
      dst[c] = span > 0.0 ? std::clamp((src[c] - lo[c]) / span, 0.0, 1.0) : 0.5;
    }
  }
  return out;
}

MinMaxScaler fit_scaler(const MultiViewDataset& train) {
  require(train.num_samples() > 0, ErrorKind::kEmptyInput, "cannot fit a scaler on no samples");
  MinMaxScaler s;
  for (const Matrix& v : train.views) {
    std::vector<double> lo(v.row(0).begin(), v.row(0).end());
    std::vector<double> hi = lo;
    for (std::size_t r = 1; r < v.rows(); ++r) {
      const auto row = v.row(r);
      for (std::size_t c = 0; c < v.cols(); ++c) {
        lo[c] = std::min(lo[c], row[c]);
        hi[c] = std::max(hi[c], row[c]);
      }
    }
    s.mins.push_back(std::move(lo));
    s.maxs.push_back(std::move(hi));
  }
  return s;
}

MultiViewDataset apply_scaler(const MinMaxScaler& scaler, const MultiViewDataset& ds) {
  require(ds.num_views() == scaler.mins.size(), ErrorKind::kDimensionError,
          "scaler view count mismatch");
  MultiViewDataset out;
  out.view_names = ds.view_names;
  out.labels = ds.labels;
  out.sample_ids = ds.sample_ids;
  for (std::size_t k = 0; k < ds.num_views(); ++k) {
    out.views.push_back(scaler.transform(k, ds.views[k]));
  }
  return out;
}

// ---------------------------------------------------------------------------

SplitIndices one_class_split_indices(const std::vector<int>& labels, const SplitSpec& spec) {
  require(spec.train_fraction_of_normals > 0.0 && spec.train_fraction_of_normals < 1.0,
          ErrorKind::kConfigError, "train fraction must lie in (0, 1)");
  require(spec.injected_anomaly_ratio >= 0.0 && spec.injected_anomaly_ratio <= 0.5,
          ErrorKind::kConfigError, "injected anomaly ratio must lie in [0, 0.5]");
  std::vector<std::size_t> normals, anomalies;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    (labels[i] == 0 ? normals : anomalies).push_back(i);
  }
  require(normals.size() >= 10, ErrorKind::kInsufficientData,
          "one-class split needs at least 10 normal samples, found " +
              std::to_string(normals.size()));

  // Small epsilon so that e.g. 0.7 * 100 lands on 70 despite binary rounding.
  const auto n_train = static_cast<std::size_t>(
      std::floor(spec.train_fraction_of_normals * static_cast<double>(normals.size()) + 1e-9));
  const auto n_inject = static_cast<std::size_t>(
      std::floor(spec.injected_anomaly_ratio * static_cast<double>(n_train) + 1e-9));
  require(n_inject <= anomalies.size(), ErrorKind::kInsufficientData,
          "requested " + std::to_string(n_inject) + " injected anomalies but only " +
              std::to_string(anomalies.size()) + " are available");

  SeededRng normal_rng(derive_seed(spec.seed, "split/normals"));
  const std::vector<std::size_t> normal_perm = normal_rng.permutation(normals.size());
  SeededRng anomaly_rng(derive_seed(spec.seed, "split/anomalies"));
  const std::vector<std::size_t> anomaly_perm = anomaly_rng.permutation(anomalies.size());

  SplitIndices out;
  out.injected = n_inject;
  for (std::size_t i = 0; i < normals.size(); ++i) {
    (i < n_train ? out.train : out.test).push_back(normals[normal_perm[i]]);
  }
  for (std::size_t i = 0; i < anomalies.size(); ++i) {
    (i < n_inject ? out.train : out.test).push_back(anomalies[anomaly_perm[i]]);
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

std::pair<MultiViewDataset, MultiViewDataset> one_class_split(const MultiViewDataset& ds,
                                                              const SplitSpec& spec) {
  require(ds.labels.has_value(), ErrorKind::kInsufficientData,
          "one-class split requires labels");
  const SplitIndices idx = one_class_split_indices(*ds.labels, spec);
  return {ds.subset(idx.train), ds.subset(idx.test)};
}

}  // namespace mvad
