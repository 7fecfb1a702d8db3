#include "gcm/data.hpp"

#include "gcm/error.hpp"
#include "gcm/random.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace gcm {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Io: return "Io";
    case ErrorCode::MalformedFile: return "MalformedFile";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::RowMismatch: return "RowMismatch";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyNeighborhood: return "EmptyNeighborhood";
    case ErrorCode::EmptyGraph: return "EmptyGraph";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::InputTooShort: return "InputTooShort";
    case ErrorCode::DegenerateDenominator: return "DegenerateDenominator";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::Malformed: return "Malformed";
  }
  return "Unknown";
}

namespace {

void check_finite(const Matrix& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    if (!std::isfinite(m.data()[i])) {
      fail(ErrorCode::NonFiniteValue, "non-finite value at flat index " + std::to_string(i));
    }
  }
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[offset + i]) << (8 * i);
  return v;
}

constexpr char kMagic[4] = {'G', 'C', 'M', 'F'};
constexpr std::uint32_t kGcmfVersion = 1;
constexpr std::size_t kHeaderBytes = 16;

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, std::span<const char> data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) fail(ErrorCode::Io, "write failed for " + path.string());
}

}  // namespace

FeatureMatrix::FeatureMatrix(Matrix values) : values_(std::move(values)) {
  require(values_.cols() >= 1, ErrorCode::InvalidSpec, "feature matrix needs at least one column");
  check_finite(values_);
}

FeatureMatrix::FeatureMatrix(std::size_t rows, std::size_t cols, std::span<const double> row_major) {
  require(cols >= 1, ErrorCode::InvalidSpec, "feature matrix needs at least one column");
  require(row_major.size() == rows * cols, ErrorCode::DimensionMismatch, "value count != rows*cols");
  values_.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  std::copy(row_major.begin(), row_major.end(), values_.data());
  check_finite(values_);
}

FeatureMatrix FeatureMatrix::select_rows(std::span<const std::size_t> indices) const {
  Matrix out(static_cast<Eigen::Index>(indices.size()), values_.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    require(indices[i] < rows(), ErrorCode::RowMismatch, "row index out of range");
    out.row(static_cast<Eigen::Index>(i)) = values_.row(static_cast<Eigen::Index>(indices[i]));
  }
  return FeatureMatrix(std::move(out));
}

std::vector<std::uint8_t> encode_gcmf(const FeatureMatrix& matrix) {
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + 4 * matrix.rows() * matrix.cols());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, kGcmfVersion);
  put_u32(out, static_cast<std::uint32_t>(matrix.rows()));
  put_u32(out, static_cast<std::uint32_t>(matrix.cols()));
  const Matrix& v = matrix.values();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v.data()[i])));
  }
  return out;
}

FeatureMatrix decode_gcmf(std::span<const std::uint8_t> bytes) {
  require(bytes.size() >= kHeaderBytes, ErrorCode::MalformedFile, "GCMF header truncated");
  require(std::memcmp(bytes.data(), kMagic, 4) == 0, ErrorCode::MalformedFile, "bad GCMF magic");
  const std::uint32_t version = get_u32(bytes, 4);
  require(version == kGcmfVersion, ErrorCode::MalformedFile,
          "unsupported GCMF version " + std::to_string(version));
  const std::uint64_t rows = get_u32(bytes, 8);
  const std::uint64_t cols = get_u32(bytes, 12);
  require(cols >= 1, ErrorCode::MalformedFile, "GCMF cols must be >= 1");
  require(bytes.size() == kHeaderBytes + 4 * rows * cols, ErrorCode::MalformedFile,
          "GCMF payload size does not match header");
  std::vector<double> values(rows * cols);
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = std::bit_cast<float>(get_u32(bytes, kHeaderBytes + 4 * i));
  }
  return FeatureMatrix(rows, cols, values);
}

std::string encode_csv(const FeatureMatrix& matrix) {
  std::string out;
  char buf[64];
  for (std::size_t r = 0; r < matrix.rows(); ++r) {
    for (std::size_t c = 0; c < matrix.cols(); ++c) {
      if (c) out.push_back(',');
      const auto res = std::to_chars(buf, buf + sizeof buf, matrix(r, c), std::chars_format::general, 9);
      out.append(buf, res.ptr);
    }
    out.push_back('\n');
  }
  return out;
}

FeatureMatrix decode_csv(std::string_view text) {
  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    std::size_t fields = 0;
    std::size_t start = 0;
    while (true) {
      std::size_t comma = line.find(',', start);
      std::string_view cell = line.substr(start, comma == std::string_view::npos ? line.size() - start : comma - start);
      while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
      while (!cell.empty() && cell.back() == ' ') cell.remove_suffix(1);
      double v = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
        const std::string s(cell);
        if (s == "nan" || s == "NaN" || s == "inf" || s == "-inf" || s == "Inf" || s == "-Inf") {
          fail(ErrorCode::NonFiniteValue, "non-finite CSV cell '" + s + "' on line " + std::to_string(rows + 1));
        }
        fail(ErrorCode::MalformedFile, "bad CSV cell '" + s + "' on line " + std::to_string(rows + 1));
      }
      if (!std::isfinite(v)) fail(ErrorCode::NonFiniteValue, "non-finite CSV cell on line " + std::to_string(rows + 1));
      values.push_back(v);
      ++fields;
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (rows == 0) {
      cols = fields;
    } else if (fields != cols) {
      fail(ErrorCode::MalformedFile, "ragged CSV row " + std::to_string(rows + 1));
    }
    ++rows;
  }
  require(rows > 0, ErrorCode::MalformedFile, "empty CSV file");
  return FeatureMatrix(rows, cols, values);
}

FeatureMatrix parse_feature_file(const std::filesystem::path& path, FileFormat format) {
  const auto bytes = read_bytes(path);
  if (format == FileFormat::Gcmf) return decode_gcmf(bytes);
  return decode_csv(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

void write_feature_file(const FeatureMatrix& matrix, const std::filesystem::path& path, FileFormat format) {
  if (format == FileFormat::Gcmf) {
    const auto bytes = encode_gcmf(matrix);
    write_bytes(path, {reinterpret_cast<const char*>(bytes.data()), bytes.size()});
  } else {
    const auto text = encode_csv(matrix);
    write_bytes(path, {text.data(), text.size()});
  }
}

ModalityBundle ModalityBundle::select(std::span<const std::size_t> indices) const {
  ModalityBundle out;
  out.text = text.select_rows(indices);
  out.audio = audio.select_rows(indices);
  out.visual = visual.select_rows(indices);
  out.num_classes = num_classes;
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) out.labels.push_back(labels.at(i));
  return out;
}

void validate_bundle(const ModalityBundle& bundle) {
  const std::size_t n = bundle.labels.size();
  if (bundle.text.rows() != n || bundle.audio.rows() != n || bundle.visual.rows() != n) {
    fail(ErrorCode::RowMismatch, "modality rows (" + std::to_string(bundle.text.rows()) + ", " +
                                     std::to_string(bundle.audio.rows()) + ", " +
                                     std::to_string(bundle.visual.rows()) + ") vs " + std::to_string(n) +
                                     " labels");
  }
  require(bundle.num_classes >= 1, ErrorCode::LabelOutOfRange, "num_classes must be positive");
  for (std::size_t i = 0; i < n; ++i) {
    if (bundle.labels[i] < 0 || bundle.labels[i] >= bundle.num_classes) {
      fail(ErrorCode::LabelOutOfRange, "label " + std::to_string(bundle.labels[i]) + " at row " +
                                           std::to_string(i) + " outside [0, " +
                                           std::to_string(bundle.num_classes) + ")");
    }
  }
  for (const FeatureMatrix* m : {&bundle.text, &bundle.audio, &bundle.visual}) {
    check_finite(m->values());
  }
}

ModalityBundle generate_synthetic_dataset(const SyntheticSpec& spec) {
  require(spec.classes >= 2, ErrorCode::InvalidSpec, "classes must be >= 2");
  require(spec.separation > 0.0 && std::isfinite(spec.separation), ErrorCode::InvalidSpec,
          "separation must be > 0");
  require(spec.noise >= 0.0 && std::isfinite(spec.noise), ErrorCode::InvalidSpec, "noise must be >= 0");
  require(spec.text_dims >= 1 && spec.audio_dims >= 1 && spec.visual_dims >= 1, ErrorCode::InvalidSpec,
          "every modality needs at least one dimension");

  const std::size_t n = spec.utterances;
  const auto classes = static_cast<std::size_t>(spec.classes);

  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % classes);
  Rng label_rng(derive_seed(spec.seed, "labels"));
  shuffle(std::span<int>(labels), label_rng);

  const std::size_t dims[3] = {spec.text_dims, spec.audio_dims, spec.visual_dims};
  FeatureMatrix out[3];
  for (std::size_t m = 0; m < 3; ++m) {
    Rng mean_rng(derive_seed(spec.seed, "means", m));
    Matrix means(static_cast<Eigen::Index>(classes), static_cast<Eigen::Index>(dims[m]));
    for (std::size_t c = 0; c < classes; ++c) {
      Vector dir(static_cast<Eigen::Index>(dims[m]));
      do {
        for (Eigen::Index j = 0; j < dir.size(); ++j) dir[j] = normal(mean_rng);
      } while (dir.norm() == 0.0);
      means.row(static_cast<Eigen::Index>(c)) = spec.separation * dir.normalized().transpose();
    }
    Rng noise_rng(derive_seed(spec.seed, "noise", m));
    Matrix values(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dims[m]));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < dims[m]; ++j) {
        values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            means(labels[i], static_cast<Eigen::Index>(j)) + spec.noise * normal(noise_rng);
      }
    }
    out[m] = FeatureMatrix(std::move(values));
  }
  return ModalityBundle{std::move(out[0]), std::move(out[1]), std::move(out[2]), std::move(labels), spec.classes};
}

void write_bundle(const ModalityBundle& bundle, const std::filesystem::path& dir) {
  validate_bundle(bundle);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
  write_feature_file(bundle.text, dir / "text.gcmf", FileFormat::Gcmf);
  write_feature_file(bundle.audio, dir / "audio.gcmf", FileFormat::Gcmf);
  write_feature_file(bundle.visual, dir / "visual.gcmf", FileFormat::Gcmf);
  std::string labels;
  for (int l : bundle.labels) labels += std::to_string(l) + "\n";
  write_bytes(dir / "labels.csv", {labels.data(), labels.size()});
}

std::vector<int> parse_labels(std::string_view text) {
  std::vector<int> labels;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    int v = 0;
    const auto res = std::from_chars(line.data(), line.data() + line.size(), v);
    if (res.ec != std::errc() || res.ptr != line.data() + line.size()) {
      fail(ErrorCode::MalformedFile, "bad label line '" + std::string(line) + "'");
    }
    labels.push_back(v);
  }
  return labels;
}

std::vector<int> read_labels(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  return parse_labels(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

ModalityBundle read_bundle(const std::filesystem::path& dir, int num_classes) {
  ModalityBundle b;
  b.text = parse_feature_file(dir / "text.gcmf", FileFormat::Gcmf);
  b.audio = parse_feature_file(dir / "audio.gcmf", FileFormat::Gcmf);
  b.visual = parse_feature_file(dir / "visual.gcmf", FileFormat::Gcmf);
  b.labels = read_labels(dir / "labels.csv");
  const int max_label = b.labels.empty() ? -1 : *std::max_element(b.labels.begin(), b.labels.end());
  b.num_classes = num_classes > 0 ? num_classes : std::max(2, max_label + 1);
  validate_bundle(b);
  return b;
}

std::pair<ModalityBundle, ModalityBundle> train_test_split(const ModalityBundle& bundle, double test_fraction,
                                                          std::uint64_t seed) {
  require(test_fraction > 0.0 && test_fraction < 1.0, ErrorCode::InvalidSpec, "test fraction must lie in (0, 1)");
  validate_bundle(bundle);
  Rng rng(derive_seed(seed, "split"));
  std::vector<std::size_t> train, test;
  for (int c = 0; c < bundle.num_classes; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < bundle.size(); ++i) {
      if (bundle.labels[i] == c) members.push_back(i);
    }
    shuffle(std::span<std::size_t>(members), rng);
    const auto k = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(members.size())));
    test.insert(test.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(k));
    train.insert(train.end(), members.begin() + static_cast<std::ptrdiff_t>(k), members.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {bundle.select(train), bundle.select(test)};
}

}  // namespace gcm
