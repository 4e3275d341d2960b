#include "cct/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include "cct/error.hpp"
#include "cct/rng.hpp"

namespace cct {

// --- datasets ---------------------------------------------------------------

void LabeledDataset::validate() const {
  if (labels.empty()) throw ContractError("dataset '" + name + "' is empty");
  if (dim == 0) throw ContractError("dataset '" + name + "' has zero feature width");
  if (features.size() != labels.size() * dim) {
    throw ContractError("dataset '" + name + "': feature count does not match " + std::to_string(labels.size()) +
                        " x " + std::to_string(dim));
  }
  for (int y : labels) {
    if (y < 0 || y >= class_count) {
      throw ContractError("dataset '" + name + "': label " + std::to_string(y) + " outside [0, " +
                          std::to_string(class_count) + ")");
    }
  }
}

Tensor LabeledDataset::batch(std::span<const std::size_t> rows) const {
  std::vector<double> out(rows.size() * dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(features.begin() + static_cast<std::ptrdiff_t>(rows[i] * dim), dim,
                out.begin() + static_cast<std::ptrdiff_t>(i * dim));
  }
  return Tensor::matrix(rows.size(), dim, std::move(out));
}

Tensor LabeledDataset::all_features() const {
  return Tensor::matrix(size(), dim, features);
}

std::vector<int> LabeledDataset::batch_labels(std::span<const std::size_t> rows) const {
  std::vector<int> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = labels[rows[i]];
  return out;
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> rows) const {
  LabeledDataset out{dim, {}, {}, class_count, name, image_shape};
  out.features.reserve(rows.size() * dim);
  for (auto r : rows) {
    out.features.insert(out.features.end(), features.begin() + static_cast<std::ptrdiff_t>(r * dim),
                        features.begin() + static_cast<std::ptrdiff_t>((r + 1) * dim));
    out.labels.push_back(labels[r]);
  }
  return out;
}

std::size_t NoisyDataset::corrupted_count() const {
  return static_cast<std::size_t>(std::count(corrupt_mask.begin(), corrupt_mask.end(), true));
}

void NoisyDataset::validate() const {
  base.validate();
  if (clean_labels.size() != base.size() || corrupt_mask.size() != base.size()) {
    throw ContractError("noisy dataset: clean labels / mask length mismatch");
  }
  for (std::size_t i = 0; i < base.size(); ++i) {
    if (corrupt_mask[i] != (base.labels[i] != clean_labels[i])) {
      throw ContractError("noisy dataset: corruption mask inconsistent at row " + std::to_string(i));
    }
  }
}

NoisyDataset NoisyDataset::clean(LabeledDataset data) {
  NoisyDataset out;
  out.clean_labels = data.labels;
  out.corrupt_mask.assign(data.size(), false);
  out.base = std::move(data);
  return out;
}

namespace {

void standardize(std::vector<double>& features, std::size_t n, std::size_t dim) {
  for (std::size_t j = 0; j < dim; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += features[i * dim + j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = features[i * dim + j] - mean;
      var += d * d;
    }
    const double sd = std::sqrt(var / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
      features[i * dim + j] -= mean;
      if (sd > 0.0) features[i * dim + j] /= sd;
    }
  }
}

}  // namespace

LabeledDataset gen_blobs(std::size_t n_per_class, int classes, std::size_t dim, double spread, std::uint64_t seed) {
  if (n_per_class == 0 || classes < 1 || dim == 0 || spread < 0.0) {
    throw ContractError("gen_blobs: sizes must be positive and spread non-negative");
  }
  const auto c = static_cast<std::size_t>(classes);

  // Coordinates ~ N(0, s^2) with s = 5 / sqrt(2d) put E|c_a - c_b| near 5.
  // Center sets with a pair closer than 2.5 are redrawn.
  Rng center_rng(derive_seed(seed, "blobs-centers"));
  const double scale = 5.0 / std::sqrt(2.0 * static_cast<double>(dim));
  std::vector<double> centers(c * dim);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    for (auto& x : centers) x = scale * center_rng.normal();
    double closest = INFINITY;
    for (std::size_t a = 0; a < c; ++a)
      for (std::size_t b = a + 1; b < c; ++b) {
        double d2 = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
          const double d = centers[a * dim + j] - centers[b * dim + j];
          d2 += d * d;
        }
        closest = std::min(closest, std::sqrt(d2));
      }
    if (closest >= 2.5) break;
  }

  Rng rng(derive_seed(seed, "blobs-points"));
  LabeledDataset out{dim, {}, {}, classes, "blobs", std::nullopt};
  out.features.reserve(n_per_class * c * dim);
  for (std::size_t i = 0; i < n_per_class; ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      for (std::size_t j = 0; j < dim; ++j) out.features.push_back(centers[k * dim + j] + spread * rng.normal());
      out.labels.push_back(static_cast<int>(k));
    }
  }
  standardize(out.features, out.size(), dim);
  return out;
}

LabeledDataset gen_spirals(std::size_t n_per_class, int classes, double noise, std::uint64_t seed) {
  if (n_per_class == 0 || classes < 1 || noise < 0.0) throw ContractError("gen_spirals: invalid arguments");
  Rng rng(derive_seed(seed, "spirals"));
  LabeledDataset out{2, {}, {}, classes, "spirals", std::nullopt};
  for (std::size_t i = 0; i < n_per_class; ++i) {
    const double t = (static_cast<double>(i) + 0.5) / static_cast<double>(n_per_class);
    for (int k = 0; k < classes; ++k) {
      const double angle = 2.0 * std::numbers::pi * k / classes + 3.0 * std::numbers::pi * t;
      out.features.push_back(t * std::cos(angle) + noise * rng.normal());
      out.features.push_back(t * std::sin(angle) + noise * rng.normal());
      out.labels.push_back(k);
    }
  }
  standardize(out.features, out.size(), 2);
  return out;
}

// --- IDX ----------------------------------------------------------------------

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("failed writing " + path.string());
}

std::uint32_t be32(std::span<const std::uint8_t> b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
         std::uint32_t{b[at + 3]};
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

}  // namespace

IdxImages read_idx_images(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (bytes.size() < 16) throw ParseError(path.string() + ": truncated IDX image header");
  if (be32(bytes, 0) != kImagesMagic) throw ParseError(path.string() + ": bad magic for IDX image file");
  const std::uint64_t count = be32(bytes, 4);
  IdxImages out;
  out.rows = be32(bytes, 8);
  out.cols = be32(bytes, 12);
  const std::uint64_t expected = count * out.rows * out.cols;
  if (bytes.size() - 16 < expected) throw ParseError(path.string() + ": truncated IDX image data");
  if (bytes.size() - 16 > expected) throw ParseError(path.string() + ": trailing bytes after IDX image data");
  if (count > 0 && out.rows * out.cols == 0) throw ParseError(path.string() + ": zero-sized images");
  out.pixels.assign(bytes.begin() + 16, bytes.end());
  return out;
}

std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (bytes.size() < 8) throw ParseError(path.string() + ": truncated IDX label header");
  if (be32(bytes, 0) != kLabelsMagic) throw ParseError(path.string() + ": bad magic for IDX label file");
  const std::uint64_t count = be32(bytes, 4);
  if (bytes.size() - 8 < count) throw ParseError(path.string() + ": truncated IDX label data");
  if (bytes.size() - 8 > count) throw ParseError(path.string() + ": trailing bytes after IDX label data");
  return {bytes.begin() + 8, bytes.end()};
}

void write_idx_images(const std::filesystem::path& path, const IdxImages& images) {
  std::vector<std::uint8_t> out;
  out.reserve(16 + images.pixels.size());
  put_be32(out, kImagesMagic);
  put_be32(out, static_cast<std::uint32_t>(images.count()));
  put_be32(out, images.rows);
  put_be32(out, images.cols);
  out.insert(out.end(), images.pixels.begin(), images.pixels.end());
  write_file(path, out);
}

void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + labels.size());
  put_be32(out, kLabelsMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  write_file(path, out);
}

LabeledDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  const auto images = read_idx_images(images_path);
  const auto labels = read_idx_labels(labels_path);
  if (images.count() != labels.size()) {
    throw ParseError("IDX count mismatch: " + std::to_string(images.count()) + " images vs " +
                     std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw ParseError("IDX files contain no samples");
  LabeledDataset out;
  out.dim = std::size_t{images.rows} * images.cols;
  out.features.reserve(images.pixels.size());
  for (auto p : images.pixels) out.features.push_back(static_cast<double>(p) / 255.0);
  int max_label = 0;
  for (auto l : labels) {
    out.labels.push_back(l);
    max_label = std::max<int>(max_label, l);
  }
  out.class_count = max_label + 1;
  out.name = images_path.stem().string();
  out.image_shape = std::pair<std::size_t, std::size_t>{images.rows, images.cols};
  return out;
}

void write_idx(const LabeledDataset& data, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path) {
  if (!data.image_shape) throw ContractError("write_idx: dataset has no image shape");
  IdxImages images;
  images.rows = static_cast<std::uint32_t>(data.image_shape->first);
  images.cols = static_cast<std::uint32_t>(data.image_shape->second);
  if (std::size_t{images.rows} * images.cols != data.dim) throw ContractError("write_idx: image shape does not match feature width");
  images.pixels.reserve(data.features.size());
  for (double f : data.features) images.pixels.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(f, 0.0, 1.0) * 255.0)));
  std::vector<std::uint8_t> labels;
  for (int y : data.labels) {
    if (y < 0 || y > 255) throw ContractError("write_idx: label " + std::to_string(y) + " does not fit a byte");
    labels.push_back(static_cast<std::uint8_t>(y));
  }
  write_idx_images(images_path, images);
  write_idx_labels(labels_path, labels);
}

// --- noise ----------------------------------------------------------------------

NoisyLabels corrupt_labels(std::span<const int> labels, int classes, double rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ContractError("noise rate must lie in [0, 1), got " + std::to_string(rate));
  const std::size_t n = labels.size();
  // Tolerance absorbs representation error, e.g. 0.29 * 100 = 28.999...
  const auto count = static_cast<std::size_t>(std::floor(rate * static_cast<double>(n) + 1e-9));
  if (count > 0 && classes < 2) throw ContractError("label noise needs at least two classes");

  NoisyLabels out{std::vector<int>(labels.begin(), labels.end()), std::vector<bool>(n, false)};
  Rng rng(derive_seed(seed, "noise"));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(order[i], order[j]);
    const std::size_t row = order[i];
    const int original = labels[row];
    const int draw = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes - 1)));
    out.labels[row] = draw < original ? draw : draw + 1;
    out.corrupt_mask[row] = true;
  }
  return out;
}

NoisyDataset inject_symmetric_noise(const LabeledDataset& data, double rate, std::uint64_t seed) {
  data.validate();
  auto noisy = corrupt_labels(data.labels, data.class_count, rate, seed);
  NoisyDataset out;
  out.base = data;
  out.base.labels = std::move(noisy.labels);
  out.clean_labels = data.labels;
  out.corrupt_mask = std::move(noisy.corrupt_mask);
  out.noise_rate = rate;
  out.seed = seed;
  return out;
}

std::vector<std::size_t> oversample_indices(std::span<const int> labels, int classes, std::size_t epoch_len,
                                            std::uint64_t seed) {
  if (classes < 1) throw ContractError("oversample_indices: class count must be positive");
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) throw ContractError("oversample_indices: label out of range");
    by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (by_class[c].empty()) throw ContractError("oversample_indices: class " + std::to_string(c) + " is empty");
  }
  // Weight 1/count(class) per sample == uniform class, then uniform member.
  Rng rng(derive_seed(seed, "oversample"));
  std::vector<std::size_t> out(epoch_len);
  for (auto& idx : out) {
    const auto& members = by_class[rng.below(by_class.size())];
    idx = members[rng.below(members.size())];
  }
  return out;
}

SplitResult split(const LabeledDataset& data, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ContractError("split: train fraction must lie in (0, 1), got " + std::to_string(train_fraction));
  }
  data.validate();
  SplitResult out;
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(data.class_count));
  for (std::size_t i = 0; i < data.size(); ++i) by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);

  auto take = [&](std::vector<std::size_t> rows, std::uint64_t stream_index) {
    Rng rng(derive_seed(seed, "split", stream_index));
    for (std::size_t i = rows.size(); i > 1; --i) std::swap(rows[i - 1], rows[rng.below(i)]);
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(rows.size())));
    out.train_rows.insert(out.train_rows.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test_rows.insert(out.test_rows.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_train), rows.end());
  };

  std::vector<std::size_t> pooled;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (by_class[c].empty()) continue;
    if (by_class[c].size() < 2) {
      out.warnings.push_back("class " + std::to_string(c) + " has fewer than 2 samples; split unstratified");
      pooled.insert(pooled.end(), by_class[c].begin(), by_class[c].end());
      continue;
    }
    take(std::move(by_class[c]), c);
  }
  if (!pooled.empty()) take(std::move(pooled), by_class.size());

  std::sort(out.train_rows.begin(), out.train_rows.end());
  std::sort(out.test_rows.begin(), out.test_rows.end());
  if (out.train_rows.empty() || out.test_rows.empty()) throw ContractError("split: one side of the split is empty");
  out.train = data.subset(out.train_rows);
  out.test = data.subset(out.test_rows);
  out.train.name = data.name + "-train";
  out.test.name = data.name + "-test";
  return out;
}

}  // namespace cct
