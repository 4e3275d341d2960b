#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cct/tensor.hpp"

namespace cct {

struct LabeledDataset {
  std::size_t dim = 0;
  std::vector<double> features;  // size() * dim, row-major
  std::vector<int> labels;
  int class_count = 0;
  std::string name;
  /// Set for image data so it can be written back as IDX.
  std::optional<std::pair<std::size_t, std::size_t>> image_shape;

  std::size_t size() const { return labels.size(); }
  void validate() const;
  /// Features of the given rows as a [rows x dim] tensor.
  Tensor batch(std::span<const std::size_t> rows) const;
  Tensor all_features() const;
  std::vector<int> batch_labels(std::span<const std::size_t> rows) const;
  LabeledDataset subset(std::span<const std::size_t> rows) const;
};

/// Training data after label corruption. base.labels are the observed labels.
struct NoisyDataset {
  LabeledDataset base;
  std::vector<int> clean_labels;
  std::vector<bool> corrupt_mask;
  double noise_rate = 0.0;
  std::uint64_t seed = 0;

  std::size_t corrupted_count() const;
  void validate() const;
  /// Wraps clean data with an all-false mask.
  static NoisyDataset clean(LabeledDataset data);
};

/// C Gaussian clusters in d dimensions with seeded centers, `n_per_class`
/// points each, then standardized per dimension. Centers are drawn with a
/// fixed scale so their expected pairwise distance is 5; `spread` is the
/// within-cluster standard deviation before standardization.
LabeledDataset gen_blobs(std::size_t n_per_class, int classes, std::size_t dim, double spread, std::uint64_t seed);

/// C interleaved 2-D spiral arms with Gaussian jitter.
LabeledDataset gen_spirals(std::size_t n_per_class, int classes, double noise, std::uint64_t seed);

// --- IDX ----------------------------------------------------------------------

struct IdxImages {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<std::uint8_t> pixels;  // count * rows * cols
  std::size_t count() const { return rows * cols == 0 ? 0 : pixels.size() / (rows * cols); }
};

IdxImages read_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path);
void write_idx_images(const std::filesystem::path& path, const IdxImages& images);
void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels);

/// Images scaled to [0, 1] and flattened row-major; class_count = max label + 1.
LabeledDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);
/// Inverse of load_idx (pixels rounded back to bytes). Requires image_shape.
void write_idx(const LabeledDataset& data, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path);

// --- noise, sampling, splitting ---------------------------------------------

/// Corrupts exactly floor(rate * N) labels, chosen uniformly without
/// replacement; each is replaced by a uniformly drawn different class.
NoisyDataset inject_symmetric_noise(const LabeledDataset& data, double rate, std::uint64_t seed);

/// Label-only variant used by the standalone noise command.
struct NoisyLabels {
  std::vector<int> labels;
  std::vector<bool> corrupt_mask;
};
NoisyLabels corrupt_labels(std::span<const int> labels, int classes, double rate, std::uint64_t seed);

/// Draws `epoch_len` indices with replacement, each sample weighted by
/// 1 / count(its class), so classes are drawn equally often in expectation.
std::vector<std::size_t> oversample_indices(std::span<const int> labels, int classes, std::size_t epoch_len,
                                            std::uint64_t seed);

struct SplitResult {
  LabeledDataset train;
  LabeledDataset test;
  std::vector<std::size_t> train_rows;  // ascending indices into the input
  std::vector<std::size_t> test_rows;
  std::vector<std::string> warnings;
};

/// Seeded stratified split. Classes with fewer than two samples are pooled
/// and split without stratification (with a warning).
SplitResult split(const LabeledDataset& data, double train_fraction, std::uint64_t seed);

}  // namespace cct
