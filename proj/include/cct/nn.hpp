#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cct/tensor.hpp"

namespace cct {

/// Fully connected ReLU classifier: layer_sizes = {d_in, h1, ..., C}.
/// The last layer emits raw logits.
struct MlpSpec {
  std::vector<std::size_t> layer_sizes;

  void validate() const;
  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t class_count() const { return layer_sizes.back(); }
  std::size_t affine_count() const { return layer_sizes.size() - 1; }
  std::size_t parameter_count() const;

  bool operator==(const MlpSpec&) const = default;
};

/// Parameters of one network. Weight l has shape [in x out], bias l [out].
struct NetworkParams {
  MlpSpec spec;
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;
  std::uint64_t init_seed = 0;

  /// Parameter tensors in layer order: W0, b0, W1, b1, ...
  std::vector<Tensor> parameters() const;
  NetworkParams clone() const;
  void zero_grad();
};

/// Glorot-uniform weights from the "init" sub-stream of `seed`; zero biases.
NetworkParams init_network(const MlpSpec& spec, std::uint64_t seed);

/// Affine -> ReLU chain ending in raw logits [batch x C].
Tensor forward(Tape& tape, const NetworkParams& net, const Tensor& x);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t t = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

AdamState make_adam_state(std::span<const Tensor> params);

/// One bias-corrected Adam update using the params' grad buffers.
void adam_step(std::span<Tensor> params, AdamState& state, double lr);
/// theta -= lr * grad.
void sgd_step(std::span<Tensor> params, double lr);

/// lr0 * 0.95^epoch (per-epoch exponential decay).
double lr_at_epoch(double lr0, int epoch);

// --- CCTM checkpoint format ----------------------------------------------
//
//   bytes 0..3   "CCTM"
//   u32          format version (1)
//   u32          number of layer sizes L
//   u32 x L      layer sizes
//   f64 ...      W0, b0, W1, b1, ... row-major
//
// All integers and floats little-endian.

inline constexpr std::uint32_t kModelFormatVersion = 1;

std::vector<std::uint8_t> encode_model(const NetworkParams& net);
NetworkParams decode_model(std::span<const std::uint8_t> bytes);
void save_model(const NetworkParams& net, const std::filesystem::path& path);
NetworkParams load_model(const std::filesystem::path& path);

}  // namespace cct
